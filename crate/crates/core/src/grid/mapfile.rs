//! Plain-text occupancy maps.
//!
//! Map file: one grid row per line, `.` for a free cell and `#` for a
//! blocked cell; all lines the same width. Wall file: one segment per line
//! as `r1,c1-r2,c2`. Blank lines and lines starting with `#` are ignored in
//! wall files only.

use super::{Cell, OccupancyMap};
use crate::error::{Error, Result};

pub fn parse_map(text: &str) -> Result<OccupancyMap> {
    let rows: Vec<&str> = text
        .lines()
        .map(|l| l.strip_suffix('\r').unwrap_or(l))
        .collect();
    let rows: Vec<&str> = match rows.iter().rposition(|r| !r.is_empty()) {
        Some(last) => rows[..=last].to_vec(),
        None => return Err(Error::config("map file is empty")),
    };
    let width = rows[0].chars().count();
    let mut map = OccupancyMap::open(width, rows.len());
    for (r, line) in rows.iter().enumerate() {
        if line.chars().count() != width {
            return Err(Error::config(format!(
                "map line {}: width {} differs from first row width {width}",
                r + 1,
                line.chars().count()
            )));
        }
        for (c, ch) in line.chars().enumerate() {
            match ch {
                '.' => {}
                '#' => {
                    map.block(Cell::new(r, c));
                }
                other => {
                    return Err(Error::config(format!("map line {}: unexpected character `{other}`", r + 1)))
                }
            }
        }
    }
    if width == 0 {
        return Err(Error::config("map has zero width"));
    }
    Ok(map)
}

fn parse_pair(s: &str) -> Option<Cell> {
    let (r, c) = s.trim().split_once(',')?;
    Some(Cell::new(r.trim().parse().ok()?, c.trim().parse().ok()?))
}

/// Parses wall segments into `map`, validating bounds.
pub fn parse_walls(text: &str, map: &mut OccupancyMap) -> Result<()> {
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (a, b) = line
            .split_once('-')
            .and_then(|(a, b)| Some((parse_pair(a)?, parse_pair(b)?)))
            .ok_or_else(|| Error::config(format!("wall line {}: expected `r1,c1-r2,c2`, got `{line}`", i + 1)))?;
        map.wall(a, b);
    }
    map.validate()
}

pub fn render_map(map: &OccupancyMap) -> String {
    let mut out = String::with_capacity((map.width + 1) * map.height);
    for r in 0..map.height {
        for c in 0..map.width {
            out.push(if map.is_blocked(Cell::new(r, c)) { '#' } else { '.' });
        }
        out.push('\n');
    }
    out
}

pub fn render_walls(map: &OccupancyMap) -> String {
    map.walls
        .iter()
        .map(|(a, b)| format!("{},{}-{},{}\n", a.row, a.col, b.row, b.col))
        .collect()
}
