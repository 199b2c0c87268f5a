//! Corpus text format: one trajectory per line,
//! `label<TAB>row:col,row:col,...`, with `-` for an unlabeled trajectory.

use crate::error::{Error, Result};
use crate::grid::{Cell, RoadNetwork, Trajectory};
use std::fmt::Write as _;
use std::path::Path;

pub fn write_corpus(net: &RoadNetwork, trajectories: &[Trajectory]) -> String {
    let mut out = String::new();
    for t in trajectories {
        match t.label() {
            Some(l) => write!(out, "{l}").expect("string write"),
            None => out.push('-'),
        }
        out.push('\t');
        for (i, cell) in t.grid_cells(net).iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            write!(out, "{cell}").expect("string write");
        }
        out.push('\n');
    }
    out
}

pub fn read_corpus(text: &str, net: &RoadNetwork) -> Result<Vec<Trajectory>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            continue;
        }
        let (label, cells) = line
            .split_once('\t')
            .ok_or_else(|| Error::data(format!("line {line_no}: expected `label<TAB>cells`")))?;
        let label = match label.trim() {
            "-" => None,
            l => Some(l.parse::<u32>().map_err(|_| Error::data(format!("line {line_no}: bad label `{l}`")))?),
        };
        let cells = cells
            .split(',')
            .map(|c| c.parse::<Cell>())
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::data(format!("line {line_no}: {e}")))?;
        let t = Trajectory::from_cells(net, &cells, label).map_err(|e| Error::data(format!("line {line_no}: {e}")))?;
        out.push(t);
    }
    Ok(out)
}

pub fn save_corpus(path: &Path, net: &RoadNetwork, trajectories: &[Trajectory]) -> Result<()> {
    std::fs::write(path, write_corpus(net, trajectories))?;
    Ok(())
}

pub fn load_corpus(path: &Path, net: &RoadNetwork) -> Result<Vec<Trajectory>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::data(format!("cannot read corpus {}: {e}", path.display())))?;
    read_corpus(&text, net)
}
