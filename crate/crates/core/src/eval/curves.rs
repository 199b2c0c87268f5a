//! Representation files, WCSE-versus-K curves and their SVG rendering.

use super::{kmeans, wcse, KMeansOptions};
use crate::error::{Error, Result};
use crate::grid::{RoadNetwork, Trajectory};
use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::ops::RangeInclusive;

/// One representation per line, comma-separated, shortest round-trip floats.
pub fn representations_csv(reps: &[Vec<f64>]) -> String {
    let mut out = String::new();
    for r in reps {
        for (i, v) in r.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            write!(out, "{v}").expect("string write");
        }
        out.push('\n');
    }
    out
}

pub fn parse_representations(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|v| v.trim().parse::<f64>().ok().filter(|x| x.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| Error::data(format!("line {}: expected comma-separated finite numbers", i + 1)))?;
        if let Some(first) = out.first() {
            if first.len() != row.len() {
                return Err(Error::data(format!("line {}: {} values, expected {}", i + 1, row.len(), first.len())));
            }
        }
        out.push(row);
    }
    if out.is_empty() {
        return Err(Error::data("no representations"));
    }
    Ok(out)
}

/// WCSE at each K of a range, one named series.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Curve {
    pub name: String,
    pub points: Vec<(usize, u64)>,
}

impl Curve {
    pub fn compute(
        name: impl Into<String>,
        net: &RoadNetwork,
        reps: &[Vec<f64>],
        trajectories: &[Trajectory],
        ks: RangeInclusive<usize>,
        seed: u64,
        opts: KMeansOptions,
    ) -> Result<Self> {
        let mut points = Vec::new();
        for k in ks {
            let assignment = kmeans(reps, k, seed, opts)?;
            points.push((k, wcse(net, &assignment, trajectories)?));
        }
        Ok(Self { name: name.into(), points })
    }

    pub fn at(&self, k: usize) -> Option<u64> {
        self.points.iter().find(|p| p.0 == k).map(|p| p.1)
    }

    /// `k,<name>` header and one row per K.
    pub fn to_csv(&self) -> String {
        let mut out = format!("k,{}\n", self.name);
        for (k, w) in &self.points {
            writeln!(out, "{k},{w}").expect("string write");
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::data("empty curve file"))?;
        let name = match header.split_once(',') {
            Some(("k", name)) if !name.is_empty() && !name.contains(',') => name.to_string(),
            _ => return Err(Error::data(format!("line 1: expected `k,<name>` header, found `{header}`"))),
        };
        let mut points = Vec::new();
        for (i, line) in lines.enumerate() {
            let parsed = line.split_once(',').and_then(|(k, w)| Some((k.trim().parse().ok()?, w.trim().parse().ok()?)));
            points.push(parsed.ok_or_else(|| Error::data(format!("line {}: expected `k,wcse`", i + 2)))?);
        }
        Ok(Self { name, points })
    }
}

/// Joins curves on K; a K missing from a curve leaves its cell empty.
pub fn merge_curves(curves: &[Curve]) -> String {
    let ks: BTreeSet<usize> = curves.iter().flat_map(|c| c.points.iter().map(|p| p.0)).collect();
    let mut out = String::from("k");
    for c in curves {
        write!(out, ",{}", c.name).expect("string write");
    }
    out.push('\n');
    for k in ks {
        write!(out, "{k}").expect("string write");
        for c in curves {
            out.push(',');
            if let Some(w) = c.at(k) {
                write!(out, "{w}").expect("string write");
            }
        }
        out.push('\n');
    }
    out
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Line chart of WCSE against K with axes, ticks and a legend.
pub fn curves_svg(curves: &[Curve]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const LEFT: f64 = 70.0;
    const RIGHT: f64 = 150.0;
    const TOP: f64 = 20.0;
    const BOTTOM: f64 = 50.0;
    let points = || curves.iter().flat_map(|c| c.points.iter());
    let k_min = points().map(|p| p.0).min().unwrap_or(0) as f64;
    let k_max = points().map(|p| p.0).max().unwrap_or(1).max(k_min as usize + 1) as f64;
    let w_max = points().map(|p| p.1).max().unwrap_or(1).max(1) as f64;
    let x = |k: f64| LEFT + (k - k_min) / (k_max - k_min) * (W - LEFT - RIGHT);
    let y = |w: f64| H - BOTTOM - w / w_max * (H - TOP - BOTTOM);

    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#).unwrap();
    writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#).unwrap();
    let (x0, x1, y0, y1) = (LEFT, W - RIGHT, H - BOTTOM, TOP);
    writeln!(s, r#"<path d="M{x0} {y1} L{x0} {y0} L{x1} {y0}" fill="none" stroke="black"/>"#).unwrap();
    for k in k_min as usize..=k_max as usize {
        let px = x(k as f64);
        writeln!(s, r#"<line x1="{px:.1}" y1="{y0}" x2="{px:.1}" y2="{:.1}" stroke="black"/>"#, y0 + 5.0).unwrap();
        writeln!(s, r#"<text x="{px:.1}" y="{:.1}" font-size="12" text-anchor="middle">{k}</text>"#, y0 + 20.0).unwrap();
    }
    for i in 0..=4 {
        let w = w_max * i as f64 / 4.0;
        let py = y(w);
        writeln!(s, r#"<line x1="{:.1}" y1="{py:.1}" x2="{x0}" y2="{py:.1}" stroke="black"/>"#, x0 - 5.0).unwrap();
        writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="end">{:.0}</text>"#, x0 - 8.0, py + 4.0, w).unwrap();
    }
    writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="13" text-anchor="middle">K</text>"#, (x0 + x1) / 2.0, H - 10.0).unwrap();
    writeln!(
        s,
        r#"<text x="16" y="{:.1}" font-size="13" text-anchor="middle" transform="rotate(-90 16 {:.1})">WCSE</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    )
    .unwrap();
    for (i, c) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = c.points.iter().map(|&(k, w)| format!("{:.1},{:.1}", x(k as f64), y(w as f64))).collect();
        writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, path.join(" ")).unwrap();
        for &(k, w) in &c.points {
            writeln!(s, r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}"/>"#, x(k as f64), y(w as f64)).unwrap();
        }
        let ly = TOP + 10.0 + 20.0 * i as f64;
        writeln!(s, r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#, x1 + 15.0, x1 + 35.0).unwrap();
        writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="12">{}</text>"#, x1 + 40.0, ly + 4.0, escape(&c.name)).unwrap();
    }
    s.push_str("</svg>\n");
    s
}
