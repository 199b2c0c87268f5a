//! Ingestion of pedestrian tracking logs (timestamp, person id, x, y).

use crate::error::{Error, Result};
use crate::grid::{RoadNetwork, Trajectory};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Read;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AtcSpec {
    pub time_column: usize,
    pub person_column: usize,
    pub x_column: usize,
    pub y_column: usize,
    /// Multiplier taking file units to grid units (0.001 for millimeters).
    pub unit_scale: f64,
    pub delimiter: char,
    pub has_header: bool,
    /// Resampling interval in seconds.
    pub interval: f64,
    /// Trajectories shorter than this many cells are discarded.
    pub min_length: usize,
    /// Keep only samples inside `[xmin, ymin, xmax, ymax]` (grid units).
    pub bounds: Option<[f64; 4]>,
}

impl Default for AtcSpec {
    fn default() -> Self {
        Self {
            time_column: 0,
            person_column: 1,
            x_column: 2,
            y_column: 3,
            unit_scale: 0.001,
            delimiter: ',',
            has_header: false,
            interval: 2.0,
            min_length: 2,
            bounds: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtcCorpus {
    pub trajectories: Vec<Trajectory>,
    /// Person id of each trajectory.
    pub people: Vec<String>,
    pub dropped_blocked: usize,
    pub dropped_outside: usize,
    pub dropped_short: usize,
}

struct Sample {
    time: f64,
    point: [f64; 2],
}

/// Picks, for each grid time `t0 + k·interval` up to the last sample, the
/// sample nearest in time (the earlier one on ties).
fn resample(samples: &[Sample], interval: f64) -> Vec<(f64, [f64; 2])> {
    let t0 = samples[0].time;
    let end = samples[samples.len() - 1].time;
    let mut out = Vec::new();
    let mut j = 0;
    let mut k = 0u64;
    loop {
        let t = t0 + k as f64 * interval;
        if t > end + 1e-9 {
            break;
        }
        while j + 1 < samples.len() && (samples[j + 1].time - t).abs() < (samples[j].time - t).abs() {
            j += 1;
        }
        out.push((t, samples[j].point));
        k += 1;
    }
    out
}

pub fn ingest_atc(reader: impl Read, spec: &AtcSpec, net: &RoadNetwork) -> Result<AtcCorpus> {
    if !(spec.interval > 0.0) || !(spec.unit_scale > 0.0) {
        return Err(Error::config("interval and unit_scale must be positive"));
    }
    if !spec.delimiter.is_ascii() {
        return Err(Error::config("delimiter must be an ASCII character"));
    }
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(spec.has_header)
        .delimiter(spec.delimiter as u8)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let needed = [spec.time_column, spec.person_column, spec.x_column, spec.y_column]
        .into_iter()
        .max()
        .expect("four columns");
    let mut people: BTreeMap<String, Vec<(usize, Sample)>> = BTreeMap::new();
    let (mut dropped_blocked, mut dropped_outside) = (0, 0);
    for (i, record) in csv.records().enumerate() {
        let record = record.map_err(|e| Error::data(format!("line {}: {e}", i + 1 + usize::from(spec.has_header))))?;
        let line = record.position().map_or(i + 1, |p| p.line() as usize);
        if record.len() <= needed {
            return Err(Error::data(format!("line {line}: expected at least {} columns, found {}", needed + 1, record.len())));
        }
        let num = |col: usize, what: &str| -> Result<f64> {
            record[col]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::data(format!("line {line}: bad {what} `{}`", &record[col])))
        };
        let time = num(spec.time_column, "timestamp")?;
        let point = [num(spec.x_column, "x")? * spec.unit_scale, num(spec.y_column, "y")? * spec.unit_scale];
        let person = record[spec.person_column].to_string();
        if let Some([x0, y0, x1, y1]) = spec.bounds {
            if point[0] < x0 || point[0] > x1 || point[1] < y0 || point[1] > y1 {
                dropped_outside += 1;
                continue;
            }
        }
        match net.spec().discretize(point) {
            Err(_) => {
                dropped_outside += 1;
                continue;
            }
            Ok(cell) if net.vertex(cell).is_none() => {
                dropped_blocked += 1;
                continue;
            }
            Ok(_) => {}
        }
        people.entry(person).or_default().push((line, Sample { time, point }));
    }
    if dropped_blocked > 0 || dropped_outside > 0 {
        log::warn!("dropped {dropped_blocked} samples in blocked cells and {dropped_outside} outside the map");
    }

    let mut out = AtcCorpus { trajectories: Vec::new(), people: Vec::new(), dropped_blocked, dropped_outside, dropped_short: 0 };
    for (person, mut rows) in people {
        rows.sort_by(|a, b| a.1.time.total_cmp(&b.1.time).then(a.0.cmp(&b.0)));
        let samples: Vec<Sample> = rows.into_iter().map(|(_, s)| s).collect();
        let resampled = resample(&samples, spec.interval);
        let traj = Trajectory::from_raw(&resampled, net).map_err(|e| Error::data(format!("person {person}: {e}")))?;
        if traj.len() < spec.min_length {
            out.dropped_short += 1;
            continue;
        }
        out.trajectories.push(traj);
        out.people.push(person);
    }
    if out.trajectories.is_empty() {
        return Err(Error::data("no trajectories survived ingestion"));
    }
    Ok(out)
}
