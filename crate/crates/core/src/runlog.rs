//! Append-only run logs (one JSON object per line) and the files derived
//! from them.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::optimizer::{Observation, Source};

pub const LOG_FILE: &str = "log.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const BEST_FILE: &str = "best.json";
pub const CONVERGENCE_FILE: &str = "convergence.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunLogRecord {
    pub index: usize,
    pub source: Source,
    pub params_raw: Vec<f64>,
    pub params_unit: Vec<f64>,
    pub cost: Option<f64>,
    pub oscillation_cost: Option<f64>,
    pub width_cost: Option<f64>,
    pub range_penalty: Option<f64>,
    pub total_detections: Option<u64>,
    pub failed: bool,
    pub error: Option<String>,
    /// Seconds since the start of the run when the record was written.
    pub wall_time: f64,
    pub seed: u64,
}

impl RunLogRecord {
    pub fn from_observation(obs: &Observation, wall_time: f64) -> Self {
        let r = obs.report.as_ref();
        let valid = |v: f64| Some(v).filter(|_| obs.cost.is_some());
        Self {
            index: obs.index,
            source: obs.source,
            params_raw: obs.params_raw.clone(),
            params_unit: obs.params_unit.clone(),
            cost: obs.cost,
            oscillation_cost: r.and_then(|r| valid(r.oscillation_cost)),
            width_cost: r.and_then(|r| valid(r.width_cost)),
            range_penalty: r.and_then(|r| valid(r.range_penalty)),
            total_detections: r.map(|r| r.total_detections),
            failed: obs.cost.is_none(),
            error: obs.error.clone(),
            wall_time,
            seed: obs.seed,
        }
    }

    /// Equal in everything the optimiser determines, wall time aside.
    pub fn same_outcome(&self, other: &Self) -> Option<&'static str> {
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        let obits = |v: Option<f64>| v.map(f64::to_bits);
        if self.index != other.index {
            Some("index")
        } else if self.source != other.source {
            Some("source")
        } else if self.seed != other.seed {
            Some("seed")
        } else if bits(&self.params_raw) != bits(&other.params_raw) {
            Some("params_raw")
        } else if bits(&self.params_unit) != bits(&other.params_unit) {
            Some("params_unit")
        } else if obits(self.cost) != obits(other.cost) || self.failed != other.failed {
            Some("cost")
        } else if obits(self.oscillation_cost) != obits(other.oscillation_cost)
            || obits(self.width_cost) != obits(other.width_cost)
            || obits(self.range_penalty) != obits(other.range_penalty)
            || self.total_detections != other.total_detections
        {
            Some("cost components")
        } else {
            None
        }
    }
}

/// Writes records as they arrive and flushes each one.
pub struct LogWriter {
    file: File,
}

impl LogWriter {
    pub fn create(path: &Path) -> std::io::Result<Self> {
        Ok(Self {
            file: File::create(path)?,
        })
    }

    pub fn append(&mut self, record: &RunLogRecord) -> std::io::Result<()> {
        let line = serde_json::to_string(record).map_err(std::io::Error::other)?;
        writeln!(self.file, "{line}")?;
        self.file.flush()
    }
}

pub fn read_log(path: &Path) -> std::io::Result<Vec<RunLogRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RunLogRecord = serde_json::from_str(&line).map_err(|e| {
            std::io::Error::new(std::io::ErrorKind::InvalidData, format!("line {}: {e}", n + 1))
        })?;
        if rec.index != out.len() {
            return Err(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("line {}: index {} out of sequence", n + 1, rec.index),
            ));
        }
        out.push(rec);
    }
    Ok(out)
}

/// Best cost so far against evaluation index. Failed evaluations leave the
/// running best unchanged; rows before the first valid cost have it empty.
pub fn convergence_csv(records: &[RunLogRecord]) -> String {
    let mut out = String::from("index,source,cost,best_so_far,failed\n");
    let mut best: Option<f64> = None;
    for r in records {
        if let Some(c) = r.cost {
            best = Some(best.map_or(c, |b| b.min(c)));
        }
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.index,
            r.source,
            fmt(r.cost),
            fmt(best),
            r.failed
        ));
    }
    out
}

/// Lowest valid cost; ties go to the earliest record.
pub fn best_record(records: &[RunLogRecord]) -> Option<&RunLogRecord> {
    records
        .iter()
        .filter(|r| r.cost.is_some())
        .fold(None, |acc: Option<&RunLogRecord>, r| match acc {
            Some(a) if a.cost <= r.cost => Some(a),
            _ => Some(r),
        })
}
