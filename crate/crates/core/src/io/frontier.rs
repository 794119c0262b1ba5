use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::csvio::csv_io;
use super::IoError;

/// One exported frontier member.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrontierRecord {
    pub objectives: Vec<f64>,
    pub model_text: String,
    pub task: String,
    pub seed: u64,
    pub config_hash: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlotRow {
    pub objectives: Vec<f64>,
    pub label: String,
}

fn by_first_objective(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    let key = |v: &[f64]| v.first().copied().unwrap_or(f64::NAN);
    key(a).total_cmp(&key(b)).then_with(|| {
        a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
    })
}

/// JSON lines, ordered by the first objective (stable for ties).
pub fn export_frontier(records: &[FrontierRecord], path: &Path) -> Result<(), IoError> {
    if records.is_empty() {
        return Err(IoError::EmptyFrontier);
    }
    let mut sorted: Vec<&FrontierRecord> = records.iter().collect();
    sorted.sort_by(|a, b| by_first_objective(&a.objectives, &b.objectives).then_with(|| a.model_text.cmp(&b.model_text)));
    let mut w = BufWriter::new(File::create(path)?);
    for r in sorted {
        let line = serde_json::to_string(r).map_err(|e| IoError::Io(e.into()))?;
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn import_frontier(path: &Path) -> Result<Vec<FrontierRecord>, IoError> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| IoError::Json { line: i + 1, message: e.to_string() })
        })
        .collect()
}

/// CSV `objective1,objective2,label`, sorted by the first objective.
pub fn emit_plot_data(rows: &[PlotRow], path: &Path) -> Result<(), IoError> {
    if let Some(r) = rows.iter().find(|r| r.objectives.len() != 2) {
        return Err(IoError::Dimension(r.objectives.len()));
    }
    let mut sorted: Vec<&PlotRow> = rows.iter().collect();
    sorted.sort_by(|a, b| by_first_objective(&a.objectives, &b.objectives).then_with(|| a.label.cmp(&b.label)));
    let mut w = csv::Writer::from_path(path).map_err(csv_io)?;
    w.write_record(["objective1", "objective2", "label"]).map_err(csv_io)?;
    for r in sorted {
        w.write_record([format!("{:?}", r.objectives[0]), format!("{:?}", r.objectives[1]), r.label.clone()])
            .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}
