//! Result tables and run manifests.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::data::label_order;
use crate::orchestrator::{read_summary, EvalSummary};
use crate::partition::Axis;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("MissingMetrics: {0}")]
    MissingMetrics(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = ReportError> = std::result::Result<T, E>;

pub const AVG_COLUMN: &str = "Avg.";

/// Rows are runs, columns are labels plus `Avg.`; cells are step accuracy in
/// percent. `Avg.` is the step-weighted mean, i.e. the overall step accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub columns: Vec<String>,
    pub rows: Vec<(String, Vec<Option<f64>>)>,
}

fn column_values(summary: &EvalSummary, axis: Axis) -> BTreeMap<String, f64> {
    match axis {
        Axis::App => summary
            .by_app
            .iter()
            .map(|(k, g)| (k.clone(), g.step_accuracy))
            .collect(),
        Axis::Category => summary
            .by_category
            .iter()
            .map(|(k, g)| (k.as_str().to_string(), g.step_accuracy))
            .collect(),
    }
}

/// Builds the table from `(run name, summary)` pairs; rows are sorted by name.
pub fn build_table(runs: &[(String, EvalSummary)], axis: Axis) -> Result<ReportTable> {
    if runs.is_empty() {
        return Err(ReportError::MissingMetrics("no metrics files given".into()));
    }
    let mut labels: Vec<String> = runs
        .iter()
        .flat_map(|(_, s)| column_values(s, axis).into_keys())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    labels.sort_by(|a, b| label_order(a, b));
    let mut rows: Vec<(String, Vec<Option<f64>>)> = runs
        .iter()
        .map(|(name, s)| {
            let vals = column_values(s, axis);
            let mut cells: Vec<Option<f64>> = labels.iter().map(|l| vals.get(l).map(|v| 100.0 * v)).collect();
            cells.push(Some(100.0 * s.step_accuracy));
            (name.clone(), cells)
        })
        .collect();
    rows.sort_by(|a, b| a.0.cmp(&b.0));
    let mut columns = labels;
    columns.push(AVG_COLUMN.into());
    Ok(ReportTable { columns, rows })
}

impl ReportTable {
    /// CSV with a leading `run` column; cells use two decimals, blanks for
    /// labels a run never saw.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["run".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header)?;
        for (name, cells) in &self.rows {
            let mut rec = vec![name.clone()];
            rec.extend(cells.iter().map(|c| c.map(|v| format!("{v:.2}")).unwrap_or_default()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Run name of a metrics file: its file stem.
pub fn run_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Reads the summary record of each metrics file.
pub fn load_runs(paths: &[PathBuf]) -> Result<Vec<(String, EvalSummary)>> {
    if paths.is_empty() {
        return Err(ReportError::MissingMetrics("no metrics files given".into()));
    }
    paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p)?;
            let summary = read_summary(&text)
                .ok_or_else(|| ReportError::MissingMetrics(format!("{} has no summary record", p.display())))?;
            Ok((run_name(p), summary.final_eval))
        })
        .collect()
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    let mut f = fs::File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config: serde_json::Value,
    /// sha256 of each input, taken before processing.
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, config: serde_json::Value) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed,
            config,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> std::io::Result<()> {
        self.inputs.insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    /// Writes via a temporary file and rename so readers never see a partial manifest.
    pub fn write_atomic(&self, path: &Path) -> Result<()> {
        write_atomic(path, &serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}
