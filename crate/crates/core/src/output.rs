//! CSV and JSON result files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::error::{Result, SimError};
use crate::harness::{SweepResult, SweepRow};

pub const CSV_HEADER: [&str; 9] = [
    "scheme",
    "csi",
    "bf",
    "direction",
    "power_dbw",
    "mean_rate_mbps",
    "std_rate_mbps",
    "trials",
    "seed",
];

/// JSON mirror of a sweep with the configuration that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultDocument {
    pub config: SimConfig,
    #[serde(flatten)]
    pub result: SweepResult,
}

pub fn write_csv<W: std::io::Write>(w: W, result: &SweepResult) -> Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(CSV_HEADER)?;
    for r in &result.rows {
        out.write_record(csv_fields(r))?;
    }
    out.flush().map_err(|e| SimError::io("<csv>", e))?;
    Ok(())
}

fn csv_fields(r: &SweepRow) -> [String; 9] {
    [
        r.scheme.clone(),
        r.csi.clone(),
        r.bf.clone(),
        r.direction.label().to_string(),
        r.power_dbw.to_string(),
        r.mean_rate_mbps.to_string(),
        r.std_rate_mbps.to_string(),
        r.trials.to_string(),
        r.seed.to_string(),
    ]
}

pub fn write_csv_file(path: impl AsRef<Path>, result: &SweepResult) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| SimError::io(path, e))?;
    write_csv(std::io::BufWriter::new(file), result)
}

pub fn to_json(cfg: &SimConfig, result: &SweepResult) -> Result<String> {
    Ok(serde_json::to_string_pretty(&ResultDocument {
        config: cfg.clone(),
        result: result.clone(),
    })?)
}

pub fn from_json(text: &str) -> Result<ResultDocument> {
    Ok(serde_json::from_str(text)?)
}

pub fn write_json_file(path: impl AsRef<Path>, cfg: &SimConfig, result: &SweepResult) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_json(cfg, result)?).map_err(|e| SimError::io(path, e))
}

/// Writes `results.csv` and `results.json` into `dir`, creating it if needed.
pub fn emit(dir: impl AsRef<Path>, cfg: &SimConfig, result: &SweepResult) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| SimError::io(dir, e))?;
    write_csv_file(dir.join("results.csv"), result)?;
    write_json_file(dir.join("results.json"), cfg, result)
}
