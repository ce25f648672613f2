//! Result files: one CSV per table plus a JSON manifest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{ExperimentResult, Verdict, VerdictEntry};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: String,
    pub config_digest: String,
    pub seed: u64,
    pub replicas: u64,
    pub noise_hash: String,
    pub verdicts: Vec<VerdictEntry>,
    pub overall: Verdict,
    /// CSV file names, relative to the manifest.
    pub tables: Vec<String>,
    pub tool_version: String,
}

pub fn csv_name(result: &ExperimentResult, table: &str) -> String {
    format!("{}_{}.csv", result.experiment.replace('-', "_"), table)
}

fn write(path: &Path, contents: &[u8]) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes the tables and `<experiment>_manifest.json` into `dir`; returns the manifest path.
/// Contents depend only on the result, so identical runs give identical files.
pub fn persist_result(result: &ExperimentResult, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tables = Vec::new();
    for t in &result.tables {
        let name = csv_name(result, &t.name);
        write(&dir.join(&name), t.to_csv().as_bytes())?;
        tables.push(name);
    }
    let manifest = Manifest {
        experiment: result.experiment.clone(),
        config_digest: result.config_digest.clone(),
        seed: result.seed,
        replicas: result.replicas,
        noise_hash: result.noise_hash.clone(),
        verdicts: result.verdicts.clone(),
        overall: result.overall(),
        tables,
        tool_version: TOOL_VERSION.into(),
    };
    let path = dir.join(format!("{}_manifest.json", result.experiment.replace('-', "_")));
    let mut json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Serde(e.to_string()))?;
    json.push('\n');
    write(&path, json.as_bytes())?;
    Ok(path)
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Serde(format!("{}: {e}", path.display())))
}
