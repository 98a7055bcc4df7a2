//! Experiment harness for the bound certification library.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

pub mod config;
pub mod coverage;
pub mod lqg;
pub mod oracle;

use config::{ExperimentConfig, Kind};

/// What an experiment produced and whether every asserted property held.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub passed: bool,
    pub summary: String,
    pub files: Vec<PathBuf>,
}

pub fn write_csv<I>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn run(kind: Kind, cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    match kind {
        Kind::OracleValidate => oracle::run_oracle_validate(cfg, out).context("oracle-validate"),
        Kind::LqgBounds => lqg::run_lqg_bounds(cfg, out).context("lqg-bounds"),
        Kind::CoverageSweep => coverage::run_coverage_sweep(cfg, out).context("coverage-sweep"),
    }
}
