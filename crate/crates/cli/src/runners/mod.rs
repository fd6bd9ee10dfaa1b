//! Experiment drivers behind the CLI verbs.
//!
//! Each runner consumes a validated [`RunConfig`](crate::config::RunConfig),
//! writes its CSV/JSON artifacts under the output directory, and returns the
//! declared assertions it evaluated. The process exit code is nonzero iff any
//! returned assertion failed, so scripted sweeps can gate on it.

mod checksrun;
mod contraction;
mod edsweep;
mod suppression;
mod toy;

pub use checksrun::run_checks;
pub use contraction::run_contraction;
pub use edsweep::run_ed_sweep;
pub use suppression::{resume_suppression, run_suppression};
pub use toy::run_toy_model;

use crate::config::RunConfig;
use crate::csvout::Provenance;
use anyhow::Result;
use serde::Serialize;
use std::path::Path;

/// One declared acceptance assertion evaluated by a runner.
#[derive(Debug, Clone, Serialize)]
pub struct Assertion {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Assertion {
    pub fn check(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }
}

/// What a runner leaves behind: its assertions plus a machine-readable
/// summary (also written to `summary.json` in the output directory).
#[derive(Debug, Serialize)]
pub struct RunArtifacts {
    pub experiment: String,
    pub config_hash: String,
    pub seed: u64,
    pub assertions: Vec<Assertion>,
    pub summary: serde_json::Value,
}

impl RunArtifacts {
    pub fn all_pass(&self) -> bool {
        self.assertions.iter().all(|a| a.pass)
    }

    pub fn write_summary(&self, out: &Path) -> Result<()> {
        std::fs::create_dir_all(out)?;
        let file = std::fs::File::create(out.join("summary.json"))?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), self)?;
        Ok(())
    }
}

pub(crate) fn provenance(cfg: &RunConfig) -> Provenance {
    Provenance::new(cfg.hash(), cfg.seed)
}

pub(crate) fn artifacts(
    cfg: &RunConfig,
    assertions: Vec<Assertion>,
    summary: serde_json::Value,
    out: &Path,
) -> Result<RunArtifacts> {
    let art = RunArtifacts {
        experiment: cfg.experiment.clone(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        assertions,
        summary,
    };
    art.write_summary(out)?;
    Ok(art)
}
