//! Run manifest: the reproducibility record written before any results.

use std::path::Path;

use serde::{Deserialize, Serialize};

use consensus::error::{Error, Result};

/// What produced the files next to it. Written before results so a crashed
/// run still leaves its provenance; re-running the recorded command with the
/// recorded seed reproduces every output byte except this timestamp.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub scenario_path: String,
    pub output_dir: String,
    /// Argument vector as invoked.
    pub command: Vec<String>,
    pub tool_version: String,
    /// RFC 3339, UTC.
    pub timestamp: String,
    /// Seed after command-line overrides; the one the run actually used.
    pub resolved_seed: u64,
}

impl RunManifest {
    pub fn new(scenario_path: &Path, output_dir: &Path, resolved_seed: u64) -> Self {
        Self {
            scenario_path: scenario_path.display().to_string(),
            output_dir: output_dir.display().to_string(),
            command: std::env::args().collect(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: chrono::Utc::now().to_rfc3339(),
            resolved_seed,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Io(format!("manifest serialization: {e}")))?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }
}
