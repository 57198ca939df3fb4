use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use serde::Serialize;

use ugac::nets::checkpoint::write_atomic;

/// Record of one CLI invocation, written once every artifact exists.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub started: String,
    pub finished: String,
    pub artifacts: Vec<PathBuf>,
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

pub struct Recorder {
    command: &'static str,
    seed: u64,
    started: String,
}

impl Recorder {
    pub fn start(command: &'static str, seed: u64) -> Self {
        Self { command, seed, started: now() }
    }

    pub fn finish(self, path: &Path, config: serde_json::Value, artifacts: Vec<PathBuf>) -> ugac::Result<()> {
        if let Some(missing) = artifacts.iter().find(|p| !p.exists()) {
            return Err(ugac::Error::Data(format!("artifact {} was not written", missing.display())));
        }
        let manifest = RunManifest {
            command: self.command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: self.seed,
            config,
            started: self.started,
            finished: now(),
            artifacts,
        };
        let text = serde_json::to_vec_pretty(&manifest).map_err(|e| ugac::Error::Data(e.to_string()))?;
        write_atomic(path, &text)
    }
}
