use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::data::write_json;
use crate::error::CliResult;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Provenance record written next to every command's outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_hash: Option<String>,
    pub seed: Option<u64>,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub files: Vec<String>,
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

impl RunManifest {
    pub fn start(command: &str, config_hash: Option<String>, seed: Option<u64>) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config_hash,
            seed,
            started_unix: unix_now(),
            finished_unix: 0,
            files: Vec::new(),
        }
    }

    /// Records `files` (relative to the manifest's directory when possible)
    /// and writes the manifest to `path`.
    pub fn finish(mut self, path: &Path, files: &[PathBuf]) -> CliResult<PathBuf> {
        self.finished_unix = unix_now();
        let dir = path.parent().unwrap_or(Path::new(""));
        self.files = files
            .iter()
            .map(|f| f.strip_prefix(dir).unwrap_or(f).display().to_string())
            .collect();
        write_json(path, &self)?;
        Ok(path.to_path_buf())
    }

    /// Writes `dir/manifest.json`.
    pub fn finish_in(self, dir: &Path, files: &[PathBuf]) -> CliResult<PathBuf> {
        self.finish(&dir.join(MANIFEST_FILE), files)
    }
}
