use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

pub const VERSION: &str = concat!("metacausal ", env!("CARGO_PKG_VERSION"));

/// SHA-256 over a git-style blob header plus the version string.
pub fn code_hash() -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", VERSION.len()));
    h.update(VERSION);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Run record. Timestamps live only here so every other output stays
/// byte-identical across runs.
#[derive(Serialize)]
pub struct Manifest {
    pub subcommand: String,
    pub version: &'static str,
    pub code_hash: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub started_at: u64,
    pub finished_at: Option<u64>,
    pub outputs: Vec<PathBuf>,
    #[serde(skip)]
    path: PathBuf,
}

impl Manifest {
    /// Writes the manifest immediately, before the run starts.
    pub fn start(out_dir: &Path, subcommand: &str, seed: u64, config: serde_json::Value) -> Result<Self> {
        std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
        let m = Manifest {
            subcommand: subcommand.to_string(),
            version: VERSION,
            code_hash: code_hash(),
            seed,
            config,
            started_at: now(),
            finished_at: None,
            outputs: Vec::new(),
            path: out_dir.join("manifest.json"),
        };
        m.write()?;
        Ok(m)
    }

    fn write(&self) -> Result<()> {
        let text = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(&self.path, text).with_context(|| format!("writing {}", self.path.display()))
    }

    pub fn finish(mut self, outputs: Vec<PathBuf>) -> Result<()> {
        self.outputs = outputs;
        self.finished_at = Some(now());
        self.write()
    }
}
