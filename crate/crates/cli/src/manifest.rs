use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Record of one command invocation, written before its outputs and finalized after them.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub config_sha256: String,
    pub seed: u64,
    /// Input files keyed by display path, with their SHA-256.
    pub inputs: BTreeMap<String, String>,
    /// Output files relative to the output directory.
    pub outputs: Vec<String>,
    /// Unix time from `SOURCE_DATE_EPOCH`; absent otherwise so reruns stay byte-identical.
    pub timestamp: Option<u64>,
    pub status: String,
    #[serde(skip)]
    dir: PathBuf,
}

impl RunManifest {
    pub fn new(command: &str, config_json: &[u8], seed: u64, dir: &Path) -> Self {
        RunManifest {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: sha256_hex(config_json),
            seed,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            timestamp: std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|v| v.parse().ok()),
            status: "running".into(),
            dir: dir.to_path_buf(),
        }
    }

    fn display(&self, path: &Path) -> String {
        path.strip_prefix(&self.dir)
            .unwrap_or(path)
            .to_string_lossy()
            .into_owned()
    }

    /// Reads an input file, hashing it into the manifest; a missing file is a usage error.
    pub fn read_input(&mut self, path: &Path) -> Result<Vec<u8>, CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
        self.inputs.insert(self.display(path), sha256_hex(&bytes));
        Ok(bytes)
    }

    pub fn plan(&mut self, names: &[&str]) {
        self.outputs.extend(names.iter().map(|s| s.to_string()));
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn file(&self) -> PathBuf {
        self.dir.join(format!("manifest-{}.json", self.command))
    }

    fn write(&self) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self).map_err(|e| CliError::data(e.to_string()))?;
        text.push('\n');
        std::fs::write(self.file(), text).map_err(|e| CliError::data(e.to_string()))
    }

    pub fn begin(&self) -> Result<(), CliError> {
        std::fs::create_dir_all(&self.dir)
            .map_err(|e| CliError::usage(format!("cannot create {}: {e}", self.dir.display())))?;
        self.write()
    }

    /// Marks the run complete after checking that every planned output exists.
    pub fn finish(mut self) -> Result<(), CliError> {
        for name in &self.outputs {
            if !self.dir.join(name).is_file() {
                self.status = format!("failed: missing output {name}");
                self.write()?;
                return Err(CliError::data(format!("output {name} was not produced")));
            }
        }
        self.status = "complete".into();
        self.write()
    }
}
