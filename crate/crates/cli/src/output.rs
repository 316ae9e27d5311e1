use std::path::{Path, PathBuf};

use marta::io::{sha256_hex, write_atomic};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;

pub const CONFIG_ECHO: &str = "config.json";
pub const OUTPUTS_MANIFEST: &str = "outputs.json";

#[derive(Serialize)]
struct OutputEntry {
    path: String,
    sha256: String,
    bytes: usize,
}

/// Output directory that records every file it writes.
pub struct Outputs {
    pub dir: PathBuf,
    written: Vec<(String, String, usize)>,
}

impl Outputs {
    /// Create the directory and echo the resolved config into it.
    pub fn create(dir: PathBuf, config: &RunConfig) -> Result<Self, CliError> {
        std::fs::create_dir_all(&dir).map_err(|e| CliError::Io(dir.clone(), e))?;
        let mut out = Self {
            dir,
            written: Vec::new(),
        };
        out.write(CONFIG_ECHO, config.to_json().as_bytes())?;
        Ok(out)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        write_atomic(&path, bytes)?;
        self.record(name, bytes);
        Ok(path)
    }

    /// Note a file written by another routine.
    pub fn adopt(&mut self, path: &Path) -> Result<(), CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
        let name = path
            .strip_prefix(&self.dir)
            .unwrap_or(path)
            .to_string_lossy()
            .replace('\\', "/");
        self.record(&name, &bytes);
        Ok(())
    }

    fn record(&mut self, name: &str, bytes: &[u8]) {
        self.written.retain(|(n, _, _)| n != name);
        self.written.push((name.to_string(), sha256_hex(bytes), bytes.len()));
    }

    /// Write the hash manifest of everything produced.
    pub fn finish(self) -> Result<PathBuf, CliError> {
        let mut entries: Vec<OutputEntry> = self
            .written
            .into_iter()
            .map(|(path, sha256, bytes)| OutputEntry { path, sha256, bytes })
            .collect();
        entries.sort_by(|a, b| a.path.cmp(&b.path));
        let json = serde_json::to_string_pretty(&entries).expect("manifest serializes");
        let path = self.dir.join(OUTPUTS_MANIFEST);
        write_atomic(&path, json.as_bytes())?;
        Ok(path)
    }
}
