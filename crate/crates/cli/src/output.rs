//! Staged run outputs and the run manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{Context, Result};
use serde::Serialize;

pub const MANIFEST_FILE: &str = "manifest.toml";

/// Files produced by a command, held in memory until the run succeeds.
#[derive(Debug, Default)]
pub struct RunOutput {
    pub files: Vec<(String, Vec<u8>)>,
    pub stdout: String,
}

impl RunOutput {
    pub fn add(&mut self, name: &str, contents: Vec<u8>) {
        self.files.push((name.to_string(), contents));
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<String>,
    pub seed: Option<u64>,
    pub output_dir: String,
    pub tool_version: String,
    pub wall_clock_seconds: f64,
}

impl RunManifest {
    pub fn new(command: &str, config: Option<&Path>, seed: Option<u64>, output_dir: &Path, elapsed: Duration) -> Self {
        Self {
            command: command.to_string(),
            config_path: config.map(|p| p.display().to_string()),
            seed,
            output_dir: output_dir.display().to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_clock_seconds: elapsed.as_secs_f64(),
        }
    }
}

/// Serializes rows with a header line.
pub fn csv_bytes<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
    f.write_all(contents)?;
    f.sync_all()?;
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))
}

/// Writes every file and then the manifest. On any failure the files written
/// so far are removed, along with the directory if this call created it.
pub fn commit(dir: &Path, output: &RunOutput, manifest: &RunManifest) -> Result<()> {
    let created = !dir.exists();
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut written: Vec<PathBuf> = Vec::new();
    let result = (|| -> Result<()> {
        for (name, contents) in &output.files {
            let path = dir.join(name);
            written.push(path.clone());
            write_atomic(&path, contents)?;
        }
        let path = dir.join(MANIFEST_FILE);
        written.push(path.clone());
        write_atomic(&path, toml::to_string(manifest)?.as_bytes())
    })();
    if result.is_err() {
        for path in &written {
            let _ = fs::remove_file(path);
            let _ = fs::remove_file(path.with_extension("tmp"));
        }
        if created {
            let _ = fs::remove_dir(dir);
        }
    }
    result
}
