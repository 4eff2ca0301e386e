//! Run manifests: what was run, on which inputs, producing which outputs.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const RUN_SCHEMA: &str = "nptirun/1";
/// Output path used for data written to standard output.
pub const STDOUT: &str = "-";
pub const DEFAULT_RUN_DIR: &str = ".npti-runs";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: String,
    pub command: String,
    /// Arguments after the program name, enough to rerun the command.
    pub argv: Vec<String>,
    pub cwd: String,
    pub started_at: String,
    pub finished_at: String,
    pub tool_version: String,
    pub inputs: Vec<FileHash>,
    pub config: serde_json::Value,
    pub outputs: Vec<FileHash>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> Result<FileHash> {
    let bytes = fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
    Ok(FileHash {
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
    })
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Collects provenance while a command runs.
#[derive(Debug)]
pub struct Recorder {
    manifest: RunManifest,
}

impl Recorder {
    pub fn start(command: &str, argv: &[String]) -> Self {
        Self {
            manifest: RunManifest {
                schema: RUN_SCHEMA.into(),
                command: command.into(),
                argv: argv.to_vec(),
                cwd: std::env::current_dir().map(|p| p.display().to_string()).unwrap_or_default(),
                started_at: now(),
                finished_at: String::new(),
                tool_version: env!("CARGO_PKG_VERSION").into(),
                inputs: Vec::new(),
                config: serde_json::Value::Null,
                outputs: Vec::new(),
            },
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let h = hash_file(path)?;
        self.manifest.inputs.push(h);
        Ok(())
    }

    pub fn config(&mut self, config: serde_json::Value) {
        self.manifest.config = config;
    }

    pub fn output(&mut self, path: &Path) -> Result<()> {
        let h = hash_file(path)?;
        self.manifest.outputs.push(h);
        Ok(())
    }

    pub fn stdout(&mut self, text: &str) {
        self.manifest.outputs.push(FileHash {
            path: STDOUT.into(),
            sha256: sha256_hex(text.as_bytes()),
        });
    }

    /// Writes the manifest to `explicit`, else next to the first file
    /// output, else into the default run directory.
    pub fn finish(mut self, explicit: Option<&Path>) -> Result<PathBuf> {
        self.manifest.finished_at = now();
        let path = match explicit {
            Some(p) => p.to_path_buf(),
            None => match self.manifest.outputs.iter().find(|o| o.path != STDOUT) {
                Some(o) => PathBuf::from(format!("{}.manifest.json", o.path)),
                None => {
                    fs::create_dir_all(DEFAULT_RUN_DIR)?;
                    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%S%.6fZ");
                    PathBuf::from(DEFAULT_RUN_DIR).join(format!("{}-{stamp}.manifest.json", self.manifest.command))
                }
            },
        };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, serde_json::to_string_pretty(&self.manifest)?)
            .with_context(|| format!("writing manifest {}", path.display()))?;
        Ok(path)
    }
}

pub fn load_manifest(path: &Path) -> Result<RunManifest> {
    let text = fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
    let m: RunManifest = serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))?;
    anyhow::ensure!(m.schema == RUN_SCHEMA, "unsupported manifest schema {:?}", m.schema);
    Ok(m)
}
