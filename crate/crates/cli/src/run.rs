//! Output directories and the run manifest written at the end of each command.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Everything needed to re-run a command: its arguments, effective
/// configuration, and the hashes of the inputs it read.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub args: Vec<String>,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub started_at: String,
    pub finished_at: String,
    /// Input path -> sha256 of its contents (directories hash every file).
    pub inputs: BTreeMap<String, String>,
    /// Files written, relative to the output directory.
    pub outputs: Vec<String>,
}

pub struct Run {
    pub out: PathBuf,
    command: String,
    args: Vec<String>,
    started_at: String,
    inputs: BTreeMap<String, String>,
    config: serde_json::Value,
    seed: Option<u64>,
    /// The output directory did not exist before this run.
    created: bool,
    finished: bool,
}

impl Run {
    pub fn start(command: &str, args: &[String], out: &Path) -> Result<Self> {
        let created = !out.exists();
        fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        Ok(Self {
            out: out.to_path_buf(),
            command: command.to_string(),
            args: args.to_vec(),
            started_at: now(),
            inputs: BTreeMap::new(),
            config: serde_json::Value::Null,
            seed: None,
            created,
            finished: false,
        })
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.insert(path.display().to_string(), hash_path(path)?);
        Ok(())
    }

    pub fn config<T: Serialize>(&mut self, config: &T, seed: Option<u64>) -> Result<()> {
        self.config = serde_json::to_value(config)?;
        self.seed = seed;
        Ok(())
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    pub fn write_json<T: Serialize>(&self, rel: &str, value: &T) -> Result<()> {
        write_atomic(&self.path(rel), (serde_json::to_string_pretty(value)? + "\n").as_bytes())
    }

    pub fn write_text(&self, rel: &str, text: &str) -> Result<()> {
        write_atomic(&self.path(rel), text.as_bytes())
    }

    /// Writes the manifest; called last so that its output list is complete.
    pub fn finish(mut self) -> Result<RunManifest> {
        self.finished = true;
        let mut outputs = Vec::new();
        list_files(&self.out, &self.out, &mut outputs)?;
        outputs.retain(|p| p != MANIFEST_FILE);
        let manifest = RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: std::mem::take(&mut self.command),
            args: std::mem::take(&mut self.args),
            config: self.config.take(),
            seed: self.seed,
            started_at: std::mem::take(&mut self.started_at),
            finished_at: now(),
            inputs: std::mem::take(&mut self.inputs),
            outputs,
        };
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        write_atomic(&self.out.join(MANIFEST_FILE), text.as_bytes())?;
        Ok(manifest)
    }
}

impl Drop for Run {
    /// A run that failed before writing anything leaves no directory behind.
    fn drop(&mut self) {
        if self.created && !self.finished {
            let _ = fs::remove_dir(&self.out);
        }
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Write to a sibling temporary file, then rename over the target.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

fn list_files(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            list_files(root, &p, out)?;
        } else {
            let rel = p.strip_prefix(root).expect("walked from root");
            out.push(rel.to_string_lossy().replace('\\', "/"));
        }
    }
    Ok(())
}

/// sha256 of a file, or of every file under a directory in path order.
pub fn hash_path(path: &Path) -> Result<String> {
    let mut hasher = Sha256::new();
    if path.is_dir() {
        let mut files = Vec::new();
        list_files(path, path, &mut files)?;
        for rel in files {
            hasher.update(rel.as_bytes());
            hasher.update(fs::read(path.join(&rel)).with_context(|| format!("reading {rel}"))?);
        }
    } else {
        hasher.update(fs::read(path).with_context(|| format!("reading {}", path.display()))?);
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}
