//! Output directory layout, atomic writes and per-command manifests.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
}

pub const MANIFEST: &str = "manifest.json";

/// Root output directory.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub root: PathBuf,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Workspace { root: root.into() }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    /// Label of a path: relative to the root when inside it.
    pub fn label(&self, p: &Path) -> String {
        p.strip_prefix(&self.root).unwrap_or(p).to_string_lossy().replace('\\', "/")
    }

    pub fn exists(&self, rel: &str) -> bool {
        self.path(rel).exists()
    }

    pub fn manifest(&self, command: &str) -> CliResult<Option<Manifest>> {
        let p = self.path(&format!("{}/{}", command, MANIFEST));
        if !p.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))?;
        Ok(Some(serde_json::from_str(&text)?))
    }
}

/// Tracks one command's reads and writes for its manifest.
pub struct Stage<'a> {
    pub ws: &'a Workspace,
    pub command: &'static str,
    inputs: Vec<FileHash>,
    outputs: Vec<FileHash>,
}

impl<'a> Stage<'a> {
    pub fn new(ws: &'a Workspace, command: &'static str) -> Self {
        Stage { ws, command, inputs: Vec::new(), outputs: Vec::new() }
    }

    pub fn read(&mut self, path: &Path) -> CliResult<Vec<u8>> {
        let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
        let label = self.ws.label(path);
        if !self.inputs.iter().any(|f| f.path == label) {
            self.inputs.push(FileHash { path: label, sha256: sha256_hex(&bytes) });
        }
        Ok(bytes)
    }

    pub fn read_string(&mut self, path: &Path) -> CliResult<String> {
        String::from_utf8(self.read(path)?).map_err(|_| CliError::Data(format!("{}: not UTF-8", path.display())))
    }

    /// Reads `<root>/<rel>`.
    pub fn read_rel(&mut self, rel: &str) -> CliResult<String> {
        let p = self.ws.path(rel);
        self.read_string(&p)
    }

    /// Writes `<root>/<command>/<name>` atomically.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        let rel = format!("{}/{}", self.command, name);
        write_atomic(&self.ws.path(&rel), bytes)?;
        self.outputs.retain(|f| f.path != rel);
        self.outputs.push(FileHash { path: rel, sha256: sha256_hex(bytes) });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    pub fn finish(mut self, config: serde_json::Value, seed: u64) -> CliResult<Manifest> {
        self.inputs.sort_by(|a, b| a.path.cmp(&b.path));
        self.outputs.sort_by(|a, b| a.path.cmp(&b.path));
        let m = Manifest {
            command: String::from(self.command),
            version: String::from(env!("CARGO_PKG_VERSION")),
            seed,
            config,
            inputs: self.inputs,
            outputs: self.outputs,
        };
        let mut s = serde_json::to_string_pretty(&m)?;
        s.push('\n');
        write_atomic(&self.ws.path(&format!("{}/{}", self.command, MANIFEST)), s.as_bytes())?;
        Ok(m)
    }
}

/// Re-hashes a manifest's inputs; returns the first mismatch.
pub fn verify_inputs(ws: &Workspace, m: &Manifest) -> CliResult<()> {
    for f in &m.inputs {
        let p = if Path::new(&f.path).is_absolute() { PathBuf::from(&f.path) } else { ws.path(&f.path) };
        let actual = fs::read(&p).map(|b| sha256_hex(&b)).ok();
        if actual.as_deref() != Some(f.sha256.as_str()) {
            return Err(CliError::Data(format!("input {} of `{}` no longer matches its manifest hash", f.path, m.command)));
        }
    }
    Ok(())
}
