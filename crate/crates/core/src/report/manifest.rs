//! Run manifests: what a command read and wrote, with content digests.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path).map_err(|e| Error::io(path, e))?))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    /// Relative to the output directory for outputs; as given for inputs.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

impl Artifact {
    pub fn of(path: &Path, recorded_as: impl Into<String>) -> Result<Self> {
        let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(Artifact { path: recorded_as.into(), sha256: sha256_hex(&data), bytes: data.len() as u64 })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_digest: Option<String>,
    pub seed: u64,
    pub tool_version: String,
    pub inputs: Vec<Artifact>,
    pub outputs: Vec<Artifact>,
    pub started: String,
    pub finished: String,
}

pub fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

impl RunManifest {
    pub fn new(command: impl Into<String>, seed: u64, config_text: Option<&str>) -> Self {
        RunManifest {
            command: command.into(),
            config_digest: config_text.map(|t| sha256_hex(t.as_bytes())),
            seed,
            tool_version: TOOL_VERSION.to_string(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            started: now_rfc3339(),
            finished: String::new(),
        }
    }

    pub fn file_name(command: &str) -> String {
        format!("manifest-{command}.json")
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(Artifact::of(path, path.display().to_string())?);
        Ok(())
    }

    /// Records `out_dir/relative`.
    pub fn add_output(&mut self, out_dir: &Path, relative: &str) -> Result<()> {
        let a = Artifact::of(&out_dir.join(relative), relative)?;
        self.outputs.retain(|o| o.path != a.path);
        self.outputs.push(a);
        Ok(())
    }

    /// Digest-bearing fields only; equal for reruns with identical inputs.
    pub fn fingerprint(&self) -> String {
        let mut s = format!("{}\n{:?}\n{}\n{}\n", self.command, self.config_digest, self.seed, self.tool_version);
        for a in self.inputs.iter().chain(&self.outputs) {
            s.push_str(&format!("{} {} {}\n", a.path, a.sha256, a.bytes));
        }
        sha256_hex(s.as_bytes())
    }

    /// Stamps the finish time and writes the manifest into `out_dir`.
    pub fn finish(mut self, out_dir: &Path) -> Result<PathBuf> {
        self.finished = now_rfc3339();
        let path = out_dir.join(Self::file_name(&self.command));
        let json = serde_json::to_string_pretty(&self)
            .map_err(|e| Error::Format { what: "manifest", message: e.to_string() })?;
        std::fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format { what: "manifest", message: e.to_string() })
    }

    /// Recomputes every output digest under `out_dir`; returns the paths
    /// that are missing or differ.
    pub fn verify(&self, out_dir: &Path) -> Vec<String> {
        self.outputs
            .iter()
            .filter(|a| {
                let p = out_dir.join(&a.path);
                file_digest(&p).map_or(true, |d| d != a.sha256)
            })
            .map(|a| a.path.clone())
            .collect()
    }
}

/// Every `manifest-*.json` in `out_dir`, sorted by name.
pub fn manifests_in(out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(out_dir).map_err(|e| Error::io(out_dir, e))? {
        let p = entry.map_err(|e| Error::io(out_dir, e))?.path();
        let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if name.starts_with("manifest-") && name.ends_with(".json") {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}
