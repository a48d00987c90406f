//! Run manifests and artifact emission.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliResult;
use crate::settings::Table;

/// One output file of a command.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    pub fn new(name: &str, bytes: Vec<u8>) -> Self {
        Self {
            name: name.to_string(),
            bytes,
        }
    }

    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(&self.bytes))
    }
}

/// Everything a command produced. The first artifact is the primary one.
#[derive(Debug, Clone)]
pub struct Run {
    pub command: &'static str,
    pub params: Table,
    pub seeds: Vec<u64>,
    pub artifacts: Vec<Artifact>,
    /// Remarks for stderr; not part of any artifact.
    pub notes: Vec<String>,
}

/// Description of a run: replaying `params` as a config file reproduces the
/// outputs byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub params: BTreeMap<String, String>,
    pub seeds: Vec<u64>,
    /// SHA-256 of each written output, keyed by file name.
    pub outputs: BTreeMap<String, String>,
}

impl Run {
    /// Manifest covering the given artifacts.
    pub fn manifest(&self, written: &[&Artifact]) -> RunManifest {
        RunManifest {
            command: self.command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            params: self.params.clone(),
            seeds: self.seeds.clone(),
            outputs: written.iter().map(|a| (a.name.clone(), a.sha256())).collect(),
        }
    }

    /// Writes every artifact plus `manifest.json` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> CliResult<RunManifest> {
        std::fs::create_dir_all(dir)?;
        for a in &self.artifacts {
            std::fs::write(dir.join(&a.name), &a.bytes)?;
        }
        let all: Vec<&Artifact> = self.artifacts.iter().collect();
        let manifest = self.manifest(&all);
        std::fs::write(dir.join("manifest.json"), manifest_bytes(&manifest)?)?;
        Ok(manifest)
    }

    /// Writes the primary artifact to `out` and its manifest to `err`.
    pub fn write_streams(&self, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<RunManifest> {
        let primary = &self.artifacts[0];
        out.write_all(&primary.bytes)?;
        out.flush()?;
        let manifest = self.manifest(&[primary]);
        err.write_all(&manifest_bytes(&manifest)?)?;
        Ok(manifest)
    }
}

fn manifest_bytes(m: &RunManifest) -> CliResult<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(m)?;
    v.push(b'\n');
    Ok(v)
}

/// Renders manifest params as a config file.
pub fn params_as_config(params: &BTreeMap<String, String>) -> String {
    params.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}
