//! Run manifests: what produced an output file.
//!
//! Each output `out.ext` gets a sibling `out.ext.manifest.json` recording the
//! command line, the effective configuration, seeds, SHA-256 digests of every
//! input, the tool version and start/end times.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;

pub const MANIFEST_SCHEMA: &str = "finegrain.manifest/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: String,
    pub command: String,
    pub args: Vec<String>,
    pub config: BTreeMap<String, String>,
    pub seeds: Vec<u64>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub tool_version: String,
    pub started_at: String,
    pub finished_at: String,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl RunManifest {
    /// Start a manifest; the start time is taken now.
    pub fn begin(command: &str, args: Vec<String>) -> Self {
        Self {
            schema: MANIFEST_SCHEMA.into(),
            command: command.into(),
            args,
            config: BTreeMap::new(),
            seeds: Vec::new(),
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            started_at: now(),
            finished_at: String::new(),
        }
    }

    pub fn config(&mut self, kv: &KeyValues) -> &mut Self {
        self.config = kv.entries().iter().map(|(k, v)| (k.clone(), v.to_string())).collect();
        self
    }

    pub fn seed(&mut self, seed: u64) -> &mut Self {
        self.seeds.push(seed);
        self
    }

    pub fn input(&mut self, path: &Path) -> Result<&mut Self> {
        self.inputs.insert(path.display().to_string(), sha256_file(path)?);
        Ok(self)
    }

    pub fn manifest_path(output: &Path) -> PathBuf {
        let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(".manifest.json");
        output.with_file_name(name)
    }

    /// Stamp the end time and write one manifest next to each output.
    pub fn finish(&mut self, outputs: &[&Path]) -> Result<()> {
        self.outputs = outputs.iter().map(|p| p.display().to_string()).collect();
        self.finished_at = now();
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        for out in outputs {
            write_atomic(&Self::manifest_path(out), text.as_bytes())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_records_digests_and_sits_next_to_output() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.txt");
        std::fs::write(&input, b"abc").unwrap();
        let out = dir.path().join("out.csv");
        std::fs::write(&out, b"x").unwrap();
        let mut kv = KeyValues::default();
        kv.set_raw("split.seed", "3");
        let mut m = RunManifest::begin("split", vec!["--seed".into(), "3".into()]);
        m.config(&kv).seed(3).input(&input).unwrap();
        m.finish(&[&out]).unwrap();
        let path = dir.path().join("out.csv.manifest.json");
        let back: RunManifest = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
        assert_eq!(
            back.inputs[&input.display().to_string()],
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert_eq!(back.config["split.seed"], "3");
        assert_eq!(back.seeds, vec![3]);
        assert!(!back.finished_at.is_empty());
    }
}
