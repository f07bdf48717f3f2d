//! Artifact plumbing: input hashing, result files and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::parse::InputError;

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Manifest {
    pub schema_version: u32,
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Arguments after the binary name, enough to rerun the command.
    pub args: Vec<String>,
    pub seed: Option<u64>,
    pub inputs: Vec<FileDigest>,
    /// Hash over the arguments and every input file's content.
    pub inputs_hash: String,
    pub outputs: Vec<FileDigest>,
}

/// Collects inputs and artifacts for one invocation.
pub struct Run {
    pub command: &'static str,
    pub args: Vec<String>,
    pub out_dir: PathBuf,
    pub seed: Option<u64>,
    inputs: Vec<(String, Vec<u8>)>,
    outputs: Vec<FileDigest>,
}

impl Run {
    pub fn new(command: &'static str, args: Vec<String>, out_dir: PathBuf) -> Self {
        Self { command, args, out_dir, seed: None, inputs: Vec::new(), outputs: Vec::new() }
    }

    /// Reads an input file and records its digest.
    pub fn read_input(&mut self, path: &Path) -> Result<String> {
        let bytes = fs::read(path).map_err(|e| InputError(format!("reading {}: {e}", path.display())))?;
        let text = String::from_utf8(bytes.clone()).map_err(|_| InputError(format!("{} is not UTF-8", path.display())))?;
        self.inputs.push((path.display().to_string(), bytes));
        Ok(text)
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        fs::create_dir_all(&self.out_dir).with_context(|| format!("creating {}", self.out_dir.display()))?;
        let path = self.out_dir.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.push(FileDigest { path: name.to_string(), sha256: sha256_hex(contents.as_bytes()) });
        Ok(())
    }

    /// Writes the versioned JSON result document and returns it.
    pub fn write_json(&mut self, result: &impl Serialize) -> Result<String> {
        #[derive(Serialize)]
        struct Doc<'a, T> {
            schema: String,
            result: &'a T,
        }
        let doc = Doc { schema: format!("spongedim/{}/v{SCHEMA_VERSION}", self.command), result };
        let text = serde_json::to_string_pretty(&doc)? + "\n";
        self.write(&format!("{}.json", self.command), &text)?;
        Ok(text)
    }

    pub fn finish(self) -> Result<Manifest> {
        let mut h = Sha256::new();
        for a in &self.args {
            h.update(a.as_bytes());
            h.update([0]);
        }
        for (_, bytes) in &self.inputs {
            h.update(sha256_hex(bytes).as_bytes());
        }
        let manifest = Manifest {
            schema_version: SCHEMA_VERSION,
            tool: "spongedim".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: self.command.into(),
            args: self.args,
            seed: self.seed,
            inputs: self.inputs.iter().map(|(p, b)| FileDigest { path: p.clone(), sha256: sha256_hex(b) }).collect(),
            inputs_hash: h.finalize().iter().map(|b| format!("{b:02x}")).collect(),
            outputs: self.outputs,
        };
        fs::create_dir_all(&self.out_dir)?;
        fs::write(self.out_dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(manifest)
    }
}
