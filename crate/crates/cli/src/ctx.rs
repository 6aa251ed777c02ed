use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const MANIFEST_SUFFIX: &str = ".manifest.json";

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn manifest_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.as_os_str().to_owned();
    name.push(MANIFEST_SUFFIX);
    PathBuf::from(name)
}

#[derive(Clone, Debug, Serialize)]
pub struct InputRef {
    pub path: String,
    pub sha256: String,
    /// Hash of the input's own manifest, when it has one.
    pub manifest_sha256: Option<String>,
}

#[derive(Debug, Serialize)]
struct OutputRef {
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    output: OutputRef,
    inputs: &'a [InputRef],
    seed: Option<u64>,
    config: &'a Value,
}

/// Tracks the inputs a command reads so every artifact it writes can name them.
pub struct Ctx {
    command: String,
    out_dir: Option<PathBuf>,
    inputs: Vec<InputRef>,
    pub seed: Option<u64>,
    pub config: Value,
}

impl Ctx {
    pub fn new(command: &str, out_dir: Option<PathBuf>) -> Self {
        Self { command: command.into(), out_dir, inputs: Vec::new(), seed: None, config: Value::Null }
    }

    /// Adds the keys of a JSON object to the recorded config.
    pub fn merge_config(&mut self, extra: Value) {
        if let Value::Object(map) = extra {
            for (k, v) in map {
                self.config[k.as_str()] = v;
            }
        }
    }

    pub fn read(&mut self, path: &Path) -> Result<String> {
        let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
        let manifest_sha256 = fs::read(manifest_path(path)).ok().map(|m| sha256_hex(&m));
        self.inputs.push(InputRef { path: path.display().to_string(), sha256: sha256_hex(&bytes), manifest_sha256 });
        String::from_utf8(bytes).map_err(|_| CliError::invalid(format!("{} is not UTF-8 text", path.display())))
    }

    /// Relative outputs land under the output directory when one is set.
    pub fn resolve(&self, path: &Path) -> PathBuf {
        match &self.out_dir {
            Some(dir) if path.is_relative() => dir.join(path),
            _ => path.to_path_buf(),
        }
    }

    /// Writes an artifact and its manifest; returns the resolved path.
    pub fn write(&self, path: &Path, contents: &[u8]) -> Result<PathBuf> {
        let path = self.resolve(path);
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
        let manifest = Manifest {
            tool: "autobuild",
            version: env!("CARGO_PKG_VERSION"),
            command: &self.command,
            output: OutputRef { path: path.display().to_string(), sha256: sha256_hex(contents) },
            inputs: &self.inputs,
            seed: self.seed,
            config: &self.config,
        };
        let mut text = serde_json::to_string_pretty(&manifest).map_err(CliError::invalid)?;
        text.push('\n');
        let mpath = manifest_path(&path);
        fs::write(&mpath, text).map_err(|e| CliError::io(&mpath, e))?;
        log::info!("wrote {}", path.display());
        Ok(path)
    }
}
