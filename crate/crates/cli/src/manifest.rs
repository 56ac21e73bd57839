use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use deephash::trainer::TrainConfig;

pub const PREPROCESSING: &str = "pixel bytes divided by 255";

/// Everything needed to re-run a command: its arguments, the content
/// hashes of the files it read, and the resolved training settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    /// Arguments after the program name, verbatim.
    pub args: Vec<String>,
    pub dataset: Option<String>,
    pub net_config: Option<String>,
    pub train_config: Option<TrainConfig>,
    pub seed: Option<u64>,
    pub output: String,
    /// Input path to hex SHA-256 of its contents.
    pub inputs: BTreeMap<String, String>,
    pub preprocessing: String,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

impl RunManifest {
    pub fn new(command: &str, args: &[String], output: &Path) -> Self {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            args: args.to_vec(),
            dataset: None,
            net_config: None,
            train_config: None,
            seed: None,
            output: output.display().to_string(),
            inputs: BTreeMap::new(),
            preprocessing: PREPROCESSING.to_string(),
        }
    }

    pub fn hash_inputs<'a>(&mut self, paths: impl IntoIterator<Item = &'a PathBuf>) -> Result<()> {
        for p in paths {
            self.inputs.insert(p.display().to_string(), sha256_file(p)?);
        }
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
    }

    /// Fails if any recorded input changed since the manifest was written.
    pub fn verify_inputs(&self) -> Result<()> {
        for (path, want) in &self.inputs {
            let got = sha256_file(Path::new(path))?;
            if &got != want {
                return Err(deephash::Error::config(format!(
                    "input {path} changed since the manifest was written"
                ))
                .into());
            }
        }
        Ok(())
    }
}
