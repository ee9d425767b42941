//! Run manifests: everything needed to rerun a command and check that the
//! rerun reproduced it.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, CliResult};
use crate::io::{read_json, sha256_file, to_json, write_file};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path) -> CliResult<Self> {
        Ok(Self { path: path.to_path_buf(), sha256: sha256_file(path)? })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// The fully resolved command config.
    pub config: Value,
    pub seed: Option<u64>,
    pub inputs: Vec<FileDigest>,
    /// Output files, relative to the output directory.
    pub outputs: Vec<FileDigest>,
    /// Command-specific records (frame, acceptance rates, scaling, ...).
    #[serde(default)]
    pub details: Value,
    /// The only field that differs between reruns.
    pub wall_time_secs: f64,
}

impl Manifest {
    pub fn new(command: &str, config: &impl Serialize, seed: Option<u64>) -> Self {
        Self {
            tool: "rolem".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config: serde_json::to_value(config).expect("config serializes"),
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            details: Value::Null,
            wall_time_secs: 0.0,
        }
    }

    pub fn add_input(&mut self, path: &Path) -> CliResult<()> {
        self.inputs.push(FileDigest::of(path)?);
        Ok(())
    }

    /// Records `out/name`'s digest under its relative name.
    pub fn add_output(&mut self, out: &Path, name: &str) -> CliResult<()> {
        let sha256 = sha256_file(&out.join(name))?;
        self.outputs.push(FileDigest { path: PathBuf::from(name), sha256 });
        Ok(())
    }

    pub fn write(&self, out: &Path) -> CliResult<()> {
        write_file(&out.join(MANIFEST_FILE), &to_json(self))
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        read_json(path).map_err(|e| CliError::usage(format!("manifest: {e}")))
    }

    /// The recorded config of a manifest written by `command`.
    pub fn config_for<T: for<'de> Deserialize<'de>>(&self, command: &str) -> CliResult<T> {
        if self.command != command {
            return Err(CliError::usage(format!(
                "manifest was written by `{}`, not `{command}`",
                self.command
            )));
        }
        serde_json::from_value(self.config.clone()).map_err(|e| CliError::usage(format!("manifest config: {e}")))
    }

    /// Fails if any recorded input no longer matches its checksum.
    pub fn verify_inputs(&self) -> CliResult<()> {
        for f in &self.inputs {
            let now = sha256_file(&f.path)?;
            if now != f.sha256 {
                return Err(CliError::data(format!(
                    "input {} changed since the manifest was written (sha256 {} != {})",
                    f.path.display(),
                    now,
                    f.sha256
                )));
            }
        }
        Ok(())
    }
}
