use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub const RUN_MANIFEST_FILE: &str = "run_manifest.json";

/// Record of one CLI invocation, written once into the output directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config_paths: Vec<String>,
    pub seed: Option<u64>,
    pub output_dir: String,
    /// Every other argument, stringified.
    pub arguments: BTreeMap<String, String>,
    /// File kind -> format version, for each kind this run wrote.
    pub formats: BTreeMap<String, u32>,
    /// Primary outputs, relative to `output_dir`.
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(subcommand: &str, output_dir: &Path) -> Self {
        RunManifest {
            subcommand: subcommand.into(),
            config_paths: Vec::new(),
            seed: None,
            output_dir: output_dir.display().to_string(),
            arguments: BTreeMap::new(),
            formats: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    pub fn arg(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.arguments.insert(key.into(), value.to_string());
        self
    }

    pub fn format(&mut self, kind: &str, version: u32) -> &mut Self {
        self.formats.insert(kind.into(), version);
        self
    }

    pub fn output(&mut self, rel: impl Into<String>) -> &mut Self {
        self.outputs.push(rel.into());
        self
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        text.push('\n');
        std::fs::write(dir.join(RUN_MANIFEST_FILE), text)
    }
}
