use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

/// Record of one run, written as `manifest.json` next to the outputs.
/// Everything except `timings_s` is a deterministic function of the inputs.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: &'static str,
    pub version: &'static str,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub input_hashes: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub timings_s: BTreeMap<String, f64>,
    #[serde(skip)]
    clock: Option<(String, Instant)>,
}

impl Manifest {
    pub fn new(command: &'static str, seed: Option<u64>, config: impl Serialize) -> Result<Self, CliError> {
        Ok(Self {
            command,
            version: env!("CARGO_PKG_VERSION"),
            seed,
            config: serde_json::to_value(config).map_err(|e| CliError::usage(e.to_string()))?,
            input_hashes: BTreeMap::new(),
            outputs: Vec::new(),
            timings_s: BTreeMap::new(),
            clock: None,
        })
    }

    pub fn hash_input(&mut self, label: &str, path: &Path) -> Result<(), CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        let digest = Sha256::digest(&bytes);
        self.input_hashes
            .insert(label.to_string(), format!("sha256:{}", hex::encode(digest)));
        Ok(())
    }

    /// Start timing `phase`, closing the previous phase.
    pub fn phase(&mut self, phase: &str) {
        self.stop();
        self.clock = Some((phase.to_string(), Instant::now()));
    }

    fn stop(&mut self) {
        if let Some((name, t)) = self.clock.take() {
            self.timings_s.insert(name, t.elapsed().as_secs_f64());
        }
    }

    pub fn output(&mut self, name: &str) {
        self.outputs.push(name.to_string());
    }

    pub fn write(mut self, dir: &Path) -> Result<(), CliError> {
        self.stop();
        bideconv::io::write_json(&dir.join("manifest.json"), &self)?;
        Ok(())
    }
}
