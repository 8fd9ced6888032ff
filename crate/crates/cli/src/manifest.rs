use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

/// Generator behind every random draw: seeding, initialization, sampling.
pub const PRNG: &str = "ChaCha8Rng (rand_chacha 0.9, seed_from_u64)";

/// Record written next to each command's outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: &'static str,
    pub version: &'static str,
    pub prng: &'static str,
    pub seed: u64,
    pub config: Value,
    pub inputs: BTreeMap<&'static str, PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub timings: Value,
}

impl RunManifest {
    pub fn new(command: &'static str, seed: u64, config: Value) -> Self {
        Self {
            command,
            version: env!("CARGO_PKG_VERSION"),
            prng: PRNG,
            seed,
            config,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            timings: Value::Null,
        }
    }

    pub fn write(&self, dir: &Path) -> anyhow::Result<()> {
        crate::commands::write_json(&dir.join("manifest.json"), self)
    }
}
