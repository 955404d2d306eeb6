use std::collections::BTreeMap;
use std::path::Path;

use massimp::Result;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

/// Recorded in every artifact the CLI writes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    pub command: String,
    /// `None` for steps that use no randomness.
    pub seed: Option<u64>,
    pub inputs: BTreeMap<String, InputDigest>,
}

impl Provenance {
    pub fn new(command: &str, seed: Option<u64>) -> Self {
        Provenance {
            tool_version: massimp::VERSION.to_owned(),
            command: command.to_owned(),
            seed,
            inputs: BTreeMap::new(),
        }
    }

    /// Record the SHA-256 of an input file under `role`.
    pub fn input(mut self, role: &str, path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        self.inputs.insert(
            role.to_owned(),
            InputDigest {
                path: path.display().to_string(),
                sha256: hex::encode(Sha256::digest(&bytes)),
            },
        );
        Ok(self)
    }
}
