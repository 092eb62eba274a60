use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// Record of one command invocation, enough to reproduce its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub version: String,
    /// SHA-256 of every input file, keyed by path as given.
    pub input_hashes: BTreeMap<String, String>,
    pub outputs: Vec<PathBuf>,
    pub wall_time_s: f64,
    /// Command-specific results.
    #[serde(default)]
    pub extra: serde_json::Value,
}

impl RunManifest {
    pub fn new(command: &str, args: &[String], config: serde_json::Value, seed: Option<u64>) -> Self {
        Self {
            command: command.to_string(),
            args: args.to_vec(),
            config,
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            input_hashes: BTreeMap::new(),
            outputs: Vec::new(),
            wall_time_s: 0.0,
            extra: serde_json::Value::Null,
        }
    }

    pub fn hash_input(&mut self, path: &Path) -> CliResult<()> {
        let bytes = fs::read(path).map_err(|e| CliError::invalid(format!("cannot read {}: {e}", path.display())))?;
        self.input_hashes.insert(path.display().to_string(), sha256_hex(&bytes));
        Ok(())
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::io("serializing manifest", e))?;
        fs::write(path, text + "\n").map_err(|e| CliError::io(path.display(), e))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// `BSS_SEED` wins over the flag; the flag wins over `fallback`.
pub fn resolve_seed(flag: Option<u64>, fallback: u64) -> CliResult<u64> {
    match std::env::var("BSS_SEED") {
        Ok(v) => v.trim().parse().map_err(|_| CliError::invalid(format!("BSS_SEED is not an unsigned integer: '{v}'"))),
        Err(_) => Ok(flag.unwrap_or(fallback)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_json() {
        let mut m = RunManifest::new(
            "separate",
            &["bss".into(), "separate".into()],
            serde_json::json!({"method": "m-ilrma", "eta": 0.5}),
            Some(7),
        );
        m.input_hashes.insert("mix.wav".into(), sha256_hex(b"abc"));
        m.outputs.push("out/source_0.wav".into());
        m.wall_time_s = 0.1 + 0.2;
        m.extra = serde_json::json!({"final_objective": -1.234_567_890_123e5, "iterations": 100});
        let text = serde_json::to_string(&m).unwrap();
        let back: RunManifest = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.wall_time_s.to_bits(), m.wall_time_s.to_bits());
    }

    #[test]
    fn sha256_known_vector() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
