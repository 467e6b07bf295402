use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Machine-readable record of one command run. Everything except
/// `wall_time_ms` is a pure function of the command line and its inputs.
#[derive(Debug, Serialize)]
pub struct RunReport {
    pub command: Vec<String>,
    pub config_hash: String,
    pub scenario_hash: String,
    pub results: Value,
    pub versions: BTreeMap<&'static str, &'static str>,
    pub wall_time_ms: f64,
}

impl RunReport {
    /// `config` is hashed through its JSON form, whose object keys serialize
    /// in sorted order.
    pub fn new(command: Vec<String>, config: &Value, inputs: &[&[u8]], results: Value) -> Self {
        let mut hasher = Sha256::new();
        for input in inputs {
            hasher.update((input.len() as u64).to_le_bytes());
            hasher.update(input);
        }
        Self {
            command,
            config_hash: sha256_hex(config.to_string().as_bytes()),
            scenario_hash: hex::encode(hasher.finalize()),
            results,
            versions: BTreeMap::from([
                ("flashopt", flashopt::VERSION),
                ("flashopt-cli", env!("CARGO_PKG_VERSION")),
            ]),
            wall_time_ms: 0.0,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize") + "\n"
    }
}
