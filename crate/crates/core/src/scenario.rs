//! Scenario files: assets, entities, initial balances and pool stanzas.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::{AssetId, BalanceLedger, EntityId, ModelError, Pool, PoolId, WorldState};

const PAA: &str = include_str!("../scenarios/paa.json");
const ORACLE: &str = include_str!("../scenarios/oracle.json");

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("no bundled scenario named `{0}` (known: paa, oracle)")]
    UnknownBuiltin(String),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: String,
    adversary: EntityId,
    assets: Vec<AssetId>,
    entities: Vec<EntityId>,
    #[serde(default)]
    balances: BTreeMap<EntityId, BTreeMap<AssetId, f64>>,
    pools: BTreeMap<PoolId, Pool>,
}

/// A validated initial world together with its metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub adversary: EntityId,
    pub assets: Vec<AssetId>,
    pub entities: Vec<EntityId>,
    pub state: WorldState,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let file: ScenarioFile = serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        Self::from_file(file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// `paa` or `oracle`.
    pub fn builtin(name: &str) -> Result<Self, ScenarioError> {
        match name {
            "paa" => Self::from_json(PAA),
            "oracle" => Self::from_json(ORACLE),
            other => Err(ScenarioError::UnknownBuiltin(other.to_string())),
        }
    }

    pub fn builtin_source(name: &str) -> Option<&'static str> {
        match name {
            "paa" => Some(PAA),
            "oracle" => Some(ORACLE),
            _ => None,
        }
    }

    fn from_file(file: ScenarioFile) -> Result<Self, ScenarioError> {
        let invalid = |m: String| Err(ScenarioError::Invalid(m));
        let mut assets = BTreeSet::new();
        for a in &file.assets {
            if !assets.insert(a) {
                return invalid(format!("asset `{a}` declared twice"));
            }
        }
        let entities: BTreeSet<_> = file.entities.iter().collect();
        if entities.len() != file.entities.len() {
            return invalid("duplicate entity".to_string());
        }
        if !entities.contains(&file.adversary) {
            return invalid(format!(
                "adversary `{}` is not a declared entity",
                file.adversary
            ));
        }

        let mut ledger = BalanceLedger::new();
        for (entity, row) in &file.balances {
            if !entities.contains(entity) {
                return invalid(format!("balances name undeclared entity `{entity}`"));
            }
            for (asset, amount) in row {
                if !assets.contains(asset) {
                    return invalid(format!("balance of undeclared asset `{asset}`"));
                }
                if !(amount.is_finite() && *amount >= 0.0) {
                    return invalid(format!("balance {entity}/{asset} must be >= 0"));
                }
                ledger.set(entity, asset, *amount);
            }
        }
        for (id, pool) in &file.pools {
            if let Some(a) = pool.assets().into_iter().find(|a| !assets.contains(a)) {
                return invalid(format!("pool `{id}` uses undeclared asset `{a}`"));
            }
        }

        let state = WorldState::new(ledger, file.pools)?;
        Ok(Self {
            name: file.name,
            adversary: file.adversary,
            assets: file.assets,
            entities: file.entities,
            state,
        })
    }

    pub fn to_json(&self) -> String {
        let mut balances: BTreeMap<EntityId, BTreeMap<AssetId, f64>> = BTreeMap::new();
        for (e, a, v) in self.state.ledger().iter() {
            balances.entry(e.clone()).or_default().insert(a.clone(), v);
        }
        let file = ScenarioFile {
            name: self.name.clone(),
            adversary: self.adversary.clone(),
            assets: self.assets.clone(),
            entities: self.entities.clone(),
            balances,
            pools: self.state.pools().clone(),
        };
        serde_json::to_string_pretty(&file).expect("scenario serializes")
    }
}
