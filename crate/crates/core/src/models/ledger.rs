use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{AssetId, EntityId};

/// Token balances per entity. Absent entries read as zero.
///
/// Amounts may go negative while an optimizer explores infeasible
/// parameters; the corresponding transition reports a negative residual.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BalanceLedger {
    entries: BTreeMap<EntityId, BTreeMap<AssetId, f64>>,
}

impl BalanceLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn balance(&self, entity: &EntityId, asset: &AssetId) -> f64 {
        self.entries
            .get(entity)
            .and_then(|assets| assets.get(asset))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn set(&mut self, entity: &EntityId, asset: &AssetId, amount: f64) {
        self.entries
            .entry(entity.clone())
            .or_default()
            .insert(asset.clone(), amount);
    }

    pub fn credit(&mut self, entity: &EntityId, asset: &AssetId, amount: f64) {
        let current = self.balance(entity, asset);
        self.set(entity, asset, current + amount);
    }

    pub fn debit(&mut self, entity: &EntityId, asset: &AssetId, amount: f64) {
        let current = self.balance(entity, asset);
        self.set(entity, asset, current - amount);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&EntityId, &AssetId, f64)> {
        self.entries
            .iter()
            .flat_map(|(e, assets)| assets.iter().map(move |(a, v)| (e, a, *v)))
    }

    /// True when every recorded amount is non-negative (up to `tolerance`).
    pub fn is_non_negative(&self, tolerance: f64) -> bool {
        self.iter().all(|(_, _, v)| v >= -tolerance)
    }
}
