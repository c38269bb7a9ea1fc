//! Server-side aggregation of user and item embeddings.
//!
//! Each strategy sits behind [`UserAggregator`] or [`ItemAggregator`] and is looked up
//! by id in a [`StrategyRegistry`]. Built-in ids: `dist-fedavg` (users only), `fedavg`,
//! `simpleavg`, `fedmedian`, `fedatt`.

mod alpha;
mod dist_fedavg;
mod distance;
mod registry;
mod rowwise;

use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::gnn::ClientUpdate;

pub use alpha::{alpha_schedule, AlphaMode};
pub use dist_fedavg::DistFedAvg;
pub use distance::{
    build_weights, inverse_distance_weight, minkowski_distance, DistanceMatrix, WeightMatrix,
};
pub use registry::{Rowwise, StrategyRegistry, ITEM_STRATEGIES, USER_STRATEGIES};
pub use rowwise::{Contribution, FedAtt, FedAvg, FedMedian, RowCombiner, SimpleAvg};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AggregationConfig {
    pub user_strategy: String,
    pub item_strategy: String,
    /// Minkowski order.
    pub p: f64,
    pub alpha_mode: AlphaMode,
    /// Anchor weight when `alpha_mode = "fixed"`.
    pub alpha: f64,
    pub alpha0: f64,
    /// Lower bound of the decayed weight.
    pub alpha_t: f64,
    pub gamma: f64,
    /// Rounds per decay step.
    pub z: usize,
    pub warmup_rounds: usize,
    pub distance_floor: f64,
    pub fedatt_temperature: f64,
}

impl Default for AggregationConfig {
    fn default() -> Self {
        Self {
            user_strategy: "dist-fedavg".into(),
            item_strategy: "fedavg".into(),
            p: 2.0,
            alpha_mode: AlphaMode::Fixed,
            alpha: 0.5,
            alpha0: 1.0,
            alpha_t: 0.2,
            gamma: 0.1,
            z: 10,
            warmup_rounds: 0,
            distance_floor: 1e-8,
            fedatt_temperature: 1.0,
        }
    }
}

impl AggregationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(format!("aggregation.{msg}")));
        if !(self.p.is_finite() && self.p >= 1.0) {
            return bad("p must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad("alpha must be in [0, 1]");
        }
        if !(0.0 <= self.alpha_t && self.alpha_t <= self.alpha0 && self.alpha0 <= 1.0) {
            return bad("need 0 <= alpha_t <= alpha0 <= 1");
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return bad("gamma must be >= 0");
        }
        if self.z < 1 {
            return bad("z must be >= 1");
        }
        if !(self.distance_floor.is_finite() && self.distance_floor > 0.0) {
            return bad("distance_floor must be > 0");
        }
        if !(self.fedatt_temperature.is_finite() && self.fedatt_temperature > 0.0) {
            return bad("fedatt_temperature must be > 0");
        }
        if !USER_STRATEGIES.contains(&self.user_strategy.as_str()) {
            return Err(Error::UnknownStrategy {
                kind: "user",
                id: self.user_strategy.clone(),
            });
        }
        if !ITEM_STRATEGIES.contains(&self.item_strategy.as_str()) {
            return Err(Error::UnknownStrategy {
                kind: "item",
                id: self.item_strategy.clone(),
            });
        }
        Ok(())
    }
}

/// Inputs of one user-aggregation call.
#[derive(Debug, Clone, Copy)]
pub struct UserRound<'a> {
    pub updates: &'a [ClientUpdate],
    /// Global user matrix of the previous round.
    pub prev: &'a EmbeddingMatrix,
    pub selected: &'a [usize],
    /// 1-based round index.
    pub round: usize,
}

pub trait UserAggregator: Send + Sync {
    fn id(&self) -> &'static str;

    /// Anchor interpolation weight used in `round`, for strategies that have one.
    fn alpha(&self, _round: usize) -> Option<f64> {
        None
    }

    fn aggregate(&self, round: &UserRound<'_>) -> Result<EmbeddingMatrix>;
}

pub trait ItemAggregator: Send + Sync {
    fn id(&self) -> &'static str;

    fn aggregate(&self, updates: &[ClientUpdate], prev: &EmbeddingMatrix) -> Result<EmbeddingMatrix>;
}

pub fn dist_fedavg_user(
    updates: &[ClientUpdate],
    prev_global: &EmbeddingMatrix,
    selected: &[usize],
    round: usize,
    cfg: &AggregationConfig,
) -> Result<EmbeddingMatrix> {
    DistFedAvg::new(cfg.clone()).aggregate(&UserRound {
        updates,
        prev: prev_global,
        selected,
        round,
    })
}

fn rowwise_users<C: RowCombiner>(combiner: C, updates: &[ClientUpdate], prev: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    Rowwise::new("", combiner).aggregate_users(updates, prev)
}

pub fn fedavg_user(updates: &[ClientUpdate], prev_global: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    rowwise_users(FedAvg, updates, prev_global)
}

pub fn simple_avg_user(updates: &[ClientUpdate], prev_global: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    rowwise_users(SimpleAvg, updates, prev_global)
}

pub fn fed_median_user(updates: &[ClientUpdate], prev_global: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    rowwise_users(FedMedian, updates, prev_global)
}

pub fn fed_att_user(updates: &[ClientUpdate], prev_global: &EmbeddingMatrix, temperature: f64) -> Result<EmbeddingMatrix> {
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(Error::InvalidParameter("temperature must be > 0".into()));
    }
    rowwise_users(FedAtt { temperature }, updates, prev_global)
}

pub fn aggregate_items(updates: &[ClientUpdate], prev_global_items: &EmbeddingMatrix, strategy: &str) -> Result<EmbeddingMatrix> {
    let cfg = AggregationConfig::default();
    StrategyRegistry::default()
        .item(strategy, &cfg)?
        .aggregate(updates, prev_global_items)
}

#[cfg(test)]
mod tests;
