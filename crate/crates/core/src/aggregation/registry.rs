use std::collections::BTreeMap;

use super::rowwise::{combine_rows, item_contributions, user_contributions};
use super::{
    AggregationConfig, DistFedAvg, FedAtt, FedAvg, FedMedian, ItemAggregator, RowCombiner, SimpleAvg,
    UserAggregator, UserRound,
};
use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::gnn::ClientUpdate;

/// Built-in user strategy ids, in the order results tables list them.
pub const USER_STRATEGIES: [&str; 5] = ["fedavg", "simpleavg", "fedmedian", "fedatt", "dist-fedavg"];
/// Built-in item strategy ids.
pub const ITEM_STRATEGIES: [&str; 4] = ["fedavg", "simpleavg", "fedmedian", "fedatt"];

/// A [`RowCombiner`] applied independently to every user or item row.
#[derive(Debug, Clone)]
pub struct Rowwise<C> {
    id: &'static str,
    combiner: C,
}

impl<C: RowCombiner> Rowwise<C> {
    pub fn new(id: &'static str, combiner: C) -> Self {
        Self { id, combiner }
    }

    pub fn aggregate_users(&self, updates: &[ClientUpdate], prev: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
        let per_user = user_contributions(updates, prev.rows(), prev.dim())?;
        Ok(combine_rows(&self.combiner, &per_user, prev))
    }

    pub fn aggregate_items(&self, updates: &[ClientUpdate], prev: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
        let per_item = item_contributions(updates, prev.rows(), prev.dim())?;
        Ok(combine_rows(&self.combiner, &per_item, prev))
    }
}

impl<C: RowCombiner> UserAggregator for Rowwise<C> {
    fn id(&self) -> &'static str {
        self.id
    }

    fn aggregate(&self, round: &UserRound<'_>) -> Result<EmbeddingMatrix> {
        self.aggregate_users(round.updates, round.prev)
    }
}

impl<C: RowCombiner> ItemAggregator for Rowwise<C> {
    fn id(&self) -> &'static str {
        self.id
    }

    fn aggregate(&self, updates: &[ClientUpdate], prev: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
        self.aggregate_items(updates, prev)
    }
}

pub type UserFactory = fn(&AggregationConfig) -> Box<dyn UserAggregator>;
pub type ItemFactory = fn(&AggregationConfig) -> Box<dyn ItemAggregator>;

/// Name-to-constructor tables for user and item strategies.
pub struct StrategyRegistry {
    users: BTreeMap<&'static str, UserFactory>,
    items: BTreeMap<&'static str, ItemFactory>,
}

impl Default for StrategyRegistry {
    fn default() -> Self {
        let mut r = Self::empty();
        r.register_user("dist-fedavg", |c| Box::new(DistFedAvg::new(c.clone())));
        r.register_user("fedavg", |_| Box::new(Rowwise::new("fedavg", FedAvg)));
        r.register_user("simpleavg", |_| Box::new(Rowwise::new("simpleavg", SimpleAvg)));
        r.register_user("fedmedian", |_| Box::new(Rowwise::new("fedmedian", FedMedian)));
        r.register_user("fedatt", |c| {
            Box::new(Rowwise::new(
                "fedatt",
                FedAtt {
                    temperature: c.fedatt_temperature,
                },
            ))
        });
        r.register_item("fedavg", |_| Box::new(Rowwise::new("fedavg", FedAvg)));
        r.register_item("simpleavg", |_| Box::new(Rowwise::new("simpleavg", SimpleAvg)));
        r.register_item("fedmedian", |_| Box::new(Rowwise::new("fedmedian", FedMedian)));
        r.register_item("fedatt", |c| {
            Box::new(Rowwise::new(
                "fedatt",
                FedAtt {
                    temperature: c.fedatt_temperature,
                },
            ))
        });
        r
    }
}

impl StrategyRegistry {
    pub fn empty() -> Self {
        Self {
            users: BTreeMap::new(),
            items: BTreeMap::new(),
        }
    }

    pub fn register_user(&mut self, id: &'static str, factory: UserFactory) {
        self.users.insert(id, factory);
    }

    pub fn register_item(&mut self, id: &'static str, factory: ItemFactory) {
        self.items.insert(id, factory);
    }

    pub fn user(&self, id: &str, cfg: &AggregationConfig) -> Result<Box<dyn UserAggregator>> {
        self.users
            .get(id)
            .map(|f| f(cfg))
            .ok_or_else(|| Error::UnknownStrategy {
                kind: "user",
                id: id.to_string(),
            })
    }

    pub fn item(&self, id: &str, cfg: &AggregationConfig) -> Result<Box<dyn ItemAggregator>> {
        self.items
            .get(id)
            .map(|f| f(cfg))
            .ok_or_else(|| Error::UnknownStrategy {
                kind: "item",
                id: id.to_string(),
            })
    }

    pub fn user_ids(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.users.keys().copied()
    }

    pub fn item_ids(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.items.keys().copied()
    }
}
