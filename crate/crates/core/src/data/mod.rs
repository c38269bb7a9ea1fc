//! Rating-file ingestion, filtering and the per-user train/valid/test split.

mod loader;
mod split;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

pub use loader::{load_dataset, DatasetFormat, RawInteraction};
pub use split::{
    deduplicate, filter_and_split, split_sizes, Edge, InteractionDataset, Partition, SplitParams,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_users: usize,
    pub n_items: usize,
    pub n_edges: usize,
    pub sparsity: f64,
}

fn stats(n_users: usize, n_items: usize, n_edges: usize) -> DatasetStats {
    let cells = n_users as f64 * n_items as f64;
    let sparsity = if cells > 0.0 { 1.0 - n_edges as f64 / cells } else { 1.0 };
    DatasetStats {
        n_users,
        n_items,
        n_edges,
        sparsity,
    }
}

pub fn dataset_stats(ds: &InteractionDataset) -> DatasetStats {
    stats(ds.n_users(), ds.n_items(), ds.edges.len())
}

/// Statistics of unfiltered rows; repeated `(user, item)` pairs count once.
pub fn raw_stats(raw: &[RawInteraction]) -> DatasetStats {
    let users: HashSet<&str> = raw.iter().map(|r| r.user_id.as_str()).collect();
    let items: HashSet<&str> = raw.iter().map(|r| r.item_id.as_str()).collect();
    let pairs: HashSet<(&str, &str)> = raw
        .iter()
        .map(|r| (r.user_id.as_str(), r.item_id.as_str()))
        .collect();
    stats(users.len(), items.len(), pairs.len())
}
