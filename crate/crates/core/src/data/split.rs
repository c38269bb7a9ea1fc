use std::collections::HashMap;
use std::fmt;
use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::loader::RawInteraction;
use crate::error::{Error, Result};
use crate::seeding::{self, tags};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Valid,
    Test,
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Partition::Train => "train",
            Partition::Valid => "valid",
            Partition::Test => "test",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub user: usize,
    pub item: usize,
    pub rating: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitParams {
    /// Ratings strictly below this value are dropped (`rating >= threshold` is kept).
    pub rating_threshold: f64,
    pub min_interactions: usize,
    /// (train, valid, test) fractions.
    pub fractions: [f64; 3],
    pub seed: u64,
}

impl Default for SplitParams {
    fn default() -> Self {
        Self {
            rating_threshold: 3.0,
            min_interactions: 15,
            fractions: [0.7, 0.1, 0.2],
            seed: 42,
        }
    }
}

impl SplitParams {
    pub fn validate(&self) -> Result<()> {
        if self.min_interactions < 1 {
            return Err(Error::InvalidParameter("min_interactions must be >= 1".into()));
        }
        if !self.rating_threshold.is_finite() && self.rating_threshold != f64::NEG_INFINITY {
            return Err(Error::InvalidParameter("rating_threshold must be finite".into()));
        }
        if self.fractions.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
            return Err(Error::InvalidParameter("split fractions must be positive".into()));
        }
        let sum: f64 = self.fractions.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!("split fractions sum to {sum}, not 1")));
        }
        Ok(())
    }
}

/// Filtered interactions with dense user/item indices and a per-edge partition.
///
/// Edges are sorted by `(user, item)`; `partitions[e]` labels `edges[e]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionDataset {
    pub user_ids: Vec<String>,
    pub item_ids: Vec<String>,
    pub edges: Vec<Edge>,
    pub partitions: Vec<Partition>,
}

impl InteractionDataset {
    pub fn n_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn partition_edges(&self, part: Partition) -> impl Iterator<Item = &Edge> {
        self.edges
            .iter()
            .zip(&self.partitions)
            .filter(move |(_, p)| **p == part)
            .map(|(e, _)| e)
    }

    /// Per-user sorted item lists for one partition.
    pub fn items_by_user(&self, part: Partition) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_users()];
        for e in self.partition_edges(part) {
            out[e.user].push(e.item);
        }
        out
    }

    /// Converts back to raw rows (original ids and ratings), in edge order.
    pub fn to_raw(&self) -> Vec<RawInteraction> {
        self.edges
            .iter()
            .map(|e| RawInteraction::new(&self.user_ids[e.user], &self.item_ids[e.item], e.rating))
            .collect()
    }

    /// Writes `user_idx item_idx partition` lines.
    pub fn write_split_manifest<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (e, p) in self.edges.iter().zip(&self.partitions) {
            writeln!(out, "{} {} {}", e.user, e.item, p)?;
        }
        Ok(())
    }
}

/// Keeps the highest rating for repeated `(user, item)` pairs, preserving first-seen order.
pub fn deduplicate(raw: &[RawInteraction]) -> Vec<RawInteraction> {
    let mut pos: HashMap<(&str, &str), usize> = HashMap::with_capacity(raw.len());
    let mut out: Vec<RawInteraction> = Vec::with_capacity(raw.len());
    for r in raw {
        match pos.get(&(r.user_id.as_str(), r.item_id.as_str())) {
            Some(&i) => {
                if r.rating > out[i].rating {
                    out[i].rating = r.rating;
                    out[i].timestamp = r.timestamp;
                }
            }
            None => {
                pos.insert((&r.user_id, &r.item_id), out.len());
                out.push(r.clone());
            }
        }
    }
    out
}

/// Orders ids numerically when all of them are integers, lexicographically otherwise.
pub(crate) fn sorted_ids<'a>(ids: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut v: Vec<&str> = ids.collect();
    v.sort_unstable();
    v.dedup();
    if v.iter().all(|s| s.parse::<u64>().is_ok()) {
        v.sort_by_key(|s| s.parse::<u64>().unwrap());
    }
    v.into_iter().map(str::to_string).collect()
}

/// Sizes of the (train, valid, test) parts for a user with `n` edges.
///
/// Valid and test sizes are floored, train takes the remainder and keeps at least one edge.
pub fn split_sizes(n: usize, fractions: [f64; 3]) -> (usize, usize, usize) {
    // the epsilon absorbs products like 0.1 * 30 landing just under an integer
    let floor = |x: f64| (x + 1e-9).floor() as usize;
    let mut valid = floor(n as f64 * fractions[1]);
    let mut test = floor(n as f64 * fractions[2]);
    while n > 0 && valid + test >= n {
        if test >= valid && test > 0 {
            test -= 1;
        } else {
            valid -= 1;
        }
    }
    (n - valid - test, valid, test)
}

pub fn filter_and_split(raw: &[RawInteraction], params: &SplitParams) -> Result<InteractionDataset> {
    params.validate()?;
    let mut kept: Vec<RawInteraction> = deduplicate(raw)
        .into_iter()
        .filter(|r| r.rating >= params.rating_threshold)
        .collect();

    // Items are never dropped for low degree, so a single pass reaches the fixed point;
    // the loop keeps that true if the rule ever changes.
    loop {
        let mut degree: HashMap<&str, usize> = HashMap::new();
        for r in &kept {
            *degree.entry(r.user_id.as_str()).or_default() += 1;
        }
        let before = kept.len();
        let drop: std::collections::HashSet<String> = degree
            .into_iter()
            .filter(|(_, d)| *d < params.min_interactions)
            .map(|(u, _)| u.to_string())
            .collect();
        kept.retain(|r| !drop.contains(&r.user_id));
        if kept.len() == before {
            break;
        }
    }
    if kept.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let user_ids = sorted_ids(kept.iter().map(|r| r.user_id.as_str()));
    let item_ids = sorted_ids(kept.iter().map(|r| r.item_id.as_str()));
    let user_index: HashMap<&str, usize> =
        user_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let item_index: HashMap<&str, usize> =
        item_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();

    let mut edges: Vec<Edge> = kept
        .iter()
        .map(|r| Edge {
            user: user_index[r.user_id.as_str()],
            item: item_index[r.item_id.as_str()],
            rating: r.rating,
        })
        .collect();
    edges.sort_by(|a, b| (a.user, a.item).cmp(&(b.user, b.item)));

    let mut partitions = vec![Partition::Train; edges.len()];
    let mut start = 0;
    while start < edges.len() {
        let user = edges[start].user;
        let end = start + edges[start..].iter().take_while(|e| e.user == user).count();
        let mut order: Vec<usize> = (start..end).collect();
        let mut rng = seeding::stream(params.seed, &[tags::SPLIT, user as u64]);
        order.shuffle(&mut rng);
        let (train, valid, _) = split_sizes(order.len(), params.fractions);
        for (rank, &e) in order.iter().enumerate() {
            partitions[e] = if rank < train {
                Partition::Train
            } else if rank < train + valid {
                Partition::Valid
            } else {
                Partition::Test
            };
        }
        start = end;
    }

    Ok(InteractionDataset {
        user_ids,
        item_ids,
        edges,
        partitions,
    })
}
