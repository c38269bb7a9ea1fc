//! Full-catalog top-k ranking metrics with normal-approximation confidence intervals.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{InteractionDataset, Partition};
use crate::embedding::{dot, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::gnn::{lightgcn_propagate, NormalizedAdjacency};

/// All items not in `exclude`, by descending dot-product score, ties by ascending index.
/// `exclude` must be sorted.
pub fn rank_items_for_user(user: &[f64], items: &EmbeddingMatrix, exclude: &[usize]) -> Vec<usize> {
    let mut scored: Vec<(f64, usize)> = (0..items.rows())
        .filter(|i| exclude.binary_search(i).is_err())
        .map(|i| (dot(user, items.row(i)), i))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    scored.into_iter().map(|(_, i)| i).collect()
}

/// Binary-relevance NDCG@k; `None` when `relevant` is empty. `relevant` must be sorted.
pub fn ndcg_at_k(ranked: &[usize], relevant: &[usize], k: usize) -> Option<f64> {
    if relevant.is_empty() || k == 0 {
        return None;
    }
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, item)| relevant.binary_search(item).is_ok())
        .map(|(pos, _)| 1.0 / ((pos + 2) as f64).log2())
        .sum();
    let idcg: f64 = (0..relevant.len().min(k)).map(|pos| 1.0 / ((pos + 2) as f64).log2()).sum();
    Some(dcg / idcg)
}

/// 1 if any relevant item is in the top `k`, else 0; `None` when `relevant` is empty.
pub fn hr_at_k(ranked: &[usize], relevant: &[usize], k: usize) -> Option<f64> {
    if relevant.is_empty() || k == 0 {
        return None;
    }
    let hit = ranked.iter().take(k).any(|item| relevant.binary_search(item).is_ok());
    Some(if hit { 1.0 } else { 0.0 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: String,
    pub mean: f64,
    pub ci95_halfwidth: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub per_user: Option<Vec<f64>>,
}

/// Mean and `1.96 * s / sqrt(N)` with `s` the sample (N - 1) standard deviation.
pub fn aggregate_metric(metric: &str, scores: &[f64]) -> Result<MetricReport> {
    let n = scores.len();
    if n < 2 {
        return Err(Error::TooFewUsers(n));
    }
    let mean = scores.iter().sum::<f64>() / n as f64;
    let var = scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1) as f64;
    Ok(MetricReport {
        metric: metric.to_string(),
        mean,
        ci95_halfwidth: 1.96 * var.sqrt() / (n as f64).sqrt(),
        per_user: Some(scores.to_vec()),
    })
}

/// How user and item vectors are formed before dot-product scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scoring {
    /// Raw global rows.
    Embedding,
    /// Global rows after LightGCN propagation over the whole train graph.
    Propagated,
}

impl fmt::Display for Scoring {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scoring::Embedding => "embedding",
            Scoring::Propagated => "propagated",
        })
    }
}

impl FromStr for Scoring {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "embedding" => Ok(Scoring::Embedding),
            "propagated" => Ok(Scoring::Propagated),
            other => Err(Error::Config(format!("unknown scoring `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub k: usize,
    pub scoring: Scoring,
    /// Drop validation items from the test-time candidates.
    pub exclude_valid_at_test: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            k: 10,
            scoring: Scoring::Propagated,
            exclude_valid_at_test: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub ndcg: MetricReport,
    pub hr: MetricReport,
}

/// Per-user candidate exclusions and relevant sets for validation and test.
#[derive(Debug, Clone)]
pub struct Evaluator {
    config: EvalConfig,
    train: Vec<Vec<usize>>,
    train_valid: Vec<Vec<usize>>,
    valid: Vec<Vec<usize>>,
    test: Vec<Vec<usize>>,
    adjacency: Option<NormalizedAdjacency>,
    layers: usize,
}

impl Evaluator {
    pub fn new(ds: &InteractionDataset, config: EvalConfig, layers: usize) -> Self {
        let train = ds.items_by_user(Partition::Train);
        let valid = ds.items_by_user(Partition::Valid);
        let test = ds.items_by_user(Partition::Test);
        let train_valid = train
            .iter()
            .zip(&valid)
            .map(|(t, v)| {
                let mut all: Vec<usize> = t.iter().chain(v).copied().collect();
                all.sort_unstable();
                all
            })
            .collect();
        let adjacency = (config.scoring == Scoring::Propagated).then(|| {
            let edges: Vec<(usize, usize)> = ds.partition_edges(Partition::Train).map(|e| (e.user, e.item)).collect();
            NormalizedAdjacency::new(ds.n_users(), ds.n_items(), &edges)
        });
        Self {
            config,
            train,
            train_valid,
            valid,
            test,
            adjacency,
            layers,
        }
    }

    pub fn config(&self) -> &EvalConfig {
        &self.config
    }

    pub fn evaluate(&self, users: &EmbeddingMatrix, items: &EmbeddingMatrix, part: Partition) -> Result<EvalResult> {
        let propagated;
        let (users, items) = match &self.adjacency {
            Some(adj) => {
                propagated = lightgcn_propagate(adj, self.layers, users, items);
                (&propagated.0, &propagated.1)
            }
            None => (users, items),
        };
        let (relevant, exclude) = match part {
            Partition::Valid => (&self.valid, &self.train),
            Partition::Test if self.config.exclude_valid_at_test => (&self.test, &self.train_valid),
            Partition::Test => (&self.test, &self.train),
            Partition::Train => {
                return Err(Error::InvalidParameter("cannot evaluate on the train partition".into()))
            }
        };
        let k = self.config.k;
        let scores: Vec<(f64, f64)> = (0..users.rows())
            .into_par_iter()
            .filter_map(|u| {
                if relevant[u].is_empty() {
                    return None;
                }
                let ranked = rank_items_for_user(users.row(u), items, &exclude[u]);
                Some((ndcg_at_k(&ranked, &relevant[u], k)?, hr_at_k(&ranked, &relevant[u], k)?))
            })
            .collect();
        let (ndcg, hr): (Vec<f64>, Vec<f64>) = scores.into_iter().unzip();
        Ok(EvalResult {
            ndcg: aggregate_metric(&format!("ndcg@{k}"), &ndcg)?,
            hr: aggregate_metric(&format!("hr@{k}"), &hr)?,
        })
    }
}
