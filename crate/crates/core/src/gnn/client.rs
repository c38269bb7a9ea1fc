use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::bpr::{bpr_step, sample_negative, LocalModelState, StepParams, Triple};
use super::lightgcn::NormalizedAdjacency;
use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::graph::LocalSubgraph;

/// Local training hyperparameters shared by every client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LocalHyper {
    pub local_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub reg: f64,
    /// LightGCN propagation depth.
    pub layers: usize,
    pub momentum: f64,
}

impl Default for LocalHyper {
    fn default() -> Self {
        Self {
            // The loss is a batch mean, so the step per example is lr / batch_size.
            local_epochs: 5,
            batch_size: 1024,
            lr: 20.0,
            reg: 1e-4,
            layers: 2,
            momentum: 0.0,
        }
    }
}

impl LocalHyper {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("local.batch_size must be >= 1".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config("local.lr must be positive".into()));
        }
        if !(self.reg.is_finite() && self.reg >= 0.0) {
            return Err(Error::Config("local.reg must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("local.momentum must be in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Rows a client sends back after local training.
///
/// `users[k]` owns row `k` of `user_rows`, in the subgraph's user order (anchor first);
/// the same alignment holds for items.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdate {
    pub client: usize,
    pub users: Vec<usize>,
    pub user_rows: EmbeddingMatrix,
    pub items: Vec<usize>,
    pub item_rows: EmbeddingMatrix,
    /// Local edges per item, aligned with `items`.
    pub item_edge_counts: Vec<usize>,
    /// Number of local train edges.
    pub train_edge_count: usize,
    /// Mean batch loss of each local epoch.
    pub epoch_losses: Vec<f64>,
}

impl ClientUpdate {
    pub fn user_row(&self, user: usize) -> Option<&[f64]> {
        self.users.iter().position(|&u| u == user).map(|k| self.user_rows.row(k))
    }

    pub fn item_row(&self, item: usize) -> Option<&[f64]> {
        self.items.iter().position(|&i| i == item).map(|k| self.item_rows.row(k))
    }

    pub fn mean_loss(&self) -> Option<f64> {
        if self.epoch_losses.is_empty() {
            None
        } else {
            Some(self.epoch_losses.iter().sum::<f64>() / self.epoch_losses.len() as f64)
        }
    }
}

/// Trains one client on copies of the global rows it holds. The global matrices are
/// only read.
pub fn client_update<R: Rng>(
    global_users: &EmbeddingMatrix,
    global_items: &EmbeddingMatrix,
    sub: &LocalSubgraph,
    adj: &NormalizedAdjacency,
    hyper: &LocalHyper,
    rng: &mut R,
) -> ClientUpdate {
    let mut state = LocalModelState::new(global_users.gather(&sub.users), global_items.gather(&sub.items), hyper.layers);
    let mut epoch_losses = Vec::with_capacity(hyper.local_epochs);

    if !sub.edges.is_empty() {
        let params = StepParams {
            lr: hyper.lr,
            reg: hyper.reg,
            momentum: hyper.momentum,
        };
        let mut order: Vec<usize> = (0..sub.edges.len()).collect();
        let mut batch = Vec::with_capacity(hyper.batch_size);
        for _ in 0..hyper.local_epochs {
            order.shuffle(rng);
            let mut total = 0.0;
            let mut batches = 0usize;
            for chunk in order.chunks(hyper.batch_size) {
                batch.clear();
                for &e in chunk {
                    let (user, pos) = sub.edges[e];
                    let neg = sample_negative(adj, user, rng);
                    batch.push(Triple { user, pos, neg });
                }
                total += bpr_step(&mut state, adj, &batch, &params);
                batches += 1;
            }
            epoch_losses.push(total / batches as f64);
        }
    }

    ClientUpdate {
        client: sub.anchor,
        users: sub.users.clone(),
        user_rows: state.users,
        items: sub.items.clone(),
        item_rows: state.items,
        item_edge_counts: sub.item_degrees(),
        train_edge_count: sub.edges.len(),
        epoch_losses,
    }
}

/// Local model behind the client update step. Only LightGCN ships.
pub trait LocalTrainer: Send + Sync {
    fn name(&self) -> &'static str;

    fn train(
        &self,
        global_users: &EmbeddingMatrix,
        global_items: &EmbeddingMatrix,
        sub: &LocalSubgraph,
        adj: &NormalizedAdjacency,
        rng: &mut rand_chacha::ChaCha8Rng,
    ) -> ClientUpdate;
}

#[derive(Debug, Clone)]
pub struct LightGcnTrainer {
    pub hyper: LocalHyper,
}

impl LocalTrainer for LightGcnTrainer {
    fn name(&self) -> &'static str {
        "lightgcn"
    }

    fn train(
        &self,
        global_users: &EmbeddingMatrix,
        global_items: &EmbeddingMatrix,
        sub: &LocalSubgraph,
        adj: &NormalizedAdjacency,
        rng: &mut rand_chacha::ChaCha8Rng,
    ) -> ClientUpdate {
        client_update(global_users, global_items, sub, adj, &self.hyper, rng)
    }
}
