use rand::Rng;

use super::lightgcn::{lightgcn_propagate, NormalizedAdjacency};
use crate::embedding::{dot, EmbeddingMatrix};

/// One BPR training triple, as local positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triple {
    pub user: usize,
    pub pos: usize,
    pub neg: usize,
}

/// Layer-0 embeddings of one client plus optimizer state.
///
/// Row `k` of `users` belongs to `subgraph.users[k]`, row `k` of `items` to `subgraph.items[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalModelState {
    pub users: EmbeddingMatrix,
    pub items: EmbeddingMatrix,
    pub layers: usize,
    velocity_users: EmbeddingMatrix,
    velocity_items: EmbeddingMatrix,
}

impl LocalModelState {
    pub fn new(users: EmbeddingMatrix, items: EmbeddingMatrix, layers: usize) -> Self {
        assert_eq!(users.dim(), items.dim(), "user and item dims differ");
        let velocity_users = EmbeddingMatrix::zeros(users.rows(), users.dim());
        let velocity_items = EmbeddingMatrix::zeros(items.rows(), items.dim());
        Self {
            users,
            items,
            layers,
            velocity_users,
            velocity_items,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepParams {
    pub lr: f64,
    pub reg: f64,
    /// 0 is plain SGD.
    pub momentum: f64,
}

/// `-ln(sigmoid(x))`, stable for large `|x|`.
pub fn neg_log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Mean BPR loss over the batch:
/// `-ln sigmoid(s(u,pos) - s(u,neg)) + reg/2 * (|e_u|^2 + |e_pos|^2 + |e_neg|^2)`
/// with scores on propagated embeddings and the penalty on layer-0 rows.
pub fn bpr_loss(state: &LocalModelState, adj: &NormalizedAdjacency, batch: &[Triple], reg: f64) -> f64 {
    bpr_loss_and_grad(state, adj, batch, reg).0
}

/// Loss and its gradient with respect to the layer-0 user and item embeddings.
pub fn bpr_loss_and_grad(
    state: &LocalModelState,
    adj: &NormalizedAdjacency,
    batch: &[Triple],
    reg: f64,
) -> (f64, EmbeddingMatrix, EmbeddingMatrix) {
    let dim = state.users.dim();
    let mut gu = EmbeddingMatrix::zeros(state.users.rows(), dim);
    let mut gi = EmbeddingMatrix::zeros(state.items.rows(), dim);
    if batch.is_empty() {
        return (0.0, gu, gi);
    }
    let (fu, fi) = lightgcn_propagate(adj, state.layers, &state.users, &state.items);
    let scale = 1.0 / batch.len() as f64;

    let mut loss = 0.0;
    for t in batch {
        let u = fu.row(t.user);
        let p = fi.row(t.pos);
        let n = fi.row(t.neg);
        let x = dot(u, p) - dot(u, n);
        loss += neg_log_sigmoid(x);
        // d(-ln sigmoid(x))/dx = -sigmoid(-x)
        let g = -sigmoid(-x) * scale;
        for k in 0..dim {
            gu.row_mut(t.user)[k] += g * (p[k] - n[k]);
        }
        for k in 0..dim {
            gi.row_mut(t.pos)[k] += g * u[k];
        }
        for k in 0..dim {
            gi.row_mut(t.neg)[k] -= g * u[k];
        }
    }

    let (mut gu, mut gi) = lightgcn_propagate(adj, state.layers, &gu, &gi);

    if reg != 0.0 {
        let mut penalty = 0.0;
        let c = reg * scale;
        for t in batch {
            let row = state.users.row(t.user);
            penalty += dot(row, row);
            gu.row_mut(t.user).iter_mut().zip(row).for_each(|(g, v)| *g += c * v);
            for idx in [t.pos, t.neg] {
                let row = state.items.row(idx);
                penalty += dot(row, row);
                gi.row_mut(idx).iter_mut().zip(row).for_each(|(g, v)| *g += c * v);
            }
        }
        loss += 0.5 * reg * penalty;
    }
    (loss * scale, gu, gi)
}

/// One optimizer step on `batch`; returns the batch loss before the step.
/// An empty batch leaves the state untouched and reports a loss of 0.
pub fn bpr_step(
    state: &mut LocalModelState,
    adj: &NormalizedAdjacency,
    batch: &[Triple],
    params: &StepParams,
) -> f64 {
    if batch.is_empty() {
        return 0.0;
    }
    let (loss, gu, gi) = bpr_loss_and_grad(state, adj, batch, params.reg);
    apply(&mut state.users, &mut state.velocity_users, &gu, params);
    apply(&mut state.items, &mut state.velocity_items, &gi, params);
    loss
}

fn apply(weights: &mut EmbeddingMatrix, velocity: &mut EmbeddingMatrix, grad: &EmbeddingMatrix, params: &StepParams) {
    if params.momentum == 0.0 {
        for (w, g) in weights.as_mut_slice().iter_mut().zip(grad.as_slice()) {
            *w -= params.lr * g;
        }
        return;
    }
    for ((w, v), g) in weights
        .as_mut_slice()
        .iter_mut()
        .zip(velocity.as_mut_slice())
        .zip(grad.as_slice())
    {
        *v = params.momentum * *v + g;
        *w -= params.lr * *v;
    }
}

/// Uniform negative among local items the user has no edge to; any item if none exist.
pub fn sample_negative<R: Rng>(adj: &NormalizedAdjacency, user: usize, rng: &mut R) -> usize {
    let n_items = adj.n_items();
    let positives: Vec<usize> = adj.user_items(user).collect();
    let free = n_items - positives.len().min(n_items);
    if free == 0 {
        return rng.gen_range(0..n_items);
    }
    let mut target = rng.gen_range(0..free);
    let mut sorted = positives;
    sorted.sort_unstable();
    // walk the gaps between sorted positives to the target-th free item
    for &p in &sorted {
        if p <= target {
            target += 1;
        } else {
            break;
        }
    }
    target
}
