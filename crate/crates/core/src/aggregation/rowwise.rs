use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::gnn::ClientUpdate;

/// One client's copy of a row, with the weight FedAvg would give it.
#[derive(Debug, Clone, Copy)]
pub struct Contribution<'a> {
    pub client: usize,
    pub row: &'a [f64],
    pub weight: f64,
}

fn sorted_by_client(updates: &[ClientUpdate]) -> Vec<&ClientUpdate> {
    let mut v: Vec<&ClientUpdate> = updates.iter().collect();
    v.sort_by_key(|u| u.client);
    v
}

fn check_dim(rows: &EmbeddingMatrix, dim: usize) -> Result<()> {
    if rows.rows() > 0 && rows.dim() != dim {
        return Err(Error::LengthMismatch {
            left: rows.dim(),
            right: dim,
        });
    }
    Ok(())
}

/// Per-user contributions in ascending client order; FedAvg weight is the client's
/// train edge count.
pub(crate) fn user_contributions<'a>(
    updates: &'a [ClientUpdate],
    n_users: usize,
    dim: usize,
) -> Result<Vec<Vec<Contribution<'a>>>> {
    let mut out: Vec<Vec<Contribution<'a>>> = vec![Vec::new(); n_users];
    for up in sorted_by_client(updates) {
        check_dim(&up.user_rows, dim)?;
        for (k, &user) in up.users.iter().enumerate() {
            let slot = out.get_mut(user).ok_or(Error::UnknownUser(user))?;
            slot.push(Contribution {
                client: up.client,
                row: up.user_rows.row(k),
                weight: up.train_edge_count as f64,
            });
        }
    }
    Ok(out)
}

/// Per-item contributions in ascending client order; FedAvg weight is the client's
/// local edge count on that item.
pub(crate) fn item_contributions<'a>(
    updates: &'a [ClientUpdate],
    n_items: usize,
    dim: usize,
) -> Result<Vec<Vec<Contribution<'a>>>> {
    let mut out: Vec<Vec<Contribution<'a>>> = vec![Vec::new(); n_items];
    for up in sorted_by_client(updates) {
        check_dim(&up.item_rows, dim)?;
        for (k, &item) in up.items.iter().enumerate() {
            let slot = out.get_mut(item).ok_or(Error::UnknownItem(item))?;
            slot.push(Contribution {
                client: up.client,
                row: up.item_rows.row(k),
                weight: up.item_edge_counts.get(k).copied().unwrap_or(0) as f64,
            });
        }
    }
    Ok(out)
}

/// Combines the contributed copies of one row. Called only with a non-empty slice;
/// rows nobody contributed are carried forward by the caller.
pub trait RowCombiner: Send + Sync {
    fn combine(&self, contributions: &[Contribution<'_>], prev: &[f64], out: &mut [f64]);
}

/// Applies `combiner` to every row, carrying forward rows without contributions.
pub(crate) fn combine_rows<C: RowCombiner + ?Sized>(
    combiner: &C,
    per_row: &[Vec<Contribution<'_>>],
    prev: &EmbeddingMatrix,
) -> EmbeddingMatrix {
    let mut out = prev.clone();
    for (idx, contributions) in per_row.iter().enumerate() {
        if contributions.is_empty() {
            continue;
        }
        let mut row = vec![0.0; prev.dim()];
        combiner.combine(contributions, prev.row(idx), &mut row);
        out.row_mut(idx).copy_from_slice(&row);
    }
    out
}

/// `sum_j w_j x_j` with weights normalized to sum to one first, so a single
/// contributor comes back bit-for-bit.
pub(crate) fn weighted_mean(contributions: &[Contribution<'_>], weights: &[f64], out: &mut [f64]) {
    let total: f64 = weights.iter().sum();
    out.iter_mut().for_each(|v| *v = 0.0);
    for (c, w) in contributions.iter().zip(weights) {
        let w = w / total;
        for (o, x) in out.iter_mut().zip(c.row) {
            *o += w * x;
        }
    }
}

/// Weighted by the contribution weight (`n_k`).
#[derive(Debug, Clone, Copy, Default)]
pub struct FedAvg;

impl RowCombiner for FedAvg {
    fn combine(&self, contributions: &[Contribution<'_>], prev: &[f64], out: &mut [f64]) {
        let weights: Vec<f64> = contributions.iter().map(|c| c.weight).collect();
        if weights.iter().sum::<f64>() > 0.0 {
            weighted_mean(contributions, &weights, out);
        } else {
            SimpleAvg.combine(contributions, prev, out);
        }
    }
}

/// Unweighted mean.
#[derive(Debug, Clone, Copy, Default)]
pub struct SimpleAvg;

impl RowCombiner for SimpleAvg {
    fn combine(&self, contributions: &[Contribution<'_>], _prev: &[f64], out: &mut [f64]) {
        weighted_mean(contributions, &vec![1.0; contributions.len()], out);
    }
}

/// Coordinate-wise median; an even count takes the midpoint of the two middle values.
#[derive(Debug, Clone, Copy, Default)]
pub struct FedMedian;

impl RowCombiner for FedMedian {
    fn combine(&self, contributions: &[Contribution<'_>], _prev: &[f64], out: &mut [f64]) {
        let mut column = Vec::with_capacity(contributions.len());
        for (k, o) in out.iter_mut().enumerate() {
            column.clear();
            column.extend(contributions.iter().map(|c| c.row[k]));
            column.sort_by(f64::total_cmp);
            let mid = column.len() / 2;
            *o = if column.len() % 2 == 1 {
                column[mid]
            } else {
                0.5 * (column[mid - 1] + column[mid])
            };
        }
    }
}

/// Attentive weighting: softmax of `-|x_j - prev|_2 / temperature` over contributors.
#[derive(Debug, Clone, Copy)]
pub struct FedAtt {
    pub temperature: f64,
}

impl Default for FedAtt {
    fn default() -> Self {
        Self { temperature: 1.0 }
    }
}

impl FedAtt {
    pub fn weights(&self, contributions: &[Contribution<'_>], prev: &[f64]) -> Vec<f64> {
        let logits: Vec<f64> = contributions
            .iter()
            .map(|c| -super::distance::minkowski_unchecked(c.row, prev, 2.0) / self.temperature)
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = exp.iter().sum();
        exp.into_iter().map(|e| e / total).collect()
    }
}

impl RowCombiner for FedAtt {
    fn combine(&self, contributions: &[Contribution<'_>], prev: &[f64], out: &mut [f64]) {
        let weights = self.weights(contributions, prev);
        weighted_mean(contributions, &weights, out);
    }
}
