use super::alpha::alpha_schedule;
use super::distance::{inverse_distance_weight, minkowski_unchecked};
use super::rowwise::{user_contributions, weighted_mean, Contribution};
use super::{AggregationConfig, UserAggregator, UserRound};
use crate::embedding::EmbeddingMatrix;
use crate::error::Result;

/// Inverse-distance weighted averaging of each user's copies, interpolated with the
/// anchor's own update.
///
/// For user `i` the contributors are the selected clients `j != i` that hold a copy of
/// `i`. Their copies are averaged with weights `1 / max(D_ij, floor)`, where `D_ij` is
/// the Minkowski distance between rows `i` and `j` of the previous global matrix, and
/// normalized over those contributors only. A selected user then gets
/// `alpha * anchor + (1 - alpha) * average`; an unselected one gets the average, or
/// keeps its previous row when nobody contributed.
#[derive(Debug, Clone)]
pub struct DistFedAvg {
    pub config: AggregationConfig,
}

impl DistFedAvg {
    pub fn new(config: AggregationConfig) -> Self {
        Self { config }
    }

    /// Normalized weights of the non-anchor contributors of `user`.
    pub fn contributor_weights(&self, user: usize, others: &[Contribution<'_>], prev: &EmbeddingMatrix) -> Vec<f64> {
        let raw: Vec<f64> = others
            .iter()
            .map(|c| {
                let d = minkowski_unchecked(prev.row(user), prev.row(c.client), self.config.p);
                inverse_distance_weight(d, self.config.distance_floor)
            })
            .collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|w| w / total).collect()
    }
}

impl UserAggregator for DistFedAvg {
    fn id(&self) -> &'static str {
        "dist-fedavg"
    }

    fn alpha(&self, round: usize) -> Option<f64> {
        Some(alpha_schedule(&self.config, round))
    }

    fn aggregate(&self, round: &UserRound<'_>) -> Result<EmbeddingMatrix> {
        let prev = round.prev;
        let n = prev.rows();
        let alpha = alpha_schedule(&self.config, round.round);
        let mut selected = vec![false; n];
        for &c in round.selected {
            if c < n {
                selected[c] = true;
            }
        }
        let per_user = user_contributions(round.updates, n, prev.dim())?;

        let mut out = prev.clone();
        let mut blended = vec![0.0; prev.dim()];
        for (user, contributions) in per_user.iter().enumerate() {
            let anchor = contributions
                .iter()
                .find(|c| c.client == user && selected[user])
                .map(|c| c.row);
            let others: Vec<Contribution<'_>> = contributions
                .iter()
                .filter(|c| c.client != user && c.client < n && selected[c.client])
                .copied()
                .collect();

            let dst = out.row_mut(user);
            match (anchor, others.is_empty()) {
                (Some(a), true) => dst.copy_from_slice(a),
                (None, true) => {}
                (anchor, false) => {
                    let weights = self.contributor_weights(user, &others, prev);
                    weighted_mean(&others, &weights, &mut blended);
                    match anchor {
                        Some(a) => {
                            for ((d, a), e) in dst.iter_mut().zip(a).zip(&blended) {
                                *d = alpha * a + (1.0 - alpha) * e;
                            }
                        }
                        None => dst.copy_from_slice(&blended),
                    }
                }
            }
        }
        Ok(out)
    }
}
