use std::collections::{HashMap, HashSet};

use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};

/// `(sum_k |a_k - b_k|^p)^(1/p)`.
pub fn minkowski_distance(a: &[f64], b: &[f64], p: f64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(minkowski_unchecked(a, b, p))
}

#[inline]
pub(crate) fn minkowski_unchecked(a: &[f64], b: &[f64], p: f64) -> f64 {
    if p == 1.0 {
        return a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum();
    }
    if p == 2.0 {
        return a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    }
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs().powf(p))
        .sum::<f64>()
        .powf(1.0 / p)
}

/// Reciprocal distance with the distance floored at `floor`.
#[inline]
pub fn inverse_distance_weight(distance: f64, floor: f64) -> f64 {
    1.0 / distance.max(floor)
}

/// Pairwise user distances.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    values: Vec<f64>,
}

impl DistanceMatrix {
    pub fn compute(embeddings: &EmbeddingMatrix, p: f64) -> Self {
        let n = embeddings.rows();
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = minkowski_unchecked(embeddings.row(i), embeddings.row(j), p);
                values[i * n + j] = d;
                values[j * n + i] = d;
            }
        }
        Self { n, values }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }
}

/// Averaging weights and their row sums.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    n: usize,
    values: Vec<f64>,
    row_sums: Vec<f64>,
}

impl WeightMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn normalizer(&self, i: usize) -> f64 {
        self.row_sums[i]
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

/// `W_ij = 1 / max(D_ij, floor)` when `i != j` and user `j` was expanded into client `i`,
/// 0 otherwise, with distances taken on the previous round's global user rows.
pub fn build_weights(
    prev_global: &EmbeddingMatrix,
    membership: &HashMap<usize, Vec<usize>>,
    p: f64,
    floor: f64,
) -> WeightMatrix {
    let n = prev_global.rows();
    let mut values = vec![0.0; n * n];
    let mut row_sums = vec![0.0; n];
    for (&i, members) in membership {
        if i >= n {
            continue;
        }
        let members: HashSet<usize> = members.iter().copied().collect();
        for j in (0..n).filter(|j| *j != i && members.contains(j)) {
            let d = minkowski_unchecked(prev_global.row(i), prev_global.row(j), p);
            values[i * n + j] = inverse_distance_weight(d, floor);
        }
        row_sums[i] = values[i * n..(i + 1) * n].iter().sum();
    }
    WeightMatrix { n, values, row_sums }
}
