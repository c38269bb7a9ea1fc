use crate::embedding::EmbeddingMatrix;
use crate::graph::LocalSubgraph;

/// Neighbor lists in compressed sparse row form.
#[derive(Debug, Clone, Default)]
struct Csr {
    offsets: Vec<usize>,
    entries: Vec<(usize, f64)>,
}

impl Csr {
    fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    fn row(&self, node: usize) -> &[(usize, f64)] {
        &self.entries[self.offsets[node]..self.offsets[node + 1]]
    }
}

/// Symmetric-normalized bipartite adjacency of one subgraph, in both directions.
///
/// Entry weights are `1 / sqrt(d_u * d_i)` with degrees counted over the local edges.
#[derive(Debug, Clone)]
pub struct NormalizedAdjacency {
    user_adj: Csr,
    item_adj: Csr,
}

fn build_csr(n: usize, degree: &[usize], pairs: impl Iterator<Item = (usize, usize, f64)>) -> Csr {
    let mut offsets = vec![0; n + 1];
    for v in 0..n {
        offsets[v + 1] = offsets[v] + degree[v];
    }
    let mut fill = offsets.clone();
    let mut entries = vec![(0, 0.0); offsets[n]];
    for (src, dst, w) in pairs {
        entries[fill[src]] = (dst, w);
        fill[src] += 1;
    }
    for v in 0..n {
        entries[offsets[v]..offsets[v + 1]].sort_by_key(|e| e.0);
    }
    Csr { offsets, entries }
}

impl NormalizedAdjacency {
    pub fn new(n_users: usize, n_items: usize, edges: &[(usize, usize)]) -> Self {
        let mut du = vec![0usize; n_users];
        let mut di = vec![0usize; n_items];
        for &(u, i) in edges {
            du[u] += 1;
            di[i] += 1;
        }
        let weight = |u: usize, i: usize| 1.0 / ((du[u] * di[i]) as f64).sqrt();
        let user_adj = build_csr(n_users, &du, edges.iter().map(|&(u, i)| (u, i, weight(u, i))));
        let item_adj = build_csr(n_items, &di, edges.iter().map(|&(u, i)| (i, u, weight(u, i))));
        Self { user_adj, item_adj }
    }

    pub fn from_subgraph(sub: &LocalSubgraph) -> Self {
        Self::new(sub.n_users(), sub.n_items(), &sub.edges)
    }

    pub fn n_users(&self) -> usize {
        self.user_adj.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_adj.len()
    }

    /// Positive item positions per local user, sorted.
    pub fn user_items(&self, user: usize) -> impl Iterator<Item = usize> + '_ {
        self.user_adj.row(user).iter().map(|&(i, _)| i)
    }

    pub fn user_degree(&self, user: usize) -> usize {
        self.user_adj.row(user).len()
    }
}

/// One propagation layer into `out`: normalized neighbor sums, or `own` for isolated nodes.
fn spread(adj: &Csr, source: &EmbeddingMatrix, own: &EmbeddingMatrix, out: &mut EmbeddingMatrix) {
    for node in 0..adj.len() {
        let neighbors = adj.row(node);
        let dst = out.row_mut(node);
        if neighbors.is_empty() {
            dst.copy_from_slice(own.row(node));
            continue;
        }
        dst.iter_mut().for_each(|d| *d = 0.0);
        for &(nb, w) in neighbors {
            for (d, s) in dst.iter_mut().zip(source.row(nb)) {
                *d += w * s;
            }
        }
    }
}

fn accumulate(sum: &mut EmbeddingMatrix, layer: &EmbeddingMatrix) {
    for (s, v) in sum.as_mut_slice().iter_mut().zip(layer.as_slice()) {
        *s += v;
    }
}

/// LightGCN propagation: layer-wise normalized neighbor sums, output is the mean of
/// layers `0..=layers`. Nodes without local edges repeat their layer-0 vector.
///
/// The map is linear and its matrix is symmetric, so the same call back-propagates
/// gradients from the final embeddings to the layer-0 ones.
pub fn lightgcn_propagate(
    adj: &NormalizedAdjacency,
    layers: usize,
    users: &EmbeddingMatrix,
    items: &EmbeddingMatrix,
) -> (EmbeddingMatrix, EmbeddingMatrix) {
    debug_assert_eq!(users.rows(), adj.n_users());
    debug_assert_eq!(items.rows(), adj.n_items());
    if layers == 0 {
        return (users.clone(), items.clone());
    }
    let mut sum_u = users.clone();
    let mut sum_i = items.clone();
    let mut cur_u = users.clone();
    let mut cur_i = items.clone();
    let mut next_u = EmbeddingMatrix::zeros(users.rows(), users.dim());
    let mut next_i = EmbeddingMatrix::zeros(items.rows(), items.dim());
    for _ in 0..layers {
        spread(&adj.user_adj, &cur_i, &cur_u, &mut next_u);
        spread(&adj.item_adj, &cur_u, &cur_i, &mut next_i);
        accumulate(&mut sum_u, &next_u);
        accumulate(&mut sum_i, &next_i);
        std::mem::swap(&mut cur_u, &mut next_u);
        std::mem::swap(&mut cur_i, &mut next_i);
    }
    let scale = 1.0 / (layers + 1) as f64;
    sum_u.as_mut_slice().iter_mut().for_each(|v| *v *= scale);
    sum_i.as_mut_slice().iter_mut().for_each(|v| *v *= scale);
    (sum_u, sum_i)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_layers_is_identity() {
        let adj = NormalizedAdjacency::new(1, 1, &[(0, 0)]);
        let u = EmbeddingMatrix::from_rows(&[[1.0, 2.0]]);
        let i = EmbeddingMatrix::from_rows(&[[3.0, -1.0]]);
        let (fu, fi) = lightgcn_propagate(&adj, 0, &u, &i);
        assert_eq!(fu, u);
        assert_eq!(fi, i);
    }

    #[test]
    fn one_edge_one_layer_hand_computed() {
        // normalization 1/sqrt(1*1) = 1, so layer 1 swaps the two vectors
        let adj = NormalizedAdjacency::new(1, 1, &[(0, 0)]);
        let u = EmbeddingMatrix::from_rows(&[[1.0, 2.0]]);
        let i = EmbeddingMatrix::from_rows(&[[3.0, -1.0]]);
        let (fu, fi) = lightgcn_propagate(&adj, 1, &u, &i);
        assert_eq!(fu.row(0), &[2.0, 0.5]);
        assert_eq!(fi.row(0), &[2.0, 0.5]);
    }

    #[test]
    fn zero_in_zero_out() {
        let adj = NormalizedAdjacency::new(2, 3, &[(0, 0), (0, 1), (1, 1), (1, 2)]);
        let (fu, fi) = lightgcn_propagate(&adj, 3, &EmbeddingMatrix::zeros(2, 4), &EmbeddingMatrix::zeros(3, 4));
        assert!(fu.as_slice().iter().chain(fi.as_slice()).all(|v| *v == 0.0));
    }

    #[test]
    fn isolated_nodes_keep_layer_zero() {
        // item 1 has no edges
        let adj = NormalizedAdjacency::new(1, 2, &[(0, 0)]);
        let u = EmbeddingMatrix::from_rows(&[[1.0]]);
        let i = EmbeddingMatrix::from_rows(&[[2.0], [7.0]]);
        let (_, fi) = lightgcn_propagate(&adj, 2, &u, &i);
        assert_eq!(fi.row(1), &[7.0]);
    }

    #[test]
    fn linear_in_scale() {
        let adj = NormalizedAdjacency::new(2, 3, &[(0, 0), (0, 1), (1, 1), (1, 2)]);
        let u = EmbeddingMatrix::from_rows(&[[0.3, -0.2], [0.1, 0.5]]);
        let i = EmbeddingMatrix::from_rows(&[[0.4, 0.0], [-0.7, 0.2], [0.9, 0.9]]);
        let (fu, fi) = lightgcn_propagate(&adj, 2, &u, &i);
        let (gu, gi) = lightgcn_propagate(&adj, 2, &u.scaled(-2.5), &i.scaled(-2.5));
        for (a, b) in fu.as_slice().iter().chain(fi.as_slice()).zip(gu.as_slice().iter().chain(gi.as_slice())) {
            assert!((a * -2.5 - b).abs() < 1e-12);
        }
    }
}
