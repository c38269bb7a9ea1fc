//! Global bipartite train graph and per-client anchored subgraphs.

mod expansion;

use serde::{Deserialize, Serialize};

use crate::data::{InteractionDataset, Partition};

pub use expansion::{
    expand_all, expand_user, expansion_symmetry_check, write_subgraph_dump, EdgeScope,
    ExpansionParams, LocalSubgraph,
};

/// Train-partition adjacency, both directions, sorted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalGraph {
    user_items: Vec<Vec<usize>>,
    item_users: Vec<Vec<usize>>,
}

impl GlobalGraph {
    pub fn from_edges(n_users: usize, n_items: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut user_items = vec![Vec::new(); n_users];
        let mut item_users = vec![Vec::new(); n_items];
        for (u, i) in edges {
            user_items[u].push(i);
            item_users[i].push(u);
        }
        for list in user_items.iter_mut().chain(item_users.iter_mut()) {
            list.sort_unstable();
            list.dedup();
        }
        Self {
            user_items,
            item_users,
        }
    }

    pub fn n_users(&self) -> usize {
        self.user_items.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_users.len()
    }

    pub fn items_of(&self, user: usize) -> &[usize] {
        &self.user_items[user]
    }

    pub fn users_of(&self, item: usize) -> &[usize] {
        &self.item_users[item]
    }

    pub fn has_edge(&self, user: usize, item: usize) -> bool {
        self.user_items[user].binary_search(&item).is_ok()
    }

    pub fn n_edges(&self) -> usize {
        self.user_items.iter().map(Vec::len).sum()
    }
}

pub fn build_global_graph(ds: &InteractionDataset) -> GlobalGraph {
    GlobalGraph::from_edges(
        ds.n_users(),
        ds.n_items(),
        ds.partition_edges(Partition::Train).map(|e| (e.user, e.item)),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Edge;

    #[test]
    fn single_edge() {
        let g = GlobalGraph::from_edges(1, 1, [(0, 0)]);
        assert_eq!(g.items_of(0), &[0]);
        assert_eq!(g.users_of(0), &[0]);
    }

    #[test]
    fn shared_item_lists_both_users() {
        let g = GlobalGraph::from_edges(2, 1, [(1, 0), (0, 0)]);
        assert_eq!(g.users_of(0), &[0, 1]);
    }

    #[test]
    fn only_train_edges_enter_the_graph() {
        let ds = InteractionDataset {
            user_ids: vec!["a".into()],
            item_ids: vec!["x".into(), "y".into()],
            edges: vec![
                Edge { user: 0, item: 0, rating: 1.0 },
                Edge { user: 0, item: 1, rating: 1.0 },
            ],
            partitions: vec![Partition::Train, Partition::Test],
        };
        let g = build_global_graph(&ds);
        assert_eq!(g.items_of(0), &[0]);
        assert!(g.users_of(1).is_empty());
        assert_eq!(g.n_edges(), 1);
    }
}
