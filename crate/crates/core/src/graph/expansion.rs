use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::GlobalGraph;
use crate::error::Error;

/// Which items and edges a client sees after expansion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeScope {
    /// Only the anchor's items, with every expanded user's edges into them.
    #[serde(rename = "anchor-only")]
    AnchorOnly,
    /// The union of all expanded users' items and all of their edges.
    #[serde(rename = "all-local")]
    AllLocal,
}

impl fmt::Display for EdgeScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EdgeScope::AnchorOnly => "anchor-only",
            EdgeScope::AllLocal => "all-local",
        })
    }
}

impl FromStr for EdgeScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "anchor-only" => Ok(EdgeScope::AnchorOnly),
            "all-local" => Ok(EdgeScope::AllLocal),
            other => Err(Error::Config(format!("unknown edge_scope `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExpansionParams {
    /// `None` keeps every co-interacting user; written as `"unbounded"` in config.
    #[serde(with = "neighbor_limit")]
    pub max_neighbors: Option<usize>,
    pub edge_scope: EdgeScope,
}

impl Default for ExpansionParams {
    fn default() -> Self {
        Self {
            max_neighbors: Some(32),
            edge_scope: EdgeScope::AllLocal,
        }
    }
}

mod neighbor_limit {
    use serde::de::{self, Visitor};
    use serde::{Deserializer, Serializer};
    use std::fmt;

    pub fn serialize<S: Serializer>(v: &Option<usize>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(n) => s.serialize_u64(*n as u64),
            None => s.serialize_str("unbounded"),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<usize>, D::Error> {
        struct Limit;
        impl Visitor<'_> for Limit {
            type Value = Option<usize>;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a non-negative integer or \"unbounded\"")
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Self::Value, E> {
                Ok(Some(v as usize))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Self::Value, E> {
                usize::try_from(v)
                    .map(Some)
                    .map_err(|_| E::custom("max_neighbors must be >= 0"))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Self::Value, E> {
                if v == "unbounded" {
                    Ok(None)
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }
        }
        d.deserialize_any(Limit)
    }
}

/// A client's view of the graph: its anchor, the users expanded into it, and their edges.
///
/// `users[0]` is always the anchor. `edges` holds `(user position, item position)` pairs
/// into `users` and `items`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalSubgraph {
    pub anchor: usize,
    pub users: Vec<usize>,
    pub items: Vec<usize>,
    pub edges: Vec<(usize, usize)>,
}

impl LocalSubgraph {
    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn contains_user(&self, user: usize) -> bool {
        self.users.contains(&user)
    }

    /// Edges as global `(user, item)` indices.
    pub fn global_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().map(|&(u, i)| (self.users[u], self.items[i]))
    }

    /// Number of local edges touching each local item.
    pub fn item_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.items.len()];
        for &(_, i) in &self.edges {
            deg[i] += 1;
        }
        deg
    }
}

/// Co-interacting users of `anchor` with their shared-item counts, best first
/// (count descending, then user index ascending).
fn ranked_neighbors(g: &GlobalGraph, anchor: usize) -> Vec<(usize, usize)> {
    let mut shared: HashMap<usize, usize> = HashMap::new();
    for &item in g.items_of(anchor) {
        for &u in g.users_of(item) {
            if u != anchor {
                *shared.entry(u).or_default() += 1;
            }
        }
    }
    let mut ranked: Vec<(usize, usize)> = shared.into_iter().collect();
    ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked
}

pub fn expand_user(g: &GlobalGraph, anchor: usize, params: &ExpansionParams) -> LocalSubgraph {
    let mut ranked = ranked_neighbors(g, anchor);
    if let Some(limit) = params.max_neighbors {
        ranked.truncate(limit);
    }
    let mut users = Vec::with_capacity(ranked.len() + 1);
    users.push(anchor);
    users.extend(ranked.iter().map(|&(u, _)| u));

    let items: Vec<usize> = match params.edge_scope {
        EdgeScope::AnchorOnly => g.items_of(anchor).to_vec(),
        EdgeScope::AllLocal => {
            let mut all: Vec<usize> = users.iter().flat_map(|&u| g.items_of(u).iter().copied()).collect();
            all.sort_unstable();
            all.dedup();
            all
        }
    };
    let item_pos: HashMap<usize, usize> = items.iter().enumerate().map(|(p, &i)| (i, p)).collect();

    let mut edges = Vec::new();
    for (up, &u) in users.iter().enumerate() {
        for &i in g.items_of(u) {
            if let Some(&ip) = item_pos.get(&i) {
                edges.push((up, ip));
            }
        }
    }

    LocalSubgraph {
        anchor,
        users,
        items,
        edges,
    }
}

/// One subgraph per user, indexed by anchor.
pub fn expand_all(g: &GlobalGraph, params: &ExpansionParams) -> Vec<LocalSubgraph> {
    use rayon::prelude::*;
    (0..g.n_users())
        .into_par_iter()
        .map(|u| expand_user(g, u, params))
        .collect()
}

/// Every `(i, j)` where user `j` was expanded into client `i` but `i` is not in client `j`.
///
/// Pairs whose reverse client is absent from `subgraphs` are not reported.
pub fn expansion_symmetry_check(subgraphs: &[LocalSubgraph]) -> Vec<(usize, usize)> {
    let members: HashMap<usize, HashSet<usize>> = subgraphs
        .iter()
        .map(|s| (s.anchor, s.users.iter().copied().collect()))
        .collect();
    let mut out = Vec::new();
    for s in subgraphs {
        for &j in s.users.iter().filter(|&&j| j != s.anchor) {
            if let Some(reverse) = members.get(&j) {
                if !reverse.contains(&s.anchor) {
                    out.push((s.anchor, j));
                }
            }
        }
    }
    out.sort_unstable();
    out
}

/// Debug dump, one `anchor | expanded_users | n_edges` line per client.
pub fn write_subgraph_dump<W: Write>(subgraphs: &[LocalSubgraph], mut out: W) -> std::io::Result<()> {
    for s in subgraphs {
        let users: Vec<String> = s.users.iter().map(usize::to_string).collect();
        writeln!(out, "{} | {} | {}", s.anchor, users.join(","), s.edges.len())?;
    }
    Ok(())
}
