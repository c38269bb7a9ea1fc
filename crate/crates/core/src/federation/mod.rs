//! The synchronous server loop: select clients, train them against a frozen snapshot,
//! aggregate users and items, evaluate, and stop early on a validation plateau.

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregation::{AggregationConfig, ItemAggregator, StrategyRegistry, UserAggregator, UserRound};
use crate::data::{InteractionDataset, Partition};
use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::eval::{EvalConfig, EvalResult, Evaluator};
use crate::gnn::{ClientUpdate, LightGcnTrainer, LocalHyper, LocalTrainer, NormalizedAdjacency};
use crate::graph::{build_global_graph, expand_all, ExpansionParams, LocalSubgraph};
use crate::seeding::{stream, tags};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub rounds: usize,
    pub clients_per_round: usize,
    /// Evaluations without strict validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub eval_every: usize,
    /// Embedding width.
    pub dim: usize,
    /// Standard deviation of the Gaussian initial embeddings.
    pub init_std: f64,
    pub local: LocalHyper,
    pub aggregation: AggregationConfig,
    pub expansion: ExpansionParams,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            rounds: 100,
            clients_per_round: 20,
            patience: 5,
            seed: 42,
            eval_every: 1,
            dim: 64,
            init_std: 0.1,
            local: LocalHyper::default(),
            aggregation: AggregationConfig::default(),
            expansion: ExpansionParams::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(format!("run.{msg}")));
        if self.rounds < 1 {
            return bad("rounds must be >= 1");
        }
        if self.clients_per_round < 1 {
            return bad("clients_per_round must be >= 1");
        }
        if self.patience < 1 {
            return bad("patience must be >= 1");
        }
        if self.eval_every < 1 {
            return bad("eval_every must be >= 1");
        }
        if self.dim < 1 {
            return bad("dim must be >= 1");
        }
        if !(self.init_std.is_finite() && self.init_std > 0.0) {
            return bad("init_std must be > 0");
        }
        if self.eval.k < 1 {
            return bad("eval.k must be >= 1");
        }
        self.local.validate()?;
        self.aggregation.validate()
    }
}

/// `min(k, n)` distinct clients drawn uniformly from a stream keyed by `(seed, round)`,
/// sorted ascending.
pub fn select_clients(n: usize, k: usize, seed: u64, round: usize) -> Vec<usize> {
    if k >= n {
        return (0..n).collect();
    }
    let mut rng = stream(seed, &[tags::SELECT, round as u64]);
    let mut picked = index::sample(&mut rng, n, k).into_vec();
    picked.sort_unstable();
    picked
}

/// Global model after `round` rounds (round 0 is the initialization).
#[derive(Debug, Clone, PartialEq)]
pub struct RoundState {
    pub round: usize,
    pub selected: Vec<usize>,
    pub users: EmbeddingMatrix,
    pub items: EmbeddingMatrix,
}

impl RoundState {
    /// Seeded Gaussian initialization.
    pub fn initial(n_users: usize, n_items: usize, dim: usize, std: f64, seed: u64) -> Self {
        let users = EmbeddingMatrix::gaussian(n_users, dim, std, &mut stream(seed, &[tags::INIT, 0]));
        let items = EmbeddingMatrix::gaussian(n_items, dim, std, &mut stream(seed, &[tags::INIT, 1]));
        Self {
            round: 0,
            selected: Vec::new(),
            users,
            items,
        }
    }
}

/// Per-round log line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub alpha: Option<f64>,
    pub selected: Vec<usize>,
    pub mean_loss: Option<f64>,
    pub valid_ndcg: Option<f64>,
    pub valid_hr: Option<f64>,
}

/// Clients, local trainer and the two aggregation strategies of one run.
pub struct Federation {
    subgraphs: Vec<LocalSubgraph>,
    config: RunConfig,
    trainer: Box<dyn LocalTrainer>,
    user_agg: Box<dyn UserAggregator>,
    item_agg: Box<dyn ItemAggregator>,
}

impl Federation {
    /// One client per subgraph; client `i` must be anchored at user `i`.
    pub fn new(subgraphs: Vec<LocalSubgraph>, config: RunConfig) -> Result<Self> {
        Self::with_registry(subgraphs, config, &StrategyRegistry::default())
    }

    pub fn with_registry(subgraphs: Vec<LocalSubgraph>, config: RunConfig, registry: &StrategyRegistry) -> Result<Self> {
        config.validate()?;
        if let Some((i, s)) = subgraphs.iter().enumerate().find(|(i, s)| s.anchor != *i) {
            return Err(Error::InvalidParameter(format!("client {i} is anchored at user {}", s.anchor)));
        }
        let user_agg = registry.user(&config.aggregation.user_strategy, &config.aggregation)?;
        let item_agg = registry.item(&config.aggregation.item_strategy, &config.aggregation)?;
        let trainer = Box::new(LightGcnTrainer {
            hyper: config.local.clone(),
        });
        Ok(Self {
            subgraphs,
            config,
            trainer,
            user_agg,
            item_agg,
        })
    }

    pub fn n_clients(&self) -> usize {
        self.subgraphs.len()
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn subgraphs(&self) -> &[LocalSubgraph] {
        &self.subgraphs
    }

    /// Trains `selected` clients in parallel against `state`, in the given order.
    pub fn client_updates(&self, state: &RoundState, selected: &[usize], round: usize) -> Vec<ClientUpdate> {
        selected
            .par_iter()
            .map(|&c| {
                let sub = &self.subgraphs[c];
                let adj = NormalizedAdjacency::from_subgraph(sub);
                let mut rng = stream(self.config.seed, &[tags::CLIENT, round as u64, c as u64]);
                self.trainer.train(&state.users, &state.items, sub, &adj, &mut rng)
            })
            .collect()
    }

    pub fn run_round(&self, prev: &RoundState) -> Result<(RoundState, RoundRecord)> {
        let round = prev.round + 1;
        let selected = select_clients(self.n_clients(), self.config.clients_per_round, self.config.seed, round);
        let updates = self.client_updates(prev, &selected, round);

        let users = self.user_agg.aggregate(&UserRound {
            updates: &updates,
            prev: &prev.users,
            selected: &selected,
            round,
        })?;
        let items = self.item_agg.aggregate(&updates, &prev.items)?;
        if !users.is_finite() {
            return Err(Error::NonFinite { round, what: "user" });
        }
        if !items.is_finite() {
            return Err(Error::NonFinite { round, what: "item" });
        }

        let losses: Vec<f64> = updates.iter().filter_map(ClientUpdate::mean_loss).collect();
        let mean_loss = (!losses.is_empty()).then(|| losses.iter().sum::<f64>() / losses.len() as f64);
        let record = RoundRecord {
            round,
            alpha: self.user_agg.alpha(round),
            selected: selected.clone(),
            mean_loss,
            valid_ndcg: None,
            valid_hr: None,
        };
        Ok((
            RoundState {
                round,
                selected,
                users,
                items,
            },
            record,
        ))
    }
}

/// Convenience wrapper that builds a [`Federation`] for a single round.
pub fn run_round(state: &RoundState, subgraphs: &[LocalSubgraph], cfg: &RunConfig) -> Result<RoundState> {
    Ok(Federation::new(subgraphs.to_vec(), cfg.clone())?.run_round(state)?.0)
}

/// Counts evaluations since the last strict improvement of a maximized metric.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<f64>,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: None,
            stale: 0,
        }
    }

    /// Records one evaluation; returns whether it is the new best.
    pub fn observe(&mut self, value: f64) -> bool {
        if self.best.map_or(true, |b| value > b) {
            self.best = Some(value);
            self.stale = 0;
            true
        } else {
            self.stale += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.stale >= self.patience
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub rounds: Vec<RoundRecord>,
    pub best_round: usize,
    pub best_valid: EvalResult,
    /// Test metrics of the best-validation matrices.
    pub test: EvalResult,
    pub stopped_early: bool,
    pub best: RoundState,
    pub last: RoundState,
}

pub fn run_experiment(ds: &InteractionDataset, cfg: &RunConfig) -> Result<RunReport> {
    run_experiment_with(ds, cfg, |_| {})
}

/// Like [`run_experiment`], calling `on_round` with every round record as it completes.
pub fn run_experiment_with(
    ds: &InteractionDataset,
    cfg: &RunConfig,
    mut on_round: impl FnMut(&RoundRecord),
) -> Result<RunReport> {
    cfg.validate()?;
    let graph = build_global_graph(ds);
    let federation = Federation::new(expand_all(&graph, &cfg.expansion), cfg.clone())?;
    let evaluator = Evaluator::new(ds, cfg.eval.clone(), cfg.local.layers);

    let mut state = RoundState::initial(ds.n_users(), ds.n_items(), cfg.dim, cfg.init_std, cfg.seed);
    let mut records = Vec::new();
    let mut best: Option<(RoundState, EvalResult)> = None;
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut stopped_early = false;

    for r in 1..=cfg.rounds {
        let (next, mut record) = federation.run_round(&state)?;
        state = next;
        if r % cfg.eval_every == 0 || r == cfg.rounds {
            let valid = evaluator.evaluate(&state.users, &state.items, Partition::Valid)?;
            record.valid_ndcg = Some(valid.ndcg.mean);
            record.valid_hr = Some(valid.hr.mean);
            if stopper.observe(valid.ndcg.mean) {
                best = Some((state.clone(), valid));
            }
        }
        log::info!(
            "round {r}: loss {:?} valid ndcg {:?} hr {:?}",
            record.mean_loss,
            record.valid_ndcg,
            record.valid_hr
        );
        on_round(&record);
        records.push(record);
        if stopper.should_stop() {
            stopped_early = r < cfg.rounds;
            break;
        }
    }

    let (best_state, best_valid) = best.expect("the last round is always evaluated");
    let test = evaluator.evaluate(&best_state.users, &best_state.items, Partition::Test)?;
    Ok(RunReport {
        rounds: records,
        best_round: best_state.round,
        best_valid,
        test,
        stopped_early,
        best: best_state,
        last: state,
    })
}
