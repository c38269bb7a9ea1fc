use proptest::prelude::*;

use super::*;

fn update(client: usize, users: &[(usize, &[f64])], edges: usize) -> ClientUpdate {
    let rows: Vec<&[f64]> = users.iter().map(|(_, r)| *r).collect();
    ClientUpdate {
        client,
        users: users.iter().map(|(u, _)| *u).collect(),
        user_rows: EmbeddingMatrix::from_rows(&rows),
        items: vec![],
        item_rows: EmbeddingMatrix::zeros(0, rows[0].len()),
        item_edge_counts: vec![],
        train_edge_count: edges,
        epoch_losses: vec![],
    }
}

fn item_update(client: usize, items: &[(usize, &[f64], usize)]) -> ClientUpdate {
    let rows: Vec<&[f64]> = items.iter().map(|(_, r, _)| *r).collect();
    let dim = rows[0].len();
    ClientUpdate {
        client,
        users: vec![client],
        user_rows: EmbeddingMatrix::zeros(1, dim),
        items: items.iter().map(|(i, _, _)| *i).collect(),
        item_rows: EmbeddingMatrix::from_rows(&rows),
        item_edge_counts: items.iter().map(|(_, _, c)| *c).collect(),
        train_edge_count: items.iter().map(|(_, _, c)| *c).sum(),
        epoch_losses: vec![],
    }
}

fn fixed(alpha: f64) -> AggregationConfig {
    AggregationConfig {
        alpha_mode: AlphaMode::Fixed,
        alpha,
        ..Default::default()
    }
}

#[test]
fn three_user_toy_weighted_mean() {
    let prev = EmbeddingMatrix::from_rows(&[[0.0, 0.0], [1.0, 0.0], [3.0, 0.0]]);
    let updates = vec![
        update(1, &[(1, &[9.0, 9.0]), (0, &[1.0, 1.0])], 4),
        update(2, &[(2, &[9.0, 9.0]), (0, &[5.0, 5.0])], 4),
    ];
    let out = dist_fedavg_user(&updates, &prev, &[1, 2], 3, &fixed(0.5)).unwrap();
    // weights 1/1 and 1/3, normalized to 0.75 / 0.25
    for (got, want) in out.row(0).iter().zip([2.0, 2.0]) {
        assert!((got - want).abs() < 1e-12);
    }
    // users 1 and 2 are selected with no other contributors: anchor row
    assert_eq!(out.row(1), &[9.0, 9.0]);
    assert_eq!(out.row(2), &[9.0, 9.0]);
}

#[test]
fn alpha_one_returns_anchor_row() {
    let prev = EmbeddingMatrix::from_rows(&[[0.0, 0.0], [1.0, 0.0]]);
    let updates = vec![
        update(0, &[(0, &[0.25, -0.5]), (1, &[3.0, 3.0])], 2),
        update(1, &[(1, &[7.0, 7.0]), (0, &[100.0, 100.0])], 2),
    ];
    let out = dist_fedavg_user(&updates, &prev, &[0, 1], 1, &fixed(1.0)).unwrap();
    assert_eq!(out.row(0), &[0.25, -0.5]);
    assert_eq!(out.row(1), &[7.0, 7.0]);
}

#[test]
fn alpha_zero_single_contributor_is_that_row() {
    let prev = EmbeddingMatrix::from_rows(&[[0.1, 0.7], [0.3, -0.2]]);
    let contributed = [0.123456789, -9.87654321];
    let updates = vec![
        update(0, &[(0, &[5.0, 5.0])], 2),
        update(1, &[(1, &[1.0, 1.0]), (0, &contributed)], 2),
    ];
    let out = dist_fedavg_user(&updates, &prev, &[0, 1], 1, &fixed(0.0)).unwrap();
    assert_eq!(out.row(0), &contributed);
}

#[test]
fn unselected_single_contributor_and_carry_forward() {
    let prev = EmbeddingMatrix::from_rows(&[[0.1, 0.7], [0.3, -0.2], [0.5, 0.5]]);
    let row = [4.5, -1.25];
    let updates = vec![update(1, &[(1, &[1.0, 1.0]), (0, &row)], 2)];
    let out = dist_fedavg_user(&updates, &prev, &[1], 1, &fixed(0.5)).unwrap();
    assert_eq!(out.row(0), &row);
    // user 2 is neither selected nor contributed to
    assert_eq!(out.row(2), prev.row(2));
}

#[test]
fn unknown_user_is_an_error() {
    let prev = EmbeddingMatrix::from_rows(&[[0.0]]);
    let updates = vec![update(0, &[(0, &[1.0]), (5, &[1.0])], 1)];
    assert!(matches!(
        dist_fedavg_user(&updates, &prev, &[0], 1, &fixed(0.5)),
        Err(Error::UnknownUser(5))
    ));
    assert!(matches!(fedavg_user(&updates, &prev), Err(Error::UnknownUser(5))));
}

#[test]
fn fedavg_user_examples() {
    let prev = EmbeddingMatrix::from_rows(&[[0.0, 0.0], [9.0, 9.0], [8.0, 8.0], [-1.0, -1.0]]);
    let updates = vec![
        update(1, &[(1, &[1.0, 1.0]), (0, &[1.0, 1.0])], 2),
        update(2, &[(2, &[6.0, 6.0]), (0, &[6.0, 6.0])], 3),
    ];
    let out = fedavg_user(&updates, &prev).unwrap();
    assert!(out.row(0).iter().all(|v| (v - 4.0).abs() < 1e-12));
    assert_eq!(out.row(1), &[1.0, 1.0]);
    assert_eq!(out.row(3), &[-1.0, -1.0]);
}

#[test]
fn baselines_on_simple_rows() {
    let prev = EmbeddingMatrix::from_rows(&[[0.0], [0.0], [0.0], [0.0]]);
    let updates = vec![
        update(1, &[(0, &[1.0])], 1),
        update(2, &[(0, &[5.0])], 1),
        update(3, &[(0, &[100.0])], 1),
    ];
    assert_eq!(fed_median_user(&updates, &prev).unwrap().row(0), &[5.0]);
    let two = vec![update(1, &[(0, &[0.0])], 1), update(2, &[(0, &[2.0])], 5)];
    assert_eq!(simple_avg_user(&two, &prev).unwrap().row(0), &[1.0]);
    assert!(fed_att_user(&two, &prev, 0.0).is_err());
}

#[test]
fn item_aggregation_examples() {
    let prev = EmbeddingMatrix::from_rows(&[[9.0, 9.0], [0.0, 0.0], [0.0, 0.0]]);
    let updates = vec![
        item_update(0, &[(1, &[0.0, 2.0], 1), (2, &[0.0, 0.0], 1)]),
        item_update(1, &[(1, &[2.0, 0.0], 3), (2, &[4.0, 4.0], 3)]),
    ];
    let avg = aggregate_items(&updates, &prev, "simpleavg").unwrap();
    assert_eq!(avg.row(1), &[1.0, 1.0]);
    let weighted = aggregate_items(&updates, &prev, "fedavg").unwrap();
    assert!(weighted.row(2).iter().all(|v| (v - 3.0).abs() < 1e-12));
    assert_eq!(weighted.row(0), &[9.0, 9.0]);

    let single = vec![item_update(0, &[(1, &[0.5, 0.25], 2)])];
    for id in ITEM_STRATEGIES {
        assert_eq!(aggregate_items(&single, &prev, id).unwrap().row(1), &[0.5, 0.25]);
    }
    assert!(matches!(
        aggregate_items(&updates, &prev, "dist-fedavg"),
        Err(Error::UnknownStrategy { .. })
    ));
}

#[test]
fn config_validation() {
    assert!(AggregationConfig::default().validate().is_ok());
    let bad = [
        AggregationConfig { p: 0.5, ..Default::default() },
        AggregationConfig { alpha_t: 0.9, alpha0: 0.5, ..Default::default() },
        AggregationConfig { z: 0, ..Default::default() },
        AggregationConfig { distance_floor: 0.0, ..Default::default() },
        AggregationConfig { user_strategy: "nope".into(), ..Default::default() },
        AggregationConfig { item_strategy: "dist-fedavg".into(), ..Default::default() },
    ];
    for c in bad {
        assert!(c.validate().is_err(), "{c:?}");
    }
}

#[test]
fn scaling_prev_leaves_dist_weights_unchanged() {
    let prev = EmbeddingMatrix::from_rows(&[[0.0, 0.0], [1.0, 2.0], [-3.0, 0.5], [0.2, 0.2]]);
    let agg = DistFedAvg::new(fixed(0.5));
    let rows = [[1.0], [2.0], [3.0]];
    let others: Vec<Contribution<'_>> = (1..4)
        .map(|j| Contribution {
            client: j,
            row: &rows[j - 1],
            weight: 1.0,
        })
        .collect();
    let base = agg.contributor_weights(0, &others, &prev);
    assert!((base.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    for c in [0.01, 3.0, 250.0] {
        let scaled = agg.contributor_weights(0, &others, &prev.scaled(c));
        for (a, b) in base.iter().zip(&scaled) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

/// Random world: up to 4 users, every user is its own client, each client holds a
/// random subset of users (always including itself).
fn world() -> impl Strategy<Value = (EmbeddingMatrix, Vec<ClientUpdate>, Vec<usize>)> {
    (1usize..=4, 1usize..=3).prop_flat_map(|(n, dim)| {
        (
            prop::collection::vec(-2.0f64..2.0, n * dim),
            prop::collection::vec(prop::collection::vec(any::<bool>(), n), n),
            prop::collection::vec(prop::collection::vec(-2.0f64..2.0, n * dim), n),
            prop::collection::vec(1usize..6, n),
            prop::collection::vec(any::<bool>(), n),
        )
            .prop_map(move |(prev, member, rows, edges, sel)| {
                let prev = EmbeddingMatrix::from_vec(n, dim, prev);
                let mut selected: Vec<usize> = (0..n).filter(|&c| sel[c]).collect();
                if selected.is_empty() {
                    selected.push(0);
                }
                let updates = selected
                    .iter()
                    .map(|&c| {
                        let mut users = vec![c];
                        users.extend((0..n).filter(|&u| u != c && member[c][u]));
                        let data: Vec<f64> = users.iter().flat_map(|&u| rows[c][u * dim..(u + 1) * dim].to_vec()).collect();
                        ClientUpdate {
                            client: c,
                            user_rows: EmbeddingMatrix::from_vec(users.len(), dim, data),
                            users,
                            items: vec![],
                            item_rows: EmbeddingMatrix::zeros(0, dim),
                            item_edge_counts: vec![],
                            train_edge_count: edges[c],
                            epoch_losses: vec![],
                        }
                    })
                    .collect();
                (prev, updates, selected)
            })
    })
}

fn all_users(cfg: &AggregationConfig, updates: &[ClientUpdate], prev: &EmbeddingMatrix, selected: &[usize]) -> Vec<EmbeddingMatrix> {
    let registry = StrategyRegistry::default();
    USER_STRATEGIES
        .iter()
        .map(|id| {
            registry
                .user(id, cfg)
                .unwrap()
                .aggregate(&UserRound {
                    updates,
                    prev,
                    selected,
                    round: 7,
                })
                .unwrap()
        })
        .collect()
}

proptest! {
    #[test]
    fn shuffling_updates_changes_nothing((prev, updates, selected) in world(), seed in any::<u64>()) {
        use rand::{seq::SliceRandom, SeedableRng};
        let cfg = fixed(0.4);
        let base = all_users(&cfg, &updates, &prev, &selected);
        let mut shuffled = updates.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let again = all_users(&cfg, &shuffled, &prev, &selected);
        prop_assert_eq!(base, again);
    }

    #[test]
    fn rows_stay_in_the_bounding_box((prev, updates, selected) in world(), alpha in 0.0f64..=1.0) {
        // per-coordinate bounds of {contributed rows, previous row} contain every convex combination
        let cfg = fixed(alpha);
        for out in all_users(&cfg, &updates, &prev, &selected) {
            for user in 0..prev.rows() {
                for k in 0..prev.dim() {
                    let mut lo = prev.row(user)[k];
                    let mut hi = lo;
                    for up in &updates {
                        if let Some(r) = up.user_row(user) {
                            lo = lo.min(r[k]);
                            hi = hi.max(r[k]);
                        }
                    }
                    let v = out.row(user)[k];
                    prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
                }
            }
        }
    }

    #[test]
    fn decay_is_monotone_and_bounded(alpha0 in 0.0f64..=1.0, frac in 0.0f64..=1.0, gamma in 0.0f64..3.0, z in 1usize..20) {
        for mode in [AlphaMode::Arithmetic, AlphaMode::Geometric] {
            let cfg = AggregationConfig { alpha_mode: mode, alpha0, alpha_t: alpha0 * frac, gamma, z, ..Default::default() };
            let mut last = f64::INFINITY;
            for r in 1..=200 {
                let a = alpha_schedule(&cfg, r);
                prop_assert!(a <= last);
                prop_assert!(a >= cfg.alpha_t);
                last = a;
            }
        }
    }
}
