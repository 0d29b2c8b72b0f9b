mod common;

use approx::assert_relative_eq;
use nalgebra::DMatrix;
use neuronal::data;
use neuronal::data::{make_loss_vector, LossKind, SynthSpec};
use neuronal::nn::TrainSpec;
use neuronal::nn::{self, NetConfig};
use neuronal::ntk::{complexity_terms, expand_multiclass, ntk_matrix};
use neuronal::pair::{OnlineLearner, PairHyper, PredictorPair};
use neuronal::pool::{igw_distribution, run_pool_with, PoolConfig, Selector};
use neuronal::stream::{beta, decide, run_stream, Budget, StreamConfig};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn net_config() -> impl Strategy<Value = (usize, usize, usize, usize)> {
    (
        1usize..6,
        2usize..17,
        2usize..4,
        prop_oneof![Just(1usize), Just(3usize)],
    )
}

fn tiny_hyper() -> PairHyper {
    let spec = TrainSpec {
        learning_rate: 0.01,
        epochs: 1,
        batch_size: 4,
        ..TrainSpec::default()
    };
    PairHyper {
        exploit: spec,
        explore: spec,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn backward_matches_finite_differences((d, m, l, k) in net_config(), seed in any::<u64>()) {
        let cfg = NetConfig::new(d, m, l, k).unwrap();
        let params = nn::init_params(&cfg, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let x = common::unit_vector(&mut rng, d);
        let upstream = common::unit_vector(&mut rng, k);
        prop_assert!(common::gradient_relative_error(&params, &x, &upstream) < 1e-5);
    }

    #[test]
    fn network_is_positively_homogeneous((d, m, l, k) in net_config(), seed in any::<u64>(), c in 0.01f64..100.0) {
        let params = nn::init_params(&NetConfig::new(d, m, l, k).unwrap(), seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
        let x = common::unit_vector(&mut rng, d);
        let scaled: Vec<f64> = x.iter().map(|v| c * v).collect();
        let a = nn::predict(&params, &x).unwrap();
        let b = nn::predict(&params, &scaled).unwrap();
        for (ai, bi) in a.iter().zip(&b) {
            prop_assert!((c * ai - bi).abs() <= 1e-12 * (1.0 + bi.abs()));
        }
    }

    #[test]
    fn gradient_shape_matches_parameters((d, m, l, k) in net_config(), seed in any::<u64>()) {
        let params = nn::init_params(&NetConfig::new(d, m, l, k).unwrap(), seed);
        let x = vec![1.0 / (d as f64).sqrt(); d];
        let (out, cache) = nn::forward(&params, &x).unwrap();
        prop_assert_eq!(out.len(), k);
        let g = nn::backward(&params, &cache, &vec![1.0; k]).unwrap();
        prop_assert!(g.shape_matches(&params));
        prop_assert_eq!(g.to_flat().len(), params.config().num_params());
    }

    #[test]
    fn embedding_has_unit_norm_and_expected_length((d, m, l, k) in net_config(), seed in any::<u64>()) {
        let pair = PredictorPair::init(d, m, l, k, PairHyper::default(), seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 3);
        let x = common::unit_vector(&mut rng, d);
        let e = pair.embed(&x).unwrap();
        prop_assert_eq!(e.phi.len(), m + k * m);
        if e.normalized {
            prop_assert!((common::norm(&e.phi) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn score_is_sum_of_both_networks((d, m, l, k) in net_config(), seed in any::<u64>()) {
        let pair = PredictorPair::init(d, m, l, k, PairHyper::default(), seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 4);
        let x = common::unit_vector(&mut rng, d);
        let f1 = nn::predict(pair.exploit(), &x).unwrap();
        let f2 = nn::predict(pair.explore(), &pair.embed(&x).unwrap().phi).unwrap();
        let s = pair.score(&x).unwrap();
        for i in 0..k {
            prop_assert_eq!(s[i], f1[i] + f2[i]);
        }
    }

    #[test]
    fn beta_quarters_exactly(t in 1usize..1_000_000, k in 1usize..20, s in 0.1f64..10.0, horizon in 1usize..100_000, delta in 0.001f64..0.999) {
        prop_assert_eq!(beta(4 * t, k, s, horizon, delta), beta(t, k, s, horizon, delta) / 2.0);
        prop_assert!(beta(t + 1, k, s, horizon, delta) < beta(t, k, s, horizon, delta));
    }

    #[test]
    fn decide_ignores_a_common_shift(raw in prop::collection::vec(-4096i32..4096, 2..8), shift in -4096i32..4096, gamma in 1.0f64..8.0, b in 0.0f64..1.0) {
        // Dyadic scores keep the shifted arithmetic exact.
        let scores: Vec<f64> = raw.iter().map(|&v| v as f64 / 1024.0).collect();
        let shifted: Vec<f64> = scores.iter().map(|v| v + shift as f64 / 1024.0).collect();
        prop_assert_eq!(decide(&scores, gamma, b).unwrap(), decide(&shifted, gamma, b).unwrap());
    }

    #[test]
    fn igw_is_a_distribution_favouring_the_smallest_gap(gaps in prop::collection::vec(0.0f64..5.0, 2..12), extra in 0.0f64..50.0, gamma in 0.1f64..20.0) {
        let mu = gaps.len() as f64 + extra;
        let dist = igw_distribution(&gaps, mu, gamma).unwrap();
        prop_assert!((dist.probs.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(dist.probs.iter().all(|&p| p >= 0.0));
        let top = dist.probs[dist.i_hat];
        prop_assert!(dist.probs.iter().all(|&p| p <= top));
        prop_assert!(gaps.iter().all(|&w| w >= gaps[dist.i_hat]));
    }

    #[test]
    fn igw_is_scale_invariant(gaps in prop::collection::vec(0.01f64..5.0, 2..12), c in 0.01f64..100.0, gamma in 0.1f64..20.0) {
        let mu = gaps.len() as f64;
        let scaled: Vec<f64> = gaps.iter().map(|w| c * w).collect();
        let a = igw_distribution(&gaps, mu, gamma).unwrap();
        let b = igw_distribution(&scaled, mu, gamma).unwrap();
        for (pa, pb) in a.probs.iter().zip(&b.probs) {
            prop_assert!((pa - pb).abs() <= 1e-12);
        }
    }

    #[test]
    fn loss_vectors_lie_in_the_unit_cube(k in 2usize..10, label in 0usize..10) {
        let label = label % k;
        let u = make_loss_vector(label, k, &LossKind::ZeroOne).unwrap();
        prop_assert!(u.as_slice().iter().all(|&v| (0.0..=1.0).contains(&v)));
        prop_assert_eq!(u.as_slice()[label], 0.0);
    }

    #[test]
    fn normalised_rows_have_unit_norm(rows in prop::collection::vec(prop::collection::vec(-100.0f64..100.0, 3), 1..20)) {
        prop_assume!(rows.iter().all(|r| common::norm(r) > 1e-6));
        let labels = vec![0; rows.len()];
        let ds = data::Dataset::new("p", rows, labels, 2).unwrap().normalize().unwrap();
        for x in ds.inputs() {
            prop_assert!((common::norm(x) - 1.0).abs() <= 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn log_det_respects_its_lower_bound(t in 1usize..9, k in 1usize..4, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs = common::unit_vectors(&mut rng, t, 5);
        let h = expand_multiclass(&ntk_matrix(&xs, 2).unwrap(), k);
        let target: Vec<f64> = (0..t * k).map(|i| (i % 3) as f64 / 2.0).collect();
        let r = complexity_terms(&h, &target).unwrap();
        prop_assert!(r.bound_holds);
        prop_assert!(r.l_h - r.lower_bound >= -1e-9);
    }

    #[test]
    fn s_shrinks_as_the_kernel_grows(n in 1usize..7, seed in any::<u64>(), c in 0.01f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs = common::unit_vectors(&mut rng, n, 4);
        let a = DMatrix::from_fn(n, n, |i, j| xs[i].iter().zip(&xs[j]).map(|(p, q)| p * q).sum::<f64>());
        let h = &a + DMatrix::identity(n, n);
        let target: Vec<f64> = (0..n).map(|i| 1.0 - i as f64 / n as f64).collect();
        let base = complexity_terms(&h, &target).unwrap();
        let grown = complexity_terms(&(&h + DMatrix::identity(n, n) * c), &target).unwrap();
        prop_assert!(grown.s <= base.s + 1e-12);
    }

    #[test]
    fn kernel_commutes_with_permutations(n in 2usize..7, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs = common::unit_vectors(&mut rng, n, 4);
        let perm: Vec<usize> = (0..n).map(|i| (i * 5 + 3) % n).collect();
        prop_assume!({ let mut p = perm.clone(); p.sort(); p.dedup(); p.len() == n });
        let permuted: Vec<Vec<f64>> = perm.iter().map(|&i| xs[i].clone()).collect();
        let h = ntk_matrix(&xs, 2).unwrap();
        let hp = ntk_matrix(&permuted, 2).unwrap();
        for i in 0..n {
            for j in 0..n {
                prop_assert!((hp[(i, j)] - h[(perm[i], perm[j])]).abs() <= 1e-12);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn stream_respects_its_budget(seed in any::<u64>(), budget in 0usize..20, gamma in 1.01f64..4.0) {
        let n = 60;
        let ds = data::synth(&SynthSpec::hard(4, 3, n, 0.2, seed)).unwrap().dataset;
        let mut cfg = StreamConfig::new(n, 3);
        cfg.budget = Budget::Count(budget);
        cfg.gamma = gamma;
        let learner = OnlineLearner::new(PredictorPair::init(4, 6, 2, 3, tiny_hyper(), seed).unwrap(), 4);
        let out = run_stream(&cfg, &ds, learner, seed).unwrap();
        prop_assert!(out.queries <= budget);
        let wrong = out.rounds.iter().filter(|r| r.k_hat != ds.y(r.t - 1)).count() as u32;
        prop_assert_eq!(out.cumulative_regret(), wrong);
        for w in out.regret_curve.windows(2) {
            prop_assert!(w[1] - w[0] <= 1);
        }
    }

    #[test]
    fn pool_never_queries_a_row_twice(seed in any::<u64>(), uniform in any::<bool>()) {
        let ds = data::synth(&SynthSpec::hard(4, 2, 40, 0.2, seed)).unwrap().dataset;
        let learner = OnlineLearner::new(PredictorPair::init(4, 6, 2, 2, tiny_hyper(), seed).unwrap(), 4);
        let selector = if uniform { Selector::Uniform } else { Selector::InverseGap };
        let cfg = PoolConfig::new(8, 6, 6.0, 2.0);
        let out = run_pool_with(&cfg, &ds, learner, selector, &LossKind::ZeroOne, None, seed).unwrap();
        let mut rows: Vec<usize> = out.selections.iter().map(|s| s.selected).collect();
        let total = rows.len();
        rows.sort();
        rows.dedup();
        prop_assert_eq!(rows.len(), total);
        prop_assert_eq!(total, 8);
    }
}

#[test]
fn igw_hand_case_is_exact() {
    let d = igw_distribution(&[0.1, 0.3, 0.7], 4.0, 2.0).unwrap();
    assert_relative_eq!(d.probs[0], 0.8125, max_relative = 1e-15);
    assert_relative_eq!(d.probs[1], 0.125, max_relative = 1e-15);
    assert_relative_eq!(d.probs[2], 0.0625, max_relative = 1e-15);
}
