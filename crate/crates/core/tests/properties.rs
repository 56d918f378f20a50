mod common;

use common::*;
use cve_gnn::model::{
    backward, exact_loss_and_gradient, forward_cve, forward_exact, init_cache, minibatch_loss, update_cache, CacheInit,
    Gradient, HistoricalCache,
};
use cve_gnn::optim::{step, OptimizerConfig, OptimizerKind, OptimizerState};
use cve_gnn::sampling::{build_plan, sample_minibatch, sample_neighbors, sampling_pool, SamplerConfig, SamplingMode};
use cve_gnn::{build_normalized_propagation, Dense, Graph, ModelParams};
use proptest::prelude::*;
use rand::Rng;

fn arb_graph(max_nodes: usize) -> impl Strategy<Value = Graph> {
    (1..=max_nodes, 0.0f64..0.3, any::<u64>()).prop_map(|(n, p, seed)| random_graph(n, p, &mut rng(seed)))
}

fn scalar_params(w: f64) -> ModelParams {
    ModelParams::new(vec![Dense::from_vec(1, 1, vec![w]).unwrap()]).unwrap()
}

fn grad_of(values: &[f64], rows: usize, cols: usize) -> Gradient {
    Gradient { layers: vec![Dense::from_vec(rows, cols, values.to_vec()).unwrap()] }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn graph_is_symmetric_without_duplicates(g in arb_graph(200)) {
        for v in 0..g.num_nodes() {
            let nb = g.neighbors(v);
            prop_assert!(nb.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(!nb.contains(&v));
            for &u in nb {
                prop_assert!(u < g.num_nodes());
                prop_assert!(g.neighbors(u).contains(&v));
            }
        }
    }

    #[test]
    fn propagation_is_symmetric_with_graph_support(g in arb_graph(200)) {
        let p = build_normalized_propagation(&g);
        let c = p.csr();
        for v in 0..g.num_nodes() {
            let pool = sampling_pool(&g, v);
            prop_assert_eq!(c.row_indices(v), &pool[..]);
            let mut sum = 0.0;
            for (u, x) in c.row(v) {
                prop_assert!(x > 0.0 && x <= 1.0);
                prop_assert!((x - c.get(u, v)).abs() <= 1e-12);
                sum += x;
            }
            let want: f64 = pool.iter().map(|&u| 1.0 / (((g.degree(v) + 1) * (g.degree(u) + 1)) as f64).sqrt()).sum();
            prop_assert!((sum - want).abs() < 1e-12);
        }
    }

    #[test]
    fn regular_graph_rows_sum_to_one(n in 3usize..60, chords in 1usize..4) {
        // Circulant graph: each node joined to its `chords` nearest neighbours on each side.
        let chords = chords.min((n - 1) / 2);
        prop_assume!(chords >= 1);
        let mut edges = vec![];
        for v in 0..n {
            for s in 1..=chords {
                edges.push((v, (v + s) % n));
            }
        }
        let g = Graph::from_edges(n, &edges).unwrap();
        let p = build_normalized_propagation(&g);
        for v in 0..n {
            prop_assert_eq!(g.degree(v), 2 * chords);
            let s: f64 = p.csr().row_values(v).iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12, "row {} sums to {}", v, s);
        }
    }

    #[test]
    fn sample_sizes_follow_the_mode(g in arb_graph(40), d in 1usize..6, seed in any::<u64>()) {
        let mut r = rng(seed);
        for v in 0..g.num_nodes() {
            let pool = sampling_pool(&g, v);
            let wo = sample_neighbors(&g, v, d, SamplingMode::WithoutReplacement, &mut r);
            prop_assert_eq!(wo.len(), d.min(pool.len()));
            let wr = sample_neighbors(&g, v, d, SamplingMode::WithReplacementDedup, &mut r);
            prop_assert!(!wr.is_empty() && wr.len() <= d.min(pool.len()));
            for s in [&wo, &wr] {
                prop_assert!(s.windows(2).all(|w| w[0] < w[1]));
                prop_assert!(s.iter().all(|u| pool.contains(u)));
            }
        }
    }

    #[test]
    fn plans_are_nested_scaled_and_reproducible(
        g in arb_graph(40),
        d in 1usize..5,
        layers in 1usize..4,
        batch in 1usize..6,
        seed in any::<u64>(),
        with_replacement in any::<bool>(),
    ) {
        let p = build_normalized_propagation(&g);
        let mode = if with_replacement { SamplingMode::WithReplacementDedup } else { SamplingMode::WithoutReplacement };
        let config = SamplerConfig { neighbors: d, batch_size: batch, mode, ..Default::default() };
        let train: Vec<usize> = (0..g.num_nodes()).collect();
        let mut r = rng(seed);
        let mb = sample_minibatch(&train, batch, &mut r).unwrap();
        let state = r.clone();
        let plan = build_plan(&g, &p, &mb, layers, &config, &mut r).unwrap();
        let again = build_plan(&g, &p, &mb, layers, &config, &mut state.clone()).unwrap();
        prop_assert_eq!(&plan, &again);

        let mut distinct = mb.clone();
        distinct.sort_unstable();
        distinct.dedup();
        let mut out = plan.output_nodes().to_vec();
        out.sort_unstable();
        prop_assert_eq!(out, distinct);
        for k in 0..layers {
            let upper = plan.field(k + 1);
            let lower = plan.field(k);
            prop_assert_eq!(&lower[..upper.len()], upper);
            for &v in upper {
                let row = plan.global_row(k, v).unwrap();
                let s = row.len() as f64;
                let pool = (g.degree(v) + 1) as f64;
                for (u, x) in row {
                    prop_assert!(lower.contains(&u));
                    prop_assert!(g.has_edge(u, v) || u == v);
                    prop_assert!((x - pool / s * p.csr().get(v, u)).abs() <= 1e-15);
                }
            }
        }
    }

    #[test]
    fn full_sampling_rows_are_p_rows(g in arb_graph(40), layers in 1usize..4, seed in any::<u64>()) {
        let p = build_normalized_propagation(&g);
        let config = SamplerConfig { neighbors: g.max_degree() + 1, batch_size: 1, ..Default::default() };
        let mut r = rng(seed);
        let v = r.random_range(0..g.num_nodes());
        let plan = build_plan(&g, &p, &[v], layers, &config, &mut r).unwrap();
        for k in 0..layers {
            for &u in plan.field(k + 1) {
                let want: Vec<(usize, f64)> = p.csr().row(u).collect();
                prop_assert_eq!(plan.global_row(k, u).unwrap(), want);
            }
        }
    }

    #[test]
    fn full_sampling_cve_equals_exact_for_any_cache(seed in any::<u64>(), n in 2usize..16, layers in 1usize..4) {
        let mut r = rng(seed);
        let ds = random_dataset(n, 0.3, 3, 3, &mut r);
        let p = build_normalized_propagation(&ds.graph);
        let mut dims = vec![3];
        dims.extend(std::iter::repeat_n(4, layers - 1));
        dims.push(3);
        let params = ModelParams::glorot(&dims, &mut r).unwrap();
        let cache = HistoricalCache::from_hidden((1..layers).map(|_| random_dense(n, 4, &mut r)).collect());
        let config = SamplerConfig { neighbors: ds.graph.max_degree() + 1, batch_size: 3.min(n), ..Default::default() };
        let mb = sample_minibatch(&ds.split.train, config.batch_size, &mut r).unwrap();
        let plan = build_plan(&ds.graph, &p, &mb, layers, &config, &mut r).unwrap();
        let out = plan.output_nodes().to_vec();
        let trace = forward_cve(plan, &p, &ds.features, &params, &cache, None).unwrap();
        let exact = forward_exact(&p, &ds.features, &params, &out).unwrap();
        prop_assert!(trace.probs().max_abs_diff(&exact) <= 1e-12);
        for i in 0..exact.rows() {
            prop_assert!((trace.probs().row(i).iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
        prop_assert!(minibatch_loss(&trace, ds.split.labels(), &mb).unwrap() >= 0.0);
    }

    #[test]
    fn backward_is_finite_and_cache_update_idempotent(seed in any::<u64>(), n in 2usize..25, scale in 0.1f64..20.0) {
        let mut r = rng(seed);
        let mut ds = random_dataset(n, 0.25, 4, 3, &mut r);
        ds.features.scale(scale);
        let p = build_normalized_propagation(&ds.graph);
        let params = ModelParams::glorot(&[4, 5, 5, 3], &mut r).unwrap();
        let mut cache = init_cache(&p, &ds.features, &params, CacheInit::Activated).unwrap();
        let config = SamplerConfig { neighbors: 2, batch_size: 2.min(n), ..Default::default() };
        let mb = sample_minibatch(&ds.split.train, config.batch_size, &mut r).unwrap();
        let plan = build_plan(&ds.graph, &p, &mb, 3, &config, &mut r).unwrap();
        let trace = forward_cve(plan, &p, &ds.features, &params, &cache, None).unwrap();
        let g = backward(&trace, ds.split.labels(), &mb, &params, 1e-3).unwrap();
        prop_assert!(g.is_finite());
        update_cache(&mut cache, &trace);
        let once = cache.clone();
        update_cache(&mut cache, &trace);
        prop_assert_eq!(cache, once);
        let (_, eg) = exact_loss_and_gradient(&ds.graph, &p, &ds.features, &params, ds.split.labels(), &ds.split.train).unwrap();
        prop_assert!(eg.is_finite());
    }

    #[test]
    fn amsgrad_second_moment_never_decreases(gs in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 6), 1..40)) {
        let mut params = ModelParams::zeros(&[2, 3]).unwrap();
        let config = OptimizerConfig::new(OptimizerKind::AmsGrad, 0.01);
        let mut state = OptimizerState::new(OptimizerKind::AmsGrad, &params);
        let mut prev = state.v.clone();
        for g in &gs {
            step(&mut state, &mut params, &grad_of(g, 2, 3), &config).unwrap();
            for (a, b) in state.v[0].as_slice().iter().zip(prev[0].as_slice()) {
                prop_assert!(a >= b);
            }
            prev = state.v.clone();
        }
    }

    #[test]
    fn heavy_ball_momentum_is_a_discounted_sum(gs in prop::collection::vec(-5.0f64..5.0, 10), beta1 in 0.0f64..0.99) {
        let mut params = scalar_params(0.0);
        let mut config = OptimizerConfig::new(OptimizerKind::HeavyBall, 0.1);
        config.beta1 = beta1;
        let mut state = OptimizerState::new(OptimizerKind::HeavyBall, &params);
        for t in 0..gs.len() {
            step(&mut state, &mut params, &grad_of(&gs[t..=t], 1, 1), &config).unwrap();
            let direct: f64 = (0..=t).map(|i| (1.0 - beta1) * beta1.powi((t - i) as i32) * gs[i]).sum();
            prop_assert!((state.m[0].get(0, 0) - direct).abs() <= 1e-12);
            prop_assert_eq!(state.v[0].get(0, 0), 1.0);
        }
    }

    #[test]
    fn adagrad_statistic_is_mean_square(gs in prop::collection::vec(-5.0f64..5.0, 1..30)) {
        let mut params = scalar_params(1.0);
        let config = OptimizerConfig::new(OptimizerKind::AdaGrad, 0.1);
        let mut state = OptimizerState::new(OptimizerKind::AdaGrad, &params);
        for t in 0..gs.len() {
            step(&mut state, &mut params, &grad_of(&gs[t..=t], 1, 1), &config).unwrap();
            let mean = gs[..=t].iter().map(|g| g * g).sum::<f64>() / (t + 1) as f64;
            prop_assert!((state.v[0].get(0, 0) - mean).abs() <= 1e-12);
        }
    }

    #[test]
    fn bounded_gradients_give_bounded_momentum(
        gs in prop::collection::vec(prop::collection::vec(-100.0f64..100.0, 4), 1..30),
        c in 0.1f64..10.0,
        kind in prop::sample::select(OptimizerKind::ALL.to_vec()),
    ) {
        let mut params = ModelParams::zeros(&[2, 2]).unwrap();
        let config = OptimizerConfig::new(kind, 0.01);
        let mut state = OptimizerState::new(kind, &params);
        for g in &gs {
            let clipped: Vec<f64> = g.iter().map(|x| x.clamp(-c, c)).collect();
            step(&mut state, &mut params, &grad_of(&clipped, 2, 2), &config).unwrap();
            prop_assert!(state.m[0].max_abs() <= c);
        }
    }

    #[test]
    fn sgd_is_plain_gradient_descent(w0 in prop::collection::vec(-3.0f64..3.0, 4), gs in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 4), 1..10), lr in 1e-4f64..1.0) {
        let mut params = ModelParams::new(vec![Dense::from_vec(2, 2, w0.clone()).unwrap()]).unwrap();
        let config = OptimizerConfig::new(OptimizerKind::Sgd, lr);
        let mut state = OptimizerState::new(OptimizerKind::Sgd, &params);
        let mut want = w0;
        for g in &gs {
            step(&mut state, &mut params, &grad_of(g, 2, 2), &config).unwrap();
            for (w, gi) in want.iter_mut().zip(g) {
                *w -= lr * gi;
            }
            prop_assert_eq!(params.weights()[0].as_slice(), &want[..]);
        }
    }
}
