mod common;

use common::*;
use cve_gnn::diagnostics::{bias_probe, finite_difference_gradient, rate_probe, StepRule};
use cve_gnn::model::{exact_loss_and_gradient, init_cache, Activation, CacheInit};
use cve_gnn::optim::OptimizerKind;
use cve_gnn::sbm::{gen_sbm, SbmParams};
use cve_gnn::{build_normalized_propagation, Dense, ModelParams, OptimizerConfig, SamplerConfig, TrainConfig, Trainer};

fn base(kind: OptimizerKind) -> TrainConfig {
    TrainConfig {
        hidden_dim: 8,
        sampler: SamplerConfig { neighbors: 2, batch_size: 10, ..Default::default() },
        optimizer: OptimizerConfig::new(kind, 0.1),
        ..Default::default()
    }
}

#[test]
fn bias_vanishes_under_full_sampling() {
    let mut r = rng(3);
    let data = random_dataset(25, 0.2, 4, 3, &mut r);
    let p = build_normalized_propagation(&data.graph);
    let params = ModelParams::glorot(&[4, 6, 3], &mut r).unwrap();
    let cache = init_cache(&p, &data.features, &params, CacheInit::Activated).unwrap();
    let sampler = SamplerConfig { neighbors: data.graph.max_degree() + 1, batch_size: 25, ..Default::default() };
    let est = bias_probe(&data, &p, &params, &cache, &sampler, 400, 1).unwrap();
    assert!(est.estimate <= 3.0 * est.stderr + 1e-12, "{est:?}");
}

#[test]
fn exact_cache_is_unbiased_with_linear_activation() {
    let mut r = rng(4);
    let data = random_dataset(20, 0.3, 3, 2, &mut r);
    let p = build_normalized_propagation(&data.graph);
    let params = ModelParams::glorot(&[3, 4, 2], &mut r).unwrap().with_activation(Activation::Identity);
    let cache = init_cache(&p, &data.features, &params, CacheInit::Activated).unwrap();
    let sampler = SamplerConfig { neighbors: 1, batch_size: 4, ..Default::default() };
    let est = bias_probe(&data, &p, &params, &cache, &sampler, 4000, 2).unwrap();
    assert!(est.estimate <= 3.0 * est.stderr + 1e-12, "{est:?}");
}

#[test]
fn bias_probe_rejects_few_samples() {
    let mut r = rng(5);
    let data = random_dataset(10, 0.3, 3, 2, &mut r);
    let p = build_normalized_propagation(&data.graph);
    let params = ModelParams::glorot(&[3, 2], &mut r).unwrap();
    let cache = init_cache(&p, &data.features, &params, CacheInit::Activated).unwrap();
    assert!(
        bias_probe(&data, &p, &params, &cache, &SamplerConfig { batch_size: 2, ..Default::default() }, 99, 0).is_err()
    );
}

#[test]
fn constant_loss_gives_zero_rate_statistic() {
    let mut data = gen_sbm(&SbmParams { nodes: 40, ..Default::default() }).unwrap();
    data.features = Dense::zeros(data.num_nodes(), data.num_features());
    for kind in [OptimizerKind::HeavyBall, OptimizerKind::AmsGrad, OptimizerKind::AdaGrad] {
        let trace = rate_probe(&data, &base(kind), kind, StepRule::InvSqrtT { eta: 1.0 }, &[4, 16], 8).unwrap();
        assert!(trace.points.iter().all(|p| p.statistic == 0.0), "{kind}: {trace:?}");
    }
}

#[test]
fn vanishing_sgd_step_keeps_the_initial_gradient() {
    let data = gen_sbm(&SbmParams { nodes: 40, ..Default::default() }).unwrap();
    let mut config = base(OptimizerKind::Sgd);
    config.optimizer.beta1 = 0.0;
    let init = Trainer::new(&data, config.clone()).unwrap();
    let (_, g) = exact_loss_and_gradient(
        &data.graph,
        init.propagation(),
        &data.features,
        init.params(),
        data.split.labels(),
        &data.split.train,
    )
    .unwrap();
    let trace = rate_probe(&data, &config, OptimizerKind::Sgd, StepRule::Constant(1e-12), &[20], 20).unwrap();
    assert_eq!(trace.points[0].evaluated, 20);
    assert!((trace.points[0].statistic - g.sq_norm()).abs() <= 1e-9 * g.sq_norm());
}

#[test]
fn rate_probe_validates_horizons() {
    let data = gen_sbm(&SbmParams { nodes: 40, ..Default::default() }).unwrap();
    let cfg = base(OptimizerKind::Adam);
    for bad in [&[][..], &[0, 4], &[8, 8], &[8, 4]] {
        assert!(rate_probe(&data, &cfg, OptimizerKind::Adam, StepRule::Constant(0.1), bad, 4).is_err(), "{bad:?}");
    }
    let t = rate_probe(&data, &cfg, OptimizerKind::Adam, StepRule::Constant(0.1), &[5, 40], 10).unwrap();
    assert_eq!((t.points[0].evaluated, t.points[1].evaluated), (5, 10));
    assert!(t.points.iter().all(|p| p.statistic.is_finite() && p.statistic >= 0.0));
}

#[test]
fn finite_differences_decay_quadratically_on_a_cubic() {
    let params = ModelParams::new(vec![Dense::from_vec(1, 2, vec![0.7, -1.3]).unwrap()]).unwrap();
    let f = |w: &ModelParams| -> cve_gnn::Result<f64> { Ok(w.weights()[0].as_slice().iter().map(|x| x.powi(3)).sum()) };
    let exact: Vec<f64> = params.weights()[0].as_slice().iter().map(|x| 3.0 * x * x).collect();
    let err = |h: f64| {
        let g = finite_difference_gradient(f, &params, h).unwrap();
        g.layers[0].as_slice().iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    };
    let ratio = err(1e-2) / err(5e-3);
    assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
}
