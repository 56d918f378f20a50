//! Numerical oracles and Monte-Carlo probes for the training algorithm:
//! central finite differences, the bias of the control-variate gradient, and
//! the decay of the mean squared gradient norm with the horizon `T`.

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::graph::SparsePropagation;
use crate::metrics::format_sig9;
use crate::model::{
    backward, exact_loss_and_gradient, forward_cve, minibatch_loss, Gradient, HistoricalCache, ModelParams,
};
use crate::optim::OptimizerKind;
use crate::sampling::{build_plan, sample_minibatch, SamplerConfig};
use crate::trainer::{TrainConfig, Trainer};

/// Central differences `(f(w + h e_j) − f(w − h e_j)) / 2h` for every
/// coordinate of `params`.
pub fn finite_difference_gradient<F>(mut f: F, params: &ModelParams, h: f64) -> Result<Gradient>
where
    F: FnMut(&ModelParams) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(Error::Config(format!("finite-difference step must be positive, got {h}")));
    }
    let mut grad = Gradient::zeros_like(params);
    let mut probe = params.clone();
    let mut flat = 0;
    for k in 0..params.num_layers() {
        for o in 0..params.weights()[k].as_slice().len() {
            let w = params.get_flat(flat);
            probe.set_flat(flat, w + h);
            let up = f(&probe)?;
            probe.set_flat(flat, w - h);
            let down = f(&probe)?;
            probe.set_flat(flat, w);
            grad.layers[k].as_mut_slice()[o] = (up - down) / (2.0 * h);
            flat += 1;
        }
    }
    Ok(grad)
}

/// Largest per-coordinate relative error `|a − b| / max(|a|, |b|, floor)`.
pub fn max_relative_error(a: &Gradient, b: &Gradient, floor: f64) -> f64 {
    a.flatten()
        .iter()
        .zip(b.flatten())
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Monte-Carlo estimate of `‖E[G] − ∇F(W)‖∞`.
#[derive(Clone, Debug, PartialEq)]
pub struct BiasEstimate {
    /// Learning rate of the run that produced the snapshot, when known.
    pub alpha: Option<f64>,
    pub samples: usize,
    /// `max_j |mean(G)_j − ∇F(W)_j|`.
    pub estimate: f64,
    /// Standard error of the mean at the maximizing coordinate.
    pub stderr: f64,
    /// Standard error of `mean(G)` for every coordinate.
    pub coord_stderr: Vec<f64>,
    /// Flat index of the maximizing coordinate.
    pub argmax: usize,
}

/// Holds `params` and `cache` fixed, draws `samples` independent
/// (minibatch, plan) pairs from `seed`, and compares the averaged
/// control-variate gradient with the exact full-batch gradient. No dropout
/// and no weight decay enter either side.
pub fn bias_probe(
    data: &Dataset,
    p: &SparsePropagation,
    params: &ModelParams,
    cache: &HistoricalCache,
    sampler: &SamplerConfig,
    samples: usize,
    seed: u64,
) -> Result<BiasEstimate> {
    if samples < 100 {
        return Err(Error::Config("bias probe needs at least 100 samples".into()));
    }
    sampler.validate(data.split.train.len())?;
    let labels = data.split.labels();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = params.num_params();
    let mut mean = vec![0.0; dim];
    let mut m2 = vec![0.0; dim];
    for i in 0..samples {
        let batch = sample_minibatch(&data.split.train, sampler.batch_size, &mut rng)?;
        let plan = build_plan(&data.graph, p, &batch, params.num_layers(), sampler, &mut rng)?;
        let trace = forward_cve(plan, p, &data.features, params, cache, None)?;
        let g = backward(&trace, labels, &batch, params, 0.0)?.flatten();
        let n = (i + 1) as f64;
        for ((mu, s), x) in mean.iter_mut().zip(m2.iter_mut()).zip(g) {
            let d = x - *mu;
            *mu += d / n;
            *s += d * (x - *mu);
        }
    }
    let (_, exact) = exact_loss_and_gradient(&data.graph, p, &data.features, params, labels, &data.split.train)?;
    let exact = exact.flatten();
    let m = samples as f64;
    let coord_stderr: Vec<f64> = m2.iter().map(|s| (s / (m - 1.0) / m).sqrt()).collect();
    let (argmax, estimate) = mean
        .iter()
        .zip(&exact)
        .map(|(a, b)| (a - b).abs())
        .enumerate()
        .fold((0, 0.0), |best, (j, d)| if d > best.1 { (j, d) } else { best });
    Ok(BiasEstimate { alpha: None, samples, estimate, stderr: coord_stderr[argmax], coord_stderr, argmax })
}

/// Trains `iterations` steps with `config` and probes the bias at the
/// resulting `(W, H̄)` snapshot.
pub fn bias_at_snapshot(
    data: &Dataset,
    config: &TrainConfig,
    iterations: usize,
    samples: usize,
    probe_seed: u64,
) -> Result<BiasEstimate> {
    let mut trainer = Trainer::new(data, config.clone())?;
    for _ in 0..iterations {
        trainer.step()?;
    }
    let mut est = bias_probe(
        data,
        trainer.propagation(),
        trainer.params(),
        trainer.cache(),
        &config.sampler,
        samples,
        probe_seed,
    )?;
    est.alpha = Some(config.optimizer.lr);
    Ok(est)
}

/// Learning-rate rule for [`rate_probe`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepRule {
    Constant(f64),
    /// `α = η / √T`.
    InvSqrtT {
        eta: f64,
    },
}

impl StepRule {
    pub fn lr(self, horizon: usize) -> f64 {
        match self {
            StepRule::Constant(a) => a,
            StepRule::InvSqrtT { eta } => eta / (horizon as f64).sqrt(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RatePoint {
    pub horizon: usize,
    pub lr: f64,
    /// Mean of exact `‖∇F(W_t)‖²` over the evaluated iterates `t ≤ T`.
    pub statistic: f64,
    pub evaluated: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RateTrace {
    pub points: Vec<RatePoint>,
}

/// For each horizon `T` in `horizons`, trains afresh (same seeds) with
/// `α = rule.lr(T)` for `T − 1` steps and averages the exact squared
/// gradient norm of the iterates `W_1, W_{1+s}, …` with stride
/// `s = max(1, T / max_evals)`.
pub fn rate_probe(
    data: &Dataset,
    base: &TrainConfig,
    kind: OptimizerKind,
    rule: StepRule,
    horizons: &[usize],
    max_evals: usize,
) -> Result<RateTrace> {
    if horizons.is_empty() || horizons.windows(2).any(|w| w[0] >= w[1]) || horizons[0] == 0 {
        return Err(Error::Config("horizons must be positive and strictly increasing".into()));
    }
    let labels = data.split.labels();
    let mut trace = RateTrace::default();
    for &horizon in horizons {
        let mut config = base.clone();
        config.optimizer.kind = kind;
        if kind == OptimizerKind::Sgd {
            config.optimizer.beta1 = 0.0;
        }
        config.optimizer.lr = rule.lr(horizon);
        let mut trainer = Trainer::new(data, config)?;
        let stride = (horizon / max_evals.max(1)).max(1);
        let (mut sum, mut evaluated) = (0.0, 0usize);
        for t in 1..=horizon {
            if (t - 1) % stride == 0 {
                let (_, g) = exact_loss_and_gradient(
                    &data.graph,
                    trainer.propagation(),
                    &data.features,
                    trainer.params(),
                    labels,
                    &data.split.train,
                )?;
                sum += g.sq_norm();
                evaluated += 1;
            }
            if t < horizon {
                trainer.step()?;
            }
        }
        trace.points.push(RatePoint { horizon, lr: rule.lr(horizon), statistic: sum / evaluated as f64, evaluated });
    }
    Ok(trace)
}

/// One row of a probe report.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeRow {
    pub probe: String,
    pub param: String,
    pub estimate: f64,
    pub stderr: f64,
    pub samples: usize,
}

pub const PROBE_HEADER: [&str; 5] = ["probe", "param", "estimate", "stderr", "samples"];

pub fn write_probe_csv<W: Write>(rows: &[ProbeRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Config(format!("writing probe report: {e}"));
    w.write_record(PROBE_HEADER).map_err(err)?;
    for r in rows {
        w.write_record([
            r.probe.clone(),
            r.param.clone(),
            format_sig9(r.estimate),
            format_sig9(r.stderr),
            r.samples.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::Config(format!("writing probe report: {e}")))
}

pub fn save_probe_csv(rows: &[ProbeRow], path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_probe_csv(rows, std::io::BufWriter::new(f))
}

/// Loss of a fixed plan as a function of the weights, for gradient checks.
pub fn fixed_plan_loss<'a>(
    data: &'a Dataset,
    p: &'a SparsePropagation,
    plan: &crate::sampling::MinibatchPlan,
    cache: &'a HistoricalCache,
    batch: &[usize],
) -> impl Fn(&ModelParams) -> Result<f64> + 'a {
    let plan = plan.clone();
    let batch = batch.to_vec();
    move |w: &ModelParams| {
        let trace = forward_cve(plan.clone(), p, &data.features, w, cache, None)?;
        minibatch_loss(&trace, data.split.labels(), &batch)
    }
}

/// Outcome of [`gradient_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub h: f64,
    /// Max relative error of backward against differences with step `h`.
    pub rel_error: f64,
    /// Same, with step `h / 2`.
    pub rel_error_half: f64,
    /// Max absolute errors at `h` and `h / 2`.
    pub abs_error: f64,
    pub abs_error_half: f64,
    pub params: usize,
}

/// Relative errors below this magnitude are measured against it instead.
pub const GRADCHECK_FLOOR: f64 = 1e-6;

/// Compares [`backward`] with central differences on one fixed sampled plan
/// at Glorot weights drawn from `seed` and a perturbed cache, so the
/// control-variate term is live. Dropout and weight decay are off.
pub fn gradient_check(
    data: &Dataset,
    layers: usize,
    hidden: usize,
    sampler: &SamplerConfig,
    h: f64,
    seed: u64,
) -> Result<GradCheck> {
    use crate::graph::build_normalized_propagation;
    use crate::model::{init_cache, CacheInit};
    use rand::Rng;

    let p = build_normalized_propagation(&data.graph);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dims = vec![data.num_features()];
    dims.extend(std::iter::repeat_n(hidden, layers - 1));
    dims.push(data.num_classes());
    let params = ModelParams::glorot(&dims, &mut rng)?;
    let mut cache = init_cache(&p, &data.features, &params, CacheInit::Activated)?;
    for k in 1..cache.num_hidden() + 1 {
        for v in cache.hidden_mut(k).as_mut_slice() {
            *v += 0.3 * (rng.random::<f64>() - 0.5);
        }
    }
    sampler.validate(data.split.train.len())?;
    let batch = sample_minibatch(&data.split.train, sampler.batch_size, &mut rng)?;
    let plan = build_plan(&data.graph, &p, &batch, layers, sampler, &mut rng)?;
    let trace = forward_cve(plan.clone(), &p, &data.features, &params, &cache, None)?;
    let analytic = backward(&trace, data.split.labels(), &batch, &params, 0.0)?;
    let loss = fixed_plan_loss(data, &p, &plan, &cache, &batch);
    let fd = finite_difference_gradient(&loss, &params, h)?;
    let fd_half = finite_difference_gradient(&loss, &params, h / 2.0)?;
    Ok(GradCheck {
        h,
        rel_error: max_relative_error(&analytic, &fd, GRADCHECK_FLOOR),
        rel_error_half: max_relative_error(&analytic, &fd_half, GRADCHECK_FLOOR),
        abs_error: analytic.max_abs_diff(&fd),
        abs_error_half: analytic.max_abs_diff(&fd_half),
        params: params.num_params(),
    })
}
