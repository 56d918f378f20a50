//! The training loop: minibatch and neighbor sampling, control-variate
//! forward/backward, optimizer step and cache refresh, with periodic exact
//! evaluation.

use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::Dataset;
use crate::dense::Dense;
use crate::error::{Error, Result};
use crate::graph::{build_normalized_propagation, SparsePropagation};
use crate::metrics::{EpochRecord, RunMetrics};
use crate::model::{
    self, backward, exact_logits, forward_cve, init_cache, minibatch_loss, update_cache, CacheInit, Gradient,
    HistoricalCache, ModelParams,
};
use crate::optim::{self, OptimizerConfig, OptimizerKind, OptimizerState};
use crate::sampling::{build_plan, sample_minibatch, SamplerConfig};

// Independent ChaCha streams derived from one run seed.
const STREAM_INIT: u64 = 0;
const STREAM_DROPOUT: u64 = 2;
const STREAM_OUTPUT: u64 = 3;

/// Which iterate [`train`] returns.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum OutputIterate {
    #[default]
    Last,
    /// `W_τ` with τ uniform over `{1, …, T}`.
    UniformRandom,
}

impl OutputIterate {
    pub fn as_str(self) -> &'static str {
        match self {
            OutputIterate::Last => "last",
            OutputIterate::UniformRandom => "uniform-random",
        }
    }
}

impl FromStr for OutputIterate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "last" => Ok(OutputIterate::Last),
            "uniform-random" => Ok(OutputIterate::UniformRandom),
            other => Err(Error::Config(format!("unknown output iterate policy {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Number of GCN layers `K`.
    pub layers: usize,
    pub hidden_dim: usize,
    pub dropout: f64,
    pub sampler: SamplerConfig,
    pub optimizer: OptimizerConfig,
    /// Seeds weight initialization, dropout and the output iterate. The
    /// sampling stream is seeded by `sampler.seed`.
    pub seed: u64,
    /// Evaluate every this many epochs.
    pub eval_every: usize,
    pub output_iterate: OutputIterate,
    pub cache_init: CacheInit,
    /// Record wall-clock seconds in the metrics; off gives byte-identical
    /// CSVs across runs.
    pub record_wall_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            layers: 2,
            hidden_dim: 32,
            dropout: 0.0,
            sampler: SamplerConfig::default(),
            optimizer: OptimizerConfig::new(OptimizerKind::Adam, 0.01),
            seed: 0,
            eval_every: 1,
            output_iterate: OutputIterate::Last,
            cache_init: CacheInit::Activated,
            record_wall_time: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, train_len: usize) -> Result<()> {
        if self.layers == 0 {
            return Err(Error::Config("layers must be at least 1".into()));
        }
        if self.hidden_dim == 0 {
            return Err(Error::Config("hidden dimension must be at least 1".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval-every must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        self.sampler.validate(train_len)?;
        self.optimizer.validate()
    }

    /// `d_0, …, d_K` for a dataset with the given feature and class counts.
    pub fn layer_dims(&self, features: usize, classes: usize) -> Vec<usize> {
        let mut dims = vec![features];
        dims.extend(std::iter::repeat_n(self.hidden_dim, self.layers - 1));
        dims.push(classes);
        dims
    }

    /// `⌈|train| / batch⌉`.
    pub fn iterations_per_epoch(&self, train_len: usize) -> usize {
        train_len.div_ceil(self.sampler.batch_size)
    }
}

/// Loss and squared gradient norm of one optimizer step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepStats {
    pub loss: f64,
    pub grad_sq_norm: f64,
}

/// Algorithm state that survives between iterations.
pub struct Trainer<'a> {
    data: &'a Dataset,
    p: SparsePropagation,
    config: TrainConfig,
    params: ModelParams,
    cache: HistoricalCache,
    opt: OptimizerState,
    sample_rng: ChaCha8Rng,
    dropout_rng: ChaCha8Rng,
    iteration: usize,
}

impl<'a> Trainer<'a> {
    /// Glorot-initialized trainer.
    pub fn new(data: &'a Dataset, config: TrainConfig) -> Result<Self> {
        config.validate(data.split.train.len())?;
        let mut init_rng = stream(config.seed, STREAM_INIT);
        let dims = config.layer_dims(data.num_features(), data.num_classes());
        let params = ModelParams::glorot(&dims, &mut init_rng)?;
        Self::with_params(data, config, params)
    }

    pub fn with_params(data: &'a Dataset, config: TrainConfig, params: ModelParams) -> Result<Self> {
        config.validate(data.split.train.len())?;
        let dims = config.layer_dims(data.num_features(), data.num_classes());
        if params.dims() != dims {
            return Err(Error::Dimension(format!("parameters have dims {:?}, config implies {dims:?}", params.dims())));
        }
        let p = build_normalized_propagation(&data.graph);
        let cache = init_cache(&p, &data.features, &params, config.cache_init)?;
        let opt = OptimizerState::new(config.optimizer.kind, &params);
        Ok(Self {
            data,
            p,
            sample_rng: ChaCha8Rng::seed_from_u64(config.sampler.seed),
            dropout_rng: stream(config.seed, STREAM_DROPOUT),
            config,
            params,
            cache,
            opt,
            iteration: 0,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn cache(&self) -> &HistoricalCache {
        &self.cache
    }

    pub fn propagation(&self) -> &SparsePropagation {
        &self.p
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn optimizer_state(&self) -> &OptimizerState {
        &self.opt
    }

    /// Optimizer steps taken so far.
    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// Minibatch gradient at the current iterate (with weight decay, with
    /// dropout) without changing any state except the RNG streams.
    fn sampled_gradient(&mut self) -> Result<(f64, Gradient, crate::model::ForwardTrace)> {
        let d = self.data;
        let batch = sample_minibatch(&d.split.train, self.config.sampler.batch_size, &mut self.sample_rng)?;
        let plan = build_plan(
            &d.graph,
            &self.p,
            &batch,
            self.params.num_layers(),
            &self.config.sampler,
            &mut self.sample_rng,
        )?;
        let dropout = (self.config.dropout > 0.0)
            .then_some((self.config.dropout, &mut self.dropout_rng as &mut dyn rand::RngCore));
        let trace = forward_cve(plan, &self.p, &d.features, &self.params, &self.cache, dropout)?;
        let loss = minibatch_loss(&trace, d.split.labels(), &batch)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { iteration: self.iteration + 1 });
        }
        let grad = backward(&trace, d.split.labels(), &batch, &self.params, self.config.optimizer.weight_decay)?;
        Ok((loss, grad, trace))
    }

    /// One iteration: sample, forward, loss, backward, optimizer step, cache
    /// update.
    pub fn step(&mut self) -> Result<StepStats> {
        let (loss, grad, trace) = self.sampled_gradient()?;
        let grad_sq_norm = grad.sq_norm();
        optim::step(&mut self.opt, &mut self.params, &grad, &self.config.optimizer)?;
        update_cache(&mut self.cache, &trace);
        self.iteration += 1;
        Ok(StepStats { loss, grad_sq_norm })
    }

    /// Accuracies on train, val and test under exact propagation.
    pub fn evaluate_splits(&self) -> Result<[f64; 3]> {
        evaluate_splits(&self.p, self.data, &self.params)
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn accuracy_from_logits(logits: &Dense, nodes: &[usize], labels: &[Option<usize>]) -> Result<f64> {
    if nodes.is_empty() {
        return Err(Error::EmptyNodeSet);
    }
    let mut correct = 0usize;
    for &v in nodes {
        let y = labels.get(v).copied().flatten().ok_or_else(|| Error::Dataset(format!("node {v} has no label")))?;
        if argmax(logits.row(v)) == y {
            correct += 1;
        }
    }
    Ok(correct as f64 / nodes.len() as f64)
}

/// Fraction of `nodes` whose exact-propagation argmax class equals its label.
pub fn evaluate(
    p: &SparsePropagation,
    x: &Dense,
    params: &ModelParams,
    nodes: &[usize],
    labels: &[Option<usize>],
) -> Result<f64> {
    if nodes.is_empty() {
        return Err(Error::EmptyNodeSet);
    }
    let logits = exact_logits(p, x, params)?;
    accuracy_from_logits(&logits, nodes, labels)
}

/// Train/val/test accuracies from one exact pass. Empty splits report 0.
pub fn evaluate_splits(p: &SparsePropagation, data: &Dataset, params: &ModelParams) -> Result<[f64; 3]> {
    let logits = exact_logits(p, &data.features, params)?;
    let labels = data.split.labels();
    let acc = |nodes: &[usize]| -> Result<f64> {
        if nodes.is_empty() {
            Ok(0.0)
        } else {
            accuracy_from_logits(&logits, nodes, labels)
        }
    };
    Ok([acc(&data.split.train)?, acc(&data.split.val)?, acc(&data.split.test)?])
}

/// Runs `epochs · ⌈|train|/batch⌉` iterations, evaluating after epoch 0 and
/// every `eval_every` epochs. Returns the iterate chosen by the output
/// policy together with the metrics.
pub fn train(data: &Dataset, config: &TrainConfig) -> Result<(ModelParams, RunMetrics)> {
    let start = Instant::now();
    let mut trainer = Trainer::new(data, config.clone())?;
    let per_epoch = config.iterations_per_epoch(data.split.train.len());
    let total = per_epoch * config.epochs;

    // τ ∈ {1, …, T} where W₁ is the initialization and T = total + 1.
    let tau = match config.output_iterate {
        OutputIterate::Last => total + 1,
        OutputIterate::UniformRandom => stream(config.seed, STREAM_OUTPUT).random_range(1..=total + 1),
    };
    let mut chosen = (tau == 1).then(|| trainer.params().clone());

    let wall = |start: &Instant| if config.record_wall_time { start.elapsed().as_secs_f64() } else { 0.0 };
    let mut metrics = RunMetrics::default();
    let (loss0, grad0) = model::exact_loss_and_gradient(
        &data.graph,
        trainer.propagation(),
        &data.features,
        trainer.params(),
        data.split.labels(),
        &data.split.train,
    )?;
    let [tr, va, te] = trainer.evaluate_splits()?;
    metrics.records.push(EpochRecord {
        epoch: 0,
        iter: 0,
        train_acc: tr,
        val_acc: va,
        test_acc: te,
        loss: loss0,
        grad_sq_norm: grad0.sq_norm(),
        wall_s: wall(&start),
    });

    let (mut loss_sum, mut gsq_sum, mut count) = (0.0, 0.0, 0usize);
    for epoch in 1..=config.epochs {
        for _ in 0..per_epoch {
            let stats = trainer.step()?;
            loss_sum += stats.loss;
            gsq_sum += stats.grad_sq_norm;
            count += 1;
            if trainer.iteration() + 1 == tau {
                chosen = Some(trainer.params().clone());
            }
        }
        if epoch % config.eval_every == 0 {
            let [tr, va, te] = trainer.evaluate_splits()?;
            metrics.records.push(EpochRecord {
                epoch,
                iter: trainer.iteration(),
                train_acc: tr,
                val_acc: va,
                test_acc: te,
                loss: loss_sum / count as f64,
                grad_sq_norm: gsq_sum / count as f64,
                wall_s: wall(&start),
            });
            (loss_sum, gsq_sum, count) = (0.0, 0.0, 0);
        }
    }
    let params = chosen.unwrap_or_else(|| trainer.params().clone());
    Ok((params, metrics))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[0.25, 0.25, 0.25, 0.25]), 0);
        assert_eq!(argmax(&[0.1, 0.5, 0.5]), 1);
        assert_eq!(argmax(&[-1.0, -2.0]), 0);
    }

    #[test]
    fn layer_dims_and_iterations() {
        let cfg = TrainConfig { layers: 3, hidden_dim: 16, ..Default::default() };
        assert_eq!(cfg.layer_dims(10, 4), vec![10, 16, 16, 4]);
        let cfg = TrainConfig { sampler: SamplerConfig { batch_size: 50, ..Default::default() }, ..cfg };
        assert_eq!(cfg.iterations_per_epoch(140), 3);
        assert_eq!(cfg.iterations_per_epoch(150), 3);
    }

    #[test]
    fn config_rejects_bad_dropout() {
        let cfg = TrainConfig { dropout: 1.0, ..Default::default() };
        assert!(cfg.validate(100).is_err());
        assert!(TrainConfig::default().validate(100).is_ok());
    }
}
