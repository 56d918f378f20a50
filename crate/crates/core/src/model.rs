//! GCN forward passes, loss and hand-written reverse-mode gradients.
//!
//! The training path evaluates each layer as
//! `Z⁽ᵏ⁺¹⁾ = (P̂⁽ᵏ⁾ (H⁽ᵏ⁾ − H̄⁽ᵏ⁾) + P H̄⁽ᵏ⁾) W⁽ᵏ⁾` on the plan's receptive
//! fields only, where `H̄` is the historical activation cache. Gradients treat
//! the cache as a constant and flow only through the sampled `P̂` path.

use std::collections::HashMap;
use std::str::FromStr;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Uniform};

use crate::dense::Dense;
use crate::error::{Error, Result};
use crate::graph::{Graph, SparsePropagation};
use crate::sampling::{build_full_plan, MinibatchPlan};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Activation {
    #[default]
    Relu,
    /// σ(z) = z. Only meant for diagnostics where the model must be linear.
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Weight matrices `W⁽⁰⁾ … W⁽ᴷ⁻¹⁾`, `W⁽ᵏ⁾` of shape `d_k × d_{k+1}`. GCN layers
/// carry no bias.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    weights: Vec<Dense>,
    activation: Activation,
}

impl ModelParams {
    pub fn new(weights: Vec<Dense>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Dimension("a model needs at least one layer".into()));
        }
        for (k, w) in weights.windows(2).enumerate() {
            if w[0].cols() != w[1].rows() {
                return Err(Error::Dimension(format!(
                    "layer {k} outputs {} columns but layer {} expects {}",
                    w[0].cols(),
                    k + 1,
                    w[1].rows()
                )));
            }
        }
        Ok(Self { weights, activation: Activation::Relu })
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Dimension("need at least input and output dimensions".into()));
        }
        Self::new(dims.windows(2).map(|d| Dense::zeros(d[0], d[1])).collect())
    }

    /// Glorot-uniform initialization: entries of `W⁽ᵏ⁾` drawn from
    /// `U(−a, a)` with `a = √(6 / (d_k + d_{k+1}))`.
    pub fn glorot<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<Self> {
        let mut params = Self::zeros(dims)?;
        for w in &mut params.weights {
            let a = (6.0 / (w.rows() + w.cols()) as f64).sqrt();
            let dist = Uniform::new_inclusive(-a, a).expect("finite bound");
            for v in w.as_mut_slice() {
                *v = dist.sample(rng);
            }
        }
        Ok(params)
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    /// Number of layers `K`.
    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    /// `d_0, …, d_K`.
    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.weights[0].rows()];
        d.extend(self.weights.iter().map(Dense::cols));
        d
    }

    pub fn num_classes(&self) -> usize {
        self.weights[self.weights.len() - 1].cols()
    }

    pub fn weights(&self) -> &[Dense] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [Dense] {
        &mut self.weights
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.as_slice().len()).sum()
    }

    /// Locates flat coordinate `i` as `(layer, offset)`.
    fn locate(&self, mut i: usize) -> (usize, usize) {
        for (k, w) in self.weights.iter().enumerate() {
            let len = w.as_slice().len();
            if i < len {
                return (k, i);
            }
            i -= len;
        }
        panic!("flat parameter index out of range");
    }

    pub fn get_flat(&self, i: usize) -> f64 {
        let (k, o) = self.locate(i);
        self.weights[k].as_slice()[o]
    }

    pub fn set_flat(&mut self, i: usize, v: f64) {
        let (k, o) = self.locate(i);
        self.weights[k].as_mut_slice()[o] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(Dense::is_finite)
    }
}

/// One matrix per weight matrix, same shapes.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    pub layers: Vec<Dense>,
}

impl Gradient {
    pub fn zeros_like(params: &ModelParams) -> Self {
        Self { layers: params.weights().iter().map(|w| Dense::zeros(w.rows(), w.cols())).collect() }
    }

    pub fn sq_norm(&self) -> f64 {
        self.layers.iter().map(Dense::sq_norm).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.layers.iter().map(Dense::max_abs).fold(0.0, f64::max)
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|m| m.as_slice().iter().copied()).collect()
    }

    pub fn max_abs_diff(&self, other: &Gradient) -> f64 {
        self.layers.iter().zip(&other.layers).map(|(a, b)| a.max_abs_diff(b)).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(Dense::is_finite)
    }
}

/// How [`init_cache`] fills the hidden layers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CacheInit {
    /// `H̄⁽ᵏ⁾ = σ(P H̄⁽ᵏ⁻¹⁾ W⁽ᵏ⁻¹⁾)`, the exact activations of the initial model.
    #[default]
    Activated,
    /// `H̄⁽ᵏ⁾ = P H̄⁽ᵏ⁻¹⁾ W⁽ᵏ⁻¹⁾` without the nonlinearity.
    Linear,
}

impl CacheInit {
    pub fn as_str(self) -> &'static str {
        match self {
            CacheInit::Activated => "activated",
            CacheInit::Linear => "linear",
        }
    }
}

impl FromStr for CacheInit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "activated" => Ok(CacheInit::Activated),
            "linear" => Ok(CacheInit::Linear),
            other => Err(Error::Config(format!("unknown cache init {other:?}"))),
        }
    }
}

/// Historical activations `H̄⁽ᵏ⁾` for the hidden layers `k = 1..K−1`, each
/// `n × d_k`. Layer 0 is the feature matrix itself and is never stored.
#[derive(Clone, Debug, PartialEq)]
pub struct HistoricalCache {
    hidden: Vec<Dense>,
}

impl HistoricalCache {
    pub fn from_hidden(hidden: Vec<Dense>) -> Self {
        Self { hidden }
    }

    /// Cache for a `layers`-layer model with every hidden row zero.
    pub fn zeros(n: usize, dims: &[usize]) -> Self {
        Self { hidden: dims[1..dims.len() - 1].iter().map(|&d| Dense::zeros(n, d)).collect() }
    }

    /// `H̄⁽ᵏ⁾` for `k ≥ 1`.
    pub fn hidden(&self, k: usize) -> &Dense {
        &self.hidden[k - 1]
    }

    pub fn hidden_mut(&mut self, k: usize) -> &mut Dense {
        &mut self.hidden[k - 1]
    }

    pub fn num_hidden(&self) -> usize {
        self.hidden.len()
    }

    fn check(&self, n: usize, params: &ModelParams) -> Result<()> {
        let dims = params.dims();
        if self.hidden.len() + 1 != params.num_layers() {
            return Err(Error::CacheInvalid(format!(
                "{} hidden layers cached for a {}-layer model",
                self.hidden.len(),
                params.num_layers()
            )));
        }
        for (i, h) in self.hidden.iter().enumerate() {
            if h.shape() != (n, dims[i + 1]) {
                return Err(Error::CacheInvalid(format!(
                    "layer {} is {}x{}, expected {n}x{}",
                    i + 1,
                    h.rows(),
                    h.cols(),
                    dims[i + 1]
                )));
            }
        }
        Ok(())
    }
}

/// Inverted-dropout keep mask; survivors are scaled by `1 / (1 − rate)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DropoutMask {
    keep: Vec<bool>,
    scale: f64,
}

impl DropoutMask {
    pub fn ones(len: usize) -> Self {
        Self { keep: vec![true; len], scale: 1.0 }
    }

    pub fn keep(&self) -> &[bool] {
        &self.keep
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    fn apply_in_place(&self, m: &mut Dense) {
        if self.scale == 1.0 && self.keep.iter().all(|&k| k) {
            return;
        }
        for (v, &k) in m.as_mut_slice().iter_mut().zip(&self.keep) {
            *v = if k { *v * self.scale } else { 0.0 };
        }
    }
}

/// Inverted dropout. Identity (with an all-ones mask) when not training or
/// when `rate == 0`.
pub fn apply_dropout<R: Rng + ?Sized>(m: &Dense, rate: f64, rng: &mut R, training: bool) -> (Dense, DropoutMask) {
    assert!((0.0..1.0).contains(&rate), "dropout rate must lie in [0, 1)");
    let len = m.as_slice().len();
    if !training || rate == 0.0 {
        return (m.clone(), DropoutMask::ones(len));
    }
    let keep: Vec<bool> = (0..len).map(|_| rng.random::<f64>() >= rate).collect();
    let mask = DropoutMask { keep, scale: 1.0 / (1.0 - rate) };
    let mut out = m.clone();
    mask.apply_in_place(&mut out);
    (out, mask)
}

/// Per-layer record needed by [`backward`].
#[derive(Clone, Debug)]
pub struct LayerTrace {
    /// Input of the linear map after dropout, rows `r[k+1]`.
    pub input: Dense,
    pub mask: DropoutMask,
    /// Pre-activation `Z⁽ᵏ⁺¹⁾`, rows `r[k+1]`.
    pub pre: Dense,
}

#[derive(Clone, Debug)]
pub struct ForwardTrace {
    plan: MinibatchPlan,
    layers: Vec<LayerTrace>,
    /// `H⁽ᵏ⁾` on rows `r[k]` for `k = 1..K−1` (index `k − 1`).
    hidden: Vec<Dense>,
    probs: Dense,
    activation: Activation,
}

impl ForwardTrace {
    pub fn plan(&self) -> &MinibatchPlan {
        &self.plan
    }

    pub fn layer(&self, k: usize) -> &LayerTrace {
        &self.layers[k]
    }

    /// `H⁽ᵏ⁾` on the rows of `r[k]`, `1 ≤ k < K`.
    pub fn hidden(&self, k: usize) -> &Dense {
        &self.hidden[k - 1]
    }

    /// Output logits `Z⁽ᴷ⁾` on rows `r[K]`.
    pub fn logits(&self) -> &Dense {
        &self.layers[self.layers.len() - 1].pre
    }

    /// Softmax rows on `r[K]`.
    pub fn probs(&self) -> &Dense {
        &self.probs
    }

    /// Probability row of output node `v`.
    pub fn probs_of(&self, v: usize) -> Option<&[f64]> {
        let i = self.plan.output_nodes().iter().position(|&u| u == v)?;
        Some(self.probs.row(i))
    }
}

pub fn softmax_rows(z: &Dense) -> Dense {
    let mut out = z.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Cross-entropy `−log softmax(z)[label]` computed from logits.
pub fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    (log_sum_exp(logits) - logits[label]).max(0.0)
}

fn check_features(p: &SparsePropagation, x: &Dense, params: &ModelParams) -> Result<()> {
    if x.rows() != p.n() {
        return Err(Error::Dimension(format!("{} feature rows for {} nodes", x.rows(), p.n())));
    }
    if x.cols() != params.dims()[0] {
        return Err(Error::Dimension(format!(
            "{} feature columns, first weight expects {}",
            x.cols(),
            params.dims()[0]
        )));
    }
    Ok(())
}

/// Full-graph exact pass: returns `H⁽¹⁾ … H⁽ᴷ⁻¹⁾` and the output logits
/// `Z̃⁽ᴷ⁾`, all with `n` rows. Each layer aggregates first: `(P H) W`.
pub fn exact_layers(p: &SparsePropagation, x: &Dense, params: &ModelParams) -> Result<(Vec<Dense>, Dense)> {
    check_features(p, x, params)?;
    let act = params.activation();
    let k_last = params.num_layers() - 1;
    let mut hidden = Vec::with_capacity(k_last);
    let mut z = Dense::zeros(0, 0);
    for (k, w) in params.weights().iter().enumerate() {
        let h = if k == 0 { x } else { &hidden[k - 1] };
        z = p.spmm(h)?.matmul(w)?;
        if k < k_last {
            hidden.push(z.map(|v| act.apply(v)));
        }
    }
    Ok((hidden, z))
}

/// Output logits `Z̃⁽ᴷ⁾` for every node.
pub fn exact_logits(p: &SparsePropagation, x: &Dense, params: &ModelParams) -> Result<Dense> {
    Ok(exact_layers(p, x, params)?.1)
}

/// Exact class probabilities for `nodes`, no sampling and no dropout.
pub fn forward_exact(p: &SparsePropagation, x: &Dense, params: &ModelParams, nodes: &[usize]) -> Result<Dense> {
    if let Some(&bad) = nodes.iter().find(|&&v| v >= p.n()) {
        return Err(Error::Dimension(format!("node {bad} outside [0, {})", p.n())));
    }
    let logits = exact_logits(p, x, params)?;
    Ok(softmax_rows(&logits.gather_rows(nodes)))
}

/// Control-variate forward pass over `plan`. When `dropout` is given, each
/// layer's aggregated input is passed through inverted dropout before the
/// linear map and the mask is kept in the trace.
pub fn forward_cve(
    plan: MinibatchPlan,
    p: &SparsePropagation,
    x: &Dense,
    params: &ModelParams,
    cache: &HistoricalCache,
    dropout: Option<(f64, &mut dyn RngCore)>,
) -> Result<ForwardTrace> {
    cache.check(p.n(), params)?;
    forward_plan(plan, p, x, params, Some(cache), dropout)
}

/// Forward pass over `plan` with no historical term (`H̄ ≡ 0`). With a full
/// plan this is the exact model restricted to the receptive fields, and
/// [`backward`] on the result gives the exact gradient.
pub fn forward_uncached(
    plan: MinibatchPlan,
    p: &SparsePropagation,
    x: &Dense,
    params: &ModelParams,
) -> Result<ForwardTrace> {
    forward_plan(plan, p, x, params, None, None)
}

fn forward_plan(
    plan: MinibatchPlan,
    p: &SparsePropagation,
    x: &Dense,
    params: &ModelParams,
    cache: Option<&HistoricalCache>,
    mut dropout: Option<(f64, &mut dyn RngCore)>,
) -> Result<ForwardTrace> {
    check_features(p, x, params)?;
    let k_total = params.num_layers();
    if plan.num_layers() != k_total {
        return Err(Error::Dimension(format!("plan has {} layers, model has {k_total}", plan.num_layers())));
    }
    let act = params.activation();
    let mut layers = Vec::with_capacity(k_total);
    let mut hidden: Vec<Dense> = Vec::with_capacity(k_total - 1);

    for (k, w) in params.weights().iter().enumerate() {
        let upper = plan.field(k + 1);
        let lower = plan.field(k);
        let p_hat = plan.layer(k);
        let mut agg = match cache {
            // H̄⁽⁰⁾ = X, so the sampled difference term vanishes.
            Some(_) if k == 0 => p.spmm_rows(upper, x)?,
            Some(c) => {
                let hist = c.hidden(k);
                let mut delta = hidden[k - 1].clone();
                delta.axpy(-1.0, &hist.gather_rows(lower));
                let mut a = p_hat.spmm(&delta)?;
                a.add_assign(&p.spmm_rows(upper, hist)?);
                a
            }
            None => {
                let h_lower = if k == 0 { x.gather_rows(lower) } else { hidden[k - 1].clone() };
                p_hat.spmm(&h_lower)?
            }
        };
        let mask = match dropout.as_mut() {
            Some((rate, rng)) => {
                let (out, mask) = apply_dropout(&agg, *rate, &mut **rng, true);
                agg = out;
                mask
            }
            None => DropoutMask::ones(agg.as_slice().len()),
        };
        let pre = agg.matmul(w)?;
        if k + 1 < k_total {
            hidden.push(pre.map(|v| act.apply(v)));
        }
        layers.push(LayerTrace { input: agg, mask, pre });
    }
    let probs = softmax_rows(&layers[k_total - 1].pre);
    Ok(ForwardTrace { plan, layers, hidden, probs, activation: act })
}

fn label_of(labels: &[Option<usize>], v: usize, classes: usize) -> Result<usize> {
    let l = labels.get(v).copied().flatten().ok_or_else(|| Error::Dataset(format!("node {v} has no label")))?;
    if l >= classes {
        return Err(Error::LabelOutOfRange { node: v, label: l, classes });
    }
    Ok(l)
}

fn output_positions(trace: &ForwardTrace) -> HashMap<usize, usize> {
    trace.plan.output_nodes().iter().enumerate().map(|(i, &v)| (v, i)).collect()
}

/// Mean cross-entropy over the minibatch draws; repeated draws each
/// contribute a term.
pub fn minibatch_loss(trace: &ForwardTrace, labels: &[Option<usize>], minibatch: &[usize]) -> Result<f64> {
    if minibatch.is_empty() {
        return Err(Error::EmptyNodeSet);
    }
    let pos = output_positions(trace);
    let logits = trace.logits();
    let mut total = 0.0;
    for &v in minibatch {
        let &i = pos.get(&v).ok_or_else(|| Error::Dimension(format!("node {v} is not an output of the plan")))?;
        total += cross_entropy(logits.row(i), label_of(labels, v, logits.cols())?);
    }
    Ok(total / minibatch.len() as f64)
}

/// Gradient of [`minibatch_loss`] with respect to every weight matrix, with
/// `weight_decay · W` added to each layer. The historical cache is treated
/// as constant.
pub fn backward(
    trace: &ForwardTrace,
    labels: &[Option<usize>],
    minibatch: &[usize],
    params: &ModelParams,
    weight_decay: f64,
) -> Result<Gradient> {
    let k_total = params.num_layers();
    if trace.layers.len() != k_total || trace.activation != params.activation() {
        return Err(Error::Dimension("trace was produced by a different model".into()));
    }
    for (k, w) in params.weights().iter().enumerate() {
        if trace.layers[k].input.cols() != w.rows() || trace.layers[k].pre.cols() != w.cols() {
            return Err(Error::Dimension(format!("trace layer {k} does not match the weights")));
        }
    }
    if minibatch.is_empty() {
        return Err(Error::EmptyNodeSet);
    }
    let pos = output_positions(trace);
    let classes = params.num_classes();
    let inv_b = 1.0 / minibatch.len() as f64;
    let mut d_pre = Dense::zeros(trace.plan.output_nodes().len(), classes);
    for &v in minibatch {
        let &i = pos.get(&v).ok_or_else(|| Error::Dimension(format!("node {v} is not an output of the plan")))?;
        let y = label_of(labels, v, classes)?;
        let probs = trace.probs.row(i);
        let row = d_pre.row_mut(i);
        for (c, (g, &pr)) in row.iter_mut().zip(probs).enumerate() {
            let target = if c == y { 1.0 } else { 0.0 };
            *g += (pr - target) * inv_b;
        }
    }

    let act = params.activation();
    let mut grads = vec![Dense::zeros(0, 0); k_total];
    for k in (0..k_total).rev() {
        let lt = &trace.layers[k];
        grads[k] = lt.input.t_matmul(&d_pre)?;
        if k == 0 {
            break;
        }
        let mut d_in = d_pre.matmul_t(&params.weights()[k])?;
        lt.mask.apply_in_place(&mut d_in);
        let d_hidden = trace.plan.layer(k).t_spmm(&d_in)?;
        let below = &trace.layers[k - 1].pre;
        d_pre = Dense::from_fn(d_hidden.rows(), d_hidden.cols(), |i, j| {
            d_hidden.get(i, j) * act.derivative(below.get(i, j))
        });
    }
    if weight_decay != 0.0 {
        for (g, w) in grads.iter_mut().zip(params.weights()) {
            g.axpy(weight_decay, w);
        }
    }
    Ok(Gradient { layers: grads })
}

/// Exact full-batch training loss `F(W)` over `nodes` and its gradient,
/// computed through full propagation with no sampling and no dropout.
pub fn exact_loss_and_gradient(
    g: &Graph,
    p: &SparsePropagation,
    x: &Dense,
    params: &ModelParams,
    labels: &[Option<usize>],
    nodes: &[usize],
) -> Result<(f64, Gradient)> {
    let plan = build_full_plan(g, p, nodes, params.num_layers())?;
    let trace = forward_uncached(plan, p, x, params)?;
    let loss = minibatch_loss(&trace, labels, nodes)?;
    let grad = backward(&trace, labels, nodes, params, 0.0)?;
    Ok((loss, grad))
}

/// Initial historical cache for `params`.
pub fn init_cache(p: &SparsePropagation, x: &Dense, params: &ModelParams, mode: CacheInit) -> Result<HistoricalCache> {
    check_features(p, x, params)?;
    let act = params.activation();
    let k_total = params.num_layers();
    let mut hidden: Vec<Dense> = Vec::with_capacity(k_total - 1);
    for k in 1..k_total {
        let prev = if k == 1 { x } else { &hidden[k - 2] };
        let z = p.spmm(prev)?.matmul(&params.weights()[k - 1])?;
        hidden.push(match mode {
            CacheInit::Activated => z.map(|v| act.apply(v)),
            CacheInit::Linear => z,
        });
    }
    Ok(HistoricalCache { hidden })
}

/// Overwrites `H̄⁽ᵏ⁾` rows of every node in `r[k]` with the trace's
/// activations. Layer 0 is untouched.
pub fn update_cache(cache: &mut HistoricalCache, trace: &ForwardTrace) {
    for k in 1..trace.layers.len() {
        let acts = trace.hidden(k);
        let dst = cache.hidden_mut(k);
        for (i, &v) in trace.plan.field(k).iter().enumerate() {
            dst.row_mut(v).copy_from_slice(acts.row(i));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_normalized_propagation;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cross_entropy_values() {
        assert!((cross_entropy(&[0.0, 0.0], 0) - std::f64::consts::LN_2).abs() < 1e-15);
        let want = (1.0 + (-1.0f64).exp() + (-2.0f64).exp()).ln();
        assert!((cross_entropy(&[1.0, 2.0, 3.0], 2) - want).abs() < 1e-15);
        assert!((want - 0.407606).abs() < 1e-6);
        assert_eq!(cross_entropy(&[0.0, 800.0], 1), 0.0);
    }

    #[test]
    fn zero_weights_give_uniform_probabilities() {
        let g = Graph::from_edges(3, &[(0, 1)]).unwrap();
        let p = build_normalized_propagation(&g);
        let x = Dense::from_fn(3, 2, |i, j| (i + j) as f64);
        let params = ModelParams::zeros(&[2, 4]).unwrap();
        let probs = forward_exact(&p, &x, &params, &[0, 2]).unwrap();
        for &v in probs.as_slice() {
            assert_eq!(v, 0.25);
        }
    }

    #[test]
    fn identity_weight_exposes_px() {
        let g = Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let p = build_normalized_propagation(&g);
        let x = Dense::from_fn(3, 3, |i, j| (2 * i + j) as f64 * 0.25);
        let eye = Dense::from_fn(3, 3, |i, j| if i == j { 1.0 } else { 0.0 });
        let params = ModelParams::new(vec![eye]).unwrap();
        let z = exact_logits(&p, &x, &params).unwrap();
        assert!(z.max_abs_diff(&p.spmm(&x).unwrap()) < 1e-15);
    }

    #[test]
    fn dropout_identity_cases() {
        let m = Dense::from_fn(3, 3, |i, j| (i * j) as f64 + 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (out, mask) = apply_dropout(&m, 0.0, &mut rng, true);
        assert_eq!(out, m);
        assert!(mask.keep().iter().all(|&k| k));
        let (out, _) = apply_dropout(&m, 0.7, &mut rng, false);
        assert_eq!(out, m);
    }

    #[test]
    fn cache_shape_mismatch_is_cache_invalid() {
        let g = Graph::from_edges(4, &[(0, 1), (2, 3)]).unwrap();
        let p = build_normalized_propagation(&g);
        let x = Dense::from_fn(4, 2, |i, j| (i + j) as f64);
        let params = ModelParams::zeros(&[2, 3, 2]).unwrap();
        let stale = HistoricalCache::zeros(4, &[2, 5, 2]);
        let plan = build_full_plan(&g, &p, &[0], 2).unwrap();
        let err = forward_cve(plan, &p, &x, &params, &stale, None).unwrap_err();
        assert!(matches!(err, Error::CacheInvalid(_)));
    }

    #[test]
    fn init_cache_zero_weights_and_single_layer() {
        let g = Graph::from_edges(4, &[(0, 1), (2, 3)]).unwrap();
        let p = build_normalized_propagation(&g);
        let x = Dense::from_fn(4, 2, |i, j| (i + j) as f64);
        let params = ModelParams::zeros(&[2, 3, 3, 2]).unwrap();
        let cache = init_cache(&p, &x, &params, CacheInit::Activated).unwrap();
        assert_eq!(cache.num_hidden(), 2);
        assert!(cache.hidden(1).as_slice().iter().all(|&v| v == 0.0));
        assert!(cache.hidden(2).as_slice().iter().all(|&v| v == 0.0));
        let one = ModelParams::zeros(&[2, 2]).unwrap();
        assert_eq!(init_cache(&p, &x, &one, CacheInit::Activated).unwrap().num_hidden(), 0);
    }

    #[test]
    fn zero_layer_weight_zeroes_its_output() {
        let g = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        let p = build_normalized_propagation(&g);
        let x = Dense::from_fn(4, 2, |i, j| (i + 1) as f64 * (j as f64 - 0.5));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut params = ModelParams::glorot(&[2, 3, 2], &mut rng).unwrap();
        let cache = HistoricalCache::from_hidden(vec![Dense::from_fn(4, 3, |i, j| (i * j) as f64 - 1.0)]);
        params.weights_mut()[0] = Dense::zeros(2, 3);
        let plan = build_full_plan(&g, &p, &[1, 2], 2).unwrap();
        let trace = forward_cve(plan, &p, &x, &params, &cache, None).unwrap();
        assert!(trace.hidden(1).as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn missing_and_out_of_range_labels() {
        let g = Graph::from_edges(2, &[(0, 1)]).unwrap();
        let p = build_normalized_propagation(&g);
        let x = Dense::from_fn(2, 2, |i, j| (i + j) as f64);
        let params = ModelParams::zeros(&[2, 2]).unwrap();
        let cache = HistoricalCache::zeros(2, &[2, 2]);
        let plan = build_full_plan(&g, &p, &[0, 1], 1).unwrap();
        let trace = forward_cve(plan, &p, &x, &params, &cache, None).unwrap();
        let err = minibatch_loss(&trace, &[Some(0), Some(2)], &[0, 1]).unwrap_err();
        assert!(matches!(err, Error::LabelOutOfRange { node: 1, label: 2, classes: 2 }));
        assert!(minibatch_loss(&trace, &[Some(0), None], &[0, 1]).is_err());
        let loss = minibatch_loss(&trace, &[Some(0), Some(1)], &[0, 1, 1]).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
    }
}
