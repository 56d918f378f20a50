//! Minibatch and per-layer neighbor sampling.
//!
//! A [`MinibatchPlan`] holds, for a `K`-layer model, the receptive fields
//! `r[0] ⊇ r[1] ⊇ … ⊇ r[K]` (with `r[K]` the distinct minibatch nodes) and one
//! sampled propagation matrix per layer. Layer `k`'s matrix has one row per
//! node of `r[k+1]` and one column per node of `r[k]`, both in local
//! positions, so it multiplies activations gathered on `r[k]` directly.

use std::str::FromStr;

use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{Csr, Graph, SparsePropagation};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SamplingMode {
    /// Exactly `min(D, pool)` distinct nodes, uniform over subsets.
    #[default]
    WithoutReplacement,
    /// `D` uniform draws with replacement, duplicates removed.
    WithReplacementDedup,
}

impl SamplingMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SamplingMode::WithoutReplacement => "without-replacement",
            SamplingMode::WithReplacementDedup => "with-replacement-dedup",
        }
    }
}

impl FromStr for SamplingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "without-replacement" => Ok(SamplingMode::WithoutReplacement),
            "with-replacement-dedup" => Ok(SamplingMode::WithReplacementDedup),
            other => Err(Error::Config(format!("unknown sampling mode {other:?}"))),
        }
    }
}

/// Numerator of the per-row rescaling factor.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ScaleRule {
    /// `|N_v ∪ {v}| / s_v`; full draws have scale exactly 1.
    #[default]
    Pool,
    /// `|N_v| / s_v`, the neighbor count without the self node.
    Neighbors,
}

impl ScaleRule {
    pub fn as_str(self) -> &'static str {
        match self {
            ScaleRule::Pool => "pool",
            ScaleRule::Neighbors => "neighbors",
        }
    }
}

impl FromStr for ScaleRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pool" => Ok(ScaleRule::Pool),
            "neighbors" => Ok(ScaleRule::Neighbors),
            other => Err(Error::Config(format!("unknown scale rule {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplerConfig {
    /// Neighbor budget `D`, shared by every layer.
    pub neighbors: usize,
    pub batch_size: usize,
    pub mode: SamplingMode,
    pub scale: ScaleRule,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { neighbors: 2, batch_size: 20, mode: SamplingMode::default(), scale: ScaleRule::default(), seed: 0 }
    }
}

impl SamplerConfig {
    pub fn validate(&self, train_len: usize) -> Result<()> {
        if self.neighbors == 0 {
            return Err(Error::Config("neighbors must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.batch_size > train_len {
            return Err(Error::Config(format!(
                "batch size {} exceeds the training set size {train_len}",
                self.batch_size
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MinibatchPlan {
    fields: Vec<Vec<usize>>,
    layers: Vec<Csr>,
}

impl MinibatchPlan {
    pub fn from_parts(fields: Vec<Vec<usize>>, layers: Vec<Csr>) -> Result<Self> {
        if fields.len() != layers.len() + 1 {
            return Err(Error::Dimension(format!("{} receptive fields for {} layers", fields.len(), layers.len())));
        }
        for (k, m) in layers.iter().enumerate() {
            if m.nrows() != fields[k + 1].len() || m.ncols() != fields[k].len() {
                return Err(Error::Dimension(format!("layer {k} matrix does not match its fields")));
            }
        }
        Ok(Self { fields, layers })
    }

    /// Number of layers `K`.
    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Receptive field `r[k]` as global node ids, `k = 0..=K`.
    pub fn field(&self, k: usize) -> &[usize] {
        &self.fields[k]
    }

    /// Sampled propagation matrix of layer `k` in local positions.
    pub fn layer(&self, k: usize) -> &Csr {
        &self.layers[k]
    }

    /// Distinct minibatch nodes, `r[K]`.
    pub fn output_nodes(&self) -> &[usize] {
        &self.fields[self.layers.len()]
    }

    /// Row `v` (global) of layer `k`'s matrix as `(global column, value)`
    /// pairs, or `None` when `v ∉ r[k+1]`.
    pub fn global_row(&self, k: usize, v: usize) -> Option<Vec<(usize, f64)>> {
        let local = self.fields[k + 1].iter().position(|&x| x == v)?;
        let cols = &self.fields[k];
        Some(self.layers[k].row(local).map(|(j, val)| (cols[j], val)).collect())
    }
}

/// `batch_size` uniform draws with replacement from `train`.
pub fn sample_minibatch<R: Rng + ?Sized>(train: &[usize], batch_size: usize, rng: &mut R) -> Result<Vec<usize>> {
    if train.is_empty() {
        return Err(Error::EmptyTrainSet);
    }
    Ok((0..batch_size).map(|_| train[rng.random_range(0..train.len())]).collect())
}

/// Sorted, distinct positions into a pool of `pool` candidates.
pub fn sample_pool_positions<R: Rng + ?Sized>(
    pool: usize,
    budget: usize,
    mode: SamplingMode,
    rng: &mut R,
) -> Vec<usize> {
    match mode {
        SamplingMode::WithoutReplacement => {
            if budget >= pool {
                return (0..pool).collect();
            }
            let mut picked = index::sample(rng, pool, budget).into_vec();
            picked.sort_unstable();
            picked
        }
        SamplingMode::WithReplacementDedup => {
            let mut picked: Vec<usize> = (0..budget).map(|_| rng.random_range(0..pool)).collect();
            picked.sort_unstable();
            picked.dedup();
            picked
        }
    }
}

/// `N_v ∪ {v}` in ascending order.
pub fn sampling_pool(g: &Graph, v: usize) -> Vec<usize> {
    let nbrs = g.neighbors(v);
    let at = nbrs.partition_point(|&u| u < v);
    let mut pool = Vec::with_capacity(nbrs.len() + 1);
    pool.extend_from_slice(&nbrs[..at]);
    pool.push(v);
    pool.extend_from_slice(&nbrs[at..]);
    pool
}

/// Samples from `N_v ∪ {v}` with budget `budget`; returns sorted global ids.
pub fn sample_neighbors<R: Rng + ?Sized>(
    g: &Graph,
    v: usize,
    budget: usize,
    mode: SamplingMode,
    rng: &mut R,
) -> Vec<usize> {
    let pool = sampling_pool(g, v);
    sample_pool_positions(pool.len(), budget, mode, rng).into_iter().map(|i| pool[i]).collect()
}

/// Distinct elements of `draws` in first-occurrence order.
pub fn distinct_in_order(draws: &[usize]) -> Vec<usize> {
    let mut seen = std::collections::HashSet::with_capacity(draws.len());
    draws.iter().copied().filter(|v| seen.insert(*v)).collect()
}

fn scale_numerator(rule: ScaleRule, g: &Graph, v: usize) -> f64 {
    match rule {
        ScaleRule::Pool => (g.degree(v) + 1) as f64,
        ScaleRule::Neighbors => g.degree(v) as f64,
    }
}

/// Builds the receptive fields and sampled propagation matrices for a
/// `layers`-layer model. Every node of `r[k+1]` draws its own sample per
/// layer, in field order, so a fixed RNG state yields a fixed plan.
pub fn build_plan<R: Rng + ?Sized>(
    g: &Graph,
    p: &SparsePropagation,
    minibatch: &[usize],
    layers: usize,
    config: &SamplerConfig,
    rng: &mut R,
) -> Result<MinibatchPlan> {
    build_plan_with(g, p, minibatch, layers, config.scale, |pool_len| {
        sample_pool_positions(pool_len, config.neighbors, config.mode, rng)
    })
}

/// Plan in which every row keeps its whole pool: each sampled matrix row
/// equals the corresponding row of `P`.
pub fn build_full_plan(g: &Graph, p: &SparsePropagation, minibatch: &[usize], layers: usize) -> Result<MinibatchPlan> {
    build_plan_with(g, p, minibatch, layers, ScaleRule::Pool, |pool_len| (0..pool_len).collect())
}

fn build_plan_with(
    g: &Graph,
    p: &SparsePropagation,
    minibatch: &[usize],
    layers: usize,
    scale: ScaleRule,
    mut draw: impl FnMut(usize) -> Vec<usize>,
) -> Result<MinibatchPlan> {
    let n = g.num_nodes();
    if p.n() != n {
        return Err(Error::Dimension(format!("propagation matrix is {}x{} for {n} nodes", p.n(), p.n())));
    }
    if let Some(&bad) = minibatch.iter().find(|&&v| v >= n) {
        return Err(Error::Dimension(format!("minibatch node {bad} outside [0, {n})")));
    }
    let mut fields = vec![Vec::new(); layers + 1];
    let mut mats = Vec::with_capacity(layers);
    fields[layers] = distinct_in_order(minibatch);
    let mut local = vec![usize::MAX; n];
    let pc = p.csr();

    for k in (0..layers).rev() {
        let upper = fields[k + 1].clone();
        let mut lower = upper.clone();
        for (i, &v) in lower.iter().enumerate() {
            local[v] = i;
        }
        let mut indptr = Vec::with_capacity(upper.len() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for &v in &upper {
            let cols = pc.row_indices(v);
            let vals = pc.row_values(v);
            let picked = draw(cols.len());
            let factor = scale_numerator(scale, g, v) / picked.len() as f64;
            for pos in picked {
                let u = cols[pos];
                if local[u] == usize::MAX {
                    local[u] = lower.len();
                    lower.push(u);
                }
                indices.push(local[u]);
                values.push(factor * vals[pos]);
            }
            indptr.push(indices.len());
        }
        for &v in &lower {
            local[v] = usize::MAX;
        }
        mats.push(Csr::new(upper.len(), lower.len(), indptr, indices, values)?);
        fields[k] = lower;
    }
    mats.reverse();
    MinibatchPlan::from_parts(fields, mats)
}
