//! Stochastic block model instances with Gaussian class-mean features.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dataset::{Dataset, LabeledSplit};
use crate::dense::Dense;
use crate::error::{Error, Result};
use crate::graph::Graph;

/// Pairwise distance between the class means.
pub const MEAN_SEPARATION: f64 = 4.0;

#[derive(Clone, Debug, PartialEq)]
pub struct SbmParams {
    pub nodes: usize,
    pub blocks: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub dim: usize,
    pub seed: u64,
}

impl Default for SbmParams {
    fn default() -> Self {
        Self { nodes: 200, blocks: 2, p_in: 0.2, p_out: 0.01, dim: 8, seed: 1 }
    }
}

/// Block of node `v`: contiguous blocks, the first `nodes % blocks` of which
/// hold one extra node.
pub fn block_of(v: usize, nodes: usize, blocks: usize) -> usize {
    let base = nodes / blocks;
    let extra = nodes % blocks;
    let big = extra * (base + 1);
    if v < big {
        v / (base + 1)
    } else {
        extra + (v - big) / base
    }
}

/// Generates an undirected SBM graph. Node features are `μ_b + N(0, I)` with
/// `μ_b = (4/√2)·e_b`, so any two class means are 4 apart; features are
/// rounded to `f32` so the in-memory dataset equals its on-disk form. Every
/// node is labeled with its block, and a shuffled 60/20/20 split is drawn.
pub fn gen_sbm(params: &SbmParams) -> Result<Dataset> {
    let SbmParams { nodes, blocks, p_in, p_out, dim, seed } = *params;
    if !(0.0..=1.0).contains(&p_in) || !(0.0..=1.0).contains(&p_out) || p_out > p_in {
        return Err(Error::Config(format!("need 0 <= p_out <= p_in <= 1, got p_in={p_in}, p_out={p_out}")));
    }
    if blocks == 0 || nodes < blocks {
        return Err(Error::Config(format!("cannot split {nodes} nodes into {blocks} blocks")));
    }
    if dim < blocks {
        return Err(Error::Config(format!("feature dimension {dim} is smaller than the block count {blocks}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let block: Vec<usize> = (0..nodes).map(|v| block_of(v, nodes, blocks)).collect();

    let mut edges = Vec::new();
    for u in 0..nodes {
        for v in u + 1..nodes {
            let p = if block[u] == block[v] { p_in } else { p_out };
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    let graph = Graph::from_edges(nodes, &edges)?;

    let scale = MEAN_SEPARATION / 2f64.sqrt();
    let features = Dense::from_fn(nodes, dim, |v, j| {
        let noise: f64 = rng.sample(StandardNormal);
        let mean = if j == block[v] { scale } else { 0.0 };
        (mean + noise) as f32 as f64
    });

    let mut order: Vec<usize> = (0..nodes).collect();
    order.shuffle(&mut rng);
    let n_train = nodes * 6 / 10;
    let n_val = nodes * 2 / 10;
    let mut train = order[..n_train].to_vec();
    let mut val = order[n_train..n_train + n_val].to_vec();
    let mut test = order[n_train + n_val..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();

    let split = LabeledSplit::new(block.into_iter().map(Some).collect(), blocks, train, val, test)?;
    Dataset::new(graph, features, split)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn remainder_rule() {
        let sizes = (0..10).fold([0usize; 3], |mut acc, v| {
            acc[block_of(v, 10, 3)] += 1;
            acc
        });
        assert_eq!(sizes, [4, 3, 3]);
        assert_eq!(block_of(9, 10, 3), 2);
    }

    #[test]
    fn edgeless_and_clique_extremes() {
        let ds = gen_sbm(&SbmParams { nodes: 20, p_in: 0.0, p_out: 0.0, ..Default::default() }).unwrap();
        assert_eq!(ds.graph.num_edges(), 0);
        let ds = gen_sbm(&SbmParams { nodes: 10, p_in: 1.0, p_out: 0.0, ..Default::default() }).unwrap();
        assert_eq!(ds.graph.num_edges(), 2 * (5 * 4 / 2));
        for u in 0..10 {
            for v in 0..10 {
                if u != v {
                    assert_eq!(ds.graph.has_edge(u, v), (u < 5) == (v < 5));
                }
            }
        }
    }

    #[test]
    fn split_sizes_and_determinism() {
        let a = gen_sbm(&SbmParams::default()).unwrap();
        assert_eq!((a.split.train.len(), a.split.val.len(), a.split.test.len()), (120, 40, 40));
        let b = gen_sbm(&SbmParams::default()).unwrap();
        assert_eq!(a.graph, b.graph);
        assert_eq!(a.features, b.features);
        assert_eq!(a.split, b.split);
    }

    #[test]
    fn invalid_probabilities() {
        assert!(gen_sbm(&SbmParams { p_in: 0.1, p_out: 0.2, ..Default::default() }).is_err());
        assert!(gen_sbm(&SbmParams { p_in: 1.5, ..Default::default() }).is_err());
        assert!(gen_sbm(&SbmParams { dim: 1, ..Default::default() }).is_err());
    }
}
