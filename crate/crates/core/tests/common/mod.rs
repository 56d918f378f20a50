#![allow(dead_code)]

use cve_gnn::{Dataset, Dense, Graph, LabeledSplit};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Erdős–Rényi graph on `n` nodes.
pub fn random_graph(n: usize, p: f64, rng: &mut impl Rng) -> Graph {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    Graph::from_edges(n, &edges).unwrap()
}

pub fn random_dense(rows: usize, cols: usize, rng: &mut impl Rng) -> Dense {
    Dense::from_fn(rows, cols, |_, _| rng.random::<f64>() * 2.0 - 1.0)
}

/// Random graph, features and labels; every node is labeled and all of
/// them are training nodes.
pub fn random_dataset(n: usize, p: f64, dim: usize, classes: usize, rng: &mut impl Rng) -> Dataset {
    let graph = random_graph(n, p, rng);
    let features = random_dense(n, dim, rng);
    let labels = (0..n).map(|_| Some(rng.random_range(0..classes))).collect();
    let split = LabeledSplit::new(labels, classes, (0..n).collect(), vec![], vec![]).unwrap();
    Dataset::new(graph, features, split).unwrap()
}

/// `D̃^{-1/2}(A + I)D̃^{-1/2}` by explicit loops over a dense adjacency.
pub fn dense_propagation(g: &Graph) -> Vec<Vec<f64>> {
    let n = g.num_nodes();
    let mut a = vec![vec![0.0; n]; n];
    for (u, v) in g.edges() {
        a[u][v] = 1.0;
        a[v][u] = 1.0;
    }
    for (i, row) in a.iter_mut().enumerate() {
        row[i] += 1.0;
    }
    let deg: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    (0..n).map(|i| (0..n).map(|j| a[i][j] / (deg[i] * deg[j]).sqrt()).collect()).collect()
}

pub fn mat_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let inner = b.len();
    let cols = b.first().map_or(0, Vec::len);
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|j| {
                    let mut s = 0.0;
                    for k in 0..inner {
                        s += row[k] * b[k][j];
                    }
                    s
                })
                .collect()
        })
        .collect()
}

pub fn to_rows(d: &Dense) -> Vec<Vec<f64>> {
    (0..d.rows()).map(|i| d.row(i).to_vec()).collect()
}

pub fn max_abs_diff_rows(a: &[Vec<f64>], b: &Dense) -> f64 {
    let mut m: f64 = 0.0;
    for (i, row) in a.iter().enumerate() {
        for (j, x) in row.iter().enumerate() {
            m = m.max((x - b.get(i, j)).abs());
        }
    }
    m
}

/// Softmax probabilities of a K-layer ReLU GCN, computed densely.
pub fn dense_forward(p: &[Vec<f64>], x: &Dense, weights: &[Dense]) -> Vec<Vec<f64>> {
    let mut h = to_rows(x);
    for (k, w) in weights.iter().enumerate() {
        let mut z = mat_mul(&mat_mul(p, &h), &to_rows(w));
        if k + 1 < weights.len() {
            for row in &mut z {
                for v in row.iter_mut() {
                    *v = v.max(0.0);
                }
            }
        }
        h = z;
    }
    h.iter()
        .map(|row| {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
            let s: f64 = e.iter().sum();
            e.iter().map(|v| v / s).collect()
        })
        .collect()
}
