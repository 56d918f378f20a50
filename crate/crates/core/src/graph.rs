//! Undirected graphs, the renormalized propagation matrix and sparse-dense
//! products.

use rayon::prelude::*;

use crate::dense::Dense;
use crate::error::{Error, Result};

/// Undirected simple graph stored as sorted adjacency lists in CSR layout.
/// Self-loops are never stored.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
}

impl Graph {
    /// Builds a graph from an arbitrary edge list. Edges are symmetrized and
    /// deduplicated; self-loops are dropped.
    pub fn from_edges(num_nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); num_nodes];
        for &(u, v) in edges {
            if u >= num_nodes || v >= num_nodes {
                return Err(Error::Dimension(format!("edge ({u}, {v}) references a node outside [0, {num_nodes})")));
            }
            if u == v {
                continue;
            }
            adj[u].push(v);
            adj[v].push(u);
        }
        let mut offsets = Vec::with_capacity(num_nodes + 1);
        let mut neighbors = Vec::new();
        offsets.push(0);
        for mut list in adj {
            list.sort_unstable();
            list.dedup();
            neighbors.extend_from_slice(&list);
            offsets.push(neighbors.len());
        }
        Ok(Self { offsets, neighbors })
    }

    pub fn num_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.neighbors.len() / 2
    }

    /// Sorted neighbor list `N_v`.
    #[inline]
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    #[inline]
    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn max_degree(&self) -> usize {
        (0..self.num_nodes()).map(|v| self.degree(v)).max().unwrap_or(0)
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Each undirected edge once, as `(u, v)` with `u < v`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_nodes()).flat_map(move |u| self.neighbors(u).iter().filter(move |&&v| u < v).map(move |&v| (u, v)))
    }
}

/// Compressed sparse row matrix of `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Csr {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl Csr {
    pub fn new(nrows: usize, ncols: usize, indptr: Vec<usize>, indices: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if indptr.len() != nrows + 1
            || indptr.first() != Some(&0)
            || indptr.last() != Some(&indices.len())
            || indices.len() != values.len()
            || indptr.windows(2).any(|w| w[0] > w[1])
        {
            return Err(Error::Dimension("malformed CSR structure".into()));
        }
        if let Some(&bad) = indices.iter().find(|&&j| j >= ncols) {
            return Err(Error::Dimension(format!("column {bad} outside [0, {ncols})")));
        }
        Ok(Self { nrows, ncols, indptr, indices, values })
    }

    pub fn identity(n: usize) -> Self {
        Self { nrows: n, ncols: n, indptr: (0..=n).collect(), indices: (0..n).collect(), values: vec![1.0; n] }
    }

    pub fn from_dense(d: &Dense) -> Self {
        let mut indptr = vec![0];
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for i in 0..d.rows() {
            for (j, &v) in d.row(i).iter().enumerate() {
                if v != 0.0 {
                    indices.push(j);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self { nrows: d.rows(), ncols: d.cols(), indptr, indices, values }
    }

    pub fn to_dense(&self) -> Dense {
        let mut d = Dense::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                d.set(i, j, d.get(i, j) + v);
            }
        }
        d
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.nrows
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn row_indices(&self, i: usize) -> &[usize] {
        &self.indices[self.indptr[i]..self.indptr[i + 1]]
    }

    #[inline]
    pub fn row_values(&self, i: usize) -> &[f64] {
        &self.values[self.indptr[i]..self.indptr[i + 1]]
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.row_indices(i).iter().copied().zip(self.row_values(i).iter().copied())
    }

    /// Stored value at `(i, j)`, zero when absent.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).filter(|&(c, _)| c == j).map(|(_, v)| v).sum()
    }

    /// Exact product `self * rhs`.
    pub fn spmm(&self, rhs: &Dense) -> Result<Dense> {
        let all: Vec<usize> = (0..self.nrows).collect();
        self.spmm_rows(&all, rhs)
    }

    /// Rows `rows` of `self * rhs`, in the listed order. Each output row sums
    /// its terms in stored column order regardless of thread count.
    pub fn spmm_rows(&self, rows: &[usize], rhs: &Dense) -> Result<Dense> {
        if self.ncols != rhs.rows() {
            return Err(Error::Dimension(format!(
                "spmm {}x{} by {}x{}",
                self.nrows,
                self.ncols,
                rhs.rows(),
                rhs.cols()
            )));
        }
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.nrows) {
            return Err(Error::Dimension(format!("row {bad} outside [0, {})", self.nrows)));
        }
        let d = rhs.cols();
        let mut out = Dense::zeros(rows.len(), d);
        if d == 0 {
            return Ok(out);
        }
        let kernel = |(o, out_row): (usize, &mut [f64])| {
            for (j, v) in self.row(rows[o]) {
                for (acc, &x) in out_row.iter_mut().zip(rhs.row(j)) {
                    *acc += v * x;
                }
            }
        };
        if rows.len() >= 64 {
            out.as_mut_slice().par_chunks_mut(d).enumerate().for_each(kernel);
        } else {
            out.as_mut_slice().chunks_mut(d).enumerate().for_each(kernel);
        }
        Ok(out)
    }

    /// `selfᵀ * rhs`, scattering each row's contribution in row order.
    pub fn t_spmm(&self, rhs: &Dense) -> Result<Dense> {
        if self.nrows != rhs.rows() {
            return Err(Error::Dimension(format!(
                "transposed spmm ({}x{})ᵀ by {}x{}",
                self.nrows,
                self.ncols,
                rhs.rows(),
                rhs.cols()
            )));
        }
        let mut out = Dense::zeros(self.ncols, rhs.cols());
        for i in 0..self.nrows {
            let src = rhs.row(i);
            for (j, v) in self.row(i) {
                for (acc, &x) in out.row_mut(j).iter_mut().zip(src) {
                    *acc += v * x;
                }
            }
        }
        Ok(out)
    }
}

/// `P = D̃^(-1/2) (A + I) D̃^(-1/2)` in CSR form. Row `v` stores exactly the
/// columns `N_v ∪ {v}` in ascending order.
#[derive(Clone, Debug, PartialEq)]
pub struct SparsePropagation {
    csr: Csr,
}

impl SparsePropagation {
    pub fn csr(&self) -> &Csr {
        &self.csr
    }

    pub fn n(&self) -> usize {
        self.csr.nrows()
    }

    pub fn spmm(&self, rhs: &Dense) -> Result<Dense> {
        self.csr.spmm(rhs)
    }

    pub fn spmm_rows(&self, rows: &[usize], rhs: &Dense) -> Result<Dense> {
        self.csr.spmm_rows(rows, rhs)
    }
}

/// Builds the self-loop-augmented, symmetrically normalized adjacency.
pub fn build_normalized_propagation(g: &Graph) -> SparsePropagation {
    let n = g.num_nodes();
    let mut indptr = Vec::with_capacity(n + 1);
    let mut indices = Vec::with_capacity(2 * g.num_edges() + n);
    let mut values = Vec::with_capacity(2 * g.num_edges() + n);
    indptr.push(0);
    for v in 0..n {
        let mut self_done = false;
        for &u in g.neighbors(v) {
            if !self_done && u > v {
                indices.push(v);
                values.push(self_weight(g, v));
                self_done = true;
            }
            indices.push(u);
            values.push(pair_weight(g, v, u));
        }
        if !self_done {
            indices.push(v);
            values.push(self_weight(g, v));
        }
        indptr.push(indices.len());
    }
    SparsePropagation { csr: Csr { nrows: n, ncols: n, indptr, indices, values } }
}

fn self_weight(g: &Graph, v: usize) -> f64 {
    1.0 / (g.degree(v) + 1) as f64
}

// Computed as one reciprocal square root of the product so that (v,u) and
// (u,v) are bitwise equal.
fn pair_weight(g: &Graph, v: usize, u: usize) -> f64 {
    let a = (g.degree(v) + 1) as f64;
    let b = (g.degree(u) + 1) as f64;
    1.0 / (a * b).sqrt()
}
