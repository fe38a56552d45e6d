//! Symmetric binary networks: construction, Erdős–Rényi sampling, edge-list
//! ingestion, degree summaries, second-order walks, BFS shells and spectra.

mod bfs;
mod io;
mod sparse;
mod spectral;

pub use bfs::{neighbors_at_distance, ShellIndex};
pub use io::{emit_edge_list, load_edge_list, parse_edge_list, write_edge_list, EdgeListLoad, Indexing};
pub use sparse::{square_offdiag, SparseSymMatrix};
pub use spectral::{
    full_spectrum, full_spectrum_with_cap, largest_eigenvalue, scale_weight, NetworkOperator, Spectrum,
    DEFAULT_DENSE_CAP, DEFAULT_EIGEN_TOL,
};

use rand::Rng;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Undirected simple graph on nodes `0..n`.
///
/// Edges are stored once as canonical `(i, j)` pairs with `i < j`, sorted
/// lexicographically. A CSR adjacency list and the degree sequence are cached.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Network {
    n: usize,
    edges: Vec<(usize, usize)>,
    offsets: Vec<usize>,
    adjacency: Vec<usize>,
    degrees: Vec<usize>,
}

impl Network {
    /// Builds a network from arbitrary pairs. Orientation and duplicates are
    /// normalised away; self-loops and out-of-range endpoints are rejected.
    pub fn from_edges<I>(n: usize, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut edges = Vec::new();
        for (a, b) in pairs {
            if a >= n || b >= n {
                return Err(Error::InvalidParameter(format!(
                    "edge ({a}, {b}) out of range for {n} nodes"
                )));
            }
            if a == b {
                return Err(Error::InvalidParameter(format!("self-loop at node {a}")));
            }
            edges.push((a.min(b), a.max(b)));
        }
        edges.sort_unstable();
        edges.dedup();
        Ok(Self::from_canonical(n, edges))
    }

    /// `edges` must already be canonical, sorted and deduplicated.
    fn from_canonical(n: usize, edges: Vec<(usize, usize)>) -> Self {
        let mut degrees = vec![0usize; n];
        for &(i, j) in &edges {
            degrees[i] += 1;
            degrees[j] += 1;
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for d in &degrees {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut fill = offsets[..n].to_vec();
        let mut adjacency = vec![0usize; 2 * edges.len()];
        for &(i, j) in &edges {
            adjacency[fill[i]] = j;
            fill[i] += 1;
            adjacency[fill[j]] = i;
            fill[j] += 1;
        }
        for i in 0..n {
            adjacency[offsets[i]..offsets[i + 1]].sort_unstable();
        }
        Self {
            n,
            edges,
            offsets,
            adjacency,
            degrees,
        }
    }

    pub fn empty(n: usize) -> Self {
        Self::from_canonical(n, Vec::new())
    }

    pub fn complete(n: usize) -> Self {
        let edges = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
        Self::from_canonical(n, edges)
    }

    /// Path `0 - 1 - ... - (n-1)`.
    pub fn path(n: usize) -> Self {
        let edges = (1..n).map(|j| (j - 1, j)).collect();
        Self::from_canonical(n, edges)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    pub fn degree(&self, i: usize) -> usize {
        self.degrees[i]
    }

    /// Sorted neighbour list of `i`.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i < self.n && self.neighbors(i).binary_search(&j).is_ok()
    }

    /// Realised average degree `2|E| / n` (0 for the null graph).
    pub fn mean_degree(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            2.0 * self.edges.len() as f64 / self.n as f64
        }
    }

    pub fn max_degree(&self) -> usize {
        self.degrees.iter().copied().max().unwrap_or(0)
    }

    /// Relabels nodes: node `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return Err(Error::InvalidParameter("permutation length mismatch".into()));
        }
        Self::from_edges(self.n, self.edges.iter().map(|&(i, j)| (perm[i], perm[j])))
    }
}

/// Samples `G(n, p)`: each of the `n(n-1)/2` pairs is linked independently
/// with probability `p`.
///
/// Uses geometric skipping over the row-major upper triangle, so the cost is
/// `O(n + |E|)` random draws rather than `O(n^2)`.
pub fn sample_er<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Result<Network> {
    if !(0.0..=1.0).contains(&p) || p.is_nan() {
        return Err(Error::InvalidParameter(format!("link probability {p} outside [0, 1]")));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("network needs at least one node".into()));
    }
    if p == 0.0 || n == 1 {
        return Ok(Network::empty(n));
    }
    let skip = Geometric::new(p).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut edges = Vec::new();
    // Cursor over the strict upper triangle in row-major order; `(row, row)`
    // is the virtual slot just before `(row, row + 1)`.
    let (mut row, mut col) = (0usize, 0usize);
    loop {
        let mut advance = skip.sample(rng).saturating_add(1);
        loop {
            let remaining = (n - 1 - col) as u64;
            if advance <= remaining {
                col += advance as usize;
                break;
            }
            advance -= remaining;
            row += 1;
            if row + 1 >= n {
                return Ok(Network::from_canonical(n, edges));
            }
            col = row;
        }
        edges.push((row, col));
    }
}

/// Order statistics of a degree sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegreeSummary {
    pub min: f64,
    pub median: f64,
    pub mean: f64,
    /// Smallest value attaining the maximal frequency.
    pub mode: f64,
    pub max: f64,
}

impl DegreeSummary {
    /// Summary of an arbitrary sequence; all zeros for an empty one. The
    /// median of an even-length sequence averages the two middle values.
    pub fn from_values(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self {
                min: 0.0,
                median: 0.0,
                mean: 0.0,
                mode: 0.0,
                max: 0.0,
            };
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let m = sorted.len();
        let median = if m % 2 == 1 {
            sorted[m / 2]
        } else {
            0.5 * (sorted[m / 2 - 1] + sorted[m / 2])
        };
        let mean = sorted.iter().sum::<f64>() / m as f64;
        let (mut mode, mut best) = (sorted[0], 0usize);
        let mut k = 0;
        while k < m {
            let mut run = 1;
            while k + run < m && sorted[k + run] == sorted[k] {
                run += 1;
            }
            if run > best {
                best = run;
                mode = sorted[k];
            }
            k += run;
        }
        Self {
            min: sorted[0],
            median,
            mean,
            mode,
            max: sorted[m - 1],
        }
    }
}

pub fn degree_stats(g: &Network) -> DegreeSummary {
    let values: Vec<f64> = g.degrees().iter().map(|&d| d as f64).collect();
    DegreeSummary::from_values(&values)
}
