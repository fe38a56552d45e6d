use nalgebra::{DMatrix, SymmetricEigen};

use super::{square_offdiag, Network, SparseSymMatrix};
use crate::error::{Error, Result};

/// Largest `n` for which a dense eigendecomposition is attempted.
pub const DEFAULT_DENSE_CAP: usize = 4096;
/// Rayleigh-quotient change below which power iteration stops.
pub const DEFAULT_EIGEN_TOL: f64 = 1e-10;
const MAX_POWER_ITERS: usize = 20_000;

/// `w = max(mean degree, sqrt(max degree))`, or 1 when the graph has no edges.
pub fn scale_weight(g: &Network) -> f64 {
    let w = g.mean_degree().max((g.max_degree() as f64).sqrt());
    if w > 0.0 {
        w
    } else {
        1.0
    }
}

/// Adjacency divided by a positive scale: `G = A / w`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkOperator {
    base: Network,
    scale: f64,
}

impl NetworkOperator {
    pub fn unscaled(base: Network) -> Self {
        Self { base, scale: 1.0 }
    }

    pub fn scaled(base: Network) -> Self {
        let scale = scale_weight(&base);
        Self { base, scale }
    }

    pub fn with_scale(base: Network, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidParameter(format!("operator scale must be positive, got {scale}")));
        }
        Ok(Self { base, scale })
    }

    pub fn base(&self) -> &Network {
        &self.base
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn n(&self) -> usize {
        self.base.n()
    }

    /// `G x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.apply_into(x, &mut out);
        out
    }

    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.n());
        let inv = 1.0 / self.scale;
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.base.neighbors(i).iter().map(|&j| x[j]).sum::<f64>() * inv;
        }
    }

    /// `G^(2) x = (G^2 - diag(G^2)) x`, without forming `G^(2)`.
    pub fn apply_second_order(&self, x: &[f64]) -> Vec<f64> {
        let gx = self.apply(x);
        let mut out = self.apply(&gx);
        let inv2 = 1.0 / (self.scale * self.scale);
        for (i, o) in out.iter_mut().enumerate() {
            *o -= self.base.degree(i) as f64 * inv2 * x[i];
        }
        out
    }

    pub fn second_order_matrix(&self) -> SparseSymMatrix {
        square_offdiag(&self.base).scaled(1.0 / (self.scale * self.scale))
    }

    pub fn dense(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut m = DMatrix::zeros(n, n);
        let v = 1.0 / self.scale;
        for &(i, j) in self.base.edges() {
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
        m
    }

    /// `||G||_F^2 = 2 |E| / w^2`.
    pub fn frobenius_sq(&self) -> f64 {
        2.0 * self.base.edge_count() as f64 / (self.scale * self.scale)
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

/// Largest eigenvalue of the operator.
///
/// Power iteration on `G + sI` from the all-ones vector; the small positive
/// shift `s` breaks the `+/- lambda_1` tie of bipartite components. Stops when
/// the Rayleigh quotient moves by less than `tol`; if that never happens the
/// dense eigensolver decides (when `n` fits under the dense cap).
pub fn largest_eigenvalue(op: &NetworkOperator, tol: f64) -> f64 {
    let n = op.n();
    if n == 0 || op.base.edge_count() == 0 {
        return 0.0;
    }
    let shift = 0.5 / op.scale;
    let mut x = vec![1.0; n];
    normalize(&mut x);
    let mut y = vec![0.0; n];
    let mut prev = f64::NAN;
    for _ in 0..MAX_POWER_ITERS {
        op.apply_into(&x, &mut y);
        let rq: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        if (rq - prev).abs() < tol {
            return rq;
        }
        prev = rq;
        for (yi, xi) in y.iter_mut().zip(&x) {
            *yi += shift * xi;
        }
        std::mem::swap(&mut x, &mut y);
        normalize(&mut x);
    }
    log::debug!("power iteration stalled on n = {n}; using dense eigensolver");
    match full_spectrum(op) {
        Ok(spec) => spec.values[0],
        Err(_) => prev,
    }
}

/// Eigenvalues in descending order with matching orthonormal eigenvectors
/// (column `k` of `vectors` belongs to `values[k]`).
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

impl Spectrum {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let lambda = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(self.values.clone()));
        &self.vectors * lambda * self.vectors.transpose()
    }
}

/// Node sets of the connected components, each sorted.
fn components(g: &Network) -> Vec<Vec<usize>> {
    let n = g.n();
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut comp = vec![start];
        let mut head = 0;
        while head < comp.len() {
            let v = comp[head];
            head += 1;
            for &u in g.neighbors(v) {
                if !seen[u] {
                    seen[u] = true;
                    comp.push(u);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

pub fn full_spectrum(op: &NetworkOperator) -> Result<Spectrum> {
    full_spectrum_with_cap(op, DEFAULT_DENSE_CAP)
}

pub fn full_spectrum_with_cap(op: &NetworkOperator, cap: usize) -> Result<Spectrum> {
    let n = op.n();
    if n > cap {
        return Err(Error::Capacity { n, cap });
    }
    // one decomposition per connected component: the matrix is block
    // diagonal, and SymmetricEigen can return NaN on reducible input
    let mut values = Vec::with_capacity(n);
    let mut columns: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
    for comp in components(op.base()) {
        if comp.len() == 1 {
            values.push(0.0);
            columns.push(vec![(comp[0], 1.0)]);
            continue;
        }
        let m = comp.len();
        let mut block = DMatrix::zeros(m, m);
        let index: std::collections::HashMap<usize, usize> = comp.iter().enumerate().map(|(a, &v)| (v, a)).collect();
        for (a, &v) in comp.iter().enumerate() {
            for u in op.base().neighbors(v) {
                block[(a, index[u])] = 1.0 / op.scale();
            }
        }
        let eig = SymmetricEigen::new(block);
        if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
            return Err(Error::Internal(format!("eigendecomposition of a {m}-node component is not finite")));
        }
        for k in 0..m {
            values.push(eig.eigenvalues[k]);
            columns.push(comp.iter().enumerate().map(|(a, &v)| (v, eig.eigenvectors[(a, k)])).collect());
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for &(row, v) in &columns[src] {
            vectors[(row, dst)] = v;
        }
    }
    let values = order.iter().map(|&k| values[k]).collect();
    Ok(Spectrum { values, vectors })
}
