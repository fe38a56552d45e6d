use std::collections::BTreeMap;

use nalgebra::DMatrix;

use super::Network;

/// Symmetric matrix stored as its upper triangle, `(i, j)` with `i <= j`.
/// Explicit zeros are never stored.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseSymMatrix {
    n: usize,
    entries: BTreeMap<(usize, usize), f64>,
}

impl SparseSymMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            entries: BTreeMap::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of stored upper-triangle entries.
    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let key = (i.min(j), i.max(j));
        self.entries.get(&key).copied().unwrap_or(0.0)
    }

    pub fn add(&mut self, i: usize, j: usize, value: f64) {
        assert!(i < self.n && j < self.n, "index out of range");
        let key = (i.min(j), i.max(j));
        let slot = self.entries.entry(key).or_insert(0.0);
        *slot += value;
        if *slot == 0.0 {
            self.entries.remove(&key);
        }
    }

    /// Canonical `(i, j, value)` triples with `i <= j`, in lexicographic order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.entries.iter().map(|(&(i, j), &v)| (i, j, v))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        if factor == 0.0 {
            return Self::zeros(self.n);
        }
        Self {
            n: self.n,
            entries: self.entries.iter().map(|(&k, &v)| (k, v * factor)).collect(),
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        let mut out = vec![0.0; self.n];
        for (&(i, j), &v) in &self.entries {
            out[i] += v * x[j];
            if i != j {
                out[j] += v * x[i];
            }
        }
        out
    }

    /// Squared Frobenius norm; off-diagonal entries count in both orientations.
    pub fn frobenius_sq(&self) -> f64 {
        self.entries
            .iter()
            .map(|(&(i, j), &v)| if i == j { v * v } else { 2.0 * v * v })
            .sum()
    }

    /// Row sums, i.e. the weighted degree sequence.
    pub fn row_sums(&self) -> Vec<f64> {
        self.mul_vec(&vec![1.0; self.n])
    }

    /// Number of nonzero off-diagonal entries per row (support degree).
    pub fn support_degrees(&self) -> Vec<usize> {
        let mut out = vec![0usize; self.n];
        for &(i, j) in self.entries.keys() {
            if i != j {
                out[i] += 1;
                out[j] += 1;
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for (&(i, j), &v) in &self.entries {
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
        m
    }
}

/// `G^(2) = G^2 - diag(G^2)`: entry `(i, j)`, `i != j`, counts the common
/// neighbours of `i` and `j`. The diagonal is dropped.
pub fn square_offdiag(g: &Network) -> SparseSymMatrix {
    let mut m = SparseSymMatrix::zeros(g.n());
    for k in 0..g.n() {
        let nb = g.neighbors(k);
        for (a, &i) in nb.iter().enumerate() {
            for &j in &nb[a + 1..] {
                *m.entries.entry((i, j)).or_insert(0.0) += 1.0;
            }
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::sample_er;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn brute_common_neighbors(g: &Network, i: usize, j: usize) -> f64 {
        (0..g.n()).filter(|&k| g.has_edge(i, k) && g.has_edge(k, j)).count() as f64
    }

    #[test]
    fn path_and_complete() {
        let p3 = square_offdiag(&Network::path(3));
        assert_eq!(p3.nnz(), 1);
        assert_eq!(p3.get(0, 2), 1.0);
        assert_eq!(p3.get(2, 0), 1.0);
        assert_eq!(p3.frobenius_sq(), 2.0);

        let k3 = square_offdiag(&Network::complete(3));
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 0.0 } else { 1.0 };
                assert_eq!(k3.get(i, j), expect);
            }
        }
        assert!(square_offdiag(&Network::empty(4)).is_zero());
    }

    #[test]
    fn complete_graph_identity() {
        // G^2 = (n-2) G + (n-1) I on K_n
        for n in 3..9 {
            let k = square_offdiag(&Network::complete(n));
            for i in 0..n {
                for j in 0..n {
                    let expect = if i == j { 0.0 } else { (n - 2) as f64 };
                    assert_eq!(k.get(i, j), expect);
                }
            }
        }
    }

    #[test]
    fn matches_brute_force_on_small_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for trial in 0..300 {
            let n = 1 + trial % 12;
            let p = [0.1, 0.3, 0.5, 0.8][trial % 4];
            let g = sample_er(n, p, &mut rng).unwrap();
            let m = square_offdiag(&g);
            for i in 0..n {
                assert_eq!(m.get(i, i), 0.0);
                for j in (i + 1)..n {
                    assert_eq!(m.get(i, j), brute_common_neighbors(&g, i, j));
                }
            }
        }
    }

    #[test]
    fn frobenius_of_adjacency() {
        let mut a = SparseSymMatrix::zeros(3);
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            a.add(i, j, 1.0);
        }
        assert_eq!(a.frobenius_sq(), 6.0);
        assert_eq!(SparseSymMatrix::zeros(4).frobenius_sq(), 0.0);
    }

    #[test]
    fn mul_vec_matches_dense() {
        let g = sample_er(10, 0.4, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let m = square_offdiag(&g);
        let x: Vec<f64> = (0..10).map(|i| i as f64 - 3.5).collect();
        let dense = m.to_dense() * nalgebra::DVector::from_vec(x.clone());
        let sparse = m.mul_vec(&x);
        for i in 0..10 {
            assert!((dense[i] - sparse[i]).abs() < 1e-12);
        }
    }
}
