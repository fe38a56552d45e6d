//! Network-HAC variance: kernel-weighted cross products of moment vectors
//! over pairs of nodes at each path distance.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{PreparedDesign, VcovBlock};
use crate::error::{Error, Result};
use crate::graph::ShellIndex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Kernel {
    /// Unit weight up to the bandwidth.
    Rectangular,
    /// `max(0, 1 - s / b)`.
    Bartlett,
}

impl Kernel {
    pub fn label(self) -> &'static str {
        match self {
            Kernel::Rectangular => "rectangular",
            Kernel::Bartlett => "bartlett",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rectangular" | "uniform" | "truncated" => Some(Kernel::Rectangular),
            "bartlett" => Some(Kernel::Bartlett),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HacConfig {
    pub kernel: Kernel,
    pub bandwidth: usize,
}

impl Default for HacConfig {
    fn default() -> Self {
        Self {
            kernel: Kernel::Bartlett,
            bandwidth: 2,
        }
    }
}

impl HacConfig {
    /// Weight of pairs at path distance `s`.
    pub fn weight(&self, s: usize) -> f64 {
        if s > self.bandwidth {
            return 0.0;
        }
        if s == 0 {
            return 1.0;
        }
        match self.kernel {
            Kernel::Rectangular => 1.0,
            Kernel::Bartlett => (1.0 - s as f64 / self.bandwidth as f64).max(0.0),
        }
    }

    /// Per-distance weights `0..=bandwidth`.
    pub fn weights(&self) -> Vec<f64> {
        (0..=self.bandwidth).map(|s| self.weight(s)).collect()
    }
}

/// `sum_s w(s) n^-1 sum_i sum_{j at distance s from i} m_i m_j^T` for moment
/// rows `m_i` (one row per node).
pub fn network_hac_meat(moments: &DMatrix<f64>, shells: &ShellIndex, cfg: &HacConfig) -> Result<DMatrix<f64>> {
    let (n, dim) = moments.shape();
    if shells.n() != n {
        return Err(Error::InvalidParameter("shell index size differs from moment rows".into()));
    }
    if shells.radius() < cfg.bandwidth {
        return Err(Error::InvalidParameter(format!(
            "shell index radius {} is below bandwidth {}",
            shells.radius(),
            cfg.bandwidth
        )));
    }
    let weights = cfg.weights();
    let mut meat = moments.transpose() * moments;
    for i in 0..n {
        let mi = moments.row(i);
        for &(j, s) in shells.within(i) {
            let w = weights.get(s).copied().unwrap_or(0.0);
            if w == 0.0 {
                continue;
            }
            let mj = moments.row(j);
            for a in 0..dim {
                let wa = w * mi[a];
                for b in 0..dim {
                    meat[(a, b)] += wa * mj[b];
                }
            }
        }
    }
    meat /= n as f64;
    Ok(meat)
}

/// Full joint coefficient covariance for the stacked regressions, ordered
/// (first-stage coefficients, reduced-form coefficients):
/// `Szz^-1 V Szz^-1 / n` with `Szz = Z'Z / n` block-diagonal over equations.
pub fn network_hac_joint(
    design: &PreparedDesign,
    eps_tilde: &[f64],
    eta: &[f64],
    shells: &ShellIndex,
    cfg: &HacConfig,
) -> Result<DMatrix<f64>> {
    let z = design.matrix();
    let (n, k) = z.shape();
    let mut moments = DMatrix::zeros(n, 2 * k);
    for i in 0..n {
        for c in 0..k {
            moments[(i, c)] = eps_tilde[i] * z[(i, c)];
            moments[(i, k + c)] = eta[i] * z[(i, c)];
        }
    }
    let meat = network_hac_meat(&moments, shells, cfg)?;
    let szz_inv = design.gram_inverse() * n as f64;
    let mut bread = DMatrix::zeros(2 * k, 2 * k);
    bread.view_mut((0, 0), (k, k)).copy_from(&szz_inv);
    bread.view_mut((k, k), (k, k)).copy_from(&szz_inv);
    Ok(&bread * meat * &bread / n as f64)
}

/// The instrument-coefficient block of [`network_hac_joint`], computed from
/// the per-node influence weights in `O(pairs)`. Returns the block and
/// whether it had to be projected onto the PSD cone.
pub fn network_hac_vcov(
    design: &PreparedDesign,
    eps_tilde: &[f64],
    eta: &[f64],
    shells: &ShellIndex,
    cfg: &HacConfig,
) -> Result<(VcovBlock, bool)> {
    let h = design.instrument_influence();
    let n = h.len();
    if shells.n() != n || eps_tilde.len() != n || eta.len() != n {
        return Err(Error::InvalidParameter("HAC inputs have inconsistent lengths".into()));
    }
    if shells.radius() < cfg.bandwidth {
        return Err(Error::InvalidParameter(format!(
            "shell index radius {} is below bandwidth {}",
            shells.radius(),
            cfg.bandwidth
        )));
    }
    let weights = cfg.weights();
    let p: Vec<f64> = eta.iter().zip(h).map(|(e, w)| e * w).collect();
    let q: Vec<f64> = eps_tilde.iter().zip(h).map(|(e, w)| e * w).collect();
    let (mut v_xi, mut v_pi, mut c_xp, mut c_px) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        let (mut sp, mut sq) = (p[i], q[i]);
        for &(j, s) in shells.within(i) {
            let w = weights.get(s).copied().unwrap_or(0.0);
            if w != 0.0 {
                sp += w * p[j];
                sq += w * q[j];
            }
        }
        v_xi += p[i] * sp;
        v_pi += q[i] * sq;
        c_xp += p[i] * sq;
        c_px += q[i] * sp;
    }
    // |c| <= sum|p| sum|q| since every weight is at most 1
    let scale = (p.iter().map(|v| v.abs()).sum::<f64>() * q.iter().map(|v| v.abs()).sum::<f64>()).max(f64::MIN_POSITIVE);
    if (c_xp - c_px).abs() > 1e-10 * scale {
        return Err(Error::Internal(format!("HAC cross term asymmetric: {c_xp} vs {c_px}")));
    }
    let raw = VcovBlock {
        v_xi,
        v_pi,
        cov: 0.5 * (c_xp + c_px),
    };
    Ok(raw.psd_floor())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_weights() {
        let b = HacConfig {
            kernel: Kernel::Bartlett,
            bandwidth: 2,
        };
        assert_eq!(b.weights(), vec![1.0, 0.5, 0.0]);
        assert_eq!(b.weight(5), 0.0);
        let r = HacConfig {
            kernel: Kernel::Rectangular,
            bandwidth: 3,
        };
        assert_eq!(r.weights(), vec![1.0; 4]);
        let zero = HacConfig {
            kernel: Kernel::Bartlett,
            bandwidth: 0,
        };
        assert_eq!(zero.weights(), vec![1.0]);
        assert_eq!(zero.weight(1), 0.0);
    }

    #[test]
    fn kernel_weights_nonincreasing() {
        for kernel in [Kernel::Bartlett, Kernel::Rectangular] {
            for bandwidth in 0..6 {
                let w = HacConfig { kernel, bandwidth }.weights();
                assert_eq!(w[0], 1.0);
                assert!(w.windows(2).all(|p| p[1] <= p[0]));
            }
        }
    }

    #[test]
    fn kernel_names() {
        assert_eq!(Kernel::parse("Bartlett"), Some(Kernel::Bartlett));
        assert_eq!(Kernel::parse("rectangular"), Some(Kernel::Rectangular));
        assert_eq!(Kernel::parse("parzen"), None);
    }
}
