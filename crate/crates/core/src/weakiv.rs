//! Anderson–Rubin inference for the scalar peer effect.
//!
//! Under `H0: beta = b0` the combination `g(b0) = xi_hat - b0 pi_hat` has mean
//! zero whatever the instrument strength, so `AR(b0) = g^2 / Var(g)` is
//! compared with a chi-square(1) critical value. Inverting the test over `b0`
//! is a quadratic inequality, which gives bounded, two-ray, whole-line or
//! empty confidence sets.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::estimate::{IvFit, VarianceKind, VcovBlock};
use crate::stats::{chi2_quantile, chi2_sf};

/// Relative size below which `Omega(b0)` counts as numerically zero.
const OMEGA_ZERO: f64 = 1e-12;

/// The pieces of a fit the AR test needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReducedForm {
    pub xi: f64,
    pub pi: f64,
    pub vcov: VcovBlock,
}

impl ReducedForm {
    pub fn from_fit(fit: &IvFit, which: VarianceKind) -> Result<Self> {
        Ok(Self {
            xi: fit.xi_hat,
            pi: fit.pi_hat,
            vcov: *fit.vcov(which)?,
        })
    }
}

/// `Omega(b0) = V_xi - 2 b0 Cov + b0^2 V_pi`.
pub fn omega_at(beta0: f64, v_xi: f64, v_pi: f64, cov: f64) -> f64 {
    v_xi - 2.0 * beta0 * cov + beta0 * beta0 * v_pi
}

/// `chi2_1` critical value at level `alpha`.
pub fn ar_critical(alpha: f64) -> f64 {
    chi2_quantile(1.0 - alpha, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArResult {
    pub beta0: f64,
    /// `NaN` when `valid` is false.
    pub statistic: f64,
    pub p_value: f64,
    pub reject: bool,
    pub omega: f64,
    /// False when `Omega(b0)` is not positive; such points are never rejected.
    pub valid: bool,
}

pub fn ar_test_rf(beta0: f64, rf: &ReducedForm, alpha: f64) -> ArResult {
    ar_test_with_critical(beta0, rf, ar_critical(alpha))
}

pub fn ar_test_with_critical(beta0: f64, rf: &ReducedForm, critical: f64) -> ArResult {
    let g = rf.xi - beta0 * rf.pi;
    let omega = rf.vcov.omega(beta0);
    let floor = OMEGA_ZERO * rf.xi.abs().max((beta0 * rf.pi).abs());
    if !(omega > floor * floor) {
        return ArResult {
            beta0,
            statistic: f64::NAN,
            p_value: 1.0,
            reject: false,
            omega,
            valid: false,
        };
    }
    let statistic = g * g / omega;
    ArResult {
        beta0,
        statistic,
        p_value: chi2_sf(statistic, 1.0),
        reject: statistic > critical,
        omega,
        valid: true,
    }
}

pub fn ar_test(beta0: f64, fit: &IvFit, which: VarianceKind, alpha: f64) -> Result<ArResult> {
    Ok(ar_test_rf(beta0, &ReducedForm::from_fit(fit, which)?, alpha))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SetKind {
    Empty,
    Bounded { lo: f64, hi: f64 },
    /// `(-inf, left_hi] U [right_lo, inf)`.
    TwoRays { left_hi: f64, right_lo: f64 },
    /// `(-inf, hi]`, from a vanishing quadratic coefficient.
    LeftRay { hi: f64 },
    /// `[lo, inf)`, from a vanishing quadratic coefficient.
    RightRay { lo: f64 },
    WholeLine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceSet {
    pub kind: SetKind,
    pub level: f64,
}

impl ConfidenceSet {
    pub fn contains(&self, b: f64) -> bool {
        match self.kind {
            SetKind::Empty => false,
            SetKind::Bounded { lo, hi } => lo <= b && b <= hi,
            SetKind::TwoRays { left_hi, right_lo } => b <= left_hi || b >= right_lo,
            SetKind::LeftRay { hi } => b <= hi,
            SetKind::RightRay { lo } => b >= lo,
            SetKind::WholeLine => true,
        }
    }

    pub fn is_bounded(&self) -> bool {
        matches!(self.kind, SetKind::Bounded { .. } | SetKind::Empty)
    }
}

/// Solves `A b^2 + B b + C <= 0` with `A = pi^2 - c V_pi`,
/// `B = -2 xi pi + 2 c Cov`, `C = xi^2 - c V_xi`.
pub fn ar_confidence_set_rf(rf: &ReducedForm, alpha: f64) -> ConfidenceSet {
    ar_confidence_set_with_critical(rf, ar_critical(alpha), 1.0 - alpha)
}

pub fn ar_confidence_set_with_critical(rf: &ReducedForm, c: f64, level: f64) -> ConfidenceSet {
    let v = &rf.vcov;
    let kind = if v.v_xi == 0.0 && v.v_pi == 0.0 && v.cov == 0.0 {
        // Omega vanishes identically, so every point is invalid and accepted
        SetKind::WholeLine
    } else {
        let a = rf.pi * rf.pi - c * v.v_pi;
        let b = -2.0 * rf.xi * rf.pi + 2.0 * c * v.cov;
        let cc = rf.xi * rf.xi - c * v.v_xi;
        solve_quadratic_set(a, b, cc)
    };
    ConfidenceSet { kind, level }
}

fn solve_quadratic_set(a: f64, b: f64, c: f64) -> SetKind {
    if a == 0.0 {
        return if b > 0.0 {
            SetKind::LeftRay { hi: -c / b }
        } else if b < 0.0 {
            SetKind::RightRay { lo: -c / b }
        } else if c <= 0.0 {
            SetKind::WholeLine
        } else {
            SetKind::Empty
        };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return if a > 0.0 { SetKind::Empty } else { SetKind::WholeLine };
    }
    // numerically stable pair of roots
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    let (r1, r2) = if q == 0.0 {
        (0.0, 0.0)
    } else {
        let (u, v) = (q / a, c / q);
        (u.min(v), u.max(v))
    };
    if a > 0.0 {
        SetKind::Bounded { lo: r1, hi: r2 }
    } else if disc == 0.0 {
        SetKind::WholeLine
    } else {
        SetKind::TwoRays {
            left_hi: r1,
            right_lo: r2,
        }
    }
}

pub fn ar_confidence_set_closed_form(fit: &IvFit, which: VarianceKind, alpha: f64) -> Result<ConfidenceSet> {
    Ok(ar_confidence_set_rf(&ReducedForm::from_fit(fit, which)?, alpha))
}

/// Evenly spaced grid including both end points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl GridSpec {
    pub fn values(&self) -> Vec<f64> {
        match self.points {
            0 => Vec::new(),
            1 => vec![self.lo],
            m => (0..m)
                .map(|k| self.lo + (self.hi - self.lo) * k as f64 / (m - 1) as f64)
                .collect(),
        }
    }
}

/// Grid points not rejected by the pointwise AR test.
pub fn grid_confidence_set_rf(rf: &ReducedForm, alpha: f64, grid: &[f64]) -> Vec<f64> {
    let c = ar_critical(alpha);
    grid.iter()
        .copied()
        .filter(|&b| !ar_test_with_critical(b, rf, c).reject)
        .collect()
}

pub fn grid_confidence_set(fit: &IvFit, which: VarianceKind, alpha: f64, grid: &GridSpec) -> Result<Vec<f64>> {
    Ok(grid_confidence_set_rf(&ReducedForm::from_fit(fit, which)?, alpha, &grid.values()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CiSummary {
    /// `f64::INFINITY` for unbounded sets, 0 for the empty set.
    pub length: f64,
    pub is_infinite: bool,
    pub is_empty: bool,
}

pub fn ci_summary(set: &ConfidenceSet) -> CiSummary {
    match set.kind {
        SetKind::Empty => CiSummary {
            length: 0.0,
            is_infinite: false,
            is_empty: true,
        },
        SetKind::Bounded { lo, hi } => CiSummary {
            length: hi - lo,
            is_infinite: false,
            is_empty: false,
        },
        _ => CiSummary {
            length: f64::INFINITY,
            is_infinite: true,
            is_empty: false,
        },
    }
}
