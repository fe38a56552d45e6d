//! Least squares for the just-identified network-IV system.
//!
//! Both regressions share the regressor set `Z = (1, X, GX, G2X)`: the first
//! stage of `GY` on `Z` gives `pi_hat`, the reduced structural regression of
//! `Y` on `Z` gives `xi_hat`, and `beta_hat = xi_hat / pi_hat`. Variance
//! blocks are finite-sample covariances of `(xi_hat, pi_hat)`.

mod hac;

pub use hac::{network_hac_joint, network_hac_meat, network_hac_vcov, HacConfig, Kernel};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dgp::SimulatedSample;
use crate::error::{Error, Result};
use crate::graph::ShellIndex;
use crate::stats::normal_critical;

/// Relative residual norm below which a column counts as a linear
/// combination of the ones before it.
const COLLINEAR_TOL: f64 = 1e-7;

/// Regressor matrix with its factorisation, reusable across responses.
///
/// Columns are rescaled to unit norm before a thin QR factorisation so that
/// covariates on very different scales do not spoil the rank check.
#[derive(Debug, Clone)]
pub struct PreparedDesign {
    names: Vec<String>,
    z: DMatrix<f64>,
    q: DMatrix<f64>,
    r_inv: DMatrix<f64>,
    col_scale: Vec<f64>,
    gram_inv: DMatrix<f64>,
    influence: Vec<f64>,
}

impl PreparedDesign {
    /// The last column plays the role of the excluded instrument.
    pub fn new(columns: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let k = columns.len();
        if k == 0 {
            return Err(Error::InvalidParameter("design needs at least one column".into()));
        }
        let n = columns[0].1.len();
        if columns.iter().any(|(_, c)| c.len() != n) {
            return Err(Error::InvalidParameter("design columns differ in length".into()));
        }
        let mut z = DMatrix::zeros(n, k);
        let mut q = DMatrix::zeros(n, k);
        let mut col_scale = Vec::with_capacity(k);
        for (c, (name, col)) in columns.iter().enumerate() {
            let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !norm.is_finite() {
                return Err(Error::InvalidParameter(format!("column `{name}` is not finite")));
            }
            if norm == 0.0 {
                return Err(Error::Collinear { column: name.clone() });
            }
            for i in 0..n {
                z[(i, c)] = col[i];
                q[(i, c)] = col[i] / norm;
            }
            col_scale.push(norm);
        }
        // Gram-Schmidt with one re-orthogonalisation pass on the unit-norm
        // columns; R[c, c] is then the relative residual of column c.
        let mut r = DMatrix::zeros(k, k);
        for c in 0..k {
            for _ in 0..2 {
                for p in 0..c {
                    let proj = q.column(p).dot(&q.column(c));
                    r[(p, c)] += proj;
                    let qp = q.column(p).clone_owned();
                    q.column_mut(c).axpy(-proj, &qp, 1.0);
                }
            }
            let norm = q.column(c).norm();
            if norm < COLLINEAR_TOL {
                return Err(Error::Collinear {
                    column: columns[c].0.clone(),
                });
            }
            r[(c, c)] = norm;
            q.column_mut(c).unscale_mut(norm);
        }
        if n <= k {
            return Err(Error::InvalidParameter(format!("{n} observations for {k} regressors")));
        }
        let r_inv = r
            .solve_upper_triangular(&DMatrix::identity(k, k))
            .ok_or_else(|| Error::Internal("triangular factor not invertible".into()))?;
        // (Z'Z)^-1 = D^-1 R^-1 R^-T D^-1
        let mut gram_inv = &r_inv * r_inv.transpose();
        for a in 0..k {
            for b in 0..k {
                gram_inv[(a, b)] /= col_scale[a] * col_scale[b];
            }
        }
        let inst = k - 1;
        let influence = (0..n)
            .map(|i| (0..k).map(|c| z[(i, c)] * gram_inv[(c, inst)]).sum())
            .collect();
        Ok(Self {
            names: columns.into_iter().map(|(name, _)| name).collect(),
            z,
            q,
            r_inv,
            col_scale,
            gram_inv,
            influence,
        })
    }

    pub fn n(&self) -> usize {
        self.z.nrows()
    }

    pub fn k(&self) -> usize {
        self.z.ncols()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.z
    }

    /// `(Z'Z)^-1`.
    pub fn gram_inverse(&self) -> &DMatrix<f64> {
        &self.gram_inv
    }

    /// Index of the excluded instrument (the last column).
    pub fn instrument_index(&self) -> usize {
        self.k() - 1
    }

    pub fn instrument_column(&self) -> Vec<f64> {
        self.z.column(self.instrument_index()).iter().copied().collect()
    }

    /// `h = Z (Z'Z)^-1 e_inst`: the instrument coefficient is `h'y`.
    pub fn instrument_influence(&self) -> &[f64] {
        &self.influence
    }

    pub fn coefficients(&self, response: &[f64]) -> Vec<f64> {
        let y = DVector::from_column_slice(response);
        let b = &self.r_inv * self.q.tr_mul(&y);
        b.iter().zip(&self.col_scale).map(|(v, s)| v / s).collect()
    }

    pub fn residuals(&self, response: &[f64], coef: &[f64]) -> Vec<f64> {
        let fitted = &self.z * DVector::from_column_slice(coef);
        response.iter().zip(fitted.iter()).map(|(y, f)| y - f).collect()
    }
}

/// Ordinary least squares fit.
#[derive(Debug, Clone)]
pub struct OlsFit {
    pub coefficients: Vec<f64>,
    pub residuals: Vec<f64>,
    /// `(Z'Z)^-1`.
    pub gram_inverse: DMatrix<f64>,
}

pub fn ols(columns: Vec<(String, Vec<f64>)>, response: &[f64]) -> Result<OlsFit> {
    let design = PreparedDesign::new(columns)?;
    if response.len() != design.n() {
        return Err(Error::InvalidParameter("response length differs from design".into()));
    }
    let coefficients = design.coefficients(response);
    let residuals = design.residuals(response, &coefficients);
    Ok(OlsFit {
        coefficients,
        residuals,
        gram_inverse: design.gram_inv,
    })
}

/// Regressions of one just-identified network-IV fit.
#[derive(Debug, Clone)]
pub struct Design {
    /// Included exogenous columns, e.g. `(1, X, GX)`.
    pub exog: Vec<(String, Vec<f64>)>,
    /// Excluded instrument, e.g. `G2X`.
    pub instrument: (String, Vec<f64>),
    /// Endogenous regressor `GY`.
    pub endog: Vec<f64>,
    /// Outcome `Y`.
    pub response: Vec<f64>,
}

impl Design {
    pub fn from_sample(s: &SimulatedSample) -> Self {
        Self {
            exog: exog_columns(&s.x, &s.gx),
            instrument: ("G2X".into(), s.g2x.clone()),
            endog: s.gy.clone(),
            response: s.y.clone(),
        }
    }

    pub fn prepare(&self) -> Result<PreparedDesign> {
        prepare_design(self.exog.clone(), self.instrument.clone())
    }
}

/// `(1, X, GX)` with their conventional names.
pub fn exog_columns(x: &[f64], gx: &[f64]) -> Vec<(String, Vec<f64>)> {
    vec![
        ("const".into(), vec![1.0; x.len()]),
        ("X".into(), x.to_vec()),
        ("GX".into(), gx.to_vec()),
    ]
}

/// Rejects an all-zero instrument before the rank check, so an empty
/// second-order network reports a degenerate instrument rather than a
/// collinearity.
pub fn prepare_design(exog: Vec<(String, Vec<f64>)>, instrument: (String, Vec<f64>)) -> Result<PreparedDesign> {
    if instrument.1.iter().all(|&v| v == 0.0) {
        return Err(Error::DegenerateInstrument(format!(
            "`{}` is identically zero (no two-step walks)",
            instrument.0
        )));
    }
    let mut columns = exog;
    columns.push(instrument);
    PreparedDesign::new(columns)
}

/// Finite-sample covariance of `(xi_hat, pi_hat)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VcovBlock {
    pub v_xi: f64,
    pub v_pi: f64,
    pub cov: f64,
}

impl VcovBlock {
    /// `Omega(b0) = V_xi - 2 b0 Cov + b0^2 V_pi`, the variance of `xi - b0 pi`.
    pub fn omega(&self, beta0: f64) -> f64 {
        self.v_xi - 2.0 * beta0 * self.cov + beta0 * beta0 * self.v_pi
    }

    pub fn is_psd(&self) -> bool {
        self.v_xi >= 0.0 && self.v_pi >= 0.0 && self.cov * self.cov <= self.v_xi * self.v_pi
    }

    /// Nearest PSD block in Frobenius norm (negative eigenvalues set to 0),
    /// plus whether anything changed.
    pub fn psd_floor(self) -> (Self, bool) {
        if self.is_psd() {
            return (self, false);
        }
        let (a, b, c) = (self.v_xi, self.v_pi, self.cov);
        let mid = 0.5 * (a + b);
        let rad = (0.25 * (a - b) * (a - b) + c * c).sqrt();
        let (l1, l2) = (mid + rad, mid - rad);
        let repaired = if l1 <= 0.0 {
            Self {
                v_xi: 0.0,
                v_pi: 0.0,
                cov: 0.0,
            }
        } else if l2 >= 0.0 {
            self
        } else {
            // keep only the top eigenpair; eigenvector (c, l1 - a) or (l1 - b, c)
            let (u, v) = if (l1 - a).abs() + c.abs() >= (l1 - b).abs() + c.abs() {
                (c, l1 - a)
            } else {
                (l1 - b, c)
            };
            let norm2 = u * u + v * v;
            if norm2 == 0.0 {
                Self {
                    v_xi: a.max(0.0),
                    v_pi: b.max(0.0),
                    cov: 0.0,
                }
            } else {
                Self {
                    v_xi: l1 * u * u / norm2,
                    v_pi: l1 * v * v / norm2,
                    cov: l1 * u * v / norm2,
                }
            }
        };
        (repaired, true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VarianceKind {
    Homoskedastic,
    NetworkHac,
}

impl VarianceKind {
    pub fn label(self) -> &'static str {
        match self {
            VarianceKind::Homoskedastic => "homo",
            VarianceKind::NetworkHac => "hac",
        }
    }
}

/// One TSLS fit of the friends-of-friends IV system.
#[derive(Debug, Clone)]
pub struct IvFit {
    pub n: usize,
    pub k: usize,
    /// First stage `GY ~ Z`.
    pub coef_first: Vec<f64>,
    /// Reduced structural regression `Y ~ Z`.
    pub coef_reduced: Vec<f64>,
    pub pi_hat: f64,
    pub xi_hat: f64,
    /// `xi_hat / pi_hat`; `None` when `pi_hat` is exactly zero.
    pub beta_hat: Option<f64>,
    /// First-stage residuals.
    pub eps_tilde: Vec<f64>,
    /// Reduced-regression residuals.
    pub eta: Vec<f64>,
    pub fitted_first: Vec<f64>,
    pub vcov_homo: VcovBlock,
    pub vcov_hac: Option<VcovBlock>,
    /// The HAC block needed a PSD projection.
    pub hac_repaired: bool,
    /// `corr(GY, G2X)`; `None` when either is constant.
    pub corr_endog_instr: Option<f64>,
}

impl IvFit {
    pub fn vcov(&self, which: VarianceKind) -> Result<&VcovBlock> {
        match which {
            VarianceKind::Homoskedastic => Ok(&self.vcov_homo),
            VarianceKind::NetworkHac => self.vcov_hac.as_ref().ok_or(Error::MissingVariance("hac")),
        }
    }

    pub fn first_stage_f(&self, which: VarianceKind) -> Result<f64> {
        first_stage_f(self, which)
    }
}

/// Homoskedastic block: residual moments with the `n - k` divisor times the
/// instrument entry of `(Z'Z)^-1`.
pub fn homoskedastic_vcov(design: &PreparedDesign, eps_tilde: &[f64], eta: &[f64]) -> VcovBlock {
    let dof = (design.n() - design.k()) as f64;
    let inst = design.instrument_index();
    let g = design.gram_inverse()[(inst, inst)];
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u * v).sum::<f64>();
    VcovBlock {
        v_xi: dot(eta, eta) / dof * g,
        v_pi: dot(eps_tilde, eps_tilde) / dof * g,
        cov: dot(eta, eps_tilde) / dof * g,
    }
}

/// Fits both regressions on a prepared design. The HAC block is computed only
/// when shells and a configuration are supplied.
pub fn fit_prepared(
    design: &PreparedDesign,
    endog: &[f64],
    response: &[f64],
    hac: Option<(&ShellIndex, &HacConfig)>,
) -> Result<IvFit> {
    let n = design.n();
    if endog.len() != n || response.len() != n {
        return Err(Error::InvalidParameter("fit vectors differ in length from design".into()));
    }
    let inst = design.instrument_index();
    let coef_first = design.coefficients(endog);
    let coef_reduced = design.coefficients(response);
    let eps_tilde = design.residuals(endog, &coef_first);
    let eta = design.residuals(response, &coef_reduced);
    let pi_hat = coef_first[inst];
    let xi_hat = coef_reduced[inst];
    let beta_hat = (pi_hat != 0.0).then(|| xi_hat / pi_hat);
    let vcov_homo = homoskedastic_vcov(design, &eps_tilde, &eta);
    let (vcov_hac, hac_repaired) = match hac {
        Some((shells, cfg)) => {
            let (block, repaired) = network_hac_vcov(design, &eps_tilde, &eta, shells, cfg)?;
            (Some(block), repaired)
        }
        None => (None, false),
    };
    let fitted_first = endog.iter().zip(&eps_tilde).map(|(g, e)| g - e).collect();
    let corr_endog_instr = corr_endog_instrument(endog, design.z.column(inst).as_slice()).ok();
    Ok(IvFit {
        n,
        k: design.k(),
        coef_first,
        coef_reduced,
        pi_hat,
        xi_hat,
        beta_hat,
        eps_tilde,
        eta,
        fitted_first,
        vcov_homo,
        vcov_hac,
        hac_repaired,
        corr_endog_instr,
    })
}

pub fn fit_iv(design: &Design, hac: Option<(&ShellIndex, &HacConfig)>) -> Result<IvFit> {
    let prepared = design.prepare()?;
    fit_prepared(&prepared, &design.endog, &design.response, hac)
}

/// `F = pi_hat^2 / Var(pi_hat)` for the single excluded instrument.
pub fn first_stage_f(fit: &IvFit, which: VarianceKind) -> Result<f64> {
    let block = fit.vcov(which)?;
    if fit.pi_hat == 0.0 {
        return Ok(0.0);
    }
    if block.v_pi <= 0.0 {
        return Err(Error::DegenerateVariance("first-stage coefficient variance is zero".into()));
    }
    Ok(fit.pi_hat * fit.pi_hat / block.v_pi)
}

/// Pearson correlation between `GY` and `G2X`.
pub fn corr_endog_instrument(gy: &[f64], g2x: &[f64]) -> Result<f64> {
    let n = gy.len() as f64;
    let (ma, mb) = (gy.iter().sum::<f64>() / n, g2x.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (a, b) in gy.iter().zip(g2x) {
        let (da, db) = (a - ma, b - mb);
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if saa == 0.0 {
        return Err(Error::UndefinedCorrelation("GY"));
    }
    if sbb == 0.0 {
        return Err(Error::UndefinedCorrelation("G2X"));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Wald interval `beta_hat +/- z se` with the delta-method standard error
/// `sqrt(Omega(beta_hat)) / |pi_hat|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaldInterval {
    pub estimate: f64,
    pub se: f64,
    pub lo: f64,
    pub hi: f64,
}

impl WaldInterval {
    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    /// Membership; an interval whose standard error is numerically zero
    /// relative to the estimate is judged with a 1e-9 relative tolerance.
    pub fn covers(&self, beta: f64) -> bool {
        if self.se <= 1e-12 * self.estimate.abs() {
            return (beta - self.estimate).abs() <= 1e-9 * self.estimate.abs().max(1.0);
        }
        self.lo <= beta && beta <= self.hi
    }
}

pub fn wald_interval(fit: &IvFit, which: VarianceKind, alpha: f64) -> Result<Option<WaldInterval>> {
    let block = fit.vcov(which)?;
    let Some(b) = fit.beta_hat else {
        return Ok(None);
    };
    let se = block.omega(b).max(0.0).sqrt() / fit.pi_hat.abs();
    if !se.is_finite() || !b.is_finite() {
        return Ok(None);
    }
    let z = normal_critical(alpha);
    Ok(Some(WaldInterval {
        estimate: b,
        se,
        lo: b - z * se,
        hi: b + z * se,
    }))
}

#[cfg(test)]
mod tests;
