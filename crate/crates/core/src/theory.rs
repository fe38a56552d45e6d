//! Analytic objects on concrete graphs: the variance-normalised first-stage
//! covariance conditional on `G`, its degree-rate upper bounds, the spectral
//! decomposition of the covariance with its diagonal remainder, and
//! near-boundary diagnostics.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dgp::ModelParams;
use crate::error::{Error, Result};
use crate::graph::{full_spectrum, largest_eigenvalue, NetworkOperator, DEFAULT_EIGEN_TOL};

/// Amplification `|1 - beta lambda|^-1` above which a graph is flagged.
pub const AMPLIFICATION_FLAG: f64 = 10.0;

fn lu_of(op: &NetworkOperator, beta: f64) -> Result<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    let n = op.n();
    let m = DMatrix::identity(n, n) - op.dense() * beta;
    let lu = m.lu();
    if !lu.is_invertible() {
        return Err(Error::SingularSystem {
            beta,
            row: 0,
            pivot: 0.0,
        });
    }
    Ok(lu)
}

/// `gamma I + delta G` applied on the right of a dense matrix.
fn times_contextual(m: &DMatrix<f64>, g: &DMatrix<f64>, params: &ModelParams) -> DMatrix<f64> {
    m * params.gamma + (m * g) * params.delta
}

/// Numerator and denominator of the variance-normalised covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovRatio {
    /// `(sigma_x^2 / n) Tr(G2 (gamma I + delta G) G (I - beta G)^-1)`.
    pub numerator: f64,
    /// `(sigma_x^2 / n) ||G2||_F^2`.
    pub denominator: f64,
    pub ratio: f64,
}

/// `Cov(G2 X, G Y | G) / Var(G2 X | G)` for i.i.d. mean-zero `X` with
/// variance `sigma_x^2`.
pub fn conditional_cov_parts(op: &NetworkOperator, params: &ModelParams, sigma_x: f64) -> Result<CovRatio> {
    let n = op.n();
    let g2 = op.second_order_matrix();
    let fro = g2.frobenius_sq();
    if fro == 0.0 {
        return Err(Error::DegenerateInstrument(
            "second-order operator is zero, the normalised covariance is undefined".into(),
        ));
    }
    let s = sigma_x * sigma_x / n as f64;
    let g = op.dense();
    let left = times_contextual(&g2.to_dense(), &g, params) * &g;
    let w = lu_of(op, params.beta)?
        .solve(&left)
        .ok_or_else(|| Error::Internal("LU solve failed".into()))?;
    let numerator = s * w.trace();
    let denominator = s * fro;
    Ok(CovRatio {
        numerator,
        denominator,
        ratio: numerator / denominator,
    })
}

pub fn conditional_varnorm_cov(op: &NetworkOperator, params: &ModelParams, sigma_x: f64) -> Result<f64> {
    Ok(conditional_cov_parts(op, params, sigma_x)?.ratio)
}

/// Degree-rate upper bounds for the normalised covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub n: usize,
    pub d: f64,
    pub w: f64,
    /// `1 / sqrt(d + d^3 / n)`.
    pub bound_unscaled: f64,
    /// `w / sqrt(d + d^3 / n)`.
    pub bound_scaled: f64,
    pub scaled: bool,
    /// `(|gamma| + |delta| / |beta|) / (1 - |beta| ||G||_2)` when finite.
    pub constant: Option<f64>,
}

impl BoundReport {
    /// The rate factor for the operator this report was built for.
    pub fn bound(&self) -> f64 {
        if self.scaled {
            self.bound_scaled
        } else {
            self.bound_unscaled
        }
    }

    pub fn with_constant(mut self, constant: Option<f64>) -> Self {
        self.constant = constant;
        self
    }
}

pub fn upper_bound(n: usize, d: f64, w: f64, scaled: bool) -> Result<BoundReport> {
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::InvalidParameter(format!("average degree must be positive, got {d}")));
    }
    if n == 0 || !(w > 0.0) {
        return Err(Error::InvalidParameter("bound needs n >= 1 and w > 0".into()));
    }
    let rate = 1.0 / (d + d * d * d / n as f64).sqrt();
    Ok(BoundReport {
        n,
        d,
        w,
        bound_unscaled: rate,
        bound_scaled: w * rate,
        scaled,
        constant: None,
    })
}

/// `(|gamma| + |delta| / |beta|) / (1 - |beta| norm2)`; `None` when `beta = 0`
/// or `|beta| norm2 >= 1`.
pub fn bound_constant(params: &ModelParams, norm2: f64) -> Option<f64> {
    let b = params.beta.abs();
    if b == 0.0 || b * norm2 >= 1.0 {
        return None;
    }
    Some((params.gamma.abs() + params.delta.abs() / b) / (1.0 - b * norm2))
}

/// Bound report for a concrete operator using its realised degrees.
pub fn graph_bound(op: &NetworkOperator, params: &ModelParams, scaled: bool) -> Result<BoundReport> {
    let g = op.base();
    let report = upper_bound(g.n(), g.mean_degree(), op.scale(), scaled)?;
    let norm2 = largest_eigenvalue(op, DEFAULT_EIGEN_TOL);
    Ok(report.with_constant(bound_constant(params, norm2)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralCovReport {
    /// `(sigma_x^2 / n) sum_j lambda_j^3 (gamma + delta lambda_j) / (1 - beta lambda_j)`.
    pub leading_sum: f64,
    /// `-(sigma_x^2 / n) Tr(D G (I - beta G)^-1 (gamma I + delta G))`, `D = diag(G^2)`.
    pub remainder_exact: f64,
    /// `(sigma_x^2 / n) ||D||_F ||G||_2 ||(I - beta G)^-1||_2 ||gamma I + delta G||_2`.
    pub remainder_bound: f64,
    /// Same product with `||G||_F` in place of `||G||_2` (Cauchy–Schwarz form).
    pub remainder_bound_frobenius: f64,
    /// `(sigma_x^2 / n) Tr(G2 (gamma I + delta G) G (I - beta G)^-1)` by direct solve.
    pub direct_trace: f64,
    pub boundary_count: usize,
    pub max_amplification: f64,
}

/// Spectral decomposition of the first-stage covariance. The leading sum uses
/// the eigenvalues; the remainder and the direct trace use an LU solve, so
/// `leading_sum + remainder_exact = direct_trace` checks two independent routes.
pub fn spectral_cov_decomposition(op: &NetworkOperator, params: &ModelParams, sigma_x: f64) -> Result<SpectralCovReport> {
    let n = op.n();
    let spectrum = full_spectrum(op)?;
    let (beta, gamma, delta) = (params.beta, params.gamma, params.delta);
    for (index, &eigenvalue) in spectrum.values.iter().enumerate() {
        if (1.0 - beta * eigenvalue).abs() < 1e-10 {
            return Err(Error::SingularBoundary { index, eigenvalue });
        }
    }
    let s = sigma_x * sigma_x / n.max(1) as f64;
    let leading: f64 = spectrum
        .values
        .iter()
        .map(|&l| l * l * l * (gamma + delta * l) / (1.0 - beta * l))
        .sum();

    let g = op.dense();
    let lu = lu_of(op, beta)?;
    let gb = times_contextual(&g, &g, params);
    let w = lu.solve(&gb).ok_or_else(|| Error::Internal("LU solve failed".into()))?;
    let inv_w2 = 1.0 / (op.scale() * op.scale());
    let diag_d: Vec<f64> = op.base().degrees().iter().map(|&k| k as f64 * inv_w2).collect();
    let remainder: f64 = -(0..n).map(|i| diag_d[i] * w[(i, i)]).sum::<f64>();

    let left = times_contextual(&op.second_order_matrix().to_dense(), &g, params) * &g;
    let direct = lu.solve(&left).ok_or_else(|| Error::Internal("LU solve failed".into()))?.trace();

    let norm_d = diag_d.iter().map(|v| v * v).sum::<f64>().sqrt();
    let norm_g = spectrum.values.iter().fold(0.0f64, |m, l| m.max(l.abs()));
    let norm_m = spectrum
        .values
        .iter()
        .fold(0.0f64, |m, &l| m.max(1.0 / (1.0 - beta * l).abs()));
    let norm_b = spectrum
        .values
        .iter()
        .fold(0.0f64, |m, &l| m.max((gamma + delta * l).abs()));
    let (boundary_count, max_amplification) = amplification(&spectrum.values, beta);
    Ok(SpectralCovReport {
        leading_sum: s * leading,
        remainder_exact: s * remainder,
        remainder_bound: s * norm_d * norm_g * norm_m * norm_b,
        remainder_bound_frobenius: s * norm_d * op.frobenius_sq().sqrt() * norm_m * norm_b,
        direct_trace: s * direct,
        boundary_count,
        max_amplification,
    })
}

fn amplification(values: &[f64], beta: f64) -> (usize, f64) {
    let boundary_count = values.iter().filter(|&&l| beta * l >= 1.0).count();
    let max_amplification = values
        .iter()
        .filter(|&&l| beta * l < 1.0)
        .map(|&l| 1.0 / (1.0 - beta * l).abs())
        .fold(0.0f64, f64::max);
    (boundary_count, max_amplification)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryReport {
    pub lambda_1: f64,
    pub boundary_count: usize,
    /// `max |1 - beta lambda_j|^-1` over eigenvalues with `beta lambda_j < 1`.
    pub max_amplification: f64,
    pub flagged: bool,
    /// Sign of `lambda_j^3 (gamma + delta lambda_j) / (1 - beta lambda_j)` per
    /// eigenvalue, in descending eigenvalue order.
    pub sign_profile: Vec<i8>,
}

impl BoundaryReport {
    pub fn positive_terms(&self) -> usize {
        self.sign_profile.iter().filter(|&&s| s > 0).count()
    }

    pub fn negative_terms(&self) -> usize {
        self.sign_profile.iter().filter(|&&s| s < 0).count()
    }
}

pub fn boundary_diagnostics(op: &NetworkOperator, params: &ModelParams) -> Result<BoundaryReport> {
    let spectrum = full_spectrum(op)?;
    let (beta, gamma, delta) = (params.beta, params.gamma, params.delta);
    let (boundary_count, max_amplification) = amplification(&spectrum.values, beta);
    let sign_profile = spectrum
        .values
        .iter()
        .map(|&l| {
            let term = l * l * l * (gamma + delta * l) / (1.0 - beta * l);
            if term > 0.0 {
                1
            } else if term < 0.0 {
                -1
            } else {
                0
            }
        })
        .collect();
    Ok(BoundaryReport {
        lambda_1: spectrum.values.first().copied().unwrap_or(0.0),
        boundary_count,
        max_amplification,
        flagged: max_amplification > AMPLIFICATION_FLAG || boundary_count > 0,
        sign_profile,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{sample_er, Network};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(beta: f64, gamma: f64, delta: f64) -> ModelParams {
        ModelParams {
            alpha: 0.0,
            beta,
            gamma,
            delta,
            sigma_eps: 1.0,
        }
    }

    #[test]
    fn no_contextual_effects_give_zero() {
        let g = sample_er(20, 0.2, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let op = NetworkOperator::scaled(g);
        assert_eq!(conditional_varnorm_cov(&op, &params(0.3, 0.0, 0.0), 1.0).unwrap(), 0.0);
    }

    #[test]
    fn path_trace_vanishes() {
        let op = NetworkOperator::unscaled(Network::path(3));
        let r = conditional_cov_parts(&op, &params(0.0, 1.0, 0.0), 1.0).unwrap();
        assert_eq!(r.numerator, 0.0);
        assert!((r.denominator - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.ratio, 0.0);
    }

    #[test]
    fn empty_second_order_is_degenerate() {
        let matching = Network::from_edges(4, [(0, 1), (2, 3)]).unwrap();
        for g in [Network::empty(4), matching] {
            assert!(matches!(
                conditional_varnorm_cov(&NetworkOperator::unscaled(g), &params(0.2, 1.0, 1.0), 1.0),
                Err(Error::DegenerateInstrument(_))
            ));
        }
    }

    #[test]
    fn upper_bound_formulas() {
        assert!(upper_bound(10, 0.0, 1.0, false).is_err());
        assert!(upper_bound(10, -1.0, 1.0, false).is_err());
        let r = upper_bound(1_000_000_000, 1.0, 1.0, false).unwrap();
        assert!((r.bound_unscaled - 1.0).abs() < 1e-8);
        let r = upper_bound(100, 2.0, 3.0, true).unwrap();
        assert!((r.bound_scaled - 3.0 * r.bound_unscaled).abs() < 1e-15);
        assert_eq!(r.bound(), r.bound_scaled);

        // dense: d = n p with p fixed vanishes
        let dense: Vec<f64> = [1e3, 1e4, 1e5]
            .iter()
            .map(|&n| upper_bound(n as usize, 0.1 * n, 1.0, false).unwrap().bound_unscaled)
            .collect();
        assert!(dense.windows(2).all(|w| w[1] < w[0]));
        // vanishing: d = n^-1/2 grows like n^1/4
        let vanishing: Vec<f64> = [1e3, 1e4, 1e5]
            .iter()
            .map(|&n: &f64| upper_bound(n as usize, n.powf(-0.5), 1.0, false).unwrap().bound_unscaled)
            .collect();
        assert!(vanishing.windows(2).all(|w| w[1] > w[0]));
        assert!((vanishing[2] / vanishing[1] - 10f64.powf(0.25)).abs() < 1e-3);
    }

    #[test]
    fn constant_defined_only_inside_the_stable_region() {
        let p = params(0.5, 0.1, 0.2);
        assert!((bound_constant(&p, 1.0).unwrap() - (0.1 + 0.4) / 0.5).abs() < 1e-15);
        assert!(bound_constant(&p, 2.0).is_none());
        assert!(bound_constant(&params(0.0, 0.1, 0.2), 1.0).is_none());
    }

    #[test]
    fn path_leading_sum_by_hand() {
        let op = NetworkOperator::unscaled(Network::path(3));
        let r = spectral_cov_decomposition(&op, &params(0.0, 0.0, 1.0), 1.0).unwrap();
        assert!((r.leading_sum - 8.0 / 3.0).abs() < 1e-12);
        assert!((r.leading_sum + r.remainder_exact - r.direct_trace).abs() < 1e-12);
    }

    #[test]
    fn empty_graph_decomposition_is_zero() {
        let op = NetworkOperator::unscaled(Network::empty(5));
        let r = spectral_cov_decomposition(&op, &params(0.4, 0.1, 0.2), 1.0).unwrap();
        assert_eq!((r.leading_sum, r.remainder_exact, r.direct_trace), (0.0, 0.0, 0.0));
    }

    #[test]
    fn identity_on_random_graph() {
        let g = sample_er(12, 0.35, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let op = NetworkOperator::scaled(g);
        let r = spectral_cov_decomposition(&op, &ModelParams::simulation(0.4666), 1.3).unwrap();
        let sum = r.leading_sum + r.remainder_exact;
        assert!((sum - r.direct_trace).abs() <= 1e-9 * r.direct_trace.abs().max(1e-12));
        assert!(r.remainder_exact.abs() <= r.remainder_bound_frobenius + 1e-9);
    }

    #[test]
    fn singular_boundary_reported() {
        // K2 has eigenvalues +/-1
        let op = NetworkOperator::unscaled(Network::complete(2));
        assert!(matches!(
            spectral_cov_decomposition(&op, &params(1.0, 0.1, 0.1), 1.0),
            Err(Error::SingularBoundary { index: 0, .. })
        ));
    }

    #[test]
    fn boundary_examples() {
        let k3 = NetworkOperator::unscaled(Network::complete(3));
        let r = boundary_diagnostics(&k3, &params(0.95, 0.1, 0.1)).unwrap();
        assert!(r.boundary_count >= 1 && r.flagged);
        let r = boundary_diagnostics(&k3, &params(0.0, 0.1, 0.1)).unwrap();
        assert_eq!(r.boundary_count, 0);
        assert!(r.max_amplification <= 1.0);

        let g = sample_er(300, 5.0 / 300.0, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        let op = NetworkOperator::scaled(g);
        let r = boundary_diagnostics(&op, &ModelParams::simulation(0.95)).unwrap();
        if r.boundary_count == 0 {
            let expect = 1.0 / (1.0 - 0.95 * r.lambda_1);
            assert!((r.max_amplification - expect).abs() < 1e-9 * expect);
        }
        assert_eq!(r.positive_terms() + r.negative_terms() + r.sign_profile.iter().filter(|&&s| s == 0).count(), 300);
    }

    #[test]
    fn monte_carlo_oracle_for_the_ratio() {
        use crate::dgp::sample_errors;
        let g = sample_er(8, 0.45, &mut ChaCha8Rng::seed_from_u64(12)).unwrap();
        let op = NetworkOperator::unscaled(g);
        let p = ModelParams::simulation(0.2);
        let parts = conditional_cov_parts(&op, &p, 1.0).unwrap();
        // simulate Cov(G2 X, G Y) with eps = 0 and X ~ N(0, 1)
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let solver = crate::dgp::OutcomeSolver::new(&op, p.beta).unwrap();
        let draws = 1_000_000;
        let n = op.n();
        let (mut cross, mut sq) = (Vec::with_capacity(draws), 0.0);
        for _ in 0..draws {
            let x = sample_errors(n, 1.0, &mut rng);
            let gx = op.apply(&x);
            let rhs: Vec<f64> = (0..n).map(|i| p.gamma * x[i] + p.delta * gx[i]).collect();
            let gy = op.apply(&solver.solve(&rhs));
            let g2x = op.apply_second_order(&x);
            let c: f64 = (0..n).map(|i| g2x[i] * gy[i]).sum::<f64>() / n as f64;
            sq += g2x.iter().map(|v| v * v).sum::<f64>() / n as f64;
            cross.push(c);
        }
        let mean = cross.iter().sum::<f64>() / draws as f64;
        let sd = (cross.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (draws - 1) as f64).sqrt();
        let se = sd / (draws as f64).sqrt();
        assert!((mean - parts.numerator).abs() < 3.0 * se, "{mean} vs {} (se {se})", parts.numerator);
        let var = sq / draws as f64;
        assert!((var - parts.denominator).abs() < 0.01 * parts.denominator);
    }
}
