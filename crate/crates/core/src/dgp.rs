//! The linear-in-means data-generating process
//! `Y = alpha + beta G Y + gamma X + delta G X + eps`: covariate and error
//! draws, and two independent solvers for the equilibrium outcome.

use nalgebra::{DMatrix, DVector, Dyn, LU};
use rand::Rng;
use rand_distr::{Bernoulli, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{largest_eigenvalue, NetworkOperator, DEFAULT_EIGEN_TOL};

/// Structural coefficients and the error scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub sigma_eps: f64,
}

impl ModelParams {
    pub const ALPHA: f64 = 0.7683;
    pub const GAMMA: f64 = 0.0834;
    pub const DELTA: f64 = 0.1507;
    pub const BETA_MODERATE: f64 = 0.4666;
    pub const BETA_HIGH: f64 = 0.95;

    /// Simulation-design coefficients with the given peer effect.
    pub fn simulation(beta: f64) -> Self {
        Self {
            alpha: Self::ALPHA,
            beta,
            gamma: Self::GAMMA,
            delta: Self::DELTA,
            sigma_eps: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.alpha, self.beta, self.gamma, self.delta, self.sigma_eps]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParameter("model parameters must be finite".into()));
        }
        if self.sigma_eps < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "sigma_eps must be nonnegative, got {}",
                self.sigma_eps
            )));
        }
        Ok(())
    }
}

/// `X_i = B_i exp(mu + sigma Z_i)` with `B_i ~ Bernoulli(1 - zero_mass)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovariateSpec {
    pub zero_mass: f64,
    pub lognormal_mu: f64,
    pub lognormal_sigma: f64,
    pub demean: bool,
}

impl Default for CovariateSpec {
    fn default() -> Self {
        Self {
            zero_mass: 1.0 - 0.945_833_3,
            lognormal_mu: 1.0,
            lognormal_sigma: 3.0,
            demean: false,
        }
    }
}

impl CovariateSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.zero_mass) {
            return Err(Error::InvalidParameter(format!(
                "zero_mass {} outside [0, 1]",
                self.zero_mass
            )));
        }
        if !(self.lognormal_sigma >= 0.0) || !self.lognormal_mu.is_finite() {
            return Err(Error::InvalidParameter(
                "lognormal parameters must be finite with sigma >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Position of `|beta| lambda_1` relative to the invertibility boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StabilityFlag {
    Stable,
    NearBoundary,
    Unstable,
}

impl StabilityFlag {
    pub fn classify(beta: f64, lambda_1: f64) -> Self {
        let r = beta.abs() * lambda_1;
        if r >= 1.0 {
            StabilityFlag::Unstable
        } else if r >= 0.9 {
            StabilityFlag::NearBoundary
        } else {
            StabilityFlag::Stable
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            StabilityFlag::Stable => "stable",
            StabilityFlag::NearBoundary => "near_boundary",
            StabilityFlag::Unstable => "unstable",
        }
    }
}

/// One simulated data set and its network aggregates.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedSample {
    pub x: Vec<f64>,
    pub eps: Vec<f64>,
    pub y: Vec<f64>,
    pub gx: Vec<f64>,
    pub gy: Vec<f64>,
    pub g2x: Vec<f64>,
    pub stability: StabilityFlag,
}

pub fn sample_covariates<R: Rng + ?Sized>(n: usize, spec: &CovariateSpec, rng: &mut R) -> Result<Vec<f64>> {
    spec.validate()?;
    let gate = Bernoulli::new(1.0 - spec.zero_mass).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut x: Vec<f64> = (0..n)
        .map(|_| {
            let on = gate.sample(rng);
            let z: f64 = StandardNormal.sample(rng);
            if on {
                (spec.lognormal_mu + spec.lognormal_sigma * z).exp()
            } else {
                0.0
            }
        })
        .collect();
    if spec.demean && n > 0 {
        let mean = x.iter().sum::<f64>() / n as f64;
        x.iter_mut().for_each(|v| *v -= mean);
    }
    Ok(x)
}

/// I.i.d. `N(0, sigma^2)` draws.
pub fn sample_errors<R: Rng + ?Sized>(n: usize, sigma: f64, rng: &mut R) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            sigma * z
        })
        .collect()
}

/// `alpha + gamma x + delta G x + eps`.
pub fn structural_rhs(op: &NetworkOperator, params: &ModelParams, x: &[f64], eps: &[f64]) -> Vec<f64> {
    let gx = op.apply(x);
    x.iter()
        .zip(&gx)
        .zip(eps)
        .map(|((xi, gxi), ei)| params.alpha + params.gamma * xi + params.delta * gxi + ei)
        .collect()
}

/// Dense LU of `I - beta G`, factored once and reused for every right-hand side.
#[derive(Debug, Clone)]
pub struct OutcomeSolver {
    beta: f64,
    lambda_1: f64,
    stability: StabilityFlag,
    lu: LU<f64, Dyn, Dyn>,
}

impl OutcomeSolver {
    pub fn new(op: &NetworkOperator, beta: f64) -> Result<Self> {
        let lambda_1 = largest_eigenvalue(op, DEFAULT_EIGEN_TOL);
        Self::with_lambda(op, beta, lambda_1)
    }

    /// As [`OutcomeSolver::new`] with a precomputed top eigenvalue.
    pub fn with_lambda(op: &NetworkOperator, beta: f64, lambda_1: f64) -> Result<Self> {
        let n = op.n();
        let mut m = DMatrix::identity(n, n);
        let off = -beta / op.scale();
        for &(i, j) in op.base().edges() {
            m[(i, j)] = off;
            m[(j, i)] = off;
        }
        let scale = 1.0f64.max(off.abs());
        let lu = m.lu();
        let u = lu.u();
        for row in 0..n {
            let pivot = u[(row, row)];
            if pivot.abs() < 1e-12 * scale {
                return Err(Error::SingularSystem { beta, row, pivot });
            }
        }
        Ok(Self {
            beta,
            lambda_1,
            stability: StabilityFlag::classify(beta, lambda_1),
            lu,
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn lambda_1(&self) -> f64 {
        self.lambda_1
    }

    pub fn stability(&self) -> StabilityFlag {
        self.stability
    }

    /// `(I - beta G)^{-1} rhs`.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let b = DVector::from_column_slice(rhs);
        self.lu
            .solve(&b)
            .expect("factorization was checked nonsingular")
            .data
            .into()
    }
}

/// Direct solve of the equilibrium outcome, with all network aggregates filled.
pub fn solve_outcomes(op: &NetworkOperator, params: &ModelParams, x: &[f64], eps: &[f64]) -> Result<SimulatedSample> {
    params.validate()?;
    check_lengths(op, x, eps)?;
    let solver = OutcomeSolver::new(op, params.beta)?;
    let y = solver.solve(&structural_rhs(op, params, x, eps));
    let mut sample = SimulatedSample {
        x: x.to_vec(),
        eps: eps.to_vec(),
        y,
        gx: Vec::new(),
        gy: Vec::new(),
        g2x: Vec::new(),
        stability: solver.stability(),
    };
    build_instruments(op, &mut sample);
    Ok(sample)
}

fn check_lengths(op: &NetworkOperator, x: &[f64], eps: &[f64]) -> Result<()> {
    if x.len() != op.n() || eps.len() != op.n() {
        return Err(Error::InvalidParameter(format!(
            "vector lengths ({}, {}) do not match {} nodes",
            x.len(),
            eps.len(),
            op.n()
        )));
    }
    Ok(())
}

/// Partial sums of `sum_k beta^k G^k rhs`, stopping once a term's sup-norm is
/// at most `tol`.
pub fn neumann_outcomes(
    op: &NetworkOperator,
    params: &ModelParams,
    x: &[f64],
    eps: &[f64],
    tol: f64,
    k_max: usize,
) -> Result<Vec<f64>> {
    params.validate()?;
    check_lengths(op, x, eps)?;
    let radius = params.beta.abs() * largest_eigenvalue(op, DEFAULT_EIGEN_TOL);
    if radius >= 1.0 {
        return Err(Error::Divergent { spectral_radius: radius });
    }
    let mut term = structural_rhs(op, params, x, eps);
    let mut sum = term.clone();
    let sup = |v: &[f64]| v.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    // a geometric tail bound turns the term tolerance into a sum tolerance
    let tail = 1.0 / (1.0 - radius);
    let mut k = 0;
    while sup(&term) * tail > tol && params.beta != 0.0 {
        if k == k_max {
            return Err(Error::NonConvergence { k_max });
        }
        term = op.apply(&term);
        term.iter_mut().for_each(|v| *v *= params.beta);
        for (s, t) in sum.iter_mut().zip(&term) {
            *s += t;
        }
        k += 1;
    }
    Ok(sum)
}

/// Fills `gx`, `gy` and `g2x` from `x` and `y`.
pub fn build_instruments(op: &NetworkOperator, sample: &mut SimulatedSample) {
    sample.gx = op.apply(&sample.x);
    sample.gy = op.apply(&sample.y);
    sample.g2x = op.apply_second_order(&sample.x);
}

/// `|| y - (alpha + beta G y + gamma x + delta G x + eps) ||_inf`.
pub fn fixed_point_residual(op: &NetworkOperator, params: &ModelParams, sample: &SimulatedSample) -> f64 {
    let rhs = structural_rhs(op, params, &sample.x, &sample.eps);
    let gy = op.apply(&sample.y);
    sample
        .y
        .iter()
        .zip(&rhs)
        .zip(&gy)
        .map(|((y, r), g)| (y - r - params.beta * g).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{sample_er, Network};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn reference(beta: f64) -> ModelParams {
        ModelParams::simulation(beta)
    }

    #[test]
    fn covariate_edge_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let all_zero = CovariateSpec {
            zero_mass: 1.0,
            ..Default::default()
        };
        assert!(sample_covariates(50, &all_zero, &mut rng).unwrap().iter().all(|&v| v == 0.0));
        let constant = CovariateSpec {
            zero_mass: 0.0,
            lognormal_sigma: 0.0,
            ..Default::default()
        };
        let x = sample_covariates(50, &constant, &mut rng).unwrap();
        assert!(x.iter().all(|&v| v == 1f64.exp()));
        let bad = CovariateSpec {
            zero_mass: 1.5,
            ..Default::default()
        };
        assert!(sample_covariates(5, &bad, &mut rng).is_err());
    }

    #[test]
    fn zero_fraction_matches_gate() {
        let x = sample_covariates(100_000, &CovariateSpec::default(), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let frac = x.iter().filter(|&&v| v == 0.0).count() as f64 / x.len() as f64;
        assert!((frac - 0.0541667).abs() < 0.005, "{frac}");
    }

    #[test]
    fn demeaned_covariates_sum_to_zero() {
        let spec = CovariateSpec {
            demean: true,
            lognormal_sigma: 1.0,
            ..Default::default()
        };
        let x = sample_covariates(1000, &spec, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert!(x.iter().sum::<f64>().abs() < 1e-9);
    }

    #[test]
    fn error_draws() {
        assert!(sample_errors(10, 0.0, &mut ChaCha8Rng::seed_from_u64(4)).iter().all(|&v| v == 0.0));
        let e = sample_errors(100_000, 1.0, &mut ChaCha8Rng::seed_from_u64(4));
        let mean = e.iter().sum::<f64>() / e.len() as f64;
        let var = e.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (e.len() - 1) as f64;
        assert!((0.98..=1.02).contains(&var), "{var}");
        assert_eq!(e, sample_errors(100_000, 1.0, &mut ChaCha8Rng::seed_from_u64(4)));
    }

    #[test]
    fn beta_zero_is_the_right_hand_side() {
        let op = NetworkOperator::unscaled(Network::path(4));
        let params = reference(0.0);
        let x = [1.0, 2.0, 0.0, 3.0];
        let eps = [0.1, -0.2, 0.3, 0.0];
        let s = solve_outcomes(&op, &params, &x, &eps).unwrap();
        assert_eq!(s.y, structural_rhs(&op, &params, &x, &eps));
    }

    #[test]
    fn empty_graph_has_no_spillovers() {
        let op = NetworkOperator::scaled(Network::empty(3));
        let params = reference(0.95);
        let x = [1.0, 2.0, 3.0];
        let eps = [0.5, 0.0, -0.5];
        let s = solve_outcomes(&op, &params, &x, &eps).unwrap();
        for i in 0..3 {
            let expect = params.alpha + params.gamma * x[i] + eps[i];
            assert!((s.y[i] - expect).abs() < 1e-15);
        }
        assert!(s.gx.iter().chain(&s.gy).chain(&s.g2x).all(|&v| v == 0.0));
    }

    #[test]
    fn scaled_path_by_elimination() {
        // P3 with w = sqrt(2): the system is tridiagonal with off-diagonal -b,
        // b = beta / sqrt(2); eliminate by hand.
        let params = reference(0.4666);
        let op = NetworkOperator::scaled(Network::path(3));
        let w = 2f64.sqrt();
        let b = params.beta / w;
        let x = [1.0, 0.0, 0.0];
        let gx = [0.0, 1.0 / w, 0.0];
        let r: Vec<f64> = (0..3).map(|i| params.alpha + params.gamma * x[i] + params.delta * gx[i]).collect();
        // rows: y0 - b y1 = r0; -b y0 + y1 - b y2 = r1; -b y1 + y2 = r2
        // y0 = r0 + b y1, y2 = r2 + b y1 => y1 (1 - 2 b^2) = r1 + b (r0 + r2)
        let y1 = (r[1] + b * (r[0] + r[2])) / (1.0 - 2.0 * b * b);
        let expect = [r[0] + b * y1, y1, r[2] + b * y1];
        let s = solve_outcomes(&op, &params, &x, &[0.0; 3]).unwrap();
        for i in 0..3 {
            assert!((s.y[i] - expect[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn neumann_cases() {
        let params = reference(0.0);
        let op = NetworkOperator::unscaled(Network::complete(3));
        let x = [1.0, 2.0, 3.0];
        let eps = [0.0; 3];
        let direct = solve_outcomes(&op, &params, &x, &eps).unwrap().y;
        assert_eq!(neumann_outcomes(&op, &params, &x, &eps, 1e-10, 0).unwrap(), direct);

        let scaled = NetworkOperator::scaled(Network::complete(3));
        let params = reference(0.4666);
        let direct = solve_outcomes(&scaled, &params, &x, &eps).unwrap().y;
        let series = neumann_outcomes(&scaled, &params, &x, &eps, 1e-10, 10_000).unwrap();
        for (a, b) in direct.iter().zip(&series) {
            assert!((a - b).abs() < 1e-8);
        }

        let params = reference(0.95);
        assert!(matches!(
            neumann_outcomes(&op, &params, &x, &eps, 1e-10, 10_000),
            Err(Error::Divergent { .. })
        ));
        assert!(matches!(
            neumann_outcomes(&scaled, &reference(0.9), &x, &eps, 1e-14, 3),
            Err(Error::NonConvergence { k_max: 3 })
        ));
    }

    #[test]
    fn path_instruments() {
        let op = NetworkOperator::unscaled(Network::path(3));
        let mut s = solve_outcomes(&op, &reference(0.2), &[1.0; 3], &[0.0; 3]).unwrap();
        assert_eq!(s.gx, vec![1.0, 2.0, 1.0]);
        assert_eq!(s.g2x, vec![1.0, 0.0, 1.0]);
        s.y = vec![0.0; 3];
        build_instruments(&op, &mut s);
        assert_eq!(s.gy, vec![0.0; 3]);
    }

    #[test]
    fn complete_graph_instruments_are_collinear() {
        let op = NetworkOperator::unscaled(Network::complete(3));
        let s = solve_outcomes(&op, &reference(0.2), &[1.0, 4.0, 2.0], &[0.0; 3]).unwrap();
        assert_eq!(s.g2x, s.gx);
    }

    #[test]
    fn stability_flags() {
        assert_eq!(StabilityFlag::classify(0.95, 1.9 / 0.95), StabilityFlag::Unstable);
        assert_eq!(StabilityFlag::classify(0.95, 1.0), StabilityFlag::NearBoundary);
        assert_eq!(StabilityFlag::classify(0.4666, 1.0), StabilityFlag::Stable);
        let op = NetworkOperator::unscaled(Network::complete(3));
        let s = solve_outcomes(&op, &reference(0.95), &[1.0; 3], &[0.0; 3]).unwrap();
        assert_eq!(s.stability, StabilityFlag::Unstable);
    }

    #[test]
    fn singular_system_is_reported() {
        // K2 with beta = 1: rows (1, -1) and (-1, 1)
        let op = NetworkOperator::unscaled(Network::complete(2));
        assert!(matches!(
            OutcomeSolver::new(&op, 1.0),
            Err(Error::SingularSystem { .. })
        ));
    }

    #[test]
    fn scaled_entries_are_unscaled_over_w() {
        let g = sample_er(40, 0.1, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let unscaled = NetworkOperator::unscaled(g.clone()).dense();
        let scaled = NetworkOperator::scaled(g);
        let w = scaled.scale();
        let d = scaled.dense();
        for (a, b) in unscaled.iter().zip(d.iter()) {
            assert_eq!(*b, *a / w);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn solvers_agree_and_fixed_point_holds(seed in 0u64..100_000, n in 2usize..60, d in 0.2f64..6.0, beta in -0.9f64..0.9, scaled in any::<bool>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = sample_er(n, (d / n as f64).min(1.0), &mut rng).unwrap();
            let op = if scaled { NetworkOperator::scaled(g) } else { NetworkOperator::unscaled(g) };
            let params = reference(beta);
            let x = sample_covariates(n, &CovariateSpec { lognormal_sigma: 1.0, ..Default::default() }, &mut rng).unwrap();
            let eps = sample_errors(n, 1.0, &mut rng);
            let s = solve_outcomes(&op, &params, &x, &eps).unwrap();
            let sup = s.y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            prop_assert!(fixed_point_residual(&op, &params, &s) <= 1e-8 * (1.0 + sup));
            let tol = 1e-10;
            if beta.abs() * largest_eigenvalue(&op, DEFAULT_EIGEN_TOL) < 0.95 {
                let series = neumann_outcomes(&op, &params, &x, &eps, tol, 100_000).unwrap();
                for (a, b) in s.y.iter().zip(&series) {
                    prop_assert!((a - b).abs() <= 10.0 * tol);
                }
            }
        }

        #[test]
        fn superposition(seed in 0u64..100_000, n in 2usize..40, beta in -0.9f64..0.9) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let op = NetworkOperator::scaled(sample_er(n, (3.0 / n as f64).min(1.0), &mut rng).unwrap());
            let solver = OutcomeSolver::new(&op, beta).unwrap();
            let a = sample_errors(n, 1.0, &mut rng);
            let b = sample_errors(n, 1.0, &mut rng);
            let sum: Vec<f64> = a.iter().zip(&b).map(|(u, v)| u + v).collect();
            let (ya, yb, ys) = (solver.solve(&a), solver.solve(&b), solver.solve(&sum));
            for i in 0..n {
                prop_assert!((ya[i] + yb[i] - ys[i]).abs() <= 1e-10 * (1.0 + ys[i].abs()));
            }
        }
    }
}
