//! Replication grids over `(n, degree regime, beta, scaling)`.
//!
//! Each cell samples one network and one covariate vector, fixed across
//! replications; every replication redraws the structural errors from its own
//! seeded stream. Replications run in parallel and are reduced in rep order,
//! so a summary is bit-identical for any thread count.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dgp::{sample_covariates, sample_errors, CovariateSpec, ModelParams, OutcomeSolver, StabilityFlag};
use crate::error::{Error, Result};
use crate::estimate::{
    exog_columns, fit_prepared, prepare_design, wald_interval, HacConfig, PreparedDesign, VarianceKind,
};
use crate::graph::{largest_eigenvalue, sample_er, Network, NetworkOperator, ShellIndex, DEFAULT_EIGEN_TOL};
use crate::theory::upper_bound;
use crate::weakiv::{ar_critical, ar_confidence_set_with_critical, ar_test_with_critical, ci_summary, CiSummary, ReducedForm};

pub const GRID_DEGREES: [f64; 6] = [0.25, 0.5, 0.75, 1.0, 2.0, 5.0];
pub const GRID_SIZES: [usize; 4] = [250, 500, 1000, 2000];
pub const GRID_BETAS: [f64; 2] = [ModelParams::BETA_MODERATE, ModelParams::BETA_HIGH];
pub const DEFAULT_REPS: usize = 1000;

/// SHA-256 of the master seed and length-prefixed tags; first 8 bytes, little endian.
pub fn derive_seed(master: u64, tags: &[&str]) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    for t in tags {
        h.update((t.len() as u64).to_le_bytes());
        h.update(t.as_bytes());
    }
    let out = h.finalize();
    let mut b = [0u8; 8];
    b.copy_from_slice(&out[..8]);
    u64::from_le_bytes(b)
}

/// Average degree as a function of `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Regime {
    /// `d = c`
    Constant { c: f64 },
    /// `d = c ln ln n`
    LogLog { c: f64 },
    /// `d = c n^-a`
    Vanishing { c: f64, a: f64 },
    /// `d = c n^a`
    Dense { c: f64, a: f64 },
}

impl Regime {
    pub fn degree(&self, n: usize) -> f64 {
        let nf = n as f64;
        match *self {
            Regime::Constant { c } => c,
            Regime::LogLog { c } => c * nf.ln().ln(),
            Regime::Vanishing { c, a } => c * nf.powf(-a),
            Regime::Dense { c, a } => c * nf.powf(a),
        }
    }

    /// Edge probability `d / n`; errors outside `[0, 1]`.
    pub fn edge_probability(&self, n: usize) -> Result<f64> {
        let p = self.degree(n) / n as f64;
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter(format!("regime {self} gives p = {p} at n = {n}")));
        }
        Ok(p)
    }

    pub fn label(&self) -> String {
        self.to_string()
    }

    /// `name:c` or `name:c,a`; the exponent defaults to 1/2.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = |msg: &str| Error::InvalidParameter(format!("regime `{s}`: {msg}"));
        let (name, params) = s
            .split_once(':')
            .ok_or_else(|| bad("expected name:params, e.g. constant:1"))?;
        let vals = params
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| bad("parameters must be numbers")))
            .collect::<Result<Vec<_>>>()?;
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(bad("parameters must be finite"));
        }
        let one = |r: Regime| if vals.len() == 1 { Ok(r) } else { Err(bad("takes one parameter")) };
        let two = |c: f64| match vals.len() {
            1 => Ok(0.5),
            2 => Ok(vals[1]),
            _ => Err(bad("takes one or two parameters")),
        }
        .map(|a| (c, a));
        let regime = match name.trim().to_ascii_lowercase().as_str() {
            "constant" => one(Regime::Constant { c: vals[0] })?,
            "loglog" => one(Regime::LogLog { c: vals[0] })?,
            "vanishing" => {
                let (c, a) = two(vals[0])?;
                Regime::Vanishing { c, a }
            }
            "dense" => {
                let (c, a) = two(vals[0])?;
                Regime::Dense { c, a }
            }
            _ => return Err(bad("unknown name (constant, loglog, vanishing, dense)")),
        };
        let c = match regime {
            Regime::Constant { c } | Regime::LogLog { c } | Regime::Vanishing { c, .. } | Regime::Dense { c, .. } => c,
        };
        if c < 0.0 {
            return Err(bad("scale must be nonnegative"));
        }
        Ok(regime)
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Regime::Constant { c } => write!(f, "constant:{c}"),
            Regime::LogLog { c } => write!(f, "loglog:{c}"),
            Regime::Vanishing { c, a } => write!(f, "vanishing:{c},{a}"),
            Regime::Dense { c, a } => write!(f, "dense:{c},{a}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scaling {
    Unscaled,
    Scaled,
}

impl Scaling {
    pub fn label(self) -> &'static str {
        match self {
            Scaling::Unscaled => "unscaled",
            Scaling::Scaled => "scaled",
        }
    }

    pub fn operator(self, g: Network) -> NetworkOperator {
        match self {
            Scaling::Unscaled => NetworkOperator::unscaled(g),
            Scaling::Scaled => NetworkOperator::scaled(g),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellConfig {
    pub n: usize,
    pub regime: Regime,
    pub beta_true: f64,
    pub scaling: Scaling,
    pub reps: usize,
    pub master_seed: u64,
    /// `beta` here is ignored in favour of `beta_true`.
    pub params: ModelParams,
    pub covariates: CovariateSpec,
    pub hac: HacConfig,
    pub alpha: f64,
}

impl CellConfig {
    pub fn new(n: usize, regime: Regime, beta_true: f64, scaling: Scaling) -> Self {
        Self {
            n,
            regime,
            beta_true,
            scaling,
            reps: DEFAULT_REPS,
            master_seed: 0,
            params: ModelParams::simulation(beta_true),
            covariates: CovariateSpec::default(),
            hac: HacConfig::default(),
            alpha: 0.05,
        }
    }

    pub fn model(&self) -> ModelParams {
        ModelParams {
            beta: self.beta_true,
            ..self.params
        }
    }

    pub fn cell_id(&self) -> String {
        format!("n={}|{}|beta={}|{}", self.n, self.regime, self.beta_true, self.scaling.label())
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::InvalidParameter("reps must be at least 1".into()));
        }
        if self.n == 0 {
            return Err(Error::InvalidParameter("n must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        self.regime.edge_probability(self.n)?;
        self.model().validate()?;
        self.covariates.validate()
    }

    fn graph_tags(&self) -> [String; 2] {
        [self.n.to_string(), self.regime.label()]
    }
}

/// The reference grid: 2 betas x 2 scalings x 6 degrees x 4 sizes.
pub fn paper_grid(reps: usize, master_seed: u64) -> Vec<CellConfig> {
    let mut cells = Vec::with_capacity(96);
    for scaling in [Scaling::Unscaled, Scaling::Scaled] {
        for beta in GRID_BETAS {
            for d in GRID_DEGREES {
                for n in GRID_SIZES {
                    let mut cfg = CellConfig::new(n, Regime::Constant { c: d }, beta, scaling);
                    cfg.reps = reps;
                    cfg.master_seed = master_seed;
                    cells.push(cfg);
                }
            }
        }
    }
    cells
}

/// Network for `(n, regime)` under a master seed; shared across beta and scaling.
pub fn cell_network(cfg: &CellConfig) -> Result<Network> {
    let [n, r] = cfg.graph_tags();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.master_seed, &["graph", &n, &r]));
    sample_er(cfg.n, cfg.regime.edge_probability(cfg.n)?, &mut rng)
}

pub fn cell_covariates(cfg: &CellConfig) -> Result<Vec<f64>> {
    let [n, r] = cfg.graph_tags();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.master_seed, &["covariates", &n, &r]));
    sample_covariates(cfg.n, &cfg.covariates, &mut rng)
}

/// Immutable per-cell state shared by every replication.
#[derive(Debug)]
pub struct CellSetup {
    pub op: NetworkOperator,
    pub x: Vec<f64>,
    pub gx: Vec<f64>,
    pub g2x: Vec<f64>,
    pub design: PreparedDesign,
    pub shells: ShellIndex,
    pub solver: OutcomeSolver,
    fingerprint: String,
}

impl CellSetup {
    pub fn build(cfg: &CellConfig) -> Result<Self> {
        cfg.validate()?;
        let g = cell_network(cfg)?;
        let x = cell_covariates(cfg)?;
        let op = cfg.scaling.operator(g);
        let gx = op.apply(&x);
        let g2x = op.apply_second_order(&x);
        let design = prepare_design(exog_columns(&x, &gx), ("G2X".to_string(), g2x.clone()))?;
        let shells = ShellIndex::new(op.base(), cfg.hac.bandwidth);
        let lambda_1 = largest_eigenvalue(&op, DEFAULT_EIGEN_TOL);
        let solver = OutcomeSolver::with_lambda(&op, cfg.beta_true, lambda_1)?;
        let fingerprint = fingerprint(op.base(), &x);
        Ok(Self {
            op,
            x,
            gx,
            g2x,
            design,
            shells,
            solver,
            fingerprint,
        })
    }

    /// Hash of the edge list and covariate bits.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }
}

fn fingerprint(g: &Network, x: &[f64]) -> String {
    let mut h = Sha256::new();
    h.update((g.n() as u64).to_le_bytes());
    for &(i, j) in g.edges() {
        h.update((i as u64).to_le_bytes());
        h.update((j as u64).to_le_bytes());
    }
    for v in x {
        h.update(v.to_bits().to_le_bytes());
    }
    h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Everything one replication contributes to the cell summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepOutcome {
    pub rep: usize,
    pub beta_hat: Option<f64>,
    pub corr: Option<f64>,
    /// `n^-1 sum (GY - mean)(G2X - mean)`
    pub cov_endog_instr: f64,
    pub var_instrument: f64,
    pub f_homo: Option<f64>,
    pub f_hac: Option<f64>,
    pub cover_t_homo: bool,
    pub cover_t_hac: bool,
    pub len_t_homo: Option<f64>,
    pub len_t_hac: Option<f64>,
    pub cover_ar_homo: bool,
    pub cover_ar_hac: bool,
    /// AR statistic at `beta_true`; NaN where the variance vanished.
    pub ar_stat_homo: f64,
    pub ar_stat_hac: f64,
    pub ci_ar_homo: CiSummary,
    pub ci_ar_hac: CiSummary,
    pub hac_repaired: bool,
    pub stability: StabilityFlag,
}

fn centred_moments(a: &[f64], b: &[f64]) -> (f64, f64) {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov = a.iter().zip(b).map(|(u, v)| (u - ma) * (v - mb)).sum::<f64>() / n;
    let var_b = b.iter().map(|v| (v - mb) * (v - mb)).sum::<f64>() / n;
    (cov, var_b)
}

pub fn run_rep(setup: &CellSetup, cfg: &CellConfig, rep: usize) -> Result<RepOutcome> {
    let params = cfg.model();
    let id = cfg.cell_id();
    let rep_tag = rep.to_string();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.master_seed, &["eps", &id, &rep_tag]));
    let eps = sample_errors(cfg.n, params.sigma_eps, &mut rng);
    let rhs: Vec<f64> = (0..cfg.n)
        .map(|i| params.alpha + params.gamma * setup.x[i] + params.delta * setup.gx[i] + eps[i])
        .collect();
    let y = setup.solver.solve(&rhs);
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Internal("non-finite outcome".into()));
    }
    let gy = setup.op.apply(&y);
    let fit = fit_prepared(&setup.design, &gy, &y, Some((&setup.shells, &cfg.hac)))?;
    let (cov_endog_instr, var_instrument) = centred_moments(&gy, &setup.g2x);

    let critical = ar_critical(cfg.alpha);
    let mut t = [(false, None); 2];
    let mut ar = [(false, f64::NAN, CiSummary { length: 0.0, is_infinite: false, is_empty: true }); 2];
    let mut f = [None; 2];
    for (slot, which) in [VarianceKind::Homoskedastic, VarianceKind::NetworkHac].into_iter().enumerate() {
        if let Some(w) = wald_interval(&fit, which, cfg.alpha)? {
            t[slot] = (w.covers(cfg.beta_true), Some(w.length()));
        }
        let rf = ReducedForm::from_fit(&fit, which)?;
        let test = ar_test_with_critical(cfg.beta_true, &rf, critical);
        let set = ar_confidence_set_with_critical(&rf, critical, 1.0 - cfg.alpha);
        ar[slot] = (!test.reject, test.statistic, ci_summary(&set));
        f[slot] = fit.first_stage_f(which).ok();
    }
    Ok(RepOutcome {
        rep,
        beta_hat: fit.beta_hat,
        corr: fit.corr_endog_instr,
        cov_endog_instr,
        var_instrument,
        f_homo: f[0],
        f_hac: f[1],
        cover_t_homo: t[0].0,
        cover_t_hac: t[1].0,
        len_t_homo: t[0].1,
        len_t_hac: t[1].1,
        cover_ar_homo: ar[0].0,
        cover_ar_hac: ar[1].0,
        ar_stat_homo: ar[0].1,
        ar_stat_hac: ar[1].1,
        ci_ar_homo: ar[0].2,
        ci_ar_hac: ar[1].2,
        hac_repaired: fit.hac_repaired,
        stability: setup.solver.stability(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum CellStatus {
    Ok,
    /// `G2X` vanished or was collinear with the exogenous block.
    DegenerateInstrument(String),
    Collinear(String),
    /// Setup failed for another reason (singular system, bad parameters).
    Failed(String),
}

impl CellStatus {
    pub fn label(&self) -> &'static str {
        match self {
            CellStatus::Ok => "ok",
            CellStatus::DegenerateInstrument(_) => "degenerate_instrument",
            CellStatus::Collinear(_) => "collinear",
            CellStatus::Failed(_) => "failed",
        }
    }

    pub fn detail(&self) -> &str {
        match self {
            CellStatus::Ok => "",
            CellStatus::DegenerateInstrument(s) | CellStatus::Collinear(s) | CellStatus::Failed(s) => s,
        }
    }

    fn from_error(e: &Error) -> Self {
        match e {
            Error::DegenerateInstrument(_) => CellStatus::DegenerateInstrument(e.to_string()),
            Error::Collinear { .. } => CellStatus::Collinear(e.to_string()),
            _ => CellStatus::Failed(e.to_string()),
        }
    }
}

/// Cell-level aggregates. Means of optional quantities are over reps where the
/// quantity exists; `None` prints as NA.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell_id: String,
    pub n: usize,
    pub regime: String,
    pub beta: f64,
    pub scaling: Scaling,
    pub reps: usize,
    pub status: CellStatus,
    pub failed_reps: usize,
    pub counted_reps: usize,
    pub mean_degree: Option<f64>,
    pub w: Option<f64>,
    pub lambda_1: Option<f64>,
    pub stable_reps: usize,
    pub near_boundary_reps: usize,
    pub unstable_reps: usize,
    pub mean_beta_hat: Option<f64>,
    pub mean_corr: Option<f64>,
    pub mean_cov: Option<f64>,
    pub mean_var_instrument: Option<f64>,
    pub mean_f: Option<f64>,
    pub mean_f_hac: Option<f64>,
    pub coverage_t_homo: Option<f64>,
    pub coverage_t_hac: Option<f64>,
    pub coverage_ar_homo: Option<f64>,
    pub coverage_ar_hac: Option<f64>,
    pub mean_ci_len_t_homo: Option<f64>,
    pub mean_ci_len_t_hac: Option<f64>,
    /// Over finite (bounded or empty) AR sets only.
    pub mean_ci_len_ar: Option<f64>,
    pub mean_ci_len_ar_hac: Option<f64>,
    pub pct_ci_infinite_ar: Option<f64>,
    pub pct_ci_infinite_ar_hac: Option<f64>,
    pub hac_repairs: usize,
    pub network_fingerprint: String,
}

impl CellSummary {
    fn skeleton(cfg: &CellConfig, status: CellStatus) -> Self {
        Self {
            cell_id: cfg.cell_id(),
            n: cfg.n,
            regime: cfg.regime.label(),
            beta: cfg.beta_true,
            scaling: cfg.scaling,
            reps: cfg.reps,
            status,
            failed_reps: 0,
            counted_reps: 0,
            mean_degree: None,
            w: None,
            lambda_1: None,
            stable_reps: 0,
            near_boundary_reps: 0,
            unstable_reps: 0,
            mean_beta_hat: None,
            mean_corr: None,
            mean_cov: None,
            mean_var_instrument: None,
            mean_f: None,
            mean_f_hac: None,
            coverage_t_homo: None,
            coverage_t_hac: None,
            coverage_ar_homo: None,
            coverage_ar_hac: None,
            mean_ci_len_t_homo: None,
            mean_ci_len_t_hac: None,
            mean_ci_len_ar: None,
            mean_ci_len_ar_hac: None,
            pct_ci_infinite_ar: None,
            pct_ci_infinite_ar_hac: None,
            hac_repairs: 0,
            network_fingerprint: String::new(),
        }
    }
}

fn mean_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut sum, mut count) = (0.0, 0usize);
    for v in values {
        sum += v;
        count += 1;
    }
    (count > 0).then(|| sum / count as f64)
}

fn share(flags: impl Iterator<Item = bool>) -> Option<f64> {
    mean_of(flags.map(|b| if b { 1.0 } else { 0.0 }))
}

/// Summary plus the per-rep results (errors as messages), in rep order.
#[derive(Debug, Clone)]
pub struct CellRun {
    pub summary: CellSummary,
    pub reps: Vec<std::result::Result<RepOutcome, String>>,
}

impl CellRun {
    pub fn outcomes(&self) -> impl Iterator<Item = &RepOutcome> {
        self.reps.iter().filter_map(|r| r.as_ref().ok())
    }
}

pub fn summarize(cfg: &CellConfig, setup: &CellSetup, reps: &[std::result::Result<RepOutcome, String>]) -> CellSummary {
    let mut s = CellSummary::skeleton(cfg, CellStatus::Ok);
    let g = setup.op.base();
    s.mean_degree = Some(g.mean_degree());
    s.w = Some(setup.op.scale());
    s.lambda_1 = Some(setup.solver.lambda_1());
    s.network_fingerprint = setup.fingerprint().to_string();
    let ok: Vec<&RepOutcome> = reps.iter().filter_map(|r| r.as_ref().ok()).collect();
    s.failed_reps = reps.len() - ok.len();
    s.counted_reps = ok.len();
    for o in &ok {
        match o.stability {
            StabilityFlag::Stable => s.stable_reps += 1,
            StabilityFlag::NearBoundary => s.near_boundary_reps += 1,
            StabilityFlag::Unstable => s.unstable_reps += 1,
        }
    }
    s.mean_beta_hat = mean_of(ok.iter().filter_map(|o| o.beta_hat));
    s.mean_corr = mean_of(ok.iter().filter_map(|o| o.corr));
    s.mean_cov = mean_of(ok.iter().map(|o| o.cov_endog_instr));
    s.mean_var_instrument = mean_of(ok.iter().map(|o| o.var_instrument));
    s.mean_f = mean_of(ok.iter().filter_map(|o| o.f_homo));
    s.mean_f_hac = mean_of(ok.iter().filter_map(|o| o.f_hac));
    s.coverage_t_homo = share(ok.iter().map(|o| o.cover_t_homo));
    s.coverage_t_hac = share(ok.iter().map(|o| o.cover_t_hac));
    s.coverage_ar_homo = share(ok.iter().map(|o| o.cover_ar_homo));
    s.coverage_ar_hac = share(ok.iter().map(|o| o.cover_ar_hac));
    s.mean_ci_len_t_homo = mean_of(ok.iter().filter_map(|o| o.len_t_homo));
    s.mean_ci_len_t_hac = mean_of(ok.iter().filter_map(|o| o.len_t_hac));
    s.mean_ci_len_ar = mean_of(ok.iter().filter(|o| !o.ci_ar_homo.is_infinite).map(|o| o.ci_ar_homo.length));
    s.mean_ci_len_ar_hac = mean_of(ok.iter().filter(|o| !o.ci_ar_hac.is_infinite).map(|o| o.ci_ar_hac.length));
    s.pct_ci_infinite_ar = share(ok.iter().map(|o| o.ci_ar_homo.is_infinite));
    s.pct_ci_infinite_ar_hac = share(ok.iter().map(|o| o.ci_ar_hac.is_infinite));
    s.hac_repairs = ok.iter().filter(|o| o.hac_repaired).count();
    s
}

pub fn run_cell_detailed(cfg: &CellConfig) -> CellRun {
    let setup = match CellSetup::build(cfg) {
        Ok(s) => s,
        Err(e) => {
            return CellRun {
                summary: CellSummary::skeleton(cfg, CellStatus::from_error(&e)),
                reps: Vec::new(),
            }
        }
    };
    let reps: Vec<_> = (0..cfg.reps)
        .into_par_iter()
        .map(|r| run_rep(&setup, cfg, r).map_err(|e| e.to_string()))
        .collect();
    if let Some(Err(e)) = reps.iter().find(|r| r.is_err()) {
        log::warn!("{}: {} failed reps, first: {e}", cfg.cell_id(), reps.iter().filter(|r| r.is_err()).count());
    }
    CellRun {
        summary: summarize(cfg, &setup, &reps),
        reps,
    }
}

pub fn run_cell(cfg: &CellConfig) -> CellSummary {
    run_cell_detailed(cfg).summary
}

/// One summary per cell, in input order; cell failures land in `status`.
pub fn run_grid(cells: &[CellConfig]) -> Vec<CellSummary> {
    cells.par_iter().map(run_cell).collect()
}

pub fn run_grid_detailed(cells: &[CellConfig]) -> Vec<CellRun> {
    cells.par_iter().map(run_cell_detailed).collect()
}

/// Mean and standard deviation over seeds of the per-graph degree-rate bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCurveRow {
    pub n: usize,
    pub regime: String,
    pub mean_bound: Option<f64>,
    pub sd_bound: Option<f64>,
    pub graphs: usize,
    /// Graphs with no edges, where the realised degree is zero.
    pub skipped: usize,
}

/// Per-graph bounds use the realised mean degree and `w` of each sample.
pub fn bound_curve(regime: &Regime, ns: &[usize], seeds: usize, master_seed: u64, scaled: bool) -> Result<Vec<BoundCurveRow>> {
    let label = regime.label();
    ns.iter()
        .map(|&n| {
            let p = regime.edge_probability(n)?;
            let n_tag = n.to_string();
            let per_seed: Vec<Option<f64>> = (0..seeds)
                .into_par_iter()
                .map(|s| {
                    let seed = derive_seed(master_seed, &["bound", &label, &n_tag, &s.to_string()]);
                    let g = sample_er(n, p, &mut ChaCha8Rng::seed_from_u64(seed))?;
                    if g.edge_count() == 0 {
                        return Ok(None);
                    }
                    let w = crate::graph::scale_weight(&g);
                    Ok(Some(upper_bound(n, g.mean_degree(), w, scaled)?.bound()))
                })
                .collect::<Result<_>>()?;
            let values: Vec<f64> = per_seed.iter().flatten().copied().collect();
            let mean = mean_of(values.iter().copied());
            let sd = mean.filter(|_| values.len() > 1).map(|m| {
                (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
            });
            Ok(BoundCurveRow {
                n,
                regime: label.clone(),
                mean_bound: mean,
                sd_bound: sd,
                graphs: values.len(),
                skipped: seeds - values.len(),
            })
        })
        .collect()
}
