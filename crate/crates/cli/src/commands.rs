//! Subcommand bodies. Each returns the process exit code on success.

use std::path::Path;

use chrono::Utc;
use peeriv_core::dgp::{sample_covariates, CovariateSpec, ModelParams, StabilityFlag};
use peeriv_core::estimate::{exog_columns, prepare_design};
use peeriv_core::graph::{
    degree_stats, largest_eigenvalue, load_edge_list, square_offdiag, DegreeSummary, Indexing, Network,
    DEFAULT_EIGEN_TOL,
};
use peeriv_core::montecarlo::{bound_curve, cell_network, derive_seed, run_grid, CellConfig, Regime, Scaling};
use peeriv_core::theory::{boundary_diagnostics, AMPLIFICATION_FLAG};
use peeriv_core::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::args::{BoundsArgs, DiagnoseArgs, GraphStatsArgs, Preset, SimulateArgs};
use crate::config::{resolve, SimConfig};
use crate::report::{self, CellEntry, RunManifest};
use crate::{CliError, EXIT_OK, EXIT_PARTIAL, EXIT_TOTAL};

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    match threads {
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| CliError::Usage(format!("--threads: {e}")))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

pub fn simulate(args: &SimulateArgs) -> Result<i32, CliError> {
    let cfg = resolve(args)?;
    if cfg.reproduce == Some(Preset::Bounds) {
        let (regimes, ns) = cfg.bound_design();
        return bounds_run(&regimes, &ns, cfg.reps, cfg.seed, &cfg.out_dir, cfg.threads, "simulate --reproduce bounds", &cfg);
    }
    let started = Utc::now().to_rfc3339();
    let cells = cfg.cells()?;
    ensure_dir(&cfg.out_dir)?;
    log::info!("running {} cells with {} reps", cells.len(), cfg.reps);
    let rows = with_threads(cfg.threads, || run_grid(&cells))?;
    let files = report::write_simulation_tables(&cfg.out_dir, &rows)?;
    let failed = rows.iter().filter(|s| CellEntry::failed(s)).count();
    for s in rows.iter().filter(|s| CellEntry::failed(s)) {
        log::warn!("cell {} failed: {} {}", s.cell_id, s.status.label(), s.status.detail());
    }
    let manifest = RunManifest {
        command: "simulate".into(),
        version: report::artifact_version(),
        master_seed: cfg.seed,
        started,
        finished: Utc::now().to_rfc3339(),
        config: serde_json::to_value(&cfg)?,
        files: report::file_names(&files),
        cells_total: rows.len(),
        cells_failed: failed,
        cells: rows.iter().map(CellEntry::from_summary).collect(),
    };
    report::write_manifest(&cfg.out_dir, &manifest)?;
    Ok(match failed {
        0 => EXIT_OK,
        f if f == rows.len() => EXIT_TOTAL,
        _ => EXIT_PARTIAL,
    })
}

#[allow(clippy::too_many_arguments)]
fn bounds_run<C: Serialize>(
    regimes: &[Regime],
    ns: &[usize],
    seeds: usize,
    master_seed: u64,
    out_dir: &Path,
    threads: Option<usize>,
    command: &str,
    echo: &C,
) -> Result<i32, CliError> {
    if seeds == 0 {
        return Err(CliError::Usage("--seeds must be at least 1".into()));
    }
    if ns.is_empty() || ns.contains(&0) {
        return Err(CliError::Usage("--n needs positive sizes".into()));
    }
    let started = Utc::now().to_rfc3339();
    ensure_dir(out_dir)?;
    let mut files = Vec::new();
    for (name, scaled) in [("bounds_unscaled.csv", false), ("bounds_scaled.csv", true)] {
        let mut rows = Vec::new();
        for r in regimes {
            let curve = with_threads(threads, || bound_curve(r, ns, seeds, master_seed, scaled))??;
            rows.extend(curve);
        }
        let path = out_dir.join(name);
        report::write_bound_table(&path, &rows)?;
        files.push(path);
    }
    let manifest = RunManifest {
        command: command.into(),
        version: report::artifact_version(),
        master_seed,
        started,
        finished: Utc::now().to_rfc3339(),
        config: serde_json::to_value(echo)?,
        files: report::file_names(&files),
        cells_total: 0,
        cells_failed: 0,
        cells: Vec::new(),
    };
    report::write_manifest(out_dir, &manifest)?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct BoundsEcho<'a> {
    regime: Vec<String>,
    n: &'a [usize],
    seeds: usize,
    seed: u64,
    out_dir: &'a Path,
    threads: Option<usize>,
}

pub fn bounds(args: &BoundsArgs) -> Result<i32, CliError> {
    let echo = BoundsEcho {
        regime: args.regime.iter().map(Regime::label).collect(),
        n: &args.n,
        seeds: args.seeds,
        seed: args.seed,
        out_dir: &args.out_dir,
        threads: args.threads,
    };
    bounds_run(&args.regime, &args.n, args.seeds, args.seed, &args.out_dir, args.threads, "bounds", &echo)
}

fn load(path: &Path, one_indexed: bool, nodes: Option<usize>) -> Result<Network, CliError> {
    let indexing = if one_indexed { Indexing::One } else { Indexing::Zero };
    let load = load_edge_list(path, indexing, nodes).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    if load.self_loops_dropped > 0 {
        log::warn!("{}: dropped {} self-loops", path.display(), load.self_loops_dropped);
    }
    Ok(load.network)
}

/// Rows for `G`, the 0/1 support of `G2` and the weighted `G2` degrees.
pub fn graph_stats_rows(g: &Network) -> Vec<Vec<String>> {
    let g2 = square_offdiag(g);
    let support: Vec<f64> = g2.support_degrees().iter().map(|&d| d as f64).collect();
    vec![
        report::graph_stats_row("G", g.n(), &degree_stats(g)),
        report::graph_stats_row("G2_support", g.n(), &DegreeSummary::from_values(&support)),
        report::graph_stats_row("G2_weighted", g.n(), &DegreeSummary::from_values(&g2.row_sums())),
    ]
}

pub fn graph_stats(args: &GraphStatsArgs) -> Result<i32, CliError> {
    let g = load(&args.path, args.one_indexed, args.nodes)?;
    if g.n() == 0 {
        return Err(CliError::Input(format!("{}: edge list has no nodes (n = 0)", args.path.display())));
    }
    let text = report::csv_string(&report::GRAPH_STATS_COLUMNS, &graph_stats_rows(&g))?;
    match &args.out {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(EXIT_OK)
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnoseReport {
    pub source: String,
    pub n: usize,
    pub edges: usize,
    pub mean_degree: f64,
    pub max_degree: usize,
    pub scaling: Scaling,
    pub w: f64,
    pub lambda_1: f64,
    pub beta: f64,
    pub beta_lambda_1: f64,
    pub stability: StabilityFlag,
    pub boundary_count: Option<usize>,
    pub max_amplification: Option<f64>,
    pub amplification_flag: Option<bool>,
    pub positive_terms: Option<usize>,
    pub negative_terms: Option<usize>,
    pub instrument_status: String,
    /// Angle between `GX` and `G2X` in degrees; 0 means collinear.
    pub collinearity_angle_deg: Option<f64>,
}

pub const DIAGNOSE_COLUMNS: [&str; 18] = [
    "source",
    "n",
    "edges",
    "mean_degree",
    "max_degree",
    "scaling",
    "w",
    "lambda_1",
    "beta",
    "beta_lambda_1",
    "stability",
    "boundary_count",
    "max_amplification",
    "amplification_flag",
    "positive_terms",
    "negative_terms",
    "instrument_status",
    "collinearity_angle_deg",
];

/// Angle via `atan2(|b_perp| |a|, |a.b|)`, exact zero for parallel vectors.
pub fn collinearity_angle(a: &[f64], b: &[f64]) -> Option<f64> {
    let dot: f64 = a.iter().zip(b).map(|(u, v)| u * v).sum();
    let aa: f64 = a.iter().map(|u| u * u).sum();
    let bb: f64 = b.iter().map(|v| v * v).sum();
    if aa == 0.0 || bb == 0.0 {
        return None;
    }
    let t = dot / aa;
    let perp = a.iter().zip(b).map(|(u, v)| (v - t * u).powi(2)).sum::<f64>().sqrt();
    // residual below rounding of b counts as exactly parallel
    let perp = if perp <= 1e-12 * bb.sqrt() { 0.0 } else { perp };
    Some((perp * aa.sqrt()).atan2(dot.abs()).to_degrees())
}

pub fn diagnose_network(g: Network, source: String, x: &[f64], beta: f64, scaling: Scaling) -> DiagnoseReport {
    let op = scaling.operator(g);
    let g = op.base();
    let lambda_1 = largest_eigenvalue(&op, DEFAULT_EIGEN_TOL);
    let params = ModelParams::simulation(beta);
    let boundary = boundary_diagnostics(&op, &params).ok();
    let gx = op.apply(x);
    let g2x = op.apply_second_order(x);
    let instrument_status = match prepare_design(exog_columns(x, &gx), ("G2X".into(), g2x.clone())) {
        Ok(_) => "ok".to_string(),
        Err(Error::DegenerateInstrument(_)) => "degenerate_instrument".to_string(),
        Err(Error::Collinear { column }) => format!("collinear:{column}"),
        Err(e) => format!("error:{e}"),
    };
    DiagnoseReport {
        source,
        n: g.n(),
        edges: g.edge_count(),
        mean_degree: g.mean_degree(),
        max_degree: g.max_degree(),
        scaling,
        w: op.scale(),
        lambda_1,
        beta,
        beta_lambda_1: beta * lambda_1,
        stability: StabilityFlag::classify(beta, lambda_1),
        boundary_count: boundary.as_ref().map(|b| b.boundary_count),
        max_amplification: boundary.as_ref().map(|b| b.max_amplification),
        amplification_flag: boundary.as_ref().map(|b| b.max_amplification > AMPLIFICATION_FLAG),
        positive_terms: boundary.as_ref().map(|b| b.positive_terms()),
        negative_terms: boundary.as_ref().map(|b| b.negative_terms()),
        instrument_status,
        collinearity_angle_deg: collinearity_angle(&gx, &g2x),
    }
}

impl DiagnoseReport {
    pub fn csv_row(&self) -> Vec<String> {
        let opt_u = |v: Option<usize>| v.map_or_else(|| report::NA.to_string(), |u| u.to_string());
        vec![
            self.source.clone(),
            self.n.to_string(),
            self.edges.to_string(),
            report::num(Some(self.mean_degree)),
            self.max_degree.to_string(),
            self.scaling.label().to_string(),
            report::num(Some(self.w)),
            report::num(Some(self.lambda_1)),
            report::num(Some(self.beta)),
            report::num(Some(self.beta_lambda_1)),
            self.stability.label().to_string(),
            opt_u(self.boundary_count),
            report::num(self.max_amplification),
            self.amplification_flag.map_or_else(|| report::NA.to_string(), |b| b.to_string()),
            opt_u(self.positive_terms),
            opt_u(self.negative_terms),
            self.instrument_status.clone(),
            report::num(self.collinearity_angle_deg),
        ]
    }

    pub fn text(&self) -> String {
        let mut s = format!(
            "graph {}: n = {}, edges = {}, mean degree = {:.4}, max degree = {}\n",
            self.source, self.n, self.edges, self.mean_degree, self.max_degree
        );
        s += &format!(
            "{} operator: w = {}, lambda_1 = {:.6}, beta = {}, beta*lambda_1 = {:.6} ({})\n",
            self.scaling.label(),
            self.w,
            self.lambda_1,
            self.beta,
            self.beta_lambda_1,
            self.stability.label()
        );
        match (self.boundary_count, self.max_amplification) {
            (Some(c), Some(a)) => {
                s += &format!("boundary eigenvalues = {c}, max amplification = {a:.4}");
                if a > AMPLIFICATION_FLAG {
                    s += " (flagged)";
                }
                s += "\n";
            }
            _ => s += "full spectrum skipped (graph above the dense cap)\n",
        }
        s += &format!("instrument: {}", self.instrument_status);
        match self.collinearity_angle_deg {
            Some(a) => s += &format!(", angle(GX, G2X) = {a:.6} deg\n"),
            None => s += ", angle(GX, G2X) undefined (zero vector)\n",
        }
        s
    }
}

pub fn diagnose(args: &DiagnoseArgs) -> Result<i32, CliError> {
    let scaling = if args.unscaled { Scaling::Unscaled } else { Scaling::Scaled };
    let (g, source) = match (&args.edges, args.n, args.regime) {
        (Some(p), _, _) => (load(p, args.one_indexed, None)?, p.display().to_string()),
        (None, Some(n), Some(regime)) => {
            let mut cfg = CellConfig::new(n, regime, args.beta, scaling);
            cfg.master_seed = args.seed;
            (cell_network(&cfg)?, format!("er(n={n},{regime})"))
        }
        _ => return Err(CliError::Usage("diagnose needs --edges or both --n and --regime".into())),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(args.seed, &["diagnose", "covariates"]));
    let x = sample_covariates(g.n(), &CovariateSpec::default(), &mut rng)?;
    let r = diagnose_network(g, source, &x, args.beta, scaling);
    print!("{}", r.text());
    ensure_dir(&args.out_dir)?;
    let text = report::csv_string(&DIAGNOSE_COLUMNS, &[r.csv_row()])?;
    std::fs::write(args.out_dir.join("diagnose.csv"), text)?;
    Ok(EXIT_OK)
}

/// Resolved configuration for callers that want to inspect it without running.
pub fn resolve_simulate(args: &SimulateArgs) -> Result<SimConfig, CliError> {
    resolve(args)
}
