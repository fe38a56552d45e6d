//! Flag definitions.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use peeriv_core::estimate::Kernel;
use peeriv_core::montecarlo::Regime;

#[derive(Debug, Parser)]
#[command(name = "peeriv", version, about = "Peer-effects IV on random networks: Monte Carlo grids, bound curves and graph diagnostics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a replication grid and write estimates, coverage, CI lengths and covariance tables.
    Simulate(SimulateArgs),
    /// Degree summaries of an edge list and its two-step graph.
    GraphStats(GraphStatsArgs),
    /// Seed-averaged degree-rate bounds per (n, regime).
    Bounds(BoundsArgs),
    /// Spectral and boundary report for one graph.
    Diagnose(DiagnoseArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    PaperGrid,
    Table2,
    Table3,
    Bounds,
}

impl Preset {
    pub fn parse(s: &str) -> Option<Self> {
        <Self as ValueEnum>::from_str(s, true).ok()
    }
}

pub fn parse_regime(s: &str) -> Result<Regime, String> {
    Regime::parse(s).map_err(|e| e.to_string())
}

pub fn parse_kernel(s: &str) -> Result<Kernel, String> {
    Kernel::parse(s).ok_or_else(|| format!("unknown kernel `{s}` (bartlett, rectangular)"))
}

#[derive(Debug, Clone, Default, Args)]
pub struct SimulateArgs {
    /// Flat JSON file whose keys mirror the flags (dashes as underscores); flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub reproduce: Option<Preset>,
    /// Sample sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub n: Vec<usize>,
    /// Degree regime `name:params` (constant:c, loglog:c, vanishing:c[,a], dense:c[,a]); repeatable.
    #[arg(long, value_parser = parse_regime)]
    pub regime: Vec<Regime>,
    /// True peer effects, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub beta: Vec<f64>,
    #[arg(long)]
    pub scaled: bool,
    #[arg(long)]
    pub unscaled: bool,
    /// Replications per cell (graph seeds for the bounds preset).
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, value_parser = parse_kernel)]
    pub hac_kernel: Option<Kernel>,
    #[arg(long)]
    pub hac_bandwidth: Option<usize>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct GraphStatsArgs {
    /// Edge list: two node ids per line.
    pub path: PathBuf,
    /// Node ids start at 1.
    #[arg(long)]
    pub one_indexed: bool,
    /// Node count when isolated trailing nodes are absent from the file.
    #[arg(long)]
    pub nodes: Option<usize>,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct BoundsArgs {
    #[arg(long, value_parser = parse_regime, required = true)]
    pub regime: Vec<Regime>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub n: Vec<usize>,
    #[arg(long, default_value_t = 500)]
    pub seeds: usize,
    #[arg(long, default_value_t = crate::DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct DiagnoseArgs {
    /// Edge list to diagnose; otherwise a graph is generated from --n and --regime.
    #[arg(long, conflicts_with_all = ["n", "regime"])]
    pub edges: Option<PathBuf>,
    #[arg(long)]
    pub one_indexed: bool,
    #[arg(long, requires = "regime")]
    pub n: Option<usize>,
    #[arg(long, value_parser = parse_regime, requires = "n")]
    pub regime: Option<Regime>,
    #[arg(long, default_value_t = crate::DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, default_value_t = peeriv_core::dgp::ModelParams::BETA_MODERATE)]
    pub beta: f64,
    #[arg(long, conflicts_with = "scaled")]
    pub unscaled: bool,
    #[arg(long)]
    pub scaled: bool,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}
