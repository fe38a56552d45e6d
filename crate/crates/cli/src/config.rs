//! Simulation configuration: flat JSON file merged under command-line flags.

use std::path::{Path, PathBuf};

use peeriv_core::estimate::{HacConfig, Kernel};
use peeriv_core::montecarlo::{paper_grid, CellConfig, Regime, Scaling, DEFAULT_REPS};
use serde::Serialize;
use serde_json::{Map, Value};

use crate::args::{Preset, SimulateArgs};
use crate::CliError;

/// Bound-curve design used by the `bounds` preset.
pub const BOUND_SIZES: [usize; 5] = [200, 400, 800, 1200, 1600];
pub const BOUND_SEEDS: usize = 500;

pub fn bound_regimes() -> Vec<Regime> {
    vec![
        Regime::Constant { c: 1.0 },
        Regime::Vanishing { c: 1.0, a: 0.5 },
        Regime::Dense { c: 1.0, a: 0.5 },
    ]
}

/// Fully resolved simulate configuration; echoed into the manifest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimConfig {
    pub reproduce: Option<Preset>,
    pub n: Vec<usize>,
    pub regime: Vec<String>,
    pub beta: Vec<f64>,
    pub scaling: Vec<Scaling>,
    pub reps: usize,
    pub seed: u64,
    pub alpha: f64,
    pub hac_kernel: Kernel,
    pub hac_bandwidth: usize,
    pub out_dir: PathBuf,
    pub threads: Option<usize>,
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn as_list(key: &str, v: &Value) -> Result<Vec<Value>, CliError> {
    match v {
        Value::Array(a) => Ok(a.clone()),
        Value::Null => Err(usage(format!("config key `{key}` is null"))),
        other => Ok(vec![other.clone()]),
    }
}

fn as_u64(key: &str, v: &Value) -> Result<u64, CliError> {
    v.as_u64()
        .ok_or_else(|| usage(format!("config key `{key}` must be a nonnegative integer")))
}

fn as_f64(key: &str, v: &Value) -> Result<f64, CliError> {
    v.as_f64().ok_or_else(|| usage(format!("config key `{key}` must be a number")))
}

fn as_str<'a>(key: &str, v: &'a Value) -> Result<&'a str, CliError> {
    v.as_str().ok_or_else(|| usage(format!("config key `{key}` must be a string")))
}

fn as_bool(key: &str, v: &Value) -> Result<bool, CliError> {
    v.as_bool().ok_or_else(|| usage(format!("config key `{key}` must be true or false")))
}

/// Reads a flat JSON object into flag form. Keys use underscores or dashes.
pub fn load_config_file(path: &Path) -> Result<SimulateArgs, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    let map: Map<String, Value> =
        serde_json::from_str(&text).map_err(|e| usage(format!("config {} is not a JSON object: {e}", path.display())))?;
    let mut a = SimulateArgs::default();
    for (raw_key, v) in &map {
        let key = raw_key.replace('-', "_");
        let k = raw_key.as_str();
        match key.as_str() {
            "reproduce" => {
                let s = as_str(k, v)?;
                a.reproduce = Some(Preset::parse(s).ok_or_else(|| usage(format!("config key `{k}`: unknown preset `{s}`")))?);
            }
            "n" => {
                a.n = as_list(k, v)?
                    .iter()
                    .map(|x| as_u64(k, x).map(|u| u as usize))
                    .collect::<Result<_, _>>()?
            }
            "regime" => {
                a.regime = as_list(k, v)?
                    .iter()
                    .map(|x| {
                        let s = as_str(k, x)?;
                        Regime::parse(s).map_err(|e| usage(format!("config key `{k}`: {e}")))
                    })
                    .collect::<Result<_, _>>()?
            }
            "beta" => a.beta = as_list(k, v)?.iter().map(|x| as_f64(k, x)).collect::<Result<_, _>>()?,
            "scaled" => a.scaled = as_bool(k, v)?,
            "unscaled" => a.unscaled = as_bool(k, v)?,
            "reps" => a.reps = Some(as_u64(k, v)? as usize),
            "seed" => a.seed = Some(as_u64(k, v)?),
            "alpha" => a.alpha = Some(as_f64(k, v)?),
            "hac_kernel" => {
                let s = as_str(k, v)?;
                a.hac_kernel = Some(Kernel::parse(s).ok_or_else(|| usage(format!("config key `{k}`: unknown kernel `{s}`")))?);
            }
            "hac_bandwidth" => a.hac_bandwidth = Some(as_u64(k, v)? as usize),
            "out_dir" => a.out_dir = Some(PathBuf::from(as_str(k, v)?)),
            "threads" => a.threads = Some(as_u64(k, v)? as usize),
            _ => return Err(usage(format!("unknown config key `{k}`"))),
        }
    }
    Ok(a)
}

/// Flags override file values field by field.
fn merge(file: SimulateArgs, flags: &SimulateArgs) -> SimulateArgs {
    let pick_vec = |f: &Vec<_>, c: Vec<_>| if f.is_empty() { c } else { f.clone() };
    SimulateArgs {
        config: flags.config.clone(),
        reproduce: flags.reproduce.or(file.reproduce),
        n: pick_vec(&flags.n, file.n),
        regime: if flags.regime.is_empty() { file.regime } else { flags.regime.clone() },
        beta: if flags.beta.is_empty() { file.beta } else { flags.beta.clone() },
        // an explicit scaling flag replaces the file's choice entirely
        scaled: if flags.scaled || flags.unscaled { flags.scaled } else { file.scaled },
        unscaled: if flags.scaled || flags.unscaled { flags.unscaled } else { file.unscaled },
        reps: flags.reps.or(file.reps),
        seed: flags.seed.or(file.seed),
        alpha: flags.alpha.or(file.alpha),
        hac_kernel: flags.hac_kernel.or(file.hac_kernel),
        hac_bandwidth: flags.hac_bandwidth.or(file.hac_bandwidth),
        out_dir: flags.out_dir.clone().or(file.out_dir),
        threads: flags.threads.or(file.threads),
    }
}

pub fn resolve(flags: &SimulateArgs) -> Result<SimConfig, CliError> {
    let a = match &flags.config {
        Some(path) => merge(load_config_file(path)?, flags),
        None => flags.clone(),
    };
    let defaults = HacConfig::default();
    let preset = a.reproduce;
    let (n, regime) = match preset {
        Some(_) => (a.n, a.regime),
        None => {
            if a.n.is_empty() {
                return Err(usage("missing --n (or a --reproduce preset)"));
            }
            if a.regime.is_empty() {
                return Err(usage("missing --regime (or a --reproduce preset)"));
            }
            (a.n, a.regime)
        }
    };
    if n.contains(&0) {
        return Err(usage("--n values must be positive"));
    }
    let mut scaling = Vec::new();
    if a.unscaled {
        scaling.push(Scaling::Unscaled);
    }
    if a.scaled || !a.unscaled {
        scaling.push(Scaling::Scaled);
    }
    let reps = a.reps.unwrap_or(if preset == Some(Preset::Bounds) { BOUND_SEEDS } else { DEFAULT_REPS });
    if reps == 0 {
        return Err(usage("--reps must be at least 1"));
    }
    let alpha = a.alpha.unwrap_or(0.05);
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(usage(format!("--alpha must lie in (0, 1), got {alpha}")));
    }
    if a.threads == Some(0) {
        return Err(usage("--threads must be at least 1"));
    }
    Ok(SimConfig {
        reproduce: preset,
        n,
        regime: regime.iter().map(Regime::label).collect(),
        beta: if a.beta.is_empty() { vec![peeriv_core::dgp::ModelParams::BETA_MODERATE] } else { a.beta },
        scaling,
        reps,
        seed: a.seed.unwrap_or(crate::DEFAULT_SEED),
        alpha,
        hac_kernel: a.hac_kernel.unwrap_or(defaults.kernel),
        hac_bandwidth: a.hac_bandwidth.unwrap_or(defaults.bandwidth),
        out_dir: a.out_dir.unwrap_or_else(|| PathBuf::from(".")),
        threads: a.threads,
    })
}

impl SimConfig {
    pub fn hac(&self) -> HacConfig {
        HacConfig {
            kernel: self.hac_kernel,
            bandwidth: self.hac_bandwidth,
        }
    }

    /// Cells in output order: scaling, beta, regime, n. Grid presets ignore
    /// the grid flags but honour reps, seed, alpha and HAC settings.
    pub fn cells(&self) -> Result<Vec<CellConfig>, CliError> {
        let mut cells = match self.reproduce {
            Some(Preset::PaperGrid | Preset::Table2 | Preset::Table3) => paper_grid(self.reps, self.seed),
            Some(Preset::Bounds) => return Err(usage("the bounds preset has no simulation cells")),
            None => {
                let mut out = Vec::new();
                for &scaling in &self.scaling {
                    for &beta in &self.beta {
                        for r in &self.regime {
                            let regime = Regime::parse(r).map_err(|e| usage(e.to_string()))?;
                            for &n in &self.n {
                                out.push(CellConfig::new(n, regime, beta, scaling));
                            }
                        }
                    }
                }
                out
            }
        };
        for c in &mut cells {
            c.reps = self.reps;
            c.master_seed = self.seed;
            c.alpha = self.alpha;
            c.hac = self.hac();
            c.validate().map_err(|e| usage(format!("cell {}: {e}", c.cell_id())))?;
        }
        Ok(cells)
    }

    /// Regimes and sizes for the bound-curve design.
    pub fn bound_design(&self) -> (Vec<Regime>, Vec<usize>) {
        let regimes = if self.regime.is_empty() {
            bound_regimes()
        } else {
            self.regime.iter().filter_map(|r| Regime::parse(r).ok()).collect()
        };
        let ns = if self.n.is_empty() { BOUND_SIZES.to_vec() } else { self.n.clone() };
        (regimes, ns)
    }
}
