//! CSV schemas and the run manifest. Column order is part of the output
//! contract; the header constants are pinned by tests.

use std::path::{Path, PathBuf};

use peeriv_core::graph::DegreeSummary;
use peeriv_core::montecarlo::{BoundCurveRow, CellStatus, CellSummary};
use serde::Serialize;

use crate::CliError;

pub const ID_COLUMNS: [&str; 6] = ["cell_id", "n", "regime", "beta", "scaling", "status"];
pub const ESTIMATES_COLUMNS: [&str; 3] = ["mean_beta_hat", "mean_corr", "mean_F"];
pub const COVERAGE_COLUMNS: [&str; 4] = ["coverage_t_homo", "coverage_t_hac", "coverage_ar_homo", "coverage_ar_hac"];
pub const CI_LENGTH_COLUMNS: [&str; 4] = ["mean_ci_len_t_homo", "mean_ci_len_t_hac", "mean_ci_len_ar", "pct_ci_infinite_ar"];
pub const COVARIANCE_COLUMNS: [&str; 2] = ["mean_cov", "mean_var_instrument"];
pub const CELLS_COLUMNS: [&str; 15] = [
    "status_detail",
    "reps",
    "counted_reps",
    "failed_reps",
    "mean_degree",
    "w",
    "lambda_1",
    "stable_reps",
    "near_boundary_reps",
    "unstable_reps",
    "mean_F_hac",
    "mean_ci_len_ar_hac",
    "pct_ci_infinite_ar_hac",
    "hac_repairs",
    "network_fingerprint",
];
pub const BOUNDS_COLUMNS: [&str; 4] = ["n", "regime", "mean_bound", "sd_bound"];
pub const GRAPH_STATS_COLUMNS: [&str; 7] = ["graph", "n", "min", "median", "mean", "mode", "max"];

pub const NA: &str = "NA";

/// Shortest round-trip decimal; NA for missing or non-finite.
pub fn num(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x}"),
        Some(x) if x.is_nan() => NA.to_string(),
        Some(x) => if x > 0.0 { "inf" } else { "-inf" }.to_string(),
        None => NA.to_string(),
    }
}

pub fn coverage(v: Option<f64>) -> String {
    v.map_or_else(|| NA.to_string(), |x| format!("{x:.3}"))
}

fn id_fields(s: &CellSummary) -> Vec<String> {
    vec![
        s.cell_id.clone(),
        s.n.to_string(),
        s.regime.clone(),
        format!("{}", s.beta),
        s.scaling.label().to_string(),
        s.status.label().to_string(),
    ]
}

fn write_table(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the four result tables plus `cells.csv`; returns the paths written.
pub fn write_simulation_tables(dir: &Path, rows: &[CellSummary]) -> Result<Vec<PathBuf>, CliError> {
    let tables: [(&str, &[&str], fn(&CellSummary) -> Vec<String>); 5] = [
        ("estimates.csv", &ESTIMATES_COLUMNS, |s| {
            vec![num(s.mean_beta_hat), num(s.mean_corr), num(s.mean_f)]
        }),
        ("coverage.csv", &COVERAGE_COLUMNS, |s| {
            vec![
                coverage(s.coverage_t_homo),
                coverage(s.coverage_t_hac),
                coverage(s.coverage_ar_homo),
                coverage(s.coverage_ar_hac),
            ]
        }),
        ("ci_lengths.csv", &CI_LENGTH_COLUMNS, |s| {
            vec![
                num(s.mean_ci_len_t_homo),
                num(s.mean_ci_len_t_hac),
                num(s.mean_ci_len_ar),
                num(s.pct_ci_infinite_ar),
            ]
        }),
        ("covariance.csv", &COVARIANCE_COLUMNS, |s| vec![num(s.mean_cov), num(s.mean_var_instrument)]),
        ("cells.csv", &CELLS_COLUMNS, |s| {
            vec![
                s.status.detail().to_string(),
                s.reps.to_string(),
                s.counted_reps.to_string(),
                s.failed_reps.to_string(),
                num(s.mean_degree),
                num(s.w),
                num(s.lambda_1),
                s.stable_reps.to_string(),
                s.near_boundary_reps.to_string(),
                s.unstable_reps.to_string(),
                num(s.mean_f_hac),
                num(s.mean_ci_len_ar_hac),
                num(s.pct_ci_infinite_ar_hac),
                s.hac_repairs.to_string(),
                s.network_fingerprint.clone(),
            ]
        }),
    ];
    let mut written = Vec::new();
    for (name, extra, f) in tables {
        let path = dir.join(name);
        let head: Vec<&str> = ID_COLUMNS.iter().chain(extra.iter()).copied().collect();
        write_table(&path, &head, rows.iter().map(|s| {
            let mut r = id_fields(s);
            r.extend(f(s));
            r
        }))?;
        written.push(path);
    }
    Ok(written)
}

pub fn write_bound_table(path: &Path, rows: &[BoundCurveRow]) -> Result<(), CliError> {
    write_table(
        path,
        &BOUNDS_COLUMNS,
        rows.iter().map(|r| vec![r.n.to_string(), r.regime.clone(), num(r.mean_bound), num(r.sd_bound)]),
    )
}

pub fn graph_stats_row(label: &str, n: usize, s: &DegreeSummary) -> Vec<String> {
    vec![
        label.to_string(),
        n.to_string(),
        num(Some(s.min)),
        num(Some(s.median)),
        num(Some(s.mean)),
        num(Some(s.mode)),
        num(Some(s.max)),
    ]
}

pub fn csv_string(header: &[&str], rows: &[Vec<String>]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[derive(Debug, Clone, Serialize)]
pub struct CellEntry {
    pub cell_id: String,
    pub status: String,
    pub detail: String,
    pub counted_reps: usize,
    pub failed_reps: usize,
}

impl CellEntry {
    pub fn from_summary(s: &CellSummary) -> Self {
        Self {
            cell_id: s.cell_id.clone(),
            status: s.status.label().to_string(),
            detail: s.status.detail().to_string(),
            counted_reps: s.counted_reps,
            failed_reps: s.failed_reps,
        }
    }

    /// A cell counts as failed when setup failed or no replication succeeded.
    pub fn failed(s: &CellSummary) -> bool {
        s.status != CellStatus::Ok || s.counted_reps == 0
    }
}

/// Written last; its presence signals a completed run.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub master_seed: u64,
    pub started: String,
    pub finished: String,
    pub config: serde_json::Value,
    pub files: Vec<String>,
    pub cells_total: usize,
    pub cells_failed: usize,
    pub cells: Vec<CellEntry>,
}

pub fn artifact_version() -> String {
    format!("{}+{}", env!("CARGO_PKG_VERSION"), env!("PEERIV_GIT_DESCRIBE"))
}

pub fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<PathBuf, CliError> {
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(manifest)?;
    std::fs::write(&path, text + "\n")?;
    Ok(path)
}

pub fn file_names(paths: &[PathBuf]) -> Vec<String> {
    paths
        .iter()
        .map(|p| p.file_name().map_or_else(|| p.display().to_string(), |f| f.to_string_lossy().into_owned()))
        .collect()
}
