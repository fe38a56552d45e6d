use std::fmt::Write as _;
use std::path::Path;

use super::Network;
use crate::error::{Error, Result};

/// Whether node ids in an edge-list file start at 0 or 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Indexing {
    #[default]
    Zero,
    One,
}

/// Result of ingesting an edge list.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeListLoad {
    pub network: Network,
    pub self_loops_dropped: usize,
}

fn parse_id(token: &str, line: usize, indexing: Indexing) -> Result<usize> {
    let value: i64 = token.parse().map_err(|_| Error::Parse {
        line,
        message: format!("`{token}` is not an integer node id"),
    })?;
    let offset = match indexing {
        Indexing::Zero => 0,
        Indexing::One => 1,
    };
    if value < offset {
        return Err(Error::Parse {
            line,
            message: format!("node id {value} is below the first index {offset}"),
        });
    }
    Ok((value - offset) as usize)
}

/// Parses edge-list text: one pair per line, separated by whitespace and/or a
/// comma. Blank lines and lines starting with `#` are skipped. Duplicate and
/// reversed pairs collapse to one undirected edge; self-loops are counted and
/// dropped. Node count is `1 + max id` unless `n_override` is given.
pub fn parse_edge_list(text: &str, indexing: Indexing, n_override: Option<usize>) -> Result<EdgeListLoad> {
    let mut pairs = Vec::new();
    let mut self_loops = 0;
    let mut max_id: Option<usize> = None;
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = trimmed
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .collect();
        if tokens.len() != 2 {
            return Err(Error::Parse {
                line,
                message: format!("expected two node ids, found {}", tokens.len()),
            });
        }
        let a = parse_id(tokens[0], line, indexing)?;
        let b = parse_id(tokens[1], line, indexing)?;
        max_id = Some(max_id.unwrap_or(0).max(a).max(b));
        if a == b {
            self_loops += 1;
            continue;
        }
        pairs.push((a, b));
    }
    let inferred = max_id.map_or(0, |m| m + 1);
    let n = match n_override {
        Some(n) if n < inferred => {
            return Err(Error::InvalidParameter(format!(
                "node count {n} is smaller than the largest id in the file ({inferred} nodes needed)"
            )))
        }
        Some(n) => n,
        None => inferred,
    };
    if self_loops > 0 {
        log::warn!("dropped {self_loops} self-loop(s) from edge list");
    }
    Ok(EdgeListLoad {
        network: Network::from_edges(n, pairs)?,
        self_loops_dropped: self_loops,
    })
}

pub fn load_edge_list(path: &Path, indexing: Indexing, n_override: Option<usize>) -> Result<EdgeListLoad> {
    let text = std::fs::read_to_string(path)?;
    parse_edge_list(&text, indexing, n_override)
}

/// Canonical text form: `"i j\n"` per edge, `i < j`, lexicographic, 0-based.
pub fn emit_edge_list(g: &Network) -> String {
    let mut out = String::with_capacity(8 * g.edge_count());
    for &(i, j) in g.edges() {
        writeln!(out, "{i} {j}").unwrap();
    }
    out
}

pub fn write_edge_list(g: &Network, path: &Path) -> Result<()> {
    std::fs::write(path, emit_edge_list(g))?;
    Ok(())
}
