//! SNAP edge-list ingestion.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use popdp::popproc::ContactGraph;
use serde::Serialize;

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct LoadStats {
    pub nodes: usize,
    pub edges: usize,
    pub self_loops: usize,
    pub duplicates: usize,
}

/// Parses whitespace-separated id pairs, one edge per line. `#` lines and
/// blank lines are skipped. Ids are compacted in order of first appearance.
pub fn parse_edge_list(text: &str) -> Result<(Vec<(u32, u32)>, LoadStats), (usize, String)> {
    let mut ids: HashMap<u64, u32> = HashMap::new();
    let mut seen: HashSet<(u32, u32)> = HashSet::new();
    let mut edges = Vec::new();
    let mut stats = LoadStats::default();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err((i + 1, format!("expected two node ids, found {} fields", fields.len())));
        }
        let mut pair = [0u32; 2];
        for (slot, field) in pair.iter_mut().zip(&fields) {
            let raw: u64 = field
                .parse()
                .map_err(|_| (i + 1, format!("'{field}' is not a nonnegative integer")))?;
            let next = ids.len();
            let id = *ids.entry(raw).or_insert(next as u32);
            *slot = id;
        }
        let [a, b] = pair;
        if a == b {
            stats.self_loops += 1;
            continue;
        }
        if !seen.insert((a.min(b), a.max(b))) {
            stats.duplicates += 1;
            continue;
        }
        edges.push((a, b));
    }
    stats.nodes = ids.len();
    stats.edges = edges.len();
    Ok((edges, stats))
}

pub fn load_graph(path: &Path) -> CliResult<(ContactGraph, LoadStats)> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let (edges, stats) = parse_edge_list(&text).map_err(|(line, msg)| CliError::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    })?;
    if stats.nodes == 0 {
        return Err(CliError::Config(format!("{} has no edges", path.display())));
    }
    Ok((ContactGraph::from_edges(stats.nodes, &edges)?, stats))
}
