//! Wash-trading pattern scores over a token's transfer sequence.
//!
//! Three per-record indicator families, each reported as the fraction of
//! records flagged:
//!
//! * self trading: `from == to`;
//! * matched trading: a counter-record in the reverse direction exists within
//!   the time window;
//! * circular trading: the record's transfer edge lies on a simple directed
//!   cycle of length 3..=`max_cycle_len` among the transfers inside some
//!   sliding time window.
//!
//! Scores are unweighted by quantity: the pattern families describe routing
//! shape, not volume.

use crate::ingest::TransferRecord;
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet, VecDeque};

/// Default matching/cycle window in minutes.
pub const DEFAULT_WINDOW_MINUTES: u32 = 60;
/// Default maximum simple-cycle length.
pub const DEFAULT_MAX_CYCLE_LEN: usize = 5;
/// Smallest cycle the circular detector reports; 2-cycles belong to matched trading.
pub const MIN_CYCLE_LEN: usize = 3;
/// Largest supported cycle bound (search cost grows steeply past this).
pub const MAX_SUPPORTED_CYCLE_LEN: usize = 6;

/// Detector parameters shared by matched and circular scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(default)]
pub struct PatternParams {
    pub window_minutes: u32,
    pub max_cycle_len: usize,
}

impl Default for PatternParams {
    fn default() -> Self {
        Self { window_minutes: DEFAULT_WINDOW_MINUTES, max_cycle_len: DEFAULT_MAX_CYCLE_LEN }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PatternError {
    #[error("pattern scoring requires at least one record")]
    EmptyInput,
    #[error("invalid pattern parameters: {0}")]
    InvalidParams(String),
}

/// The three pattern fractions plus the parameters they were computed under.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct PatternScores {
    pub self_score: f64,
    pub matched_score: f64,
    pub circular_score: f64,
    pub window_minutes: u32,
    pub max_cycle_len: usize,
}

fn validate(records: &[TransferRecord], window_minutes: u32, max_cycle_len: usize) -> Result<(), PatternError> {
    if records.is_empty() {
        return Err(PatternError::EmptyInput);
    }
    if window_minutes == 0 {
        return Err(PatternError::InvalidParams("window_minutes must be positive".into()));
    }
    if !(MIN_CYCLE_LEN..=MAX_SUPPORTED_CYCLE_LEN).contains(&max_cycle_len) {
        return Err(PatternError::InvalidParams(format!(
            "max_cycle_len must be within {MIN_CYCLE_LEN}..={MAX_SUPPORTED_CYCLE_LEN}, got {max_cycle_len}"
        )));
    }
    debug_assert!(records.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
    Ok(())
}

fn fraction(flags: &[bool]) -> f64 {
    flags.iter().filter(|f| **f).count() as f64 / flags.len() as f64
}

/// Per-record self-trade indicators.
pub fn self_record_flags(records: &[TransferRecord]) -> Result<Vec<bool>, PatternError> {
    if records.is_empty() {
        return Err(PatternError::EmptyInput);
    }
    Ok(records.iter().map(|r| r.from_addr == r.to_addr).collect())
}

/// Fraction of records with `from == to`.
pub fn self_score(records: &[TransferRecord]) -> Result<f64, PatternError> {
    self_record_flags(records).map(|f| fraction(&f))
}

/// Per-record matched-trade indicators: record A->B is flagged when some
/// record B->A (A != B) sits within `window_minutes * 60` seconds of it, in
/// either time direction. Both sides of a match are flagged.
pub fn matched_record_flags(records: &[TransferRecord], window_minutes: u32) -> Result<Vec<bool>, PatternError> {
    validate(records, window_minutes, MIN_CYCLE_LEN)?;
    let window = i64::from(window_minutes) * 60;
    // Sorted timestamp list per directed (from, to) pair; input order is time order.
    let mut by_pair: HashMap<(&str, &str), Vec<i64>> = HashMap::new();
    for r in records {
        by_pair.entry((&r.from_addr, &r.to_addr)).or_default().push(r.timestamp);
    }
    let flags = records
        .iter()
        .map(|r| {
            if r.from_addr == r.to_addr {
                return false;
            }
            match by_pair.get(&(r.to_addr.as_str(), r.from_addr.as_str())) {
                Some(times) => {
                    let lo = times.partition_point(|t| *t < r.timestamp - window);
                    times.get(lo).is_some_and(|t| *t <= r.timestamp + window)
                }
                None => false,
            }
        })
        .collect();
    Ok(flags)
}

/// Fraction of records participating in reverse-direction matches.
pub fn matched_score(records: &[TransferRecord], window_minutes: u32) -> Result<f64, PatternError> {
    matched_record_flags(records, window_minutes).map(|f| fraction(&f))
}

/// Per-record circular-trade indicators.
///
/// For every sliding window `[t, t + window]` anchored at a record timestamp,
/// the deduplicated transfer edges inside the window (self-loops excluded)
/// form a directed graph; every record whose edge lies on a simple cycle of
/// length `3..=max_cycle_len` in that graph is flagged. Windows whose record
/// range is a subset of an already-scanned window are skipped: they cannot add
/// edges and so cannot add cycles.
pub fn circular_record_flags(
    records: &[TransferRecord],
    window_minutes: u32,
    max_cycle_len: usize,
) -> Result<Vec<bool>, PatternError> {
    validate(records, window_minutes, max_cycle_len)?;
    let window = i64::from(window_minutes) * 60;
    let n = records.len();
    let mut flags = vec![false; n];
    let mut end = 0usize;
    let mut prev_end = 0usize;
    for start in 0..n {
        if start > 0 && records[start].timestamp == records[start - 1].timestamp {
            continue; // same anchor timestamp, same window
        }
        let horizon = records[start].timestamp + window;
        while end < n && records[end].timestamp <= horizon {
            end += 1;
        }
        if start > 0 && end == prev_end {
            continue; // subset of the previous window
        }
        prev_end = end;
        mark_window_cycles(&records[start..end], max_cycle_len, &mut flags[start..end]);
        if end == n {
            break; // later windows can only shrink
        }
    }
    Ok(flags)
}

/// Fraction of records on short simple cycles within some time window.
pub fn circular_score(
    records: &[TransferRecord],
    window_minutes: u32,
    max_cycle_len: usize,
) -> Result<f64, PatternError> {
    circular_record_flags(records, window_minutes, max_cycle_len).map(|f| fraction(&f))
}

/// Computes all three scores in one call.
pub fn score_patterns(records: &[TransferRecord], params: &PatternParams) -> Result<PatternScores, PatternError> {
    Ok(PatternScores {
        self_score: self_score(records)?,
        matched_score: matched_score(records, params.window_minutes)?,
        circular_score: circular_score(records, params.window_minutes, params.max_cycle_len)?,
        window_minutes: params.window_minutes,
        max_cycle_len: params.max_cycle_len,
    })
}

/// Flags records of `window` whose edges lie on simple cycles of length
/// `3..=max_len` within the window's deduplicated graph.
fn mark_window_cycles(window: &[TransferRecord], max_len: usize, flags: &mut [bool]) {
    // Compact node ids and deduplicated non-self edges with their record indices.
    let mut node_ids: HashMap<&str, usize> = HashMap::new();
    let mut edge_records: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (i, r) in window.iter().enumerate() {
        if r.from_addr == r.to_addr {
            continue;
        }
        let next = node_ids.len();
        let u = *node_ids.entry(&r.from_addr).or_insert(next);
        let next = node_ids.len();
        let v = *node_ids.entry(&r.to_addr).or_insert(next);
        edge_records.entry((u, v)).or_default().push(i);
    }
    if edge_records.is_empty() {
        return;
    }
    let n_nodes = node_ids.len();
    let mut fwd: Vec<Vec<usize>> = vec![Vec::new(); n_nodes];
    let mut rev: Vec<Vec<usize>> = vec![Vec::new(); n_nodes];
    for &(u, v) in edge_records.keys() {
        fwd[u].push(v);
        rev[v].push(u);
    }
    let comp = strongly_connected_components(&fwd);

    // An edge can only sit on a cycle when both endpoints share a strongly
    // connected component; everything else is skipped without any search.
    let mut cyclic: HashSet<(usize, usize)> = HashSet::new();
    let mut rev_dist_cache: HashMap<usize, Vec<u32>> = HashMap::new();
    for &(u, v) in edge_records.keys() {
        if comp[u] != comp[v] || cyclic.contains(&(u, v)) {
            continue;
        }
        let dist_to_u = rev_dist_cache
            .entry(u)
            .or_insert_with(|| bfs_distances(&rev, u, &comp));
        if dist_to_u[v] as usize > max_len - 1 {
            continue; // even the unconstrained shortest return path is too long
        }
        if let Some(path) = bounded_simple_path(&fwd, v, u, max_len - 1, dist_to_u) {
            // Close the cycle: (u, v) plus every edge along the found path is cyclic.
            cyclic.insert((u, v));
            let mut prev = v;
            for &node in &path {
                cyclic.insert((prev, node));
                prev = node;
            }
        }
    }
    for (edge, record_idxs) in &edge_records {
        if cyclic.contains(edge) {
            for &i in record_idxs {
                flags[i] = true;
            }
        }
    }
}

/// Iterative Tarjan SCC; returns a component id per node.
fn strongly_connected_components(adj: &[Vec<usize>]) -> Vec<usize> {
    const UNSEEN: usize = usize::MAX;
    let n = adj.len();
    let mut index = vec![UNSEEN; n];
    let mut lowlink = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut comp = vec![UNSEEN; n];
    let mut stack: Vec<usize> = Vec::new();
    let mut next_index = 0usize;
    let mut next_comp = 0usize;
    // Explicit DFS frames: (node, next child position).
    let mut frames: Vec<(usize, usize)> = Vec::new();

    for root in 0..n {
        if index[root] != UNSEEN {
            continue;
        }
        frames.push((root, 0));
        while let Some(&mut (node, ref mut child)) = frames.last_mut() {
            if *child == 0 {
                index[node] = next_index;
                lowlink[node] = next_index;
                next_index += 1;
                stack.push(node);
                on_stack[node] = true;
            }
            if let Some(&next_node) = adj[node].get(*child) {
                *child += 1;
                if index[next_node] == UNSEEN {
                    frames.push((next_node, 0));
                } else if on_stack[next_node] {
                    lowlink[node] = lowlink[node].min(index[next_node]);
                }
            } else {
                frames.pop();
                if let Some(&mut (parent, _)) = frames.last_mut() {
                    lowlink[parent] = lowlink[parent].min(lowlink[node]);
                }
                if lowlink[node] == index[node] {
                    while let Some(top) = stack.pop() {
                        on_stack[top] = false;
                        comp[top] = next_comp;
                        if top == node {
                            break;
                        }
                    }
                    next_comp += 1;
                }
            }
        }
    }
    comp
}

/// BFS distances to `source` along `rev` edges, restricted to `source`'s SCC.
fn bfs_distances(rev: &[Vec<usize>], source: usize, comp: &[usize]) -> Vec<u32> {
    let mut dist = vec![u32::MAX; rev.len()];
    dist[source] = 0;
    let mut queue = VecDeque::from([source]);
    while let Some(node) = queue.pop_front() {
        for &next in &rev[node] {
            if comp[next] == comp[source] && dist[next] == u32::MAX {
                dist[next] = dist[node] + 1;
                queue.push_back(next);
            }
        }
    }
    dist
}

/// Finds a simple path `start -> .. -> target` using between 2 and `max_edges`
/// edges, pruning with admissible reverse-BFS distances. Returns the node
/// sequence after `start` (ending in `target`).
fn bounded_simple_path(
    fwd: &[Vec<usize>],
    start: usize,
    target: usize,
    max_edges: usize,
    dist_to_target: &[u32],
) -> Option<Vec<usize>> {
    if start == target {
        return None;
    }
    let mut on_path = vec![false; fwd.len()];
    on_path[start] = true;
    let mut path: Vec<usize> = Vec::new();
    // Frames mirror the current path: (node, next child position).
    let mut frames: Vec<(usize, usize)> = vec![(start, 0)];
    while let Some(top) = frames.last_mut() {
        let (node, child) = (top.0, &mut top.1);
        let depth = path.len(); // edges used so far
        if let Some(&next) = fwd[node].get(*child) {
            *child += 1;
            if next == target {
                if depth + 1 >= 2 {
                    path.push(target);
                    return Some(path);
                }
                continue; // a 2-cycle; matched trading covers those
            }
            if on_path[next] {
                continue;
            }
            // Need depth+1 edges to reach `next` plus its distance back to target.
            if dist_to_target[next] == u32::MAX
                || depth + 1 + dist_to_target[next] as usize > max_edges
            {
                continue;
            }
            on_path[next] = true;
            path.push(next);
            frames.push((next, 0));
        } else {
            frames.pop();
            if let Some(popped) = path.pop() {
                on_path[popped] = false;
            }
        }
    }
    None
}

/// Deduplicated edge multiplicity helper shared by tests and diagnostics.
pub fn distinct_edges(records: &[TransferRecord]) -> usize {
    let mut set = HashSet::new();
    for r in records {
        if r.from_addr != r.to_addr {
            set.insert((r.from_addr.as_str(), r.to_addr.as_str()));
        }
    }
    set.len()
}

/// Convenience used by tests: does any record appear in `flags` region marked true.
#[doc(hidden)]
pub fn _count_flags(flags: &[bool]) -> usize {
    flags.iter().filter(|f| **f).count()
}
