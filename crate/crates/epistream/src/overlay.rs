//! Random overlay construction: an Erdős–Rényi graph over the peers plus
//! the source, edge round-trip latencies, and per-peer upload rates.
//!
//! Construction is deterministic given the seed splitter: the edge set,
//! the latency draws, and the bandwidth draws each come from their own
//! named stream, so changing e.g. the latency model leaves the graph
//! itself untouched.

use crate::model::{LatencySpec, NodeId, SimConfig, UploadDist};
use crate::rng::SeedSplitter;
use rand::Rng;
use rand_distr::{Distribution, LogNormal};
use std::collections::VecDeque;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OverlayError {
    #[error("source cannot reach all peers (attempt {attempts}): {unreachable} unreachable")]
    SourceUnreachable { attempts: usize, unreachable: usize },
    #[error("latency matrix `{path}`: {reason}")]
    Matrix { path: String, reason: String },
}

/// Undirected overlay graph with per-edge RTTs, indexed by node id.
/// Peers are `0..n`; the source is node `n`.
#[derive(Debug, Clone)]
pub struct Overlay {
    neighbors: Vec<Vec<NodeId>>,
    /// RTT in seconds for the edge (i, j), keyed `min(i,j), max(i,j)`.
    rtt: std::collections::HashMap<(NodeId, NodeId), f64>,
    source: NodeId,
}

impl Overlay {
    pub fn node_count(&self) -> usize {
        self.neighbors.len()
    }

    pub fn source(&self) -> NodeId {
        self.source
    }

    pub fn neighbors(&self, node: NodeId) -> &[NodeId] {
        &self.neighbors[node]
    }

    pub fn degree(&self, node: NodeId) -> usize {
        self.neighbors[node].len()
    }

    pub fn rtt(&self, a: NodeId, b: NodeId) -> f64 {
        debug_assert_ne!(a, b);
        self.rtt[&(a.min(b), a.max(b))]
    }

    /// RTT if the edge exists.
    pub fn try_rtt(&self, a: NodeId, b: NodeId) -> Option<f64> {
        if a == b {
            return None;
        }
        self.rtt.get(&(a.min(b), a.max(b))).copied()
    }

    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId, f64)> + '_ {
        let mut keys: Vec<_> = self.rtt.keys().copied().collect();
        keys.sort_unstable();
        keys.into_iter().map(move |(a, b)| (a, b, self.rtt[&(a, b)]))
    }

    pub fn edge_count(&self) -> usize {
        self.rtt.len()
    }

    /// Lower median of all edge RTTs.
    pub fn median_rtt(&self) -> f64 {
        let mut v: Vec<f64> = self.rtt.values().copied().collect();
        if v.is_empty() {
            return 0.0;
        }
        v.sort_by(f64::total_cmp);
        v[(v.len() - 1) / 2]
    }

    /// Build a graph from an explicit edge list; used by tests and small
    /// hand-constructed scenarios. RTTs in seconds.
    pub fn from_edges(
        node_count: usize,
        source: NodeId,
        edges: &[(NodeId, NodeId, f64)],
    ) -> Overlay {
        let mut neighbors = vec![Vec::new(); node_count];
        let mut rtt = std::collections::HashMap::new();
        for &(a, b, r) in edges {
            assert!(a != b && a < node_count && b < node_count);
            neighbors[a].push(b);
            neighbors[b].push(a);
            rtt.insert((a.min(b), a.max(b)), r);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        Overlay { neighbors, rtt, source }
    }

    fn all_reachable_from_source(&self) -> bool {
        let mut seen = vec![false; self.node_count()];
        let mut queue = VecDeque::from([self.source]);
        seen[self.source] = true;
        let mut count = 1;
        while let Some(v) = queue.pop_front() {
            for &w in &self.neighbors[v] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    queue.push_back(w);
                }
            }
        }
        count == self.node_count()
    }

    fn unreachable_count(&self) -> usize {
        let mut seen = vec![false; self.node_count()];
        let mut queue = VecDeque::from([self.source]);
        seen[self.source] = true;
        while let Some(v) = queue.pop_front() {
            for &w in &self.neighbors[v] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        seen.iter().filter(|s| !**s).count()
    }
}

const MAX_ATTEMPTS: usize = 10;

/// Builds the overlay, resampling the whole graph (fresh edge and latency
/// streams keyed by the attempt number) until the source reaches every
/// peer. At the default density a retry is essentially never needed; the
/// bound exists so a hostile parameter choice fails instead of spinning.
pub fn build_overlay(cfg: &SimConfig, seeds: &SeedSplitter) -> Result<Overlay, OverlayError> {
    let node_count = cfg.node_count();
    let source = cfg.source_id();
    let mut last_unreachable = node_count - 1;
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = seeds.stream("graph", attempt as u64);
        let mut edges: Vec<(NodeId, NodeId)> = Vec::new();
        for i in 0..node_count {
            for j in (i + 1)..node_count {
                if rng.random_bool(cfg.edge_prob) {
                    edges.push((i, j));
                }
            }
        }
        let rtts = sample_latencies(cfg, seeds, attempt, edges.len())?;
        let with_rtt: Vec<(NodeId, NodeId, f64)> = edges
            .iter()
            .zip(rtts)
            .map(|(&(a, b), r)| (a, b, r))
            .collect();
        let overlay = Overlay::from_edges(node_count, source, &with_rtt);
        if overlay.all_reachable_from_source() {
            return Ok(overlay);
        }
        last_unreachable = overlay.unreachable_count();
    }
    Err(OverlayError::SourceUnreachable {
        attempts: MAX_ATTEMPTS,
        unreachable: last_unreachable,
    })
}

/// One RTT per edge, in seconds, in edge order.
fn sample_latencies(
    cfg: &SimConfig,
    seeds: &SeedSplitter,
    attempt: usize,
    count: usize,
) -> Result<Vec<f64>, OverlayError> {
    let mut rng = seeds.stream("latency", attempt as u64);
    match &cfg.latency_model {
        LatencySpec::Constant { rtt_ms } => Ok(vec![rtt_ms / 1e3; count]),
        LatencySpec::Lognormal { median_ms, sigma } => {
            // Median of a log-normal is exp(mu).
            let dist = LogNormal::new(median_ms.ln(), *sigma)
                .expect("validated sigma is finite and non-negative");
            Ok((0..count).map(|_| dist.sample(&mut rng) / 1e3).collect())
        }
        LatencySpec::Matrix { path, scale } => {
            let pool = load_matrix_pool(path)?;
            Ok((0..count)
                .map(|_| pool[rng.random_range(0..pool.len())] * scale / 1e3)
                .collect())
        }
    }
}

/// Reads a whitespace-separated file of RTT samples in milliseconds.
/// Lines starting with `#` are comments; values must be non-negative.
fn load_matrix_pool(path: &str) -> Result<Vec<f64>, OverlayError> {
    let err = |reason: String| OverlayError::Matrix { path: path.to_string(), reason };
    let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    let mut pool = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| err(format!("bad RTT value `{tok}`")))?;
            if !(v >= 0.0) || !v.is_finite() {
                return Err(err(format!("negative or non-finite RTT `{tok}`")));
            }
            pool.push(v);
        }
    }
    if pool.is_empty() {
        return Err(err("no RTT samples in file".into()));
    }
    Ok(pool)
}

/// Per-node upload rate in Mb/s, indexed by node id; the source gets its
/// own configured rate. Peer draws come from the "bandwidth" stream so
/// the same peer keeps the same class across graph retries.
pub fn sample_bandwidths(cfg: &SimConfig, seeds: &SeedSplitter) -> Vec<f64> {
    let mut rng = seeds.stream("bandwidth", 0);
    let mut rates: Vec<f64> = (0..cfg.n)
        .map(|_| match &cfg.upload_dist {
            UploadDist::Homogeneous { rate } => *rate,
            UploadDist::Discrete { classes } => {
                let x: f64 = rng.random();
                let mut acc = 0.0;
                for c in classes {
                    acc += c.prob;
                    if x < acc {
                        return c.rate;
                    }
                }
                // x landed in the rounding sliver above the last class.
                classes.last().unwrap().rate
            }
        })
        .collect();
    rates.push(cfg.source_upload);
    rates
}
