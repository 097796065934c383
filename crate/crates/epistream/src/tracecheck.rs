//! Independent trace audit. Replays a run trace against the bandwidth
//! and latency model with none of the engine's code paths: per-sender
//! processor-sharing discipline, flight times, chunk causality, and the
//! buffer window rule all get re-derived from the trace alone, so a bug
//! in the engine's bookkeeping cannot hide itself.

use crate::engine::{build_inputs, RunStats};
use crate::model::{NodeId, SimConfig};
use crate::overlay::{Overlay, OverlayError};
use crate::trace::{TraceEvent, TraceKind};
use std::collections::{HashMap, VecDeque};
use std::fmt;

/// Per-transfer byte slack allowed for float drift in the replay.
const DRAIN_TOL: f64 = 1e-6;
/// Slack on event timestamps (seconds).
const TIME_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// A transfer drained more bytes than the shared link could carry:
    /// its done event came later than processor sharing allows.
    Overdraw { node: NodeId, time: f64, deficit: f64 },
    /// A transfer completed with bytes still unsent: faster than the
    /// link's capacity share permits.
    EarlyCompletion { node: NodeId, time: f64, remaining: f64 },
    /// Completion of a transfer that was never started.
    DoneWithoutStart { node: NodeId, time: f64 },
    /// A started transfer never completed by the end of the trace.
    UnfinishedTransfer { node: NodeId, remaining: f64 },
    /// A completed message never reached its destination.
    MissingArrival { src: NodeId, dst: NodeId, time: f64 },
    /// An arrival with no matching completion.
    FabricatedArrival { src: NodeId, dst: NodeId, time: f64 },
    /// Arrival time inconsistent with one-way latency after completion.
    LatencyMismatch { src: NodeId, dst: NodeId, expected: f64, got: f64 },
    /// A node sent a chunk it had not created or received by then.
    SendWithoutChunk { node: NodeId, chunk: u64, time: f64 },
    /// A node sent a chunk its buffer window must have evicted.
    StaleSend { node: NodeId, chunk: u64, time: f64, max_seen: u64 },
    /// Traffic between nodes that share no overlay edge.
    UnknownEdge { src: NodeId, dst: NodeId, time: f64 },
    /// A chunk creation not issued by the source.
    BadCreate { node: NodeId, time: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Overdraw { node, time, deficit } => {
                write!(f, "t={time}: link {node} over capacity by {deficit} Mb")
            }
            Violation::EarlyCompletion { node, time, remaining } => {
                write!(f, "t={time}: transfer on link {node} done with {remaining} Mb left")
            }
            Violation::DoneWithoutStart { node, time } => {
                write!(f, "t={time}: completion on link {node} without a start")
            }
            Violation::UnfinishedTransfer { node, remaining } => {
                write!(f, "end of trace: link {node} still holds {remaining} Mb")
            }
            Violation::MissingArrival { src, dst, time } => {
                write!(f, "t={time}: message {src}->{dst} completed but never arrived")
            }
            Violation::FabricatedArrival { src, dst, time } => {
                write!(f, "t={time}: arrival {src}->{dst} with no completed send")
            }
            Violation::LatencyMismatch { src, dst, expected, got } => {
                write!(f, "arrival {src}->{dst} at {got}, latency model says {expected}")
            }
            Violation::SendWithoutChunk { node, chunk, time } => {
                write!(f, "t={time}: node {node} sent chunk {chunk} it never held")
            }
            Violation::StaleSend { node, chunk, time, max_seen } => {
                write!(
                    f,
                    "t={time}: node {node} sent evicted chunk {chunk} (window max {max_seen})"
                )
            }
            Violation::UnknownEdge { src, dst, time } => {
                write!(f, "t={time}: traffic {src}->{dst} without an overlay edge")
            }
            Violation::BadCreate { node, time } => {
                write!(f, "t={time}: chunk created by non-source node {node}")
            }
        }
    }
}

#[derive(Debug, Default)]
pub struct Report {
    pub violations: Vec<Violation>,
    pub transfers_checked: usize,
    pub arrivals_checked: usize,
}

impl Report {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

struct ReplayTx {
    dst: i64,
    chunk: i64,
    remaining: f64,
    flagged: bool,
}

struct LinkReplay {
    rate: f64,
    last_t: f64,
    active: Vec<ReplayTx>,
}

impl LinkReplay {
    fn drain(&mut self, node: NodeId, t: f64, out: &mut Vec<Violation>) {
        if !self.active.is_empty() {
            let share = self.rate / self.active.len() as f64 * (t - self.last_t);
            for tx in &mut self.active {
                tx.remaining -= share;
                if tx.remaining < -DRAIN_TOL && !tx.flagged {
                    tx.flagged = true;
                    out.push(Violation::Overdraw {
                        node,
                        time: t,
                        deficit: -tx.remaining,
                    });
                }
            }
        }
        self.last_t = t;
    }
}

/// Audits a trace against an explicit overlay and bandwidth assignment.
pub fn check(
    events: &[TraceEvent],
    overlay: &Overlay,
    bw: &[f64],
    buffer_capacity: u64,
) -> Report {
    let mut order: Vec<usize> = (0..events.len()).collect();
    order.sort_by(|&a, &b| events[a].time.total_cmp(&events[b].time).then(a.cmp(&b)));

    let n = overlay.node_count();
    let mut report = Report::default();
    let mut links: Vec<LinkReplay> = bw
        .iter()
        .map(|&rate| LinkReplay { rate, last_t: 0.0, active: Vec::new() })
        .collect();
    // (node, chunk) -> earliest time the node held the chunk.
    let mut owned: HashMap<(NodeId, u64), f64> = HashMap::new();
    // Per node: newest chunk ever held, driving the window range rule.
    let mut max_seen: Vec<Option<u64>> = vec![None; n];
    // Completed messages awaiting their arrival, FIFO per directed key.
    let mut in_flight: HashMap<(NodeId, i64, i64), VecDeque<f64>> = HashMap::new();

    for idx in order {
        let ev = &events[idx];
        let t = ev.time;
        match ev.kind {
            TraceKind::Create => {
                if ev.src != overlay.source() {
                    report.violations.push(Violation::BadCreate { node: ev.src, time: t });
                }
                let chunk = ev.chunk as u64;
                owned.entry((ev.src, chunk)).or_insert(t);
                if max_seen[ev.src].is_none_or(|m| chunk > m) {
                    max_seen[ev.src] = Some(chunk);
                }
            }
            TraceKind::StartData | TraceKind::StartCtrl => {
                let dst = ev.dst as NodeId;
                if overlay.try_rtt(ev.src, dst).is_none() {
                    report
                        .violations
                        .push(Violation::UnknownEdge { src: ev.src, dst, time: t });
                }
                if ev.kind == TraceKind::StartData {
                    let chunk = ev.chunk as u64;
                    match owned.get(&(ev.src, chunk)) {
                        Some(&held) if held <= t + TIME_TOL => {}
                        _ => report.violations.push(Violation::SendWithoutChunk {
                            node: ev.src,
                            chunk,
                            time: t,
                        }),
                    }
                    if let Some(m) = max_seen[ev.src] {
                        if chunk + buffer_capacity <= m {
                            report.violations.push(Violation::StaleSend {
                                node: ev.src,
                                chunk,
                                time: t,
                                max_seen: m,
                            });
                        }
                    }
                }
                let link = &mut links[ev.src];
                link.drain(ev.src, t, &mut report.violations);
                link.active.push(ReplayTx {
                    dst: ev.dst,
                    chunk: ev.chunk,
                    remaining: ev.size,
                    flagged: false,
                });
            }
            TraceKind::DoneData | TraceKind::DoneCtrl => {
                let link = &mut links[ev.src];
                link.drain(ev.src, t, &mut report.violations);
                // Among identical concurrent transfers the engine
                // completes the most-drained one first.
                let pos = link
                    .active
                    .iter()
                    .enumerate()
                    .filter(|(_, tx)| tx.dst == ev.dst && tx.chunk == ev.chunk)
                    .min_by(|a, b| a.1.remaining.total_cmp(&b.1.remaining))
                    .map(|(i, _)| i);
                match pos {
                    None => report
                        .violations
                        .push(Violation::DoneWithoutStart { node: ev.src, time: t }),
                    Some(i) => {
                        let tx = link.active.remove(i);
                        if tx.remaining > DRAIN_TOL {
                            report.violations.push(Violation::EarlyCompletion {
                                node: ev.src,
                                time: t,
                                remaining: tx.remaining,
                            });
                        }
                        report.transfers_checked += 1;
                        in_flight
                            .entry((ev.src, ev.dst, ev.chunk))
                            .or_default()
                            .push_back(t);
                    }
                }
            }
            TraceKind::ArrData | TraceKind::ArrCtrl => {
                let dst = ev.dst as NodeId;
                let key = (ev.src, ev.dst, ev.chunk);
                match in_flight.get_mut(&key).and_then(|q| q.pop_front()) {
                    None => report.violations.push(Violation::FabricatedArrival {
                        src: ev.src,
                        dst,
                        time: t,
                    }),
                    Some(done_t) => {
                        report.arrivals_checked += 1;
                        if let Some(rtt) = overlay.try_rtt(ev.src, dst) {
                            let expected = done_t + rtt / 2.0;
                            if (t - expected).abs() > TIME_TOL {
                                report.violations.push(Violation::LatencyMismatch {
                                    src: ev.src,
                                    dst,
                                    expected,
                                    got: t,
                                });
                            }
                        }
                    }
                }
                if ev.kind == TraceKind::ArrData {
                    let chunk = ev.chunk as u64;
                    owned.entry((dst, chunk)).or_insert(t);
                    if max_seen[dst].is_none_or(|m| chunk > m) {
                        max_seen[dst] = Some(chunk);
                    }
                }
            }
        }
    }

    for (node, link) in links.iter().enumerate() {
        for tx in &link.active {
            report.violations.push(Violation::UnfinishedTransfer {
                node,
                remaining: tx.remaining,
            });
        }
    }
    for (&(src, dst, _), queue) in &in_flight {
        for &time in queue {
            report.violations.push(Violation::MissingArrival {
                src,
                dst: dst as NodeId,
                time,
            });
        }
    }
    report
}

/// Audits a trace against the overlay and bandwidths the config and its
/// seed imply; this is the same derivation the engine itself uses.
pub fn check_config(events: &[TraceEvent], cfg: &SimConfig) -> Result<Report, OverlayError> {
    let (overlay, bw) = build_inputs(cfg)?;
    Ok(check(events, &overlay, &bw, cfg.buffer_capacity))
}

/// Cross-checks trace aggregates against the engine's own counters.
/// Returns one line per mismatch; empty means they agree.
pub fn reconcile(events: &[TraceEvent], cfg: &SimConfig, stats: &RunStats) -> Vec<String> {
    let mut issues = Vec::new();
    let creates = events.iter().filter(|e| e.kind == TraceKind::Create).count() as u64;
    let data_starts = events.iter().filter(|e| e.kind == TraceKind::StartData).count() as u64;
    let ctrl_starts = events.iter().filter(|e| e.kind == TraceKind::StartCtrl).count() as u64;
    if creates != cfg.total_chunks() {
        issues.push(format!("trace has {creates} creations, config says {}", cfg.total_chunks()));
    }
    if data_starts != stats.data_sends_total {
        issues.push(format!(
            "trace has {data_starts} data sends, engine counted {}",
            stats.data_sends_total
        ));
    }
    if ctrl_starts != stats.control_msgs_total {
        issues.push(format!(
            "trace has {ctrl_starts} control messages, engine counted {}",
            stats.control_msgs_total
        ));
    }
    let (t0, t1) = cfg.window();
    let ctrl_bytes: f64 = events
        .iter()
        .filter(|e| e.kind == TraceKind::DoneCtrl && e.time >= t0 && e.time < t1)
        .map(|e| e.size)
        .sum();
    if (ctrl_bytes - stats.control_bytes_window).abs() > 1e-9 {
        issues.push(format!(
            "trace window control bytes {ctrl_bytes}, engine counted {}",
            stats.control_bytes_window
        ));
    }
    issues
}
