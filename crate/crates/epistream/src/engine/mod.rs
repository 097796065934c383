//! The simulation engine.
//!
//! Every node owns one processor-shared upload link. Chunks appear at
//! the source on a fixed clock and spread by push: schemes with probes
//! run a free-running control loop (probe m neighbors, collect replies,
//! re-rank, repeat), and a data plane that keeps up to m' upload slots
//! filled with the freshest chunk each probed neighbor is missing.
//! Parallel slots spread over distinct chunks when they can, so one hot
//! chunk cannot hog a sender's whole link while older gaps starve. The
//! blind scheme skips control entirely and pushes its newest chunk at
//! random neighbors as fast as the link drains.
//!
//! Probes and replies pay their way — they occupy the shared link and
//! fly for half an RTT — but the information they grant is exact: chunk
//! selection reads the probed neighbor's live holdings plus every
//! chunk already scheduled toward it, so two senders never push the
//! same chunk at the same receiver. What waste remains comes from the
//! blind scheme and from deliveries that land too late to matter.
//!
//! Determinism: all randomness comes from per-node policy streams, and
//! simultaneous events fire in scheduling order, so a (config, seed)
//! pair fixes the entire run bit for bit.

mod link;
mod queue;

pub use link::{ActiveTx, Link, Payload};
pub use queue::{Event, EventQueue};

use crate::metrics::Metrics;
use crate::model::{ChunkIndex, NodeId, SimConfig};
use crate::overlay::{build_overlay, sample_bandwidths, Overlay, OverlayError};
use crate::rng::SeedSplitter;
use crate::schemes::{assign_recipients, select_peers};
use crate::trace::{NullSink, TraceEvent, TraceKind, TraceSink};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeSet, HashMap};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] crate::model::ConfigError),
    #[error(transparent)]
    Overlay(#[from] OverlayError),
}

/// Raw accounting out of one run; `Metrics::compute` distills it.
#[derive(Debug, Clone)]
pub struct RunStats {
    /// Per chunk: peers that received it before its playout horizon.
    pub timely_count: Vec<u32>,
    /// Per chunk: summed (arrival - creation) over timely first deliveries.
    pub delay_sum: Vec<f64>,
    /// Per chunk: latest timely first delivery (diffusion finish time).
    pub max_timely_arrival: Vec<f64>,
    /// Control bytes whose transmission completed inside the window.
    pub control_bytes_window: f64,
    /// Wasted data bytes (duplicates and post-horizon deliveries) whose
    /// transmission completed inside the window.
    pub dup_bytes_window: f64,
    pub dup_arrivals_window: u64,
    pub control_msgs_total: u64,
    pub data_sends_total: u64,
    pub median_rtt: f64,
    pub sim_end: f64,
}

pub struct RunOutput {
    pub stats: RunStats,
    pub metrics: Metrics,
}

/// Overlay and upload rates a run needs, derived from config and seed.
/// The trace checker rebuilds the same pair to audit a trace.
pub fn build_inputs(cfg: &SimConfig) -> Result<(Overlay, Vec<f64>), OverlayError> {
    let seeds = SeedSplitter::new(cfg.seed);
    let overlay = build_overlay(cfg, &seeds)?;
    let bw = sample_bandwidths(cfg, &seeds);
    Ok((overlay, bw))
}

pub fn run(cfg: &SimConfig) -> Result<RunOutput, SimError> {
    run_traced(cfg, &mut NullSink)
}

pub fn run_traced<S: TraceSink>(cfg: &SimConfig, sink: &mut S) -> Result<RunOutput, SimError> {
    cfg.validate()?;
    let (overlay, bw) = build_inputs(cfg)?;
    Ok(run_on(cfg, &overlay, &bw, sink))
}

/// Runs on an explicit overlay and bandwidth assignment (the config's
/// graph parameters are ignored; everything else applies).
pub fn run_on<S: TraceSink>(
    cfg: &SimConfig,
    overlay: &Overlay,
    bw: &[f64],
    sink: &mut S,
) -> RunOutput {
    assert_eq!(overlay.node_count(), cfg.node_count());
    assert_eq!(bw.len(), cfg.node_count());
    let stats = Sim::new(cfg, overlay, bw, sink).run();
    let metrics = Metrics::compute(cfg, &stats);
    RunOutput { stats, metrics }
}

enum RoundState {
    /// No round in flight: still booting, parked for lack of work, or
    /// past the end of the stream.
    Idle,
    Waiting {
        started_at: f64,
        expected: usize,
        replies: Vec<NodeId>,
    },
}

struct Node {
    /// Buffer window under the range rule: max - min < capacity.
    window: BTreeSet<ChunkIndex>,
    /// Push targets. Peers exclude the source: it needs nothing.
    candidates: Vec<NodeId>,
    link: Link,
    rng: ChaCha8Rng,
    round: u64,
    state: RoundState,
    /// Chunks some sender has scheduled for us and not yet delivered.
    /// Probers treat them as held, so nobody schedules one twice.
    inbound: BTreeSet<ChunkIndex>,
    /// Neighbors whose replies resolved the last round; slot refills
    /// keep drawing on them until the next round resolves.
    known: Vec<NodeId>,
}

/// Inserts under the range rule: a chunk older than `capacity` behind
/// the newest held chunk is refused, and an accepted newcomer evicts
/// everything that far behind it. Returns whether the window gained it.
pub(crate) fn window_insert(
    window: &mut BTreeSet<ChunkIndex>,
    chunk: ChunkIndex,
    capacity: u64,
) -> bool {
    if let Some(&max) = window.last() {
        if chunk + capacity <= max {
            return false;
        }
    }
    if !window.insert(chunk) {
        return false;
    }
    let max = *window.last().unwrap();
    while let Some(&min) = window.first() {
        if min + capacity <= max {
            window.pop_first();
        } else {
            break;
        }
    }
    true
}

struct Sim<'a, S: TraceSink> {
    cfg: &'a SimConfig,
    overlay: &'a Overlay,
    bw: &'a [f64],
    sink: &'a mut S,
    queue: EventQueue,
    nodes: Vec<Node>,
    now: f64,
    /// Horizon of the last chunk: past this nothing can be timely, so
    /// scheduling stops and in-flight transfers drain out.
    t_end: f64,
    t0: f64,
    t1: f64,
    seen_words: usize,
    /// Per live chunk: bitmap over peers that received it at least once.
    chunk_seen: HashMap<ChunkIndex, Vec<u64>>,
    timely_count: Vec<u32>,
    delay_sum: Vec<f64>,
    max_timely_arrival: Vec<f64>,
    control_bytes_window: f64,
    dup_bytes_window: f64,
    dup_arrivals_window: u64,
    control_msgs_total: u64,
    data_sends_total: u64,
}

impl<'a, S: TraceSink> Sim<'a, S> {
    fn new(cfg: &'a SimConfig, overlay: &'a Overlay, bw: &'a [f64], sink: &'a mut S) -> Self {
        let seeds = SeedSplitter::new(cfg.seed);
        let source = cfg.source_id();
        let nodes = (0..cfg.node_count())
            .map(|id| {
                let mut candidates: Vec<NodeId> = overlay.neighbors(id).to_vec();
                if id != source {
                    candidates.retain(|&p| p != source);
                }
                Node {
                    window: BTreeSet::new(),
                    candidates,
                    link: Link::new(bw[id]),
                    rng: seeds.stream("policy", id as u64),
                    round: 0,
                    state: RoundState::Idle,
                    inbound: BTreeSet::new(),
                    known: Vec::new(),
                }
            })
            .collect();
        let total = cfg.total_chunks() as usize;
        let mut queue = EventQueue::new();
        queue.schedule(0.0, Event::ChunkCreated { chunk: 0 });
        for node in 0..cfg.node_count() {
            queue.schedule(0.0, Event::RoundStart { node });
        }
        let (t0, t1) = cfg.window();
        Sim {
            cfg,
            overlay,
            bw,
            sink,
            queue,
            nodes,
            now: 0.0,
            t_end: cfg.horizon(cfg.total_chunks() - 1),
            t0,
            t1,
            seen_words: cfg.n.div_ceil(64),
            chunk_seen: HashMap::new(),
            timely_count: vec![0; total],
            delay_sum: vec![0.0; total],
            max_timely_arrival: vec![f64::NEG_INFINITY; total],
            control_bytes_window: 0.0,
            dup_bytes_window: 0.0,
            dup_arrivals_window: 0,
            control_msgs_total: 0,
            data_sends_total: 0,
        }
    }

    fn run(mut self) -> RunStats {
        while let Some((t, ev)) = self.queue.pop() {
            self.now = t;
            match ev {
                Event::ChunkCreated { chunk } => self.on_chunk_created(chunk),
                Event::RoundStart { node } => self.boot(node),
                Event::LinkDone { node, epoch } => self.on_link_done(node, epoch),
                Event::ProbeArrived { from, to, round } => self.on_probe_arrived(from, to, round),
                Event::ReplyArrived { from, to, round } => self.on_reply_arrived(from, to, round),
                Event::DataArrived { from, to, chunk } => self.on_data_arrived(from, to, chunk),
            }
        }
        RunStats {
            timely_count: self.timely_count,
            delay_sum: self.delay_sum,
            max_timely_arrival: self.max_timely_arrival,
            control_bytes_window: self.control_bytes_window,
            dup_bytes_window: self.dup_bytes_window,
            dup_arrivals_window: self.dup_arrivals_window,
            control_msgs_total: self.control_msgs_total,
            data_sends_total: self.data_sends_total,
            median_rtt: self.overlay.median_rtt(),
            sim_end: self.now,
        }
    }

    /// Reschedules this node's next link completion after any admission
    /// or completion. Events scheduled under earlier epochs go stale and
    /// are skipped when popped.
    fn resync_link(&mut self, node: NodeId) {
        if let Some((t, epoch)) = self.nodes[node].link.next_completion() {
            self.queue.schedule(t, Event::LinkDone { node, epoch });
        }
    }

    fn on_chunk_created(&mut self, chunk: ChunkIndex) {
        let source = self.cfg.source_id();
        self.sink
            .record(&TraceEvent::create(self.now, source, chunk, self.cfg.chunk_size));
        window_insert(&mut self.nodes[source].window, chunk, self.cfg.buffer_capacity);
        self.chunk_seen.insert(chunk, vec![0u64; self.seen_words]);
        // A chunk this far back is past its horizon; its bitmap no
        // longer affects any accounting.
        if chunk > self.cfg.buffer_capacity {
            self.chunk_seen.remove(&(chunk - self.cfg.buffer_capacity - 1));
        }
        if chunk + 1 < self.cfg.total_chunks() {
            self.queue
                .schedule(self.cfg.creation_time(chunk + 1), Event::ChunkCreated { chunk: chunk + 1 });
        }
        self.after_window_gain(source);
    }

    fn boot(&mut self, node: NodeId) {
        if self.cfg.scheme.uses_probes() {
            self.try_launch_round(node);
        } else {
            self.refill_blind(node);
        }
    }

    /// A slot freed or the window grew: push more data if the scheme
    /// allows, and restart a parked control loop.
    fn after_window_gain(&mut self, node: NodeId) {
        if self.cfg.scheme.uses_probes() {
            self.top_up(node);
            if matches!(self.nodes[node].state, RoundState::Idle) {
                self.try_launch_round(node);
            }
        } else {
            self.refill_blind(node);
        }
    }

    /// Blind push: keep all slots busy resending the newest chunk to
    /// uniformly random neighbors. Knows nothing about receivers, so the
    /// same chunk happily goes out again and again.
    fn refill_blind(&mut self, node: NodeId) {
        if self.now >= self.t_end {
            return;
        }
        loop {
            let n = &mut self.nodes[node];
            if n.candidates.is_empty() {
                return;
            }
            if n.link.active_data_count() >= self.cfg.max_parallel_uploads {
                return;
            }
            let Some(&chunk) = n.window.last() else { return };
            let target = n.candidates[n.rng.random_range(0..n.candidates.len())];
            self.admit_data(node, target, chunk);
        }
    }

    fn try_launch_round(&mut self, node: NodeId) {
        if self.now >= self.t_end {
            return;
        }
        let policy = self.cfg.scheme.peer_policy();
        let n = &mut self.nodes[node];
        if !matches!(n.state, RoundState::Idle) || n.candidates.is_empty() {
            return;
        }
        let targets = select_peers(
            policy,
            &n.candidates,
            self.bw,
            self.cfg.probe_set_size,
            &mut n.rng,
        );
        n.round += 1;
        let round = n.round;
        n.state = RoundState::Waiting {
            started_at: self.now,
            expected: targets.len(),
            replies: Vec::with_capacity(targets.len()),
        };
        for to in targets {
            self.nodes[node].link.admit(
                self.now,
                Payload::Probe { to, round },
                self.cfg.control_msg_size,
            );
            self.control_msgs_total += 1;
            self.sink.record(&TraceEvent::ctrl(
                self.now,
                TraceKind::StartCtrl,
                node,
                to,
                self.cfg.control_msg_size,
            ));
        }
        self.resync_link(node);
    }

    /// Fills free upload slots with the freshest chunk each neighbor
    /// from the last resolved round still lacks — judged against the
    /// neighbor's live window, its in-flight reservations, and its
    /// admissible range. Returns how many sends were launched.
    fn top_up(&mut self, node: NodeId) -> usize {
        if self.now >= self.t_end {
            return 0;
        }
        let cap = self.cfg.max_parallel_uploads;
        let active = self.nodes[node].link.active_data_count();
        if active >= cap || self.nodes[node].window.is_empty() || self.nodes[node].known.is_empty()
        {
            return 0;
        }
        let capacity = self.cfg.buffer_capacity;
        // The policy stream steps aside so selection can borrow every
        // node's state while drawing tie-breaks.
        let mut rng = std::mem::replace(&mut self.nodes[node].rng, ChaCha8Rng::seed_from_u64(0));
        let sender = &self.nodes[node];
        let picks = assign_recipients(
            &sender.window,
            &sender.known,
            |peer, chunk| {
                let t = &self.nodes[peer];
                t.window.contains(&chunk)
                    || t.inbound.contains(&chunk)
                    // A chunk the receiver's range rule would refuse is
                    // no longer worth anyone's upload slot.
                    || t.window.last().is_some_and(|&max| chunk + capacity <= max)
            },
            &sender.link.active_data_chunks(),
            cap - active,
            &mut rng,
        );
        self.nodes[node].rng = rng;
        for a in &picks {
            self.admit_data(node, a.target, a.chunk);
        }
        picks.len()
    }

    fn admit_data(&mut self, node: NodeId, to: NodeId, chunk: ChunkIndex) {
        // Reserve on the receiver: from this instant the chunk reads as
        // scheduled, and no other prober will pick it for `to`.
        self.nodes[to].inbound.insert(chunk);
        self.nodes[node]
            .link
            .admit(self.now, Payload::Data { to, chunk }, self.cfg.chunk_size);
        self.data_sends_total += 1;
        self.sink.record(&TraceEvent::data(
            self.now,
            TraceKind::StartData,
            node,
            to,
            chunk,
            self.cfg.chunk_size,
        ));
        self.resync_link(node);
    }

    fn on_link_done(&mut self, node: NodeId, epoch: u64) {
        if epoch != self.nodes[node].link.epoch() {
            return;
        }
        let tx = self.nodes[node].link.complete_min(self.now);
        let in_window = self.now >= self.t0 && self.now < self.t1;
        match tx.payload {
            Payload::Data { to, chunk } => {
                self.sink.record(&TraceEvent::data(
                    self.now,
                    TraceKind::DoneData,
                    node,
                    to,
                    chunk,
                    tx.size,
                ));
                let at = self.now + self.overlay.rtt(node, to) / 2.0;
                self.queue.schedule(at, Event::DataArrived { from: node, to, chunk });
                self.resync_link(node);
                // A data slot freed up.
                self.after_window_gain(node);
            }
            Payload::Probe { to, round } => {
                self.sink.record(&TraceEvent::ctrl(
                    self.now,
                    TraceKind::DoneCtrl,
                    node,
                    to,
                    tx.size,
                ));
                if in_window {
                    self.control_bytes_window += tx.size;
                }
                let at = self.now + self.overlay.rtt(node, to) / 2.0;
                self.queue.schedule(at, Event::ProbeArrived { from: node, to, round });
                self.resync_link(node);
            }
            Payload::Reply { to, round } => {
                self.sink.record(&TraceEvent::ctrl(
                    self.now,
                    TraceKind::DoneCtrl,
                    node,
                    to,
                    tx.size,
                ));
                if in_window {
                    self.control_bytes_window += tx.size;
                }
                let at = self.now + self.overlay.rtt(node, to) / 2.0;
                self.queue.schedule(at, Event::ReplyArrived { from: node, to, round });
                self.resync_link(node);
            }
        }
    }

    fn on_probe_arrived(&mut self, from: NodeId, to: NodeId, round: u64) {
        self.sink.record(&TraceEvent::ctrl(
            self.now,
            TraceKind::ArrCtrl,
            from,
            to,
            self.cfg.control_msg_size,
        ));
        // The reply pays for queueing and flight like any message, but
        // what it grants is authority: once it lands, the prober reads
        // our live window and reservations at every scheduling decision.
        self.nodes[to].link.admit(
            self.now,
            Payload::Reply { to: from, round },
            self.cfg.control_msg_size,
        );
        self.control_msgs_total += 1;
        self.sink.record(&TraceEvent::ctrl(
            self.now,
            TraceKind::StartCtrl,
            to,
            from,
            self.cfg.control_msg_size,
        ));
        self.resync_link(to);
    }

    fn on_reply_arrived(&mut self, from: NodeId, to: NodeId, round: u64) {
        self.sink.record(&TraceEvent::ctrl(
            self.now,
            TraceKind::ArrCtrl,
            from,
            to,
            self.cfg.control_msg_size,
        ));
        let n = &mut self.nodes[to];
        if n.round != round {
            return;
        }
        let RoundState::Waiting { expected, replies, .. } = &mut n.state else {
            return;
        };
        replies.push(from);
        if replies.len() == *expected {
            self.resolve_round(to);
        }
    }

    /// All replies are in: the answering neighbors become this node's
    /// push set, slots refill against their current state, and the next
    /// round starts. A round that took no time and found nothing to do
    /// parks instead; any window gain or freed slot restarts it.
    fn resolve_round(&mut self, node: NodeId) {
        let n = &mut self.nodes[node];
        let state = std::mem::replace(&mut n.state, RoundState::Idle);
        let RoundState::Waiting { started_at, replies, .. } = state else {
            unreachable!("resolve without a round in flight");
        };
        n.known = replies;
        let launched = self.top_up(node);
        if self.now == started_at && launched == 0 {
            // Zero-cost control with nothing to push would spin forever
            // at this instant; park until something changes.
            return;
        }
        self.try_launch_round(node);
    }

    fn on_data_arrived(&mut self, from: NodeId, to: NodeId, chunk: ChunkIndex) {
        self.sink.record(&TraceEvent::data(
            self.now,
            TraceKind::ArrData,
            from,
            to,
            chunk,
            self.cfg.chunk_size,
        ));
        // The reservation is spent whether the window accepts it or not.
        self.nodes[to].inbound.remove(&chunk);
        let timely = self.now <= self.cfg.horizon(chunk);
        let first = match self.chunk_seen.get_mut(&chunk) {
            Some(bits) => {
                let (word, bit) = (to / 64, 1u64 << (to % 64));
                let was = bits[word] & bit != 0;
                bits[word] |= bit;
                !was
            }
            // Bitmap already retired: the chunk is far past its horizon.
            None => false,
        };
        if first && timely {
            let i = chunk as usize;
            self.timely_count[i] += 1;
            self.delay_sum[i] += self.now - self.cfg.creation_time(chunk);
            if self.now > self.max_timely_arrival[i] {
                self.max_timely_arrival[i] = self.now;
            }
        } else {
            // Wasted bytes, attributed to when they left the sender's
            // link (arrival minus one-way latency).
            let completed = self.now - self.overlay.rtt(from, to) / 2.0;
            if completed >= self.t0 && completed < self.t1 {
                self.dup_bytes_window += self.cfg.chunk_size;
                self.dup_arrivals_window += 1;
            }
        }
        if window_insert(&mut self.nodes[to].window, chunk, self.cfg.buffer_capacity) {
            self.after_window_gain(to);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_range_rule() {
        let mut w = BTreeSet::new();
        assert!(window_insert(&mut w, 5, 3));
        assert!(window_insert(&mut w, 6, 3));
        // 3 is within range of max 6 (6 - 3 < 3 is false: 3 + 3 <= 6).
        assert!(!window_insert(&mut w, 3, 3));
        assert!(window_insert(&mut w, 4, 3));
        assert_eq!(w.iter().copied().collect::<Vec<_>>(), vec![4, 5, 6]);
        // A big jump evicts stragglers.
        assert!(window_insert(&mut w, 9, 3));
        assert_eq!(w.iter().copied().collect::<Vec<_>>(), vec![9]);
        assert!(!window_insert(&mut w, 9, 3), "re-insert is not a gain");
    }

    #[test]
    fn window_invariant_holds_under_stream() {
        let mut w = BTreeSet::new();
        for chunk in 0..1000u64 {
            window_insert(&mut w, chunk, 30);
            let (min, max) = (*w.first().unwrap(), *w.last().unwrap());
            assert!(max - min < 30);
        }
        assert_eq!(w.len(), 30);
    }
}
