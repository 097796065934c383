//! Processor-sharing upload link: all concurrent transfers on a node's
//! link drain at `rate / k` where `k` is the number of active transfers.
//!
//! The link never schedules anything itself; it exposes the predicted
//! next completion and an `epoch` counter that bumps on every membership
//! change, so the engine can detect and discard stale completion events.

use crate::model::{ChunkIndex, NodeId};

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Data { to: NodeId, chunk: ChunkIndex },
    Probe { to: NodeId, round: u64 },
    Reply { to: NodeId, round: u64 },
}

impl Payload {
    pub fn to(&self) -> NodeId {
        match self {
            Payload::Data { to, .. } | Payload::Probe { to, .. } | Payload::Reply { to, .. } => *to,
        }
    }

    pub fn is_data(&self) -> bool {
        matches!(self, Payload::Data { .. })
    }
}

#[derive(Debug, Clone)]
pub struct ActiveTx {
    pub payload: Payload,
    pub size: f64,
    pub remaining: f64,
}

/// Slack for float drift when a predicted completion drains a transfer:
/// remaining bytes at completion must sit within this of zero.
const DRAIN_TOL: f64 = 1e-6;

#[derive(Debug)]
pub struct Link {
    rate: f64,
    active: Vec<ActiveTx>,
    last_t: f64,
    epoch: u64,
}

impl Link {
    pub fn new(rate: f64) -> Self {
        assert!(rate > 0.0);
        Link { rate, active: Vec::new(), last_t: 0.0, epoch: 0 }
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn active_count(&self) -> usize {
        self.active.len()
    }

    pub fn active_data_count(&self) -> usize {
        self.active.iter().filter(|tx| tx.payload.is_data()).count()
    }

    /// Chunks currently going out over this link.
    pub fn active_data_chunks(&self) -> std::collections::BTreeSet<ChunkIndex> {
        self.active
            .iter()
            .filter_map(|tx| match tx.payload {
                Payload::Data { chunk, .. } => Some(chunk),
                _ => None,
            })
            .collect()
    }

    /// Drains all active transfers up to `now` at the current share.
    fn advance(&mut self, now: f64) {
        debug_assert!(now >= self.last_t - 1e-9, "time ran backwards: {} -> {now}", self.last_t);
        if self.active.is_empty() {
            self.last_t = now;
            return;
        }
        let drain = self.rate / self.active.len() as f64 * (now - self.last_t);
        for tx in &mut self.active {
            tx.remaining -= drain;
        }
        self.last_t = now;
    }

    /// Starts a transfer. Membership changes, so the epoch bumps and any
    /// previously scheduled completion for this link goes stale.
    pub fn admit(&mut self, now: f64, payload: Payload, size: f64) {
        debug_assert!(size >= 0.0);
        self.advance(now);
        self.active.push(ActiveTx { payload, size, remaining: size });
        self.epoch += 1;
    }

    /// Predicted (time, epoch) of the next completion, if any transfers
    /// are active. Ties on remaining bytes resolve to the earliest
    /// admitted transfer.
    pub fn next_completion(&self) -> Option<(f64, u64)> {
        let min = self
            .active
            .iter()
            .map(|tx| tx.remaining)
            .min_by(f64::total_cmp)?;
        let k = self.active.len() as f64;
        Some((self.last_t + min.max(0.0) * k / self.rate, self.epoch))
    }

    /// Completes the transfer with the least remaining bytes at `now`,
    /// which must be the predicted completion time.
    pub fn complete_min(&mut self, now: f64) -> ActiveTx {
        self.advance(now);
        let idx = self
            .active
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.remaining.total_cmp(&b.1.remaining))
            .map(|(i, _)| i)
            .expect("complete_min on idle link");
        debug_assert!(
            self.active[idx].remaining.abs() <= DRAIN_TOL,
            "completed transfer still has {} Mb left",
            self.active[idx].remaining
        );
        self.epoch += 1;
        // Order of the survivors is preserved: completion-time ties keep
        // resolving by admission order.
        self.active.remove(idx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data(to: NodeId) -> Payload {
        Payload::Data { to, chunk: 0 }
    }

    /// Two staggered transfers on a unit-rate link: A (1.0 Mb) alone for
    /// 0.5 s drains 0.5; B (0.2 Mb) joins, both at rate 1/2. B needs
    /// 0.4 s more (done 0.9); A then has 0.3 left alone (done 1.2).
    #[test]
    fn staggered_shares_drain_correctly() {
        let mut link = Link::new(1.0);
        link.admit(0.0, data(1), 1.0);
        let (t, e) = link.next_completion().unwrap();
        assert_eq!(t, 1.0);
        link.admit(0.5, data(2), 0.2);
        assert_ne!(link.next_completion().unwrap().1, e, "epoch must move");
        let (t, _) = link.next_completion().unwrap();
        assert!((t - 0.9).abs() < 1e-12);
        let done = link.complete_min(t);
        assert_eq!(done.payload.to(), 2);
        assert!(done.remaining.abs() < 1e-12);
        let (t, _) = link.next_completion().unwrap();
        assert!((t - 1.2).abs() < 1e-12);
        let done = link.complete_min(t);
        assert_eq!(done.payload.to(), 1);
        assert_eq!(link.next_completion(), None.map(|x: (f64, u64)| x));
        assert_eq!(link.active_count(), 0);
    }

    #[test]
    fn sole_transfer_takes_size_over_rate() {
        let mut link = Link::new(1.03);
        link.admit(0.0, data(1), 0.15);
        let (t, _) = link.next_completion().unwrap();
        assert!((t - 0.15 / 1.03).abs() < 1e-15);
    }

    #[test]
    fn zero_size_completes_instantly() {
        let mut link = Link::new(1.0);
        link.admit(3.0, Payload::Probe { to: 1, round: 0 }, 0.0);
        link.admit(3.0, data(2), 0.5);
        let (t, _) = link.next_completion().unwrap();
        assert_eq!(t, 3.0);
        let done = link.complete_min(3.0);
        assert!(matches!(done.payload, Payload::Probe { .. }));
        // The data transfer was unaffected by the zero-size companion.
        let (t, _) = link.next_completion().unwrap();
        assert!((t - 3.5).abs() < 1e-12);
    }

    #[test]
    fn equal_remaining_completes_in_admission_order() {
        let mut link = Link::new(2.0);
        link.admit(0.0, data(7), 0.4);
        link.admit(0.0, data(8), 0.4);
        let (t, _) = link.next_completion().unwrap();
        assert!((t - 0.4).abs() < 1e-12);
        assert_eq!(link.complete_min(t).payload.to(), 7);
        let (t2, _) = link.next_completion().unwrap();
        assert!((t2 - t).abs() < 1e-12);
        assert_eq!(link.complete_min(t2).payload.to(), 8);
    }

    #[test]
    fn three_way_share_slows_everyone() {
        // Three equal transfers admitted together on rate 3: each gets
        // rate 1, all complete at size seconds.
        let mut link = Link::new(3.0);
        for i in 0..3 {
            link.admit(0.0, data(i), 0.6);
        }
        let (t, _) = link.next_completion().unwrap();
        assert!((t - 0.6).abs() < 1e-12);
        for i in 0..3 {
            let done = link.complete_min(0.6);
            assert_eq!(done.payload.to(), i);
        }
    }

    #[test]
    fn data_count_ignores_control() {
        let mut link = Link::new(1.0);
        link.admit(0.0, data(1), 0.5);
        link.admit(0.0, Payload::Probe { to: 2, round: 1 }, 0.01);
        link.admit(0.0, Payload::Reply { to: 3, round: 0 }, 0.01);
        assert_eq!(link.active_count(), 3);
        assert_eq!(link.active_data_count(), 1);
    }
}
