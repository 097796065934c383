//! Time-ordered event queue. Ties in time resolve by scheduling order,
//! which makes every run a deterministic function of config and seed.

use crate::model::{ChunkIndex, NodeId};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    /// The source finishes encoding a chunk.
    ChunkCreated { chunk: ChunkIndex },
    /// A node boots its scheduling loop.
    RoundStart { node: NodeId },
    /// The transfer with the least remaining bytes on `node`'s upload
    /// link finishes, if the link is still in the epoch this was
    /// scheduled under.
    LinkDone { node: NodeId, epoch: u64 },
    /// A probe reaches the probed peer.
    ProbeArrived { from: NodeId, to: NodeId, round: u64 },
    /// A reply reaches the prober, granting it this round's access to
    /// the replier's buffer state.
    ReplyArrived { from: NodeId, to: NodeId, round: u64 },
    /// A data payload reaches the receiver.
    DataArrived { from: NodeId, to: NodeId, chunk: ChunkIndex },
}

struct Queued {
    time: f64,
    seq: u64,
    event: Event,
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.seq == other.seq
    }
}
impl Eq for Queued {}

impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed: BinaryHeap is a max-heap, we want earliest first.
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}
impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Default)]
pub struct EventQueue {
    heap: BinaryHeap<Queued>,
    next_seq: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn schedule(&mut self, time: f64, event: Event) {
        debug_assert!(time.is_finite());
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Queued { time, seq, event });
    }

    pub fn pop(&mut self) -> Option<(f64, Event)> {
        self.heap.pop().map(|q| (q.time, q.event))
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pops_in_time_order() {
        let mut q = EventQueue::new();
        q.schedule(2.0, Event::RoundStart { node: 2 });
        q.schedule(0.5, Event::RoundStart { node: 0 });
        q.schedule(1.0, Event::RoundStart { node: 1 });
        let order: Vec<f64> = std::iter::from_fn(|| q.pop().map(|(t, _)| t)).collect();
        assert_eq!(order, vec![0.5, 1.0, 2.0]);
    }

    #[test]
    fn ties_pop_in_scheduling_order() {
        let mut q = EventQueue::new();
        for node in 0..50 {
            q.schedule(1.0, Event::RoundStart { node });
        }
        q.schedule(0.0, Event::ChunkCreated { chunk: 0 });
        let (_, first) = q.pop().unwrap();
        assert_eq!(first, Event::ChunkCreated { chunk: 0 });
        for want in 0..50 {
            match q.pop().unwrap() {
                (t, Event::RoundStart { node }) => {
                    assert_eq!(t, 1.0);
                    assert_eq!(node, want);
                }
                other => panic!("unexpected {other:?}"),
            }
        }
        assert!(q.pop().is_none());
    }

    #[test]
    fn negative_zero_and_zero_tie_cleanly() {
        let mut q = EventQueue::new();
        q.schedule(0.0, Event::RoundStart { node: 0 });
        q.schedule(-0.0, Event::RoundStart { node: 1 });
        // total_cmp puts -0.0 before 0.0.
        let (_, first) = q.pop().unwrap();
        assert_eq!(first, Event::RoundStart { node: 1 });
    }
}
