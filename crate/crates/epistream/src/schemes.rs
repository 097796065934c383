//! The gossip scheduling policies: peer selection and chunk selection,
//! kept as pure functions over explicit inputs so they can be exercised
//! without an engine behind them.

use crate::model::{ChunkIndex, NodeId, Scheme};
use rand::Rng;
use std::collections::BTreeSet;

/// Peer selection policy half of a scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PeerPolicy {
    /// Uniform over candidates.
    Random,
    /// Probability proportional to the candidate's upload bandwidth.
    BandwidthAware,
}

impl Scheme {
    pub fn peer_policy(self) -> PeerPolicy {
        match self {
            Scheme::RpLb | Scheme::RpLu => PeerPolicy::Random,
            Scheme::BaLu => PeerPolicy::BandwidthAware,
        }
    }
}

/// Draws `k` distinct peers from `candidates` (without replacement).
/// `bandwidth[id]` backs the bandwidth-aware weighting. If `k` covers all
/// candidates the whole set is returned without consuming randomness.
pub fn select_peers<R: Rng>(
    policy: PeerPolicy,
    candidates: &[NodeId],
    bandwidth: &[f64],
    k: usize,
    rng: &mut R,
) -> Vec<NodeId> {
    if k >= candidates.len() {
        return candidates.to_vec();
    }
    let mut pool = candidates.to_vec();
    match policy {
        PeerPolicy::Random => {
            // Partial Fisher–Yates: the first k slots become the sample.
            for i in 0..k {
                let j = rng.random_range(i..pool.len());
                pool.swap(i, j);
            }
            pool.truncate(k);
            pool
        }
        PeerPolicy::BandwidthAware => {
            // Successive weighted draws without replacement.
            let mut weights: Vec<f64> = pool.iter().map(|&p| bandwidth[p]).collect();
            let mut picked = Vec::with_capacity(k);
            for _ in 0..k {
                let total: f64 = weights.iter().sum();
                let mut x = rng.random_range(0.0..total);
                let mut idx = weights.len() - 1;
                for (i, w) in weights.iter().enumerate() {
                    if x < *w {
                        idx = i;
                        break;
                    }
                    x -= w;
                }
                picked.push(pool.swap_remove(idx));
                weights.swap_remove(idx);
            }
            picked
        }
    }
}

/// Latest chunk in the sender's window, target's holdings unknown.
pub fn latest_blind(sender_window: &BTreeSet<ChunkIndex>) -> Option<ChunkIndex> {
    sender_window.iter().next_back().copied()
}

/// Latest chunk in the sender's window for which `held` says the
/// target does not already have (or expect) it.
pub fn latest_useful_with(
    sender_window: &BTreeSet<ChunkIndex>,
    held: impl Fn(ChunkIndex) -> bool,
) -> Option<ChunkIndex> {
    sender_window.iter().rev().copied().find(|&c| !held(c))
}

/// Latest chunk the sender holds that the target is missing.
pub fn latest_useful(
    sender_window: &BTreeSet<ChunkIndex>,
    target_has: &BTreeSet<ChunkIndex>,
) -> Option<ChunkIndex> {
    latest_useful_with(sender_window, |c| target_has.contains(&c))
}

/// One data send the scheduler decided on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Assignment {
    pub target: NodeId,
    pub chunk: ChunkIndex,
}

/// Picks up to `cap` (target, chunk) sends over the probed peers: each
/// target's most useful chunk, targets ranked by how fresh that chunk
/// is. `holds(peer, chunk)` answers whether a send would be wasted on
/// that peer — already delivered, already on its way, or already
/// consumed and dropped. Ties between equally fresh targets break by
/// coin flip so a fixed peer order cannot starve anyone.
///
/// Parallel slots spread over distinct chunks when they can: a chunk in
/// `uploading` (or picked for an earlier slot here) is passed over if the
/// target still needs something else, so one hot chunk cannot hog every
/// slot while older gaps starve. When the target needs nothing else, the
/// slot falls back to the hot chunk rather than idle.
pub fn assign_recipients<R: Rng, F: Fn(NodeId, ChunkIndex) -> bool>(
    sender_window: &BTreeSet<ChunkIndex>,
    peers: &[NodeId],
    holds: F,
    uploading: &BTreeSet<ChunkIndex>,
    cap: usize,
    rng: &mut R,
) -> Vec<Assignment> {
    // Highest chunk first; equal chunks in randomized order.
    let mut keyed: Vec<(ChunkIndex, u64, NodeId)> = peers
        .iter()
        .filter_map(|&peer| {
            latest_useful_with(sender_window, |c| holds(peer, c))
                .map(|chunk| (chunk, rng.random::<u64>(), peer))
        })
        .collect();
    keyed.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut busy = uploading.clone();
    let mut out = Vec::with_capacity(cap.min(keyed.len()));
    for (chunk, _, target) in keyed {
        if out.len() >= cap {
            break;
        }
        let pick = latest_useful_with(sender_window, |c| {
            holds(target, c) || busy.contains(&c)
        })
        .unwrap_or(chunk);
        busy.insert(pick);
        out.push(Assignment { target, chunk: pick });
    }
    out
}


#[cfg(test)]
mod prop_tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    proptest! {
        #[test]
        fn selection_size_and_membership(
            n in 1usize..30,
            k in 0usize..40,
            seed in any::<u64>(),
            ba in any::<bool>(),
        ) {
            let cands: Vec<NodeId> = (0..n).collect();
            let bw: Vec<f64> = (0..n).map(|i| 1.0 + (i % 5) as f64).collect();
            let policy = if ba { PeerPolicy::BandwidthAware } else { PeerPolicy::Random };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let got = select_peers(policy, &cands, &bw, k, &mut rng);
            prop_assert_eq!(got.len(), k.min(n));
            let uniq: std::collections::BTreeSet<_> = got.iter().collect();
            prop_assert_eq!(uniq.len(), got.len());
            for p in &got {
                prop_assert!(cands.contains(p));
            }
        }

        #[test]
        fn useful_is_fresh_and_missing(
            sender in proptest::collection::btree_set(0u64..50, 0..12),
            target in proptest::collection::btree_set(0u64..50, 0..12),
        ) {
            match latest_useful(&sender, &target) {
                None => {
                    // Everything the sender holds, the target holds too.
                    prop_assert!(sender.iter().all(|c| target.contains(c)));
                }
                Some(c) => {
                    prop_assert!(sender.contains(&c));
                    prop_assert!(!target.contains(&c));
                    // Nothing fresher is missing at the target.
                    for d in sender.range(c + 1..) {
                        prop_assert!(target.contains(d));
                    }
                }
            }
        }

        #[test]
        fn assignments_are_valid_sends(
            sender in proptest::collection::btree_set(0u64..30, 0..10),
            sizes in proptest::collection::vec(0usize..8, 0..6),
            cap in 0usize..8,
            seed in any::<u64>(),
        ) {
            let have: Vec<std::collections::BTreeSet<u64>> = sizes
                .iter()
                .map(|&s| (0..s as u64).collect())
                .collect();
            let peers: Vec<NodeId> = (0..have.len()).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let got = assign_recipients(
                &sender,
                &peers,
                |p, c| have[p].contains(&c),
                &std::collections::BTreeSet::new(),
                cap,
                &mut rng,
            );
            prop_assert!(got.len() <= cap);
            let targets: std::collections::BTreeSet<_> = got.iter().map(|a| a.target).collect();
            prop_assert_eq!(targets.len(), got.len());
            // The freshest deficit anywhere is served first.
            if let Some(first) = got.first() {
                let best = peers.iter().filter_map(|&p| latest_useful(&sender, &have[p])).max();
                prop_assert_eq!(Some(first.chunk), best);
            }
            // Each slot takes the freshest chunk its target lacks that no
            // earlier slot claimed; a fully claimed target falls back to
            // its plain latest-useful.
            let mut busy = std::collections::BTreeSet::new();
            for a in &got {
                let has = &have[a.target];
                prop_assert!(sender.contains(&a.chunk));
                prop_assert!(!has.contains(&a.chunk));
                let masked =
                    latest_useful_with(&sender, |c| has.contains(&c) || busy.contains(&c));
                match masked {
                    Some(c) => prop_assert_eq!(a.chunk, c),
                    None => prop_assert_eq!(Some(a.chunk), latest_useful(&sender, has)),
                }
                busy.insert(a.chunk);
            }
        }
    }
}
