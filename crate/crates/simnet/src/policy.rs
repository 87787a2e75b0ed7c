//! Delivery policies: the adversary's control over message ordering.

use std::collections::{BTreeSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::event::{EventId, ScheduledEvent};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DeliveryPolicy {
    /// Oldest pending event first.
    Fifo,
    /// Uniform choice over the pending set from a seeded stream.
    SeededRandom(u64),
    /// Deliver these event ids in order. Ids already delivered are skipped;
    /// when the next id is not pending the oldest pending event goes instead.
    Scripted(Vec<EventId>),
    /// Lock-step rounds: everything sent in round `r` is delivered in round
    /// `r + 1`, oldest first, and nodes see a round-end hook between rounds.
    RoundSynchronous,
}

/// Per-run selection state for a [`DeliveryPolicy`].
#[derive(Clone, Debug)]
pub(crate) enum Selector {
    Fifo,
    Random(Box<ChaCha8Rng>),
    Scripted(VecDeque<EventId>),
    Rounds,
}

impl Selector {
    pub(crate) fn new(policy: &DeliveryPolicy) -> Self {
        match policy {
            DeliveryPolicy::Fifo => Selector::Fifo,
            DeliveryPolicy::SeededRandom(seed) => {
                Selector::Random(Box::new(ChaCha8Rng::seed_from_u64(*seed)))
            }
            DeliveryPolicy::Scripted(ids) => Selector::Scripted(ids.iter().copied().collect()),
            DeliveryPolicy::RoundSynchronous => Selector::Rounds,
        }
    }

    pub(crate) fn is_rounds(&self) -> bool {
        matches!(self, Selector::Rounds)
    }

    /// Picks an index into `pending`, which is sorted by id and non-empty.
    pub(crate) fn select(
        &mut self,
        pending: &[ScheduledEvent],
        delivered: &BTreeSet<EventId>,
    ) -> usize {
        debug_assert!(!pending.is_empty());
        match self {
            Selector::Fifo => 0,
            Selector::Random(rng) => rng.gen_range(0..pending.len()),
            Selector::Scripted(script) => {
                while script.front().is_some_and(|id| delivered.contains(id)) {
                    script.pop_front();
                }
                script
                    .front()
                    .and_then(|id| pending.binary_search_by_key(id, |e| e.id).ok())
                    .unwrap_or(0)
            }
            Selector::Rounds => {
                let mut best = 0;
                for (i, e) in pending.iter().enumerate() {
                    if e.round < pending[best].round {
                        best = i;
                    }
                }
                best
            }
        }
    }
}
