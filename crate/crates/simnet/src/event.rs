use std::fmt;

use ondemand_core::{ProtocolMessage, ServerId};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EventId(pub u64);

impl fmt::Display for EventId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

/// A message in flight on the link `from -> to`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScheduledEvent {
    pub id: EventId,
    pub from: ServerId,
    pub to: ServerId,
    pub msg: ProtocolMessage,
    /// Logical time at which the message was sent.
    pub enqueue_time: u64,
    /// Synchronous round in which the message is due; only meaningful under
    /// round-synchronous delivery.
    pub round: u64,
    /// Length of the causal hop chain ending in this message.
    pub depth: u32,
}
