use std::fmt;

use serde::{Deserialize, Serialize};

use crate::types::{ServerId, Transaction, TxKey};

/// Wire message variants. Every variant carries the transaction it is about.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MessageKind {
    Disseminate(Transaction),
    Ack(Transaction),
    Approve(Transaction),
    Propose(Transaction),
    ConsensusAccept(Transaction),
}

/// Payload-free tag of a [`MessageKind`], used for counters and traces.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum KindTag {
    Disseminate,
    Ack,
    Approve,
    Propose,
    ConsensusAccept,
}

impl KindTag {
    pub const ALL: [KindTag; 5] = [
        KindTag::Disseminate,
        KindTag::Ack,
        KindTag::Approve,
        KindTag::Propose,
        KindTag::ConsensusAccept,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            KindTag::Disseminate => "DISSEMINATE",
            KindTag::Ack => "ACK",
            KindTag::Approve => "APPROVE",
            KindTag::Propose => "PROPOSE",
            KindTag::ConsensusAccept => "CONSENSUS_ACCEPT",
        }
    }
}

impl fmt::Display for KindTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl MessageKind {
    pub fn tx(&self) -> &Transaction {
        match self {
            MessageKind::Disseminate(t)
            | MessageKind::Ack(t)
            | MessageKind::Approve(t)
            | MessageKind::Propose(t)
            | MessageKind::ConsensusAccept(t) => t,
        }
    }

    pub fn tag(&self) -> KindTag {
        match self {
            MessageKind::Disseminate(_) => KindTag::Disseminate,
            MessageKind::Ack(_) => KindTag::Ack,
            MessageKind::Approve(_) => KindTag::Approve,
            MessageKind::Propose(_) => KindTag::Propose,
            MessageKind::ConsensusAccept(_) => KindTag::ConsensusAccept,
        }
    }
}

/// A message as it travels on a link. The instance is derived from the
/// carried transaction, so it cannot disagree with it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProtocolMessage {
    pub origin: ServerId,
    pub kind: MessageKind,
}

impl ProtocolMessage {
    pub fn new(origin: ServerId, kind: MessageKind) -> Self {
        ProtocolMessage { origin, kind }
    }

    pub fn instance(&self) -> TxKey {
        self.kind.tx().key()
    }

    pub fn tx(&self) -> &Transaction {
        self.kind.tx()
    }
}

/// A message addressed to one recipient.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Envelope {
    pub to: ServerId,
    pub msg: ProtocolMessage,
}

/// One envelope per server `0..n`, sender included.
pub fn broadcast(me: ServerId, n: usize, kind: MessageKind) -> Vec<Envelope> {
    (0..n)
        .map(|to| Envelope {
            to: ServerId(to),
            msg: ProtocolMessage::new(me, kind.clone()),
        })
        .collect()
}

/// Instance state transitions surfaced to traces.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionKind {
    AckSent,
    ApproveSent,
    Amplified,
    Accepted,
    FastAccepted,
    ConsensusAccepted,
    ConsensusProposed,
    SyncAckSent,
    Decided,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transition {
    pub kind: TransitionKind,
    pub tx: Transaction,
    /// Supporting count for `tx` at the moment of the transition.
    pub count: usize,
}

/// How a value came to be accepted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcceptPath {
    Broadcast,
    FastPath,
    Consensus,
    OneRound,
}

/// Everything one handler invocation produced.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Effects {
    pub messages: Vec<Envelope>,
    pub accepted: Option<(Transaction, AcceptPath)>,
    pub transitions: Vec<Transition>,
}

impl Effects {
    pub fn is_empty(&self) -> bool {
        self.messages.is_empty() && self.accepted.is_none() && self.transitions.is_empty()
    }

    pub fn count_kind(&self, tag: KindTag) -> usize {
        self.messages.iter().filter(|e| e.msg.kind.tag() == tag).count()
    }

    pub(crate) fn note(&mut self, kind: TransitionKind, tx: &Transaction, count: usize) {
        self.transitions.push(Transition {
            kind,
            tx: tx.clone(),
            count,
        });
    }

    pub fn extend(&mut self, other: Effects) {
        self.messages.extend(other.messages);
        if other.accepted.is_some() {
            self.accepted = other.accepted;
        }
        self.transitions.extend(other.transitions);
    }
}
