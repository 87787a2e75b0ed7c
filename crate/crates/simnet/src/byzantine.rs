//! Faulty node behaviours. Byzantine nodes may send anything to anyone, but
//! the simulator drops any envelope whose claimed origin is not the sender.

use std::collections::BTreeSet;
use std::fmt;

use ondemand_core::{Envelope, MessageKind, ProtocolMessage, ServerId, SystemParams, Transaction, TxKey};

use crate::node::Protocol;

/// What a Byzantine node knows about the system it attacks.
#[derive(Clone, Copy, Debug)]
pub struct ByzContext {
    pub me: ServerId,
    pub params: SystemParams,
    pub protocol: Protocol,
    /// Present only for the consensus-on-demand stack.
    pub sequencer: Option<ServerId>,
}

impl ByzContext {
    fn send_all(&self, kind: MessageKind) -> Vec<Envelope> {
        self.send_some(|_| true, kind)
    }

    fn send_some(&self, pick: impl Fn(ServerId) -> bool, kind: MessageKind) -> Vec<Envelope> {
        (0..self.params.n)
            .map(ServerId)
            .filter(|&s| pick(s))
            .map(|to| Envelope {
                to,
                msg: ProtocolMessage::new(self.me, kind.clone()),
            })
            .collect()
    }

    fn send_sequencer(&self, kind: MessageKind) -> Vec<Envelope> {
        self.sequencer
            .map(|to| Envelope {
                to,
                msg: ProtocolMessage::new(self.me, kind),
            })
            .into_iter()
            .collect()
    }
}

/// A user-supplied Byzantine behaviour.
pub trait ByzantineBehavior: Send + Sync + fmt::Debug {
    fn on_message(&mut self, ctx: &ByzContext, from: ServerId, msg: &ProtocolMessage) -> Vec<Envelope>;

    fn clone_box(&self) -> Box<dyn ByzantineBehavior>;
}

impl Clone for Box<dyn ByzantineBehavior> {
    fn clone(&self) -> Self {
        self.clone_box()
    }
}

#[derive(Clone, Debug)]
pub enum ByzantineStrategy {
    /// Never sends anything.
    Silent,
    /// On first contact with the instance of `t`, supports `t` towards
    /// `partition` and `t_prime` towards everyone else.
    Equivocate {
        partition: BTreeSet<ServerId>,
        t: Transaction,
        t_prime: Transaction,
    },
    /// On first contact with the instance of `target`, sends every kind of
    /// support for it, acknowledgements twice.
    AckStuff { target: Transaction },
    Custom(Box<dyn ByzantineBehavior>),
}

impl ByzantineStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            ByzantineStrategy::Silent => "silent",
            ByzantineStrategy::Equivocate { .. } => "equivocate",
            ByzantineStrategy::AckStuff { .. } => "ack_stuff",
            ByzantineStrategy::Custom(_) => "custom",
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct ByzantineNode {
    strategy: ByzantineStrategy,
    triggered: BTreeSet<TxKey>,
    pub(crate) received: u64,
}

impl ByzantineNode {
    pub(crate) fn new(strategy: ByzantineStrategy) -> Self {
        ByzantineNode {
            strategy,
            triggered: BTreeSet::new(),
            received: 0,
        }
    }

    /// First contact with `key` for this node; true exactly once per key.
    fn first_contact(&mut self, key: TxKey) -> bool {
        self.triggered.insert(key)
    }

    pub(crate) fn on_message(
        &mut self,
        ctx: &ByzContext,
        from: ServerId,
        msg: &ProtocolMessage,
    ) -> Vec<Envelope> {
        self.received += 1;
        let key = msg.instance();
        match &mut self.strategy {
            ByzantineStrategy::Silent => Vec::new(),
            ByzantineStrategy::Custom(b) => b.on_message(ctx, from, msg),
            ByzantineStrategy::Equivocate { partition, t, t_prime } => {
                if t.key() != key {
                    return Vec::new();
                }
                let (partition, t, t_prime) = (partition.clone(), t.clone(), t_prime.clone());
                if !self.first_contact(key) {
                    return Vec::new();
                }
                let inside = |s: ServerId| partition.contains(&s);
                let mut out = ctx.send_some(inside, MessageKind::Ack(t.clone()));
                out.extend(ctx.send_some(|s| !inside(s), MessageKind::Ack(t_prime.clone())));
                match ctx.protocol {
                    Protocol::Brb => {
                        out.extend(ctx.send_some(inside, MessageKind::Approve(t)));
                        out.extend(ctx.send_some(|s| !inside(s), MessageKind::Approve(t_prime)));
                    }
                    Protocol::Cod => out.extend(ctx.send_sequencer(MessageKind::Propose(t_prime))),
                    Protocol::OneRound(_) => {}
                }
                out
            }
            ByzantineStrategy::AckStuff { target } => {
                if target.key() != key {
                    return Vec::new();
                }
                let target = target.clone();
                if !self.first_contact(key) {
                    return Vec::new();
                }
                let mut out = ctx.send_all(MessageKind::Ack(target.clone()));
                out.extend(ctx.send_all(MessageKind::Ack(target.clone())));
                match ctx.protocol {
                    Protocol::Brb => out.extend(ctx.send_all(MessageKind::Approve(target))),
                    Protocol::Cod => out.extend(ctx.send_sequencer(MessageKind::Propose(target))),
                    Protocol::OneRound(_) => {}
                }
                out
            }
        }
    }
}
