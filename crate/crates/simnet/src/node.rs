//! Honest servers and the sequencer as seen by the simulator.

use std::collections::BTreeMap;

use ondemand_core::{
    broadcast, AcceptPath, BrbInstance, CodInstance, DecideRule, Effects, Envelope, LedgerState,
    MessageKind, OneRoundInstance, ProtocolError, ProtocolMessage, Sequencer, ServerId,
    SystemParams, Transaction, Transition, TxKey,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Which protocol stack honest servers run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Protocol {
    Brb,
    /// Consensus on demand with the sequencer as slow path.
    Cod,
    /// The naive single-round decider, for impossibility demonstrations.
    OneRound(DecideRule),
}

impl Protocol {
    pub fn name(&self) -> &'static str {
        match self {
            Protocol::Brb => "brb",
            Protocol::Cod => "cod",
            Protocol::OneRound(_) => "naive",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Features {
    /// Re-acknowledge the consensus outcome after a slow-path decision.
    #[serde(default)]
    pub post_consensus_sync: bool,
    /// Only acknowledge transactions the local ledger could execute now.
    #[serde(default)]
    pub ack_requires_funds: bool,
}

/// What one honest-node handler invocation produced.
#[derive(Debug, Default)]
pub(crate) struct Output {
    pub messages: Vec<Envelope>,
    pub transitions: Vec<Transition>,
    pub accepted: Vec<(Transaction, AcceptPath)>,
    pub executed: Vec<Transaction>,
    pub proposals: usize,
    pub violations: Vec<String>,
}

impl Output {
    fn absorb(&mut self, fx: Effects) {
        self.messages.extend(fx.messages);
        self.transitions.extend(fx.transitions);
        if let Some(a) = fx.accepted {
            self.accepted.push(a);
        }
    }
}

#[derive(Clone, Debug)]
enum Instance {
    Brb(BrbInstance),
    Cod(CodInstance),
    OneRound(OneRoundInstance),
}

impl Instance {
    fn digest(&self, h: &mut Sha256) {
        match self {
            Instance::Brb(i) => i.digest(h),
            Instance::Cod(i) => i.digest(h),
            Instance::OneRound(i) => i.digest(h),
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct HonestNode {
    me: ServerId,
    params: SystemParams,
    protocol: Protocol,
    features: Features,
    pub(crate) ledger: LedgerState,
    instances: BTreeMap<TxKey, Instance>,
    /// Disseminated transactions held back by the funds gate.
    deferred: Vec<Transaction>,
    pub(crate) accepted: BTreeMap<TxKey, (Transaction, AcceptPath)>,
    pub(crate) executed: Vec<Transaction>,
}

impl HonestNode {
    pub(crate) fn new(
        me: ServerId,
        params: SystemParams,
        protocol: Protocol,
        features: Features,
        ledger: LedgerState,
    ) -> Self {
        HonestNode {
            me,
            params,
            protocol,
            features,
            ledger,
            instances: BTreeMap::new(),
            deferred: Vec::new(),
            accepted: BTreeMap::new(),
            executed: Vec::new(),
        }
    }

    fn instance(&mut self, key: TxKey) -> &mut Instance {
        let (me, params, protocol, sync) = (
            self.me,
            self.params,
            self.protocol,
            self.features.post_consensus_sync,
        );
        self.instances.entry(key.clone()).or_insert_with(|| match protocol {
            Protocol::Brb => Instance::Brb(BrbInstance::new(key, me, params)),
            Protocol::Cod => Instance::Cod(CodInstance::new(key, me, params, sync)),
            Protocol::OneRound(rule) => {
                Instance::OneRound(OneRoundInstance::new(key, me, params, rule))
            }
        })
    }

    /// Short hex of the state hash of the instance for `key`.
    pub(crate) fn state_digest(&self, key: &TxKey) -> String {
        let mut h = Sha256::new();
        if let Some(i) = self.instances.get(key) {
            i.digest(&mut h);
        }
        hex_prefix(&h.finalize())
    }

    /// A client hands `t` to this server.
    pub(crate) fn submit(&mut self, t: &Transaction) -> Output {
        let mut out = Output::default();
        match self.protocol {
            Protocol::Brb => {
                if let Instance::Brb(i) = self.instance(t.key()) {
                    if let Ok(fx) = i.submit(t) {
                        out.absorb(fx);
                    }
                }
            }
            Protocol::Cod | Protocol::OneRound(_) => {
                if t.verify() {
                    out.messages = broadcast(self.me, self.params.n, MessageKind::Disseminate(t.clone()));
                }
            }
        }
        out
    }

    pub(crate) fn on_message(&mut self, msg: &ProtocolMessage) -> Output {
        let mut out = Output::default();
        let origin = msg.origin;
        let key = msg.instance();
        let sequencer = ServerId(self.params.n);
        match &msg.kind {
            MessageKind::Disseminate(t) => self.observe(t, &mut out),
            MessageKind::Ack(t) => {
                let mut port = Vec::new();
                let fx = match self.instance(key) {
                    Instance::Brb(i) => i.on_ack(origin, t),
                    Instance::Cod(i) => i.on_ack(origin, t, &mut port),
                    Instance::OneRound(i) => i.on_ack(origin, t),
                };
                out.absorb(fx);
                for (_, _, value) in port {
                    out.proposals += 1;
                    out.messages.push(Envelope {
                        to: sequencer,
                        msg: ProtocolMessage::new(self.me, MessageKind::Propose(value)),
                    });
                }
            }
            MessageKind::Approve(t) => {
                if let Instance::Brb(i) = self.instance(key) {
                    let fx = i.on_approve(origin, t);
                    out.absorb(fx);
                }
            }
            MessageKind::ConsensusAccept(t) => {
                if origin == sequencer {
                    if let Instance::Cod(i) = self.instance(key) {
                        match i.on_consensus_accept(t) {
                            Ok(fx) => out.absorb(fx),
                            Err(e @ ProtocolError::ConflictingDecision { .. }) => {
                                out.violations.push(format!("server {}: {e}", self.me))
                            }
                            Err(_) => {}
                        }
                    }
                }
            }
            MessageKind::Propose(_) => {}
        }
        self.settle(&mut out);
        out
    }

    pub(crate) fn on_round_end(&mut self, round: u64) -> Output {
        let mut out = Output::default();
        for inst in self.instances.values_mut() {
            if let Instance::OneRound(i) = inst {
                out.absorb(i.on_round_end(round));
            }
        }
        self.settle(&mut out);
        out
    }

    fn observe(&mut self, t: &Transaction, out: &mut Output) {
        if self.features.ack_requires_funds && !self.ledger.ack_gate(t) {
            if t.verify() && !self.deferred.contains(t) {
                self.deferred.push(t.clone());
            }
            return;
        }
        let fx = match self.instance(t.key()) {
            Instance::Brb(i) => i.on_disseminate(t, true),
            Instance::Cod(i) => i.propose(t).unwrap_or_default(),
            Instance::OneRound(i) => i.observe(t).unwrap_or_default(),
        };
        out.absorb(fx);
    }

    /// Applies new acceptances to the ledger and retries gated transactions
    /// until nothing changes.
    fn settle(&mut self, out: &mut Output) {
        let mut seen = 0;
        loop {
            for (t, path) in &out.accepted[seen..] {
                self.accepted.entry(t.key()).or_insert((t.clone(), *path));
                self.ledger.on_accepted(t.clone());
            }
            seen = out.accepted.len();
            let executed = self.ledger.drain_executable();
            if executed.is_empty() {
                return;
            }
            self.executed.extend(executed.iter().cloned());
            out.executed.extend(executed);
            let ready: Vec<Transaction> = self
                .deferred
                .iter()
                .filter(|t| self.ledger.ack_gate(t))
                .cloned()
                .collect();
            self.deferred.retain(|t| !ready.contains(t));
            for t in &ready {
                self.observe(t, out);
            }
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct SequencerNode {
    pub(crate) inner: Sequencer,
}

impl SequencerNode {
    pub(crate) fn on_message(&mut self, msg: &ProtocolMessage) -> Effects {
        match &msg.kind {
            MessageKind::Propose(t) => self.inner.on_propose(msg.origin, t),
            _ => Effects::default(),
        }
    }

    pub(crate) fn state_digest(&self, key: &TxKey) -> String {
        let mut h = Sha256::new();
        if let Some(i) = self.inner.instance(key) {
            i.digest(&mut h);
        }
        hex_prefix(&h.finalize())
    }
}

pub(crate) fn hex_prefix(bytes: &[u8]) -> String {
    hex::encode(&bytes[..8])
}
