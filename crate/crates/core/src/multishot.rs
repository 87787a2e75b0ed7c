//! Designated-sequencer consensus. Accepts as soon as `f + 1` servers
//! proposed the same value, or, failing that, the plurality once `2f + 1`
//! proposals are in.

use std::collections::BTreeMap;

use sha2::{Digest, Sha256};

use crate::cod::ConsensusPort;
use crate::message::{broadcast, Effects, MessageKind, TransitionKind};
use crate::params::SystemParams;
use crate::types::{plurality, ServerId, Transaction, TxKey};

#[derive(Clone, Debug)]
pub struct MultishotInstance {
    key: TxKey,
    params: SystemParams,
    /// First proposal per server; later ones are ignored.
    proposals: Vec<Option<Transaction>>,
    accepted: Option<Transaction>,
}

impl MultishotInstance {
    pub fn new(key: TxKey, params: SystemParams) -> Self {
        MultishotInstance {
            key,
            params,
            proposals: vec![None; params.n],
            accepted: None,
        }
    }

    pub fn key(&self) -> &TxKey {
        &self.key
    }

    pub fn accepted(&self) -> Option<&Transaction> {
        self.accepted.as_ref()
    }

    pub fn proposal_from(&self, u: ServerId) -> Option<&Transaction> {
        self.proposals.get(u.0).and_then(Option::as_ref)
    }

    fn counts(&self) -> BTreeMap<&Transaction, usize> {
        let mut counts = BTreeMap::new();
        for t in self.proposals.iter().flatten() {
            *counts.entry(t).or_insert(0) += 1;
        }
        counts
    }

    /// Records the proposal and returns the value accepted by this call, if any.
    pub fn on_propose(&mut self, origin: ServerId, t: &Transaction) -> Option<Transaction> {
        if origin.0 >= self.params.n || t.key() != self.key || !t.verify() {
            return None;
        }
        if self.proposals[origin.0].is_some() {
            return None;
        }
        self.proposals[origin.0] = Some(t.clone());
        self.check_equal_quorum()
            .or_else(|| self.check_plurality_quorum())
    }

    pub fn check_equal_quorum(&mut self) -> Option<Transaction> {
        if self.accepted.is_some() {
            return None;
        }
        let need = self.params.multishot_equal_quorum();
        let winner = self
            .counts()
            .into_iter()
            .filter(|&(_, c)| c >= need)
            .map(|(t, _)| t)
            .min()?
            .clone();
        self.accepted = Some(winner.clone());
        Some(winner)
    }

    pub fn check_plurality_quorum(&mut self) -> Option<Transaction> {
        if self.accepted.is_some() {
            return None;
        }
        let total = self.proposals.iter().flatten().count();
        if total < self.params.multishot_total_quorum() {
            return None;
        }
        let counts = self.counts();
        let winner = plurality(counts.iter().map(|(t, c)| (*t, *c)))?.clone();
        self.accepted = Some(winner.clone());
        Some(winner)
    }

    pub fn digest(&self, h: &mut Sha256) {
        h.update(b"multishot");
        for slot in &self.proposals {
            match slot {
                Some(t) => h.update(t.digest().0),
                None => h.update([0u8]),
            }
        }
        if let Some(t) = &self.accepted {
            h.update(t.digest().0);
        }
    }
}

/// The sequencer holding one [`MultishotInstance`] per key. Its identity on
/// the network is `ServerId(n)`.
#[derive(Clone, Debug)]
pub struct Sequencer {
    params: SystemParams,
    instances: BTreeMap<TxKey, MultishotInstance>,
    decisions: Vec<(TxKey, Transaction)>,
}

impl Sequencer {
    pub fn new(params: SystemParams) -> Self {
        Sequencer {
            params,
            instances: BTreeMap::new(),
            decisions: Vec::new(),
        }
    }

    pub fn id(&self) -> ServerId {
        ServerId(self.params.n)
    }

    pub fn instance(&self, key: &TxKey) -> Option<&MultishotInstance> {
        self.instances.get(key)
    }

    /// Decisions in the order they were taken.
    pub fn decisions(&self) -> &[(TxKey, Transaction)] {
        &self.decisions
    }

    /// Handles a `PROPOSE`; on acceptance broadcasts `CONSENSUS_ACCEPT` once.
    pub fn on_propose(&mut self, origin: ServerId, t: &Transaction) -> Effects {
        let mut fx = Effects::default();
        let key = t.key();
        let params = self.params;
        let inst = self
            .instances
            .entry(key.clone())
            .or_insert_with(|| MultishotInstance::new(key.clone(), params));
        if let Some(v) = inst.on_propose(origin, t) {
            let support = inst.counts().get(&v).copied().unwrap_or(0);
            fx.messages = broadcast(
                ServerId(params.n),
                params.n,
                MessageKind::ConsensusAccept(v.clone()),
            );
            fx.note(TransitionKind::Decided, &v, support);
            self.decisions.push((key, v));
        }
        fx
    }
}

/// Lets a sequencer act as an in-process consensus port.
impl ConsensusPort for Sequencer {
    fn propose(&mut self, proposer: ServerId, _key: &TxKey, value: &Transaction) {
        self.on_propose(proposer, value);
    }
}
