//! Consensus on demand for one `(sender, sn)` instance.
//!
//! Each server acknowledges the first valid transaction it observes. A
//! transaction with strictly more than `(n + 3f) / 2` acknowledgements is
//! accepted after one round trip. Once a server holds `n - f`
//! acknowledgements that disagree, it proposes the most acknowledged value
//! to a [`ConsensusPort`] exactly once and accepts whatever that consensus
//! returns, unless the fast path got there first.

use std::collections::BTreeMap;

use sha2::{Digest, Sha256};

use crate::error::ProtocolError;
use crate::message::{broadcast, AcceptPath, Effects, MessageKind, TransitionKind};
use crate::params::SystemParams;
use crate::types::{plurality, ServerId, Transaction, TxKey};

/// The slow-path consensus instance. Implementations must provide
/// agreement, validity, totality and termination per instance; decisions
/// come back through [`CodInstance::on_consensus_accept`].
pub trait ConsensusPort {
    fn propose(&mut self, proposer: ServerId, key: &TxKey, value: &Transaction);
}

/// Records proposals; useful wherever the decision is driven by hand.
impl ConsensusPort for Vec<(ServerId, TxKey, Transaction)> {
    fn propose(&mut self, proposer: ServerId, key: &TxKey, value: &Transaction) {
        self.push((proposer, key.clone(), value.clone()));
    }
}

#[derive(Clone, Debug)]
pub struct CodInstance {
    key: TxKey,
    me: ServerId,
    params: SystemParams,
    post_consensus_sync: bool,
    own_ack: Option<Transaction>,
    /// First acknowledgement per origin; write-once.
    acks: Vec<Option<Transaction>>,
    /// Second acknowledgement per origin, recorded only with
    /// post-consensus sync enabled; write-once.
    sync_acks: Vec<Option<Transaction>>,
    accepted: Option<(Transaction, AcceptPath)>,
    con_proposed: Option<Transaction>,
    sync_sent: bool,
}

impl CodInstance {
    pub fn new(key: TxKey, me: ServerId, params: SystemParams, post_consensus_sync: bool) -> Self {
        CodInstance {
            key,
            me,
            params,
            post_consensus_sync,
            own_ack: None,
            acks: vec![None; params.n],
            sync_acks: vec![None; params.n],
            accepted: None,
            con_proposed: None,
            sync_sent: false,
        }
    }

    pub fn key(&self) -> &TxKey {
        &self.key
    }

    pub fn own_ack(&self) -> Option<&Transaction> {
        self.own_ack.as_ref()
    }

    pub fn ack_from(&self, p: ServerId) -> Option<&Transaction> {
        self.acks.get(p.0).and_then(Option::as_ref)
    }

    pub fn accepted(&self) -> Option<&Transaction> {
        self.accepted.as_ref().map(|(t, _)| t)
    }

    pub fn accept_path(&self) -> Option<AcceptPath> {
        self.accepted.as_ref().map(|(_, p)| *p)
    }

    pub fn con_proposed(&self) -> Option<&Transaction> {
        self.con_proposed.as_ref()
    }

    pub fn recorded_acks(&self) -> usize {
        self.acks.iter().flatten().count()
    }

    /// Origins that acknowledged `t`, counting a sync acknowledgement too.
    pub fn ack_count(&self, t: &Transaction) -> usize {
        self.acks
            .iter()
            .zip(&self.sync_acks)
            .filter(|(a, s)| a.as_ref() == Some(t) || s.as_ref() == Some(t))
            .count()
    }

    fn first_ack_counts(&self) -> BTreeMap<&Transaction, usize> {
        let mut counts = BTreeMap::new();
        for t in self.acks.iter().flatten() {
            *counts.entry(t).or_insert(0) += 1;
        }
        counts
    }

    fn check(&self, t: &Transaction) -> Result<(), ProtocolError> {
        if t.key() != self.key {
            return Err(ProtocolError::WrongInstance {
                key: self.key.clone(),
                tx: Box::new(t.clone()),
            });
        }
        if !t.verify() {
            return Err(ProtocolError::InvalidAuth(Box::new(t.clone())));
        }
        Ok(())
    }

    /// Acknowledges `t` to every server; only the first call does anything.
    pub fn propose(&mut self, t: &Transaction) -> Result<Effects, ProtocolError> {
        self.check(t)?;
        let mut fx = Effects::default();
        if self.own_ack.is_some() {
            return Ok(fx);
        }
        self.own_ack = Some(t.clone());
        fx.messages = broadcast(self.me, self.params.n, MessageKind::Ack(t.clone()));
        fx.note(TransitionKind::AckSent, t, self.ack_count(t));
        Ok(fx)
    }

    /// Records the acknowledgement, then runs the fast-accept check followed
    /// by the slow-path trigger.
    pub fn on_ack(
        &mut self,
        origin: ServerId,
        t: &Transaction,
        port: &mut dyn ConsensusPort,
    ) -> Effects {
        let mut fx = Effects::default();
        if origin.0 >= self.params.n || self.check(t).is_err() {
            return fx;
        }
        let p = origin.0;
        match &self.acks[p] {
            None => self.acks[p] = Some(t.clone()),
            Some(first) if self.post_consensus_sync && first != t && self.sync_acks[p].is_none() => {
                self.sync_acks[p] = Some(t.clone());
            }
            Some(_) => return fx,
        }
        if let Some(acc) = self.check_fast_accept() {
            let count = self.ack_count(&acc);
            fx.accepted = Some((acc.clone(), AcceptPath::FastPath));
            fx.note(TransitionKind::FastAccepted, &acc, count);
        }
        if let Some(majority) = self.check_slow_trigger(port) {
            let count = self.ack_count(&majority);
            fx.note(TransitionKind::ConsensusProposed, &majority, count);
        }
        fx
    }

    /// Accepts a transaction holding at least `fast_quorum` acknowledgements.
    pub fn check_fast_accept(&mut self) -> Option<Transaction> {
        if self.accepted.is_some() {
            return None;
        }
        let quorum = self.params.fast_quorum();
        let candidates = self.acks.iter().chain(&self.sync_acks).flatten();
        let winner = candidates
            .filter(|t| self.ack_count(t) >= quorum)
            .min()
            .cloned()?;
        self.accepted = Some((winner.clone(), AcceptPath::FastPath));
        Some(winner)
    }

    /// Proposes the plurality value once `n - f` acknowledgements are in and
    /// at least two of them differ.
    pub fn check_slow_trigger(&mut self, port: &mut dyn ConsensusPort) -> Option<Transaction> {
        if self.con_proposed.is_some() || self.recorded_acks() < self.params.slow_path_sample() {
            return None;
        }
        let counts = self.first_ack_counts();
        if counts.len() < 2 {
            return None;
        }
        let majority = plurality(counts.iter().map(|(t, c)| (*t, *c)))?.clone();
        self.con_proposed = Some(majority.clone());
        port.propose(self.me, &self.key, &majority);
        Some(majority)
    }

    /// Handles the consensus decision. A decision that contradicts an earlier
    /// fast-path acceptance is an invariant violation and is reported, not applied.
    pub fn on_consensus_accept(&mut self, t: &Transaction) -> Result<Effects, ProtocolError> {
        self.check(t)?;
        let mut fx = Effects::default();
        match &self.accepted {
            None => {
                self.accepted = Some((t.clone(), AcceptPath::Consensus));
                fx.accepted = Some((t.clone(), AcceptPath::Consensus));
                fx.note(TransitionKind::ConsensusAccepted, t, self.ack_count(t));
            }
            Some((prior, _)) if prior != t => {
                return Err(ProtocolError::ConflictingDecision {
                    key: self.key.clone(),
                    fast: Box::new(prior.clone()),
                    consensus: Box::new(t.clone()),
                });
            }
            Some(_) => {}
        }
        fx.extend(self.post_consensus_sync(t));
        Ok(fx)
    }

    /// With sync enabled, re-acknowledges the consensus outcome if this
    /// server's own acknowledgement was for something else.
    pub fn post_consensus_sync(&mut self, t: &Transaction) -> Effects {
        let mut fx = Effects::default();
        if !self.post_consensus_sync || self.sync_sent || self.own_ack.as_ref() == Some(t) {
            return fx;
        }
        self.sync_sent = true;
        fx.messages = broadcast(self.me, self.params.n, MessageKind::Ack(t.clone()));
        fx.note(TransitionKind::SyncAckSent, t, self.ack_count(t));
        fx
    }

    pub fn digest(&self, h: &mut Sha256) {
        h.update(b"cod");
        for slot in self.acks.iter().chain(&self.sync_acks) {
            match slot {
                Some(t) => h.update(t.digest().0),
                None => h.update([0u8]),
            }
        }
        if let Some((t, path)) = &self.accepted {
            h.update(t.digest().0);
            h.update([*path as u8]);
        }
        if let Some(t) = &self.con_proposed {
            h.update(b"proposed");
            h.update(t.digest().0);
        }
    }
}
