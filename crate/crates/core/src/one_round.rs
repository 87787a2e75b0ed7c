//! A naive decider with a single round of acknowledgements and no fallback.
//!
//! It exists to exhibit agreement violations when `n <= 5f` (asynchronous
//! decide rule) or `n <= 4f` (end-of-round rule). Each server acknowledges
//! the first transaction it observes; the decision is the value with `n - f`
//! acknowledgements if there is one, otherwise the plurality.

use std::collections::BTreeMap;

use sha2::{Digest, Sha256};

use crate::error::ProtocolError;
use crate::message::{broadcast, AcceptPath, Effects, MessageKind, TransitionKind};
use crate::params::SystemParams;
use crate::types::{plurality, ServerId, Transaction, TxKey};

/// When the decider commits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecideRule {
    /// As soon as `n - f` acknowledgements are in.
    OnSample,
    /// At the end of the given synchronous round, on whatever arrived.
    EndOfRound(u64),
}

#[derive(Clone, Debug)]
pub struct OneRoundInstance {
    key: TxKey,
    me: ServerId,
    params: SystemParams,
    rule: DecideRule,
    own_ack: Option<Transaction>,
    acks: Vec<Option<Transaction>>,
    decided: Option<Transaction>,
}

impl OneRoundInstance {
    pub fn new(key: TxKey, me: ServerId, params: SystemParams, rule: DecideRule) -> Self {
        OneRoundInstance {
            key,
            me,
            params,
            rule,
            own_ack: None,
            acks: vec![None; params.n],
            decided: None,
        }
    }

    pub fn key(&self) -> &TxKey {
        &self.key
    }

    pub fn own_ack(&self) -> Option<&Transaction> {
        self.own_ack.as_ref()
    }

    pub fn decided(&self) -> Option<&Transaction> {
        self.decided.as_ref()
    }

    pub fn ack_count(&self, t: &Transaction) -> usize {
        self.acks.iter().filter(|a| a.as_ref() == Some(t)).count()
    }

    fn counts(&self) -> BTreeMap<&Transaction, usize> {
        let mut counts = BTreeMap::new();
        for t in self.acks.iter().flatten() {
            *counts.entry(t).or_insert(0) += 1;
        }
        counts
    }

    /// Acknowledges the first valid transaction observed.
    pub fn observe(&mut self, t: &Transaction) -> Result<Effects, ProtocolError> {
        if t.key() != self.key {
            return Err(ProtocolError::WrongInstance {
                key: self.key.clone(),
                tx: Box::new(t.clone()),
            });
        }
        if !t.verify() {
            return Err(ProtocolError::InvalidAuth(Box::new(t.clone())));
        }
        let mut fx = Effects::default();
        if self.own_ack.is_some() {
            return Ok(fx);
        }
        self.own_ack = Some(t.clone());
        fx.messages = broadcast(self.me, self.params.n, MessageKind::Ack(t.clone()));
        fx.note(TransitionKind::AckSent, t, self.ack_count(t));
        Ok(fx)
    }

    pub fn on_ack(&mut self, origin: ServerId, t: &Transaction) -> Effects {
        let mut fx = Effects::default();
        if origin.0 >= self.params.n || t.key() != self.key || !t.verify() {
            return fx;
        }
        if self.acks[origin.0].is_some() {
            return fx;
        }
        self.acks[origin.0] = Some(t.clone());
        if self.rule == DecideRule::OnSample
            && self.acks.iter().flatten().count() >= self.params.slow_path_sample()
        {
            self.decide(&mut fx);
        }
        fx
    }

    /// Called once the simulator closes `round`.
    pub fn on_round_end(&mut self, round: u64) -> Effects {
        let mut fx = Effects::default();
        if self.rule == DecideRule::EndOfRound(round) {
            self.decide(&mut fx);
        }
        fx
    }

    fn decide(&mut self, fx: &mut Effects) {
        if self.decided.is_some() {
            return;
        }
        let sample = self.params.slow_path_sample();
        let counts = self.counts();
        let fast = counts.iter().find(|&(_, &c)| c >= sample).map(|(t, _)| *t);
        let Some(value) = fast.or_else(|| plurality(counts.iter().map(|(t, c)| (*t, *c)))) else {
            return;
        };
        let value = value.clone();
        let count = self.ack_count(&value);
        self.decided = Some(value.clone());
        fx.accepted = Some((value.clone(), AcceptPath::OneRound));
        fx.note(TransitionKind::Decided, &value, count);
    }

    pub fn digest(&self, h: &mut Sha256) {
        h.update(b"one-round");
        for slot in &self.acks {
            match slot {
                Some(t) => h.update(t.digest().0),
                None => h.update([0u8]),
            }
        }
        if let Some(t) = &self.decided {
            h.update(t.digest().0);
        }
    }
}
