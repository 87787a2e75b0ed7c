//! Byzantine reliable broadcast for one `(sender, sn)` instance.
//!
//! Three steps: the entry server disseminates the transaction to everyone;
//! each server acknowledges the first transaction it sees for the instance;
//! a server that collects an ack quorum (or `f + 1` approvals) broadcasts
//! `APPROVE`, and `2f + 1` approvals accept.

use std::collections::{BTreeMap, BTreeSet};

use sha2::{Digest, Sha256};

use crate::error::ProtocolError;
use crate::message::{broadcast, AcceptPath, Effects, MessageKind, TransitionKind};
use crate::params::SystemParams;
use crate::types::{ServerId, Transaction, TxKey};

#[derive(Clone, Debug)]
pub struct BrbInstance {
    key: TxKey,
    me: ServerId,
    params: SystemParams,
    /// The one transaction this server acknowledged, if any.
    acked: Option<Transaction>,
    ack_counts: BTreeMap<Transaction, BTreeSet<ServerId>>,
    approve_counts: BTreeMap<Transaction, BTreeSet<ServerId>>,
    /// Transactions this server has sent `APPROVE` for.
    approved: BTreeSet<Transaction>,
    accepted: Option<Transaction>,
}

impl BrbInstance {
    pub fn new(key: TxKey, me: ServerId, params: SystemParams) -> Self {
        BrbInstance {
            key,
            me,
            params,
            acked: None,
            ack_counts: BTreeMap::new(),
            approve_counts: BTreeMap::new(),
            approved: BTreeSet::new(),
            accepted: None,
        }
    }

    pub fn key(&self) -> &TxKey {
        &self.key
    }

    pub fn acked(&self) -> Option<&Transaction> {
        self.acked.as_ref()
    }

    pub fn accepted(&self) -> Option<&Transaction> {
        self.accepted.as_ref()
    }

    pub fn ack_count(&self, t: &Transaction) -> usize {
        self.ack_counts.get(t).map_or(0, BTreeSet::len)
    }

    pub fn approve_count(&self, t: &Transaction) -> usize {
        self.approve_counts.get(t).map_or(0, BTreeSet::len)
    }

    pub fn has_approved(&self, t: &Transaction) -> bool {
        self.approved.contains(t)
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

    /// Dissemination of a client transaction. Not guarded: a conflicting
    /// second submission is disseminated as well.
    pub fn submit(&mut self, t: &Transaction) -> Result<Effects, ProtocolError> {
        self.check(t)?;
        Ok(Effects {
            messages: broadcast(self.me, self.params.n, MessageKind::Disseminate(t.clone())),
            ..Effects::default()
        })
    }

    /// Acknowledges `t` unless this server already acknowledged something for
    /// the instance. `gate_open` carries the optional funds check.
    pub fn on_disseminate(&mut self, t: &Transaction, gate_open: bool) -> Effects {
        let mut fx = Effects::default();
        if self.check(t).is_err() || self.acked.is_some() || !gate_open {
            return fx;
        }
        self.acked = Some(t.clone());
        fx.messages = broadcast(self.me, self.params.n, MessageKind::Ack(t.clone()));
        fx.note(TransitionKind::AckSent, t, self.ack_count(t));
        fx
    }

    pub fn on_ack(&mut self, origin: ServerId, t: &Transaction) -> Effects {
        let mut fx = Effects::default();
        if self.check(t).is_err() {
            return fx;
        }
        let count = {
            let set = self.ack_counts.entry(t.clone()).or_default();
            if !set.insert(origin) {
                return fx;
            }
            set.len()
        };
        if count >= self.params.brb_ack_quorum() && !self.approved.contains(t) {
            self.approve(t, &mut fx, TransitionKind::ApproveSent, count);
        }
        fx
    }

    pub fn on_approve(&mut self, origin: ServerId, t: &Transaction) -> Effects {
        let mut fx = Effects::default();
        if self.check(t).is_err() {
            return fx;
        }
        let count = {
            let set = self.approve_counts.entry(t.clone()).or_default();
            if !set.insert(origin) {
                return fx;
            }
            set.len()
        };
        // Amplify even if this server acknowledged a conflicting transaction.
        if count >= self.params.brb_amplify_threshold() && !self.approved.contains(t) {
            self.approve(t, &mut fx, TransitionKind::Amplified, count);
        }
        if count >= self.params.brb_accept_threshold() && self.accepted.is_none() {
            self.accepted = Some(t.clone());
            fx.accepted = Some((t.clone(), AcceptPath::Broadcast));
            fx.note(TransitionKind::Accepted, t, count);
        }
        fx
    }

    fn approve(&mut self, t: &Transaction, fx: &mut Effects, why: TransitionKind, count: usize) {
        self.approved.insert(t.clone());
        fx.messages
            .extend(broadcast(self.me, self.params.n, MessageKind::Approve(t.clone())));
        fx.note(why, t, count);
    }

    /// Hash of the instance state, for trace digests.
    pub fn digest(&self, h: &mut Sha256) {
        h.update(b"brb");
        if let Some(t) = &self.acked {
            h.update(t.digest().0);
        }
        for (t, set) in self.ack_counts.iter().chain(self.approve_counts.iter()) {
            h.update(t.digest().0);
            h.update((set.len() as u64).to_be_bytes());
        }
        for t in &self.approved {
            h.update(t.digest().0);
        }
        if let Some(t) = &self.accepted {
            h.update(b"accepted");
            h.update(t.digest().0);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::message::KindTag;

    fn params() -> SystemParams {
        SystemParams::new(6, 1).unwrap()
    }

    fn t() -> Transaction {
        Transaction::signed("A", 0, "B", 4)
    }

    fn t2() -> Transaction {
        Transaction::signed("A", 0, "C", 4)
    }

    fn inst() -> BrbInstance {
        BrbInstance::new(TxKey::new("A", 0), ServerId(0), params())
    }

    #[test]
    fn submit_disseminates_to_everyone() {
        let mut i = inst();
        let fx = i.submit(&t()).unwrap();
        assert_eq!(fx.count_kind(KindTag::Disseminate), 6);
        let targets: Vec<usize> = fx.messages.iter().map(|e| e.to.0).collect();
        assert_eq!(targets, vec![0, 1, 2, 3, 4, 5]);

        // Conflicting second submission still goes out.
        let fx = i.submit(&t2()).unwrap();
        assert_eq!(fx.count_kind(KindTag::Disseminate), 6);
    }

    #[test]
    fn submit_rejects_bad_token() {
        let mut i = inst();
        let forged = Transaction::unsigned("A", 0, "B", 4);
        assert!(matches!(i.submit(&forged), Err(ProtocolError::InvalidAuth(_))));
        let other = Transaction::signed("A", 1, "B", 4);
        assert!(matches!(
            i.submit(&other),
            Err(ProtocolError::WrongInstance { .. })
        ));
    }

    #[test]
    fn acknowledges_only_once() {
        let mut i = inst();
        let fx = i.on_disseminate(&t(), true);
        assert_eq!(fx.count_kind(KindTag::Ack), 6);
        assert!(i.on_disseminate(&t2(), true).messages.is_empty());
        assert!(i.on_disseminate(&t(), true).messages.is_empty());
        assert_eq!(i.acked(), Some(&t()));
    }

    #[test]
    fn closed_gate_defers_ack() {
        let mut i = inst();
        assert!(i.on_disseminate(&t(), false).is_empty());
        assert_eq!(i.acked(), None);
        assert_eq!(i.on_disseminate(&t(), true).count_kind(KindTag::Ack), 6);
    }

    #[test]
    fn ack_quorum_triggers_approve() {
        let mut i = inst();
        for p in 0..3 {
            assert!(i.on_ack(ServerId(p), &t()).messages.is_empty());
        }
        let fx = i.on_ack(ServerId(3), &t());
        assert_eq!(fx.count_kind(KindTag::Approve), 6);
        assert!(i.has_approved(&t()));
        assert!(i.on_ack(ServerId(4), &t()).messages.is_empty());
    }

    #[test]
    fn repeated_ack_is_not_double_counted() {
        let mut i = inst();
        for _ in 0..5 {
            i.on_ack(ServerId(1), &t());
        }
        assert_eq!(i.ack_count(&t()), 1);
    }

    #[test]
    fn approvals_amplify_then_accept() {
        let mut i = inst();
        assert!(i.on_approve(ServerId(1), &t()).messages.is_empty());
        let fx = i.on_approve(ServerId(2), &t());
        assert_eq!(fx.count_kind(KindTag::Approve), 6);
        assert!(fx.accepted.is_none());
        let fx = i.on_approve(ServerId(3), &t());
        assert!(fx.messages.is_empty());
        assert_eq!(fx.accepted, Some((t(), AcceptPath::Broadcast)));
        assert_eq!(i.accepted(), Some(&t()));

        let before = i.clone().digest_hex();
        for p in 4..6 {
            assert!(i.on_approve(ServerId(p), &t()).accepted.is_none());
        }
        assert_eq!(i.accepted(), Some(&t()));
        assert_ne!(before, i.digest_hex());
    }

    #[test]
    fn amplifies_despite_conflicting_ack() {
        let mut i = inst();
        i.on_disseminate(&t2(), true);
        i.on_approve(ServerId(1), &t());
        let fx = i.on_approve(ServerId(2), &t());
        assert_eq!(fx.count_kind(KindTag::Approve), 6);
        assert!(fx.messages.iter().all(|e| e.msg.tx() == &t()));
    }

    #[test]
    fn invalid_messages_are_ignored() {
        let mut i = inst();
        let forged = Transaction::unsigned("A", 0, "B", 4);
        for p in 0..6 {
            assert!(i.on_ack(ServerId(p), &forged).is_empty());
            assert!(i.on_approve(ServerId(p), &forged).is_empty());
        }
        assert!(i.on_disseminate(&forged, true).is_empty());
        assert_eq!(i.ack_count(&forged), 0);
    }

    impl BrbInstance {
        fn digest_hex(&self) -> String {
            let mut h = Sha256::new();
            self.digest(&mut h);
            hex::encode(h.finalize())
        }
    }
}
