//! Account state of a single server: balances, per-sender execution
//! progress, and accepted-but-not-yet-executable transactions.
//!
//! Accepted transactions are buffered per sender and executed once every
//! earlier transaction of that sender has executed and the sender can cover
//! the amount. Transactions that never become fundable stay pending for the
//! lifetime of the ledger.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::LedgerError;
use crate::types::{Amount, ClientId, Sn, Transaction};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LedgerState {
    balance: BTreeMap<ClientId, Amount>,
    /// Last executed sn per sender; absent means -1.
    current_sn: BTreeMap<ClientId, Sn>,
    pending: BTreeMap<ClientId, BTreeSet<Transaction>>,
    supply: u128,
}

impl LedgerState {
    pub fn new<I, C>(initial_distribution: I) -> Result<Self, LedgerError>
    where
        I: IntoIterator<Item = (C, i64)>,
        C: Into<ClientId>,
    {
        let mut balance = BTreeMap::new();
        let mut supply: u64 = 0;
        for (client, amount) in initial_distribution {
            let client = client.into();
            let amount = u64::try_from(amount)
                .map_err(|_| LedgerError::NegativeAmount {
                    client: client.clone(),
                    amount,
                })?;
            supply = supply
                .checked_add(amount)
                .ok_or(LedgerError::SupplyOverflow)?;
            balance.insert(client, amount);
        }
        Ok(LedgerState {
            balance,
            current_sn: BTreeMap::new(),
            pending: BTreeMap::new(),
            supply: supply as u128,
        })
    }

    pub fn request_balance(&self, client: &ClientId) -> Amount {
        self.balance.get(client).copied().unwrap_or(0)
    }

    /// Last executed sequence number of `client`, `-1` if none.
    pub fn current_sn(&self, client: &ClientId) -> i128 {
        self.current_sn
            .get(client)
            .map_or(-1, |&sn| i128::from(sn))
    }

    fn next_sn(&self, client: &ClientId) -> Sn {
        self.current_sn.get(client).map_or(0, |&sn| sn + 1)
    }

    pub fn total_supply(&self) -> u128 {
        self.supply
    }

    /// Sum of all balances; equals [`total_supply`](Self::total_supply) at all times.
    pub fn balance_sum(&self) -> u128 {
        self.balance.values().map(|&b| u128::from(b)).sum()
    }

    pub fn pending(&self, client: &ClientId) -> impl Iterator<Item = &Transaction> {
        self.pending.get(client).into_iter().flatten()
    }

    pub fn pending_len(&self) -> usize {
        self.pending.values().map(BTreeSet::len).sum()
    }

    /// Buffers a transaction delivered by the broadcast or consensus layer.
    /// Duplicates and transactions whose sn already executed are ignored.
    pub fn on_accepted(&mut self, t: Transaction) {
        if t.sn < self.next_sn(&t.sender) {
            return;
        }
        self.pending.entry(t.sender.clone()).or_default().insert(t);
    }

    pub fn is_valid_to_execute(&self, t: &Transaction) -> bool {
        t.sn == self.next_sn(&t.sender) && self.request_balance(&t.sender) >= t.amount
    }

    /// Funds gate for servers that only acknowledge what they could execute
    /// right now: `t` is the sender's next transaction and is covered.
    pub fn ack_gate(&self, t: &Transaction) -> bool {
        self.is_valid_to_execute(t)
    }

    /// Executes valid pending transactions until none is left, in
    /// `(sender, sn)` order, and returns them in execution order.
    pub fn drain_executable(&mut self) -> Vec<Transaction> {
        let mut executed = Vec::new();
        while let Some(t) = self.next_executable() {
            self.execute(&t);
            executed.push(t);
        }
        executed
    }

    fn next_executable(&self) -> Option<Transaction> {
        self.pending
            .values()
            .flat_map(|set| set.iter())
            .find(|t| self.is_valid_to_execute(t))
            .cloned()
    }

    fn execute(&mut self, t: &Transaction) {
        let from = self.balance.entry(t.sender.clone()).or_insert(0);
        *from -= t.amount;
        let to = self.balance.entry(t.recipient.clone()).or_insert(0);
        // Cannot overflow: every balance is bounded by the total supply, which fits in u64.
        *to += t.amount;
        self.current_sn.insert(t.sender.clone(), t.sn);

        let set = self
            .pending
            .get_mut(&t.sender)
            .expect("executed transaction was pending");
        // Drops t together with any entry for an sn that can no longer run.
        set.retain(|p| p.sn > t.sn);
        if set.is_empty() {
            self.pending.remove(&t.sender);
        }
    }

    pub fn snapshot(&self) -> LedgerSnapshot {
        let mut accounts = BTreeMap::new();
        let clients: BTreeSet<&ClientId> = self
            .balance
            .keys()
            .chain(self.current_sn.keys())
            .chain(self.pending.keys())
            .collect();
        for c in clients {
            accounts.insert(
                c.clone(),
                AccountSnapshot {
                    balance: self.request_balance(c),
                    current_sn: self.current_sn(c) as i64,
                    pending: self.pending.get(c).map_or(0, BTreeSet::len),
                },
            );
        }
        LedgerSnapshot { accounts }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccountSnapshot {
    pub balance: Amount,
    pub current_sn: i64,
    pub pending: usize,
}

/// Sorted-by-client export of a ledger.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerSnapshot {
    pub accounts: BTreeMap<ClientId, AccountSnapshot>,
}

impl LedgerSnapshot {
    /// One line per client: `<client> balance=<b> current_sn=<sn> pending=<k>`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (c, a) in &self.accounts {
            let _ = writeln!(
                out,
                "{c} balance={} current_sn={} pending={}",
                a.balance, a.current_sn, a.pending
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tx(s: &str, sn: Sn, r: &str, a: Amount) -> Transaction {
        Transaction::signed(s, sn, r, a)
    }

    fn c(s: &str) -> ClientId {
        ClientId::from(s)
    }

    #[test]
    fn init_copies_balances() {
        let l = LedgerState::new([("A", 10), ("B", 0)]).unwrap();
        assert_eq!(l.request_balance(&c("A")), 10);
        assert_eq!(l.request_balance(&c("B")), 0);
        assert_eq!(l.current_sn(&c("A")), -1);
        assert_eq!(l.current_sn(&c("B")), -1);
        assert_eq!(l.pending_len(), 0);
    }

    #[test]
    fn empty_and_negative_init() {
        let l = LedgerState::new(Vec::<(&str, i64)>::new()).unwrap();
        assert_eq!(l.total_supply(), 0);
        assert_eq!(
            LedgerState::new([("A", 10), ("B", -1)]),
            Err(LedgerError::NegativeAmount {
                client: c("B"),
                amount: -1
            })
        );
        assert_eq!(
            LedgerState::new([("A", i64::MAX), ("B", i64::MAX), ("C", 2)]),
            Err(LedgerError::SupplyOverflow)
        );
    }

    #[test]
    fn request_balance_defaults_and_updates() {
        let mut l = LedgerState::new([("A", 10)]).unwrap();
        assert_eq!(l.request_balance(&c("A")), 10);
        assert_eq!(l.request_balance(&c("Z")), 0);
        l.on_accepted(tx("A", 0, "B", 4));
        l.drain_executable();
        assert_eq!(l.request_balance(&c("A")), 6);
    }

    #[test]
    fn on_accepted_is_idempotent() {
        let mut l = LedgerState::new([("A", 0)]).unwrap();
        l.on_accepted(tx("A", 0, "B", 4));
        assert_eq!(l.pending(&c("A")).cloned().collect::<Vec<_>>(), vec![tx("A", 0, "B", 4)]);
        l.on_accepted(tx("A", 0, "B", 4));
        assert_eq!(l.pending_len(), 1);
    }

    #[test]
    fn out_of_order_waits_for_predecessor() {
        let mut l = LedgerState::new([("A", 10)]).unwrap();
        l.on_accepted(tx("A", 1, "B", 2));
        assert!(l.drain_executable().is_empty());
        assert_eq!(l.pending_len(), 1);
        l.on_accepted(tx("A", 0, "B", 4));
        assert_eq!(
            l.drain_executable(),
            vec![tx("A", 0, "B", 4), tx("A", 1, "B", 2)]
        );
        assert_eq!(l.request_balance(&c("A")), 4);
        assert_eq!(l.request_balance(&c("B")), 6);
    }

    #[test]
    fn is_valid_to_execute_cases() {
        let l = LedgerState::new([("A", 10)]).unwrap();
        assert!(l.is_valid_to_execute(&tx("A", 0, "B", 5)));
        assert!(!l.is_valid_to_execute(&tx("A", 1, "B", 5)));
        let poor = LedgerState::new([("A", 3)]).unwrap();
        assert!(!poor.is_valid_to_execute(&tx("A", 0, "B", 5)));
    }

    #[test]
    fn drain_examples() {
        let mut l = LedgerState::new([("A", 10), ("B", 0)]).unwrap();
        l.on_accepted(tx("A", 0, "B", 4));
        assert_eq!(l.drain_executable(), vec![tx("A", 0, "B", 4)]);
        assert_eq!(l.request_balance(&c("A")), 6);
        assert_eq!(l.request_balance(&c("B")), 4);
        assert_eq!(l.current_sn(&c("A")), 0);

        let mut l = LedgerState::new([("A", 10)]).unwrap();
        l.on_accepted(tx("A", 1, "C", 6));
        assert!(l.drain_executable().is_empty());

        let mut l = LedgerState::new([("A", 10)]).unwrap();
        l.on_accepted(tx("A", 0, "B", 4));
        l.on_accepted(tx("A", 1, "C", 6));
        assert_eq!(
            l.drain_executable(),
            vec![tx("A", 0, "B", 4), tx("A", 1, "C", 6)]
        );
        assert_eq!(l.request_balance(&c("A")), 0);
        assert_eq!(l.request_balance(&c("B")), 4);
        assert_eq!(l.request_balance(&c("C")), 6);
    }

    #[test]
    fn underfunded_waits_for_credit() {
        let mut l = LedgerState::new([("A", 3), ("B", 5)]).unwrap();
        l.on_accepted(tx("A", 0, "C", 5));
        assert!(l.drain_executable().is_empty());
        l.on_accepted(tx("B", 0, "A", 2));
        let done = l.drain_executable();
        assert_eq!(done, vec![tx("B", 0, "A", 2), tx("A", 0, "C", 5)]);
        assert_eq!(l.request_balance(&c("A")), 0);
    }

    #[test]
    fn self_payment_is_neutral() {
        let mut l = LedgerState::new([("A", 5)]).unwrap();
        l.on_accepted(tx("A", 0, "A", 5));
        assert_eq!(l.drain_executable().len(), 1);
        assert_eq!(l.request_balance(&c("A")), 5);
        assert_eq!(l.current_sn(&c("A")), 0);
    }

    #[test]
    fn stale_and_executed_transactions_are_dropped() {
        let mut l = LedgerState::new([("A", 10)]).unwrap();
        l.on_accepted(tx("A", 0, "B", 1));
        l.on_accepted(tx("A", 0, "C", 1));
        assert_eq!(l.drain_executable(), vec![tx("A", 0, "B", 1)]);
        assert_eq!(l.pending_len(), 0);
        l.on_accepted(tx("A", 0, "B", 1));
        assert_eq!(l.pending_len(), 0);
    }

    #[test]
    fn ack_gate_matches_execution_rule() {
        let l = LedgerState::new([("A", 5)]).unwrap();
        assert!(l.ack_gate(&tx("A", 0, "B", 5)));
        assert!(!l.ack_gate(&tx("A", 0, "B", 6)));
        assert!(!l.ack_gate(&tx("A", 1, "B", 1)));
    }

    #[test]
    fn snapshot_text_is_sorted() {
        let mut l = LedgerState::new([("B", 0), ("A", 10)]).unwrap();
        l.on_accepted(tx("A", 0, "C", 4));
        l.on_accepted(tx("A", 2, "C", 1));
        l.drain_executable();
        assert_eq!(
            l.snapshot().to_text(),
            "A balance=6 current_sn=0 pending=1\n\
             B balance=0 current_sn=-1 pending=0\n\
             C balance=4 current_sn=-1 pending=0\n"
        );
    }

    fn check_invariants(l: &LedgerState, executed: &BTreeMap<ClientId, Vec<Sn>>) {
        assert_eq!(l.balance_sum(), l.total_supply());
        for (client, sns) in executed {
            let expected: Vec<Sn> = (0..sns.len() as Sn).collect();
            assert_eq!(sns, &expected, "gapless sequence for {client}");
            assert_eq!(l.current_sn(client), sns.len() as i128 - 1);
        }
    }

    proptest! {
        #[test]
        fn random_workloads_conserve_supply(
            init in prop::collection::vec(0i64..20, 4),
            txs in prop::collection::vec((0usize..4, 0u64..4, 0usize..4, 0u64..15), 0..40),
        ) {
            let names = ["A", "B", "C", "D"];
            let mut l = LedgerState::new(names.iter().copied().zip(init.iter().copied())).unwrap();
            let mut executed: BTreeMap<ClientId, Vec<Sn>> = BTreeMap::new();
            for (s, sn, r, a) in txs {
                l.on_accepted(tx(names[s], sn, names[r], a));
                for t in l.drain_executable() {
                    executed.entry(t.sender.clone()).or_default().push(t.sn);
                }
                check_invariants(&l, &executed);
            }
        }
    }

    #[test]
    fn disjoint_groups_commute() {
        // Two independent payment chains; any delivery order gives the same balances.
        let txs = vec![
            tx("A", 0, "B", 3),
            tx("A", 1, "B", 2),
            tx("B", 0, "A", 4),
            tx("C", 0, "D", 7),
            tx("D", 0, "C", 1),
            tx("C", 1, "D", 2),
        ];
        let init = [("A", 5), ("B", 1), ("C", 7), ("D", 0)];
        let reference = {
            let mut l = LedgerState::new(init).unwrap();
            for t in &txs {
                l.on_accepted(t.clone());
            }
            l.drain_executable();
            l.snapshot()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let mut order = txs.clone();
            order.shuffle(&mut rng);
            let mut l = LedgerState::new(init).unwrap();
            for t in order {
                l.on_accepted(t);
                l.drain_executable();
            }
            assert_eq!(l.snapshot(), reference);
        }
    }
}
