use std::collections::{BTreeMap, BTreeSet};

use ondemand_core::{
    AcceptPath, KindTag, LedgerSnapshot, LedgerState, ServerId, SystemParams, Transaction, TxKey,
};
use sha2::{Digest, Sha256};

use crate::network::Submission;
use crate::node::{Features, Protocol};
use crate::trace::{to_jsonl, TraceRecord};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Acceptance {
    pub value: Transaction,
    pub path: AcceptPath,
    /// Longest causal hop chain from submission to this acceptance.
    pub hops: u32,
    pub time: u64,
}

#[derive(Clone, Debug)]
pub struct NodeOutcome {
    pub accepted: BTreeMap<TxKey, Acceptance>,
    pub ledger: LedgerState,
    pub snapshot: LedgerSnapshot,
    /// Transactions in execution order.
    pub executed: Vec<Transaction>,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub params: SystemParams,
    pub protocol: Protocol,
    pub features: Features,
    pub honest: BTreeMap<ServerId, NodeOutcome>,
    pub byzantine: BTreeSet<ServerId>,
    /// Client submissions in the order they were handed over.
    pub submitted: Vec<Submission>,
    /// Keys some built-in Byzantine strategy supports a value for.
    pub contested_keys: BTreeSet<TxKey>,
    /// A custom Byzantine behaviour took part, so any key may be contested.
    pub custom_byzantine: bool,
    pub sequencer_decisions: Vec<(TxKey, Transaction)>,
    pub trace: Vec<TraceRecord>,
    /// Messages sent, self-addressed ones included.
    pub message_counts: BTreeMap<KindTag, u64>,
    /// `PROPOSE` messages sent by honest servers.
    pub consensus_invocations: u64,
    pub steps: u64,
    pub time: u64,
    pub events_enqueued: u64,
    pub events_delivered: u64,
    pub truncated: bool,
    pub quiescent: bool,
    pub invariant_violations: Vec<String>,
    pub forged_dropped: u64,
}

impl RunResult {
    pub fn total_messages(&self) -> u64 {
        self.message_counts.values().sum()
    }

    pub fn count(&self, tag: KindTag) -> u64 {
        self.message_counts.get(&tag).copied().unwrap_or(0)
    }

    pub fn trace_jsonl(&self) -> String {
        to_jsonl(&self.trace)
    }

    pub fn trace_sha256(&self) -> String {
        hex::encode(Sha256::digest(self.trace_jsonl().as_bytes()))
    }

    /// Every key accepted by at least one honest server.
    pub fn accepted_keys(&self) -> BTreeSet<TxKey> {
        self.honest
            .values()
            .flat_map(|o| o.accepted.keys().cloned())
            .collect()
    }
}
