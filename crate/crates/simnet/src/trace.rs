//! Line-delimited trace records.

use ondemand_core::{KindTag, TransitionKind};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum TraceRecord {
    /// A client transaction handed to its entry server.
    Submit {
        time: u64,
        entry: usize,
        instance: String,
        tx_hash: String,
    },
    Delivery {
        step: u64,
        time: u64,
        from: usize,
        to: usize,
        kind: KindTag,
        instance: String,
        tx_hash: String,
        node_state_digest: String,
    },
    Transition {
        time: u64,
        server: usize,
        instance: String,
        event: TransitionKind,
        tx_hash: String,
        count: usize,
    },
    Executed {
        time: u64,
        server: usize,
        instance: String,
        tx_hash: String,
    },
    /// A synchronous round closed.
    RoundEnd { time: u64, round: u64 },
}

/// Serializes records one JSON object per line, each line newline-terminated.
pub fn to_jsonl(records: &[TraceRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("trace records always serialize"));
        out.push('\n');
    }
    out
}

pub fn from_jsonl(text: &str) -> serde_json::Result<Vec<TraceRecord>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}
