//! Run summaries for humans and for machines.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use ondemand_simnet::RunResult;
use serde::Serialize;

use crate::properties::{PropertyReport, Violation};
use crate::scenario::Scenario;

#[derive(Clone, Debug, Serialize)]
pub struct AcceptedSummary {
    pub value: String,
    pub path: String,
    pub hops: u32,
    pub time: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub protocol: String,
    pub n: usize,
    pub f: usize,
    pub seed: u64,
    pub scenario_digest: String,
    /// Server index, then key.
    pub accepted: BTreeMap<usize, BTreeMap<String, AcceptedSummary>>,
    pub message_counts: BTreeMap<String, u64>,
    pub consensus_invocations: u64,
    pub steps: u64,
    pub time: u64,
    pub truncated: bool,
    pub quiescent: bool,
    pub trace_sha256: String,
    pub violations: Vec<Violation>,
}

impl RunSummary {
    pub fn new(s: &Scenario, run: &RunResult, props: &PropertyReport) -> RunSummary {
        let accepted = run
            .honest
            .iter()
            .map(|(id, o)| {
                let per_key = o
                    .accepted
                    .iter()
                    .map(|(k, a)| {
                        (
                            k.to_string(),
                            AcceptedSummary {
                                value: a.value.to_string(),
                                path: serde_json::to_value(a.path)
                                    .ok()
                                    .and_then(|v| v.as_str().map(String::from))
                                    .unwrap_or_default(),
                                hops: a.hops,
                                time: a.time,
                            },
                        )
                    })
                    .collect();
                (id.0, per_key)
            })
            .collect();
        RunSummary {
            protocol: run.protocol.name().to_string(),
            n: run.params.n,
            f: run.params.f,
            seed: s.seed,
            scenario_digest: s.digest(),
            accepted,
            message_counts: run
                .message_counts
                .iter()
                .map(|(k, v)| (k.to_string(), *v))
                .collect(),
            consensus_invocations: run.consensus_invocations,
            steps: run.steps,
            time: run.time,
            truncated: run.truncated,
            quiescent: run.quiescent,
            trace_sha256: run.trace_sha256(),
            violations: props.violations.clone(),
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("summaries always serialize")
    }

    pub fn to_human(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "protocol {} n={} f={} seed={} steps={} time={}{}",
            self.protocol,
            self.n,
            self.f,
            self.seed,
            self.steps,
            self.time,
            if self.truncated { " TRUNCATED" } else { "" }
        );
        for (s, keys) in &self.accepted {
            for (k, a) in keys {
                let _ = writeln!(
                    out,
                    "  server {s} accepted {k} = {} via {} after {} hops",
                    a.value, a.path, a.hops
                );
            }
        }
        let counts: Vec<String> = self
            .message_counts
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        let _ = writeln!(out, "  messages: {}", counts.join(" "));
        let _ = writeln!(out, "  consensus invocations: {}", self.consensus_invocations);
        let _ = writeln!(out, "  trace sha256: {}", self.trace_sha256);
        if self.violations.is_empty() {
            let _ = writeln!(out, "  all checked properties hold");
        }
        for v in &self.violations {
            let _ = writeln!(out, "  VIOLATION {}: {}", v.property.name(), v.detail);
        }
        out
    }
}
