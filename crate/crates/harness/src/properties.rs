//! Safety and liveness checks over a finished run.

use std::collections::{BTreeMap, BTreeSet};

use ondemand_core::{Transaction, TransitionKind, TxKey};
use ondemand_simnet::{Protocol, RunResult, TraceRecord};
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Property {
    /// No two honest servers accept different values for a key.
    Agreement,
    /// In a quiescent run a key accepted anywhere is accepted everywhere.
    Totality,
    /// Unconflicted submissions through honest servers are accepted.
    Validity,
    /// Consensus on demand accepts every submitted key.
    Termination,
    /// Every slow-path proposal was preceded by a conflicting sample.
    ConsensusOnDemand,
    /// Ledgers conserve money and execute each sender gaplessly.
    LedgerConservation,
    /// Quiescent honest ledgers are identical.
    IdenticalLedgers,
}

impl Property {
    pub fn name(self) -> &'static str {
        match self {
            Property::Agreement => "agreement",
            Property::Totality => "totality",
            Property::Validity => "validity",
            Property::Termination => "termination",
            Property::ConsensusOnDemand => "consensus_on_demand",
            Property::LedgerConservation => "ledger_conservation",
            Property::IdenticalLedgers => "identical_ledgers",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub property: Property,
    pub detail: String,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct PropertyReport {
    /// Properties that were evaluated on this run.
    pub checked: BTreeSet<Property>,
    pub violations: Vec<Violation>,
    /// Submitted keys no honest server accepted. A liveness failure for
    /// consensus on demand; allowed for plain reliable broadcast.
    pub undecided: Vec<TxKey>,
}

impl PropertyReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn violated(&self, p: Property) -> bool {
        self.violations.iter().any(|v| v.property == p)
    }

    fn fail(&mut self, property: Property, detail: String) {
        self.violations.push(Violation { property, detail });
    }
}

pub fn check(run: &RunResult) -> PropertyReport {
    let mut rep = PropertyReport::default();
    let n = run.params.n;
    let f = run.params.f;

    // Agreement, plus anything the nodes flagged themselves.
    rep.checked.insert(Property::Agreement);
    let mut values: BTreeMap<TxKey, BTreeSet<&Transaction>> = BTreeMap::new();
    for o in run.honest.values() {
        for (k, a) in &o.accepted {
            values.entry(k.clone()).or_default().insert(&a.value);
        }
    }
    for (k, vs) in &values {
        if vs.len() > 1 {
            let list: Vec<String> = vs.iter().map(|t| t.to_string()).collect();
            rep.fail(
                Property::Agreement,
                format!("{k}: honest servers accepted {}", list.join(" and ")),
            );
        }
    }
    for v in &run.invariant_violations {
        rep.fail(Property::Agreement, v.clone());
    }

    let submitted_keys: BTreeSet<TxKey> = run.submitted.iter().map(|s| s.tx.key()).collect();
    if run.quiescent {
        rep.checked.insert(Property::Totality);
        for k in values.keys() {
            let missing: Vec<String> = run
                .honest
                .iter()
                .filter(|(_, o)| !o.accepted.contains_key(k))
                .map(|(s, _)| s.to_string())
                .collect();
            if !missing.is_empty() {
                rep.fail(
                    Property::Totality,
                    format!("{k}: not accepted at servers {}", missing.join(",")),
                );
            }
        }
        rep.undecided = submitted_keys
            .iter()
            .filter(|k| !values.contains_key(k))
            .cloned()
            .collect();
    }

    if run.quiescent && !run.features.ack_requires_funds {
        rep.checked.insert(Property::Validity);
        for (k, t) in clean_submissions(run) {
            for (s, o) in &run.honest {
                match o.accepted.get(&k) {
                    Some(a) if a.value == t => {}
                    other => rep.fail(
                        Property::Validity,
                        format!(
                            "{k}: server {s} accepted {:?} instead of {t}",
                            other.map(|a| a.value.to_string())
                        ),
                    ),
                }
            }
        }
    }

    if run.protocol == Protocol::Cod {
        if run.quiescent && !run.features.ack_requires_funds {
            rep.checked.insert(Property::Termination);
            let via_honest: BTreeSet<TxKey> = run
                .submitted
                .iter()
                .filter(|s| !run.byzantine.contains(&s.entry))
                .map(|s| s.tx.key())
                .collect();
            for k in rep.undecided.clone() {
                if via_honest.contains(&k) {
                    rep.fail(Property::Termination, format!("{k}: never accepted"));
                }
            }
        }
        rep.checked.insert(Property::ConsensusOnDemand);
        for d in proposals_without_conflict(&run.trace, n - f) {
            rep.fail(Property::ConsensusOnDemand, d);
        }
    }

    rep.checked.insert(Property::LedgerConservation);
    for (s, o) in &run.honest {
        if o.ledger.balance_sum() != o.ledger.total_supply() {
            rep.fail(
                Property::LedgerConservation,
                format!(
                    "server {s}: balances sum to {} but supply is {}",
                    o.ledger.balance_sum(),
                    o.ledger.total_supply()
                ),
            );
        }
        if let Some(d) = gap_in_execution(&o.executed) {
            rep.fail(Property::LedgerConservation, format!("server {s}: {d}"));
        }
    }

    if run.quiescent && !rep.violated(Property::Agreement) && !rep.violated(Property::Totality) {
        rep.checked.insert(Property::IdenticalLedgers);
        let mut snaps = run.honest.iter();
        if let Some((first_id, first)) = snaps.next() {
            for (s, o) in snaps {
                if o.snapshot != first.snapshot {
                    rep.fail(
                        Property::IdenticalLedgers,
                        format!("servers {first_id} and {s} hold different ledgers"),
                    );
                }
            }
        }
    }
    rep
}

/// Keys submitted in a single version, only through honest servers, and not
/// contested by any Byzantine strategy.
fn clean_submissions(run: &RunResult) -> BTreeMap<TxKey, Transaction> {
    if run.custom_byzantine {
        return BTreeMap::new();
    }
    let mut versions: BTreeMap<TxKey, BTreeSet<&Transaction>> = BTreeMap::new();
    let mut dirty: BTreeSet<TxKey> = run.contested_keys.clone();
    for s in &run.submitted {
        versions.entry(s.tx.key()).or_default().insert(&s.tx);
        if run.byzantine.contains(&s.entry) {
            dirty.insert(s.tx.key());
        }
    }
    versions
        .into_iter()
        .filter(|(k, vs)| vs.len() == 1 && !dirty.contains(k))
        .filter_map(|(k, vs)| vs.into_iter().next().map(|t| (k, t.clone())))
        .collect()
}

/// Each sender's executed sequence numbers must be 0, 1, 2, ...
fn gap_in_execution(executed: &[Transaction]) -> Option<String> {
    let mut next: BTreeMap<&str, u64> = BTreeMap::new();
    for t in executed {
        let want = next.entry(t.sender.as_str()).or_insert(0);
        if t.sn != *want {
            return Some(format!(
                "executed {t} while sender {} expected sn {want}",
                t.sender
            ));
        }
        *want += 1;
    }
    None
}

/// Replays the trace per `(server, instance)`: a slow-path proposal needs at
/// least `sample` first acknowledgements from distinct origins, and at least
/// two different transactions among them.
pub fn proposals_without_conflict(trace: &[TraceRecord], sample: usize) -> Vec<String> {
    let mut first_acks: BTreeMap<(usize, &str), BTreeMap<usize, &str>> = BTreeMap::new();
    let mut bad = Vec::new();
    for rec in trace {
        match rec {
            TraceRecord::Delivery {
                from,
                to,
                kind: ondemand_core::KindTag::Ack,
                instance,
                tx_hash,
                ..
            } => {
                first_acks
                    .entry((*to, instance.as_str()))
                    .or_default()
                    .entry(*from)
                    .or_insert(tx_hash.as_str());
            }
            TraceRecord::Transition {
                time,
                server,
                instance,
                event: TransitionKind::ConsensusProposed,
                ..
            } => {
                let seen = first_acks.get(&(*server, instance.as_str()));
                let origins = seen.map_or(0, BTreeMap::len);
                let distinct: BTreeSet<&&str> = seen.map(|m| m.values().collect()).unwrap_or_default();
                if origins < sample || distinct.len() < 2 {
                    bad.push(format!(
                        "server {server} proposed for {instance} at time {time} after {origins} acks with {} distinct values",
                        distinct.len()
                    ));
                }
            }
            _ => {}
        }
    }
    bad
}
