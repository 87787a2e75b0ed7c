//! Property sweeps over seeds, system sizes, protocols and adversaries.

use std::collections::BTreeMap;
use std::ops::Range;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use ondemand_core::{SystemParams, Transaction};

use crate::properties::{self, Property, Violation};
use crate::scenario::{
    ClientSubmission, PolicySpec, ProtocolName, Scenario, ScenarioFeatures, StrategySpec, TxSpec,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Workload {
    /// One payment plus an independent one; no Byzantine servers.
    FaultFree,
    /// Two conflicting payments by the same sender plus an independent one.
    DoubleSpend,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Silent,
    Equivocate,
    AckStuff,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SweepConfig {
    pub sizes: Vec<(usize, usize)>,
    pub seeds: Range<u64>,
    pub protocols: Vec<ProtocolName>,
    pub workloads: Vec<Workload>,
    /// Used for double-spend workloads; fault-free runs have no faulty servers.
    pub strategies: Vec<StrategyKind>,
    pub post_consensus_sync: bool,
    pub max_steps: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            sizes: vec![(6, 1), (11, 2), (16, 3)],
            seeds: 0..1000,
            protocols: vec![ProtocolName::Brb, ProtocolName::Cod],
            workloads: vec![Workload::FaultFree, Workload::DoubleSpend],
            strategies: vec![
                StrategyKind::Silent,
                StrategyKind::Equivocate,
                StrategyKind::AckStuff,
            ],
            post_consensus_sync: false,
            max_steps: ondemand_simnet::DEFAULT_MAX_STEPS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Job {
    pub n: usize,
    pub f: usize,
    pub protocol: ProtocolName,
    pub workload: Workload,
    pub strategy: Option<StrategyKind>,
    pub seed: u64,
}

impl SweepConfig {
    /// Jobs in a fixed order; the sweep reports the first failure in it.
    pub fn jobs(&self) -> Vec<Job> {
        let mut jobs = Vec::new();
        for &(n, f) in &self.sizes {
            for &protocol in &self.protocols {
                for &workload in &self.workloads {
                    let strategies: Vec<Option<StrategyKind>> = match workload {
                        Workload::FaultFree => vec![None],
                        Workload::DoubleSpend => self.strategies.iter().copied().map(Some).collect(),
                    };
                    for strategy in strategies {
                        for seed in self.seeds.clone() {
                            jobs.push(Job {
                                n,
                                f,
                                protocol,
                                workload,
                                strategy,
                                seed,
                            });
                        }
                    }
                }
            }
        }
        jobs
    }
}

pub fn double_spend_pair() -> (Transaction, Transaction) {
    (
        Transaction::signed("A", 0, "B", 5),
        Transaction::signed("A", 0, "C", 5),
    )
}

pub fn independent_payment() -> Transaction {
    Transaction::signed("D", 0, "E", 3)
}

/// The scenario a job runs. Faulty servers, entry points and partitions are
/// drawn from the seed on a stream separate from the delivery policy's.
pub fn scenario_for(job: &Job, post_consensus_sync: bool, max_steps: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(job.seed);
    rng.set_stream(1);
    let n = job.n;
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(&mut rng);
    let faulty = if job.strategy.is_some() { job.f } else { 0 };
    let (byz_ids, honest) = ids.split_at(faulty);
    let mut honest = honest.to_vec();
    honest.sort_unstable();
    let entry = |rng: &mut ChaCha8Rng| honest[rng.gen_range(0..honest.len())];

    let (t, t_prime) = double_spend_pair();
    let mut client_script = vec![ClientSubmission {
        time: 0,
        entry: entry(&mut rng),
        tx: TxSpec::from_tx(&t),
    }];
    if job.workload == Workload::DoubleSpend {
        client_script.push(ClientSubmission {
            time: rng.gen_range(0..=n as u64),
            entry: entry(&mut rng),
            tx: TxSpec::from_tx(&t_prime),
        });
    }
    client_script.push(ClientSubmission {
        time: rng.gen_range(0..=2 * n as u64),
        entry: entry(&mut rng),
        tx: TxSpec::from_tx(&independent_payment()),
    });

    let mut byzantine = BTreeMap::new();
    for &b in byz_ids {
        let (first, second) = if rng.gen_bool(0.5) {
            (&t, &t_prime)
        } else {
            (&t_prime, &t)
        };
        let spec = match job.strategy.expect("faulty servers imply a strategy") {
            StrategyKind::Silent => StrategySpec::Silent {},
            StrategyKind::Equivocate => StrategySpec::Equivocate {
                partition: honest.iter().copied().filter(|_| rng.gen_bool(0.5)).collect(),
                t: TxSpec::from_tx(first),
                t_prime: TxSpec::from_tx(second),
            },
            StrategyKind::AckStuff => StrategySpec::AckStuff {
                target: TxSpec::from_tx(first),
            },
        };
        byzantine.insert(b.to_string(), spec);
    }

    Scenario {
        params: SystemParams {
            n,
            f: job.f,
            allow_threshold_violation: false,
        },
        protocol: job.protocol,
        features: ScenarioFeatures {
            post_consensus_sync: post_consensus_sync && job.protocol == ProtocolName::Cod,
            ..ScenarioFeatures::default()
        },
        initial_distribution: [("A".to_string(), 10), ("D".to_string(), 10)].into(),
        client_script,
        byzantine,
        policy: PolicySpec::SeededRandom {},
        seed: job.seed,
        max_steps,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct JobOutcome {
    pub job: Job,
    pub violations: Vec<Violation>,
    pub checked: Vec<Property>,
    pub quiescent: bool,
    pub truncated: bool,
    /// Submitted keys nobody accepted.
    pub undecided: usize,
    pub consensus_invocations: u64,
    pub messages: u64,
    /// Min and max acceptance hop latency across honest servers and keys.
    pub hops: Option<(u32, u32)>,
}

pub fn run_job(job: &Job, cfg: &SweepConfig) -> JobOutcome {
    let scenario = scenario_for(job, cfg.post_consensus_sync, cfg.max_steps);
    let run = crate::run(&scenario).expect("sweep scenarios are valid");
    let report = properties::check(&run);
    let hops = run
        .honest
        .values()
        .flat_map(|o| o.accepted.values().map(|a| a.hops))
        .fold(None, |acc: Option<(u32, u32)>, h| {
            Some(acc.map_or((h, h), |(lo, hi)| (lo.min(h), hi.max(h))))
        });
    JobOutcome {
        job: job.clone(),
        checked: report.checked.iter().copied().collect(),
        violations: report.violations,
        quiescent: run.quiescent,
        truncated: run.truncated,
        undecided: report.undecided.len(),
        consensus_invocations: run.consensus_invocations,
        messages: run.total_messages(),
        hops,
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Tally {
    pub runs: u64,
    pub quiescent: u64,
    pub truncated: u64,
    /// Runs in which some submitted key was never accepted.
    pub undecided_runs: u64,
    pub runs_with_consensus: u64,
    pub consensus_invocations: u64,
    pub messages: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Failure {
    pub job: Job,
    pub scenario: Scenario,
    pub violations: Vec<Violation>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct SweepReport {
    pub runs: u64,
    /// Per property: (runs where it was evaluated, runs where it failed).
    pub properties: BTreeMap<Property, (u64, u64)>,
    /// Keyed by `"<protocol>/<workload>"`.
    pub tallies: BTreeMap<String, Tally>,
    pub failures: u64,
    pub first_failure: Option<Failure>,
}

impl SweepReport {
    pub fn holds(&self) -> bool {
        self.failures == 0
    }

    pub fn tally(&self, protocol: ProtocolName, workload: Workload) -> Tally {
        self.tallies
            .get(&tally_key(protocol, workload))
            .cloned()
            .unwrap_or_default()
    }
}

fn tally_key(protocol: ProtocolName, workload: Workload) -> String {
    let p = serde_json::to_value(protocol).expect("serializes");
    let w = serde_json::to_value(workload).expect("serializes");
    format!("{}/{}", p.as_str().unwrap_or("?"), w.as_str().unwrap_or("?"))
}

/// Runs every job in parallel and merges the outcomes in job order.
pub fn sweep(cfg: &SweepConfig) -> (SweepReport, Vec<JobOutcome>) {
    let jobs = cfg.jobs();
    let outcomes: Vec<JobOutcome> = jobs.par_iter().map(|j| run_job(j, cfg)).collect();
    let mut rep = SweepReport::default();
    for o in &outcomes {
        rep.runs += 1;
        for p in &o.checked {
            rep.properties.entry(*p).or_default().0 += 1;
        }
        let mut failed: Vec<Property> = o.violations.iter().map(|v| v.property).collect();
        failed.dedup();
        for p in failed {
            rep.properties.entry(p).or_default().1 += 1;
        }
        let t = rep
            .tallies
            .entry(tally_key(o.job.protocol, o.job.workload))
            .or_default();
        t.runs += 1;
        t.quiescent += u64::from(o.quiescent);
        t.truncated += u64::from(o.truncated);
        t.undecided_runs += u64::from(o.undecided > 0);
        t.runs_with_consensus += u64::from(o.consensus_invocations > 0);
        t.consensus_invocations += o.consensus_invocations;
        t.messages += o.messages;
        if !o.violations.is_empty() {
            rep.failures += 1;
            if rep.first_failure.is_none() {
                rep.first_failure = Some(Failure {
                    job: o.job.clone(),
                    scenario: scenario_for(&o.job, cfg.post_consensus_sync, cfg.max_steps),
                    violations: o.violations.clone(),
                });
            }
        }
    }
    (rep, outcomes)
}
