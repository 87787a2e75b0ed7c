//! Schedules on which a single-round fast decider breaks agreement.
//!
//! Servers split into a large honest group `G1` acknowledging `t`, a small
//! honest group `G2` of size `f` acknowledging `t'`, and `f` Byzantine
//! servers that support `t` towards one victim in `G1` and `t'` towards
//! everyone else. Clients hand `t` to every server in `G1` and `t'` to every
//! server in `G2`, so each group acknowledges its own value first.
//!
//! The victim sees `n - f` acknowledgements for `t` and decides it. Every
//! other server is shown a sample in which `t'` is at least as supported as
//! `t`; `t'` is picked to win digest tie-breaks, so they decide `t'`. The
//! same schedule run against consensus on demand with `n = 5f + 1` must not
//! break agreement.

use std::collections::{BTreeMap, BTreeSet};

use ondemand_core::{KindTag, SystemParams, Transaction};
use ondemand_simnet::{Network, RunResult, ScheduledEvent};
use serde::Serialize;
use thiserror::Error;

use crate::properties::{self, Property, PropertyReport};
use crate::scenario::{
    ClientSubmission, PolicySpec, ProtocolName, Scenario, ScenarioFeatures, StrategySpec, TxSpec,
};

/// Decision round of the naive decider under synchronous delivery: client
/// submissions are round 0, honest acknowledgements arrive in round 1 and
/// Byzantine ones in round 2.
pub const SYNC_DECIDE_ROUND: u64 = 2;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConstructionError {
    #[error("f must be at least 1")]
    NoFaults,
    #[error("construction no longer closes for n = {n}, f = {f}: needs {needed}")]
    DoesNotClose { n: usize, f: usize, needed: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Asynchronous,
    Synchronous,
}

/// Group layout for one construction.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Groups {
    pub n: usize,
    pub f: usize,
    pub g1: Vec<usize>,
    pub g2: Vec<usize>,
    pub byzantine: Vec<usize>,
    pub victim: usize,
}

impl Groups {
    /// `G1` takes everything but the last `2f` servers.
    fn layout(n: usize, f: usize) -> Groups {
        Groups {
            n,
            f,
            g1: (0..n - 2 * f).collect(),
            g2: (n - 2 * f..n - f).collect(),
            byzantine: (n - f..n).collect(),
            victim: 0,
        }
    }

    /// The `f` members of `G1` (other than `r`) whose `t` acknowledgements
    /// are held back from `r`.
    fn delayed_for(&self, r: usize) -> BTreeSet<usize> {
        self.g1
            .iter()
            .copied()
            .filter(|&u| u != r)
            .rev()
            .take(self.f)
            .collect()
    }
}

/// `(t, t')` with `digest(t') < digest(t)`.
pub fn conflicting_pair() -> (Transaction, Transaction) {
    let a = Transaction::signed("A", 0, "B", 5);
    let b = Transaction::signed("A", 0, "C", 5);
    if b.digest() < a.digest() {
        (a, b)
    } else {
        (b, a)
    }
}

/// True iff the delayed-acknowledgement argument still closes.
pub fn closes(model: Model, n: usize, f: usize) -> bool {
    match model {
        Model::Asynchronous => 2 * f + 3 * f >= n,
        Model::Synchronous => 2 * f + 2 * f >= n,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Outcome {
    pub scenario: Scenario,
    /// Decision per honest server, as a display string.
    pub decisions: BTreeMap<usize, Option<String>>,
    pub agreement_violated: bool,
    #[serde(skip)]
    pub report: PropertyReport,
    #[serde(skip)]
    pub run: RunResult,
}

#[derive(Clone, Debug, Serialize)]
pub struct Demonstration {
    pub model: Model,
    pub groups: Groups,
    pub t: String,
    pub t_prime: String,
    pub naive: Outcome,
    pub control: Outcome,
}

impl Demonstration {
    /// The naive decider broke agreement and the control did not break anything.
    pub fn reproduced(&self) -> bool {
        self.naive.agreement_violated && self.control.report.holds()
    }
}

fn base_scenario(params: SystemParams, protocol: ProtocolName, g: &Groups) -> Scenario {
    let (t, t_prime) = conflicting_pair();
    let mut client_script = Vec::new();
    for (group, tx) in [(&g.g1, &t), (&g.g2, &t_prime)] {
        for &entry in group {
            client_script.push(ClientSubmission {
                time: 0,
                entry,
                tx: TxSpec::from_tx(tx),
            });
        }
    }
    let byzantine = g
        .byzantine
        .iter()
        .map(|b| {
            (
                b.to_string(),
                StrategySpec::Equivocate {
                    partition: [g.victim].into(),
                    t: TxSpec::from_tx(&t),
                    t_prime: TxSpec::from_tx(&t_prime),
                },
            )
        })
        .collect();
    Scenario {
        params,
        protocol,
        features: ScenarioFeatures::default(),
        initial_distribution: [("A".to_string(), 5)].into(),
        client_script,
        byzantine,
        policy: PolicySpec::Fifo {},
        seed: 0,
        max_steps: ondemand_simnet::DEFAULT_MAX_STEPS,
    }
}

fn outcome(scenario: Scenario) -> Outcome {
    let run = crate::run(&scenario).expect("generated scenarios are valid");
    let report = properties::check(&run);
    let key = conflicting_pair().0.key();
    let decisions = run
        .honest
        .iter()
        .map(|(s, o)| (s.0, o.accepted.get(&key).map(|a| a.value.to_string())))
        .collect();
    Outcome {
        agreement_violated: report.violated(Property::Agreement),
        scenario,
        decisions,
        report,
        run,
    }
}

/// Delivery priority of the asynchronous schedule; lower goes first.
fn rank(g: &Groups, t: &Transaction, ev: &ScheduledEvent) -> u8 {
    let to = ev.to.0;
    match ev.msg.kind.tag() {
        KindTag::Disseminate => 0,
        KindTag::Ack if to == g.victim && ev.msg.tx() == t => 1,
        KindTag::Ack if to == g.victim => 3,
        KindTag::Ack if ev.msg.tx() == t && g.delayed_for(to).contains(&ev.from.0) => 3,
        _ => 2,
    }
}

/// Runs the ranked schedule once and records it as a script, so the
/// scenario replays without the ranking logic.
fn scripted(mut scenario: Scenario, g: &Groups) -> Scenario {
    let (t, _) = conflicting_pair();
    let prepared = scenario.prepare().expect("generated scenarios are valid");
    let mut net = Network::build(prepared.config).expect("generated scenarios are valid");
    for s in prepared.submissions {
        net.submit(s).expect("entries are in range");
    }
    net.release_submissions();
    let mut script = Vec::new();
    while let Some(next) = net
        .pending()
        .iter()
        .min_by_key(|e| (rank(g, &t, e), e.id))
        .map(|e| e.id)
    {
        net.deliver(next);
        script.push(next.0);
    }
    scenario.policy = PolicySpec::Scripted { script };
    scenario
}

pub fn impossibility_async(f: usize) -> Result<Demonstration, ConstructionError> {
    if f == 0 {
        return Err(ConstructionError::NoFaults);
    }
    let n = 5 * f;
    let groups = Groups::layout(n, f);
    let params = SystemParams::with_threshold_violation(n, f).expect("5f > f");
    let naive = scripted(base_scenario(params, ProtocolName::Naive, &groups), &groups);

    let control_groups = Groups::layout(n + 1, f);
    let control_params = SystemParams::new(n + 1, f).expect("5f + 1 meets the bound");
    let control = scripted(
        base_scenario(control_params, ProtocolName::Cod, &control_groups),
        &control_groups,
    );
    let (t, t_prime) = conflicting_pair();
    Ok(Demonstration {
        model: Model::Asynchronous,
        groups,
        t: t.to_string(),
        t_prime: t_prime.to_string(),
        naive: outcome(naive),
        control: outcome(control),
    })
}

/// The synchronous construction on `n` servers (`4f` unless overridden).
pub fn impossibility_sync(f: usize, n: Option<usize>) -> Result<Demonstration, ConstructionError> {
    if f == 0 {
        return Err(ConstructionError::NoFaults);
    }
    let n = n.unwrap_or(4 * f);
    if n < 2 * f + 1 || !closes(Model::Synchronous, n, f) {
        return Err(ConstructionError::DoesNotClose {
            n,
            f,
            needed: format!("2f >= n - 2f, but {} < {}", 2 * f, n.saturating_sub(2 * f)),
        });
    }
    let groups = Groups::layout(n, f);
    let params = SystemParams::with_threshold_violation(n, f).expect("n > f");
    let mut naive = base_scenario(params, ProtocolName::Naive, &groups);
    naive.policy = PolicySpec::RoundSynchronous {};
    naive.features.naive_decide_round = Some(SYNC_DECIDE_ROUND);

    let cn = 5 * f + 1;
    let control_groups = Groups::layout(cn, f);
    let mut control = base_scenario(
        SystemParams::new(cn, f).expect("5f + 1 meets the bound"),
        ProtocolName::Cod,
        &control_groups,
    );
    control.policy = PolicySpec::RoundSynchronous {};
    let (t, t_prime) = conflicting_pair();
    Ok(Demonstration {
        model: Model::Synchronous,
        groups,
        t: t.to_string(),
        t_prime: t_prime.to_string(),
        naive: outcome(naive),
        control: outcome(control),
    })
}
