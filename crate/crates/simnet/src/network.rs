//! The simulation loop.
//!
//! Links are reliable and authenticated: every enqueued event is delivered
//! exactly once unless the run is truncated, and envelopes whose claimed
//! origin is not the sending node are dropped at the sender. Messages a node
//! addresses to itself bypass the adversary and are delivered right after
//! the delivery that produced them, without adding a hop.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use ondemand_core::{
    ClientId, Envelope, KindTag, LedgerError, LedgerState, ParamsError, Sequencer, ServerId,
    SystemParams, Transaction, Transition, TxKey,
};
use thiserror::Error;

use crate::byzantine::{ByzContext, ByzantineNode, ByzantineStrategy};
use crate::event::{EventId, ScheduledEvent};
use crate::node::{Features, HonestNode, Output, Protocol, SequencerNode};
use crate::policy::{DeliveryPolicy, Selector};
use crate::result::{Acceptance, NodeOutcome, RunResult};
use crate::trace::TraceRecord;

pub const DEFAULT_MAX_STEPS: u64 = 1_000_000;

#[derive(Clone, Debug)]
pub struct NetworkConfig {
    pub params: SystemParams,
    pub protocol: Protocol,
    pub features: Features,
    pub initial_distribution: Vec<(ClientId, i64)>,
    pub byzantine: BTreeMap<ServerId, ByzantineStrategy>,
    pub policy: DeliveryPolicy,
    pub max_steps: u64,
}

impl NetworkConfig {
    /// Fault-free FIFO network with empty ledgers.
    pub fn new(params: SystemParams, protocol: Protocol) -> Self {
        NetworkConfig {
            params,
            protocol,
            features: Features::default(),
            initial_distribution: Vec::new(),
            byzantine: BTreeMap::new(),
            policy: DeliveryPolicy::Fifo,
            max_steps: DEFAULT_MAX_STEPS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BuildError {
    #[error("{count} byzantine servers exceed f = {f}")]
    TooManyByzantine { count: usize, f: usize },
    #[error("server {0} does not exist")]
    UnknownServer(ServerId),
    #[error("max_steps must be positive")]
    ZeroMaxSteps,
    #[error(transparent)]
    Params(#[from] ParamsError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

/// A client handing `tx` to server `entry` at logical time `time`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Submission {
    pub time: u64,
    pub entry: ServerId,
    pub tx: Transaction,
}

#[derive(Clone, Debug)]
enum Slot {
    Honest(HonestNode),
    Byzantine(ByzantineNode),
}

pub struct Network {
    params: SystemParams,
    protocol: Protocol,
    max_steps: u64,
    nodes: Vec<Slot>,
    sequencer: Option<SequencerNode>,
    selector: Selector,
    pending: Vec<ScheduledEvent>,
    delivered: BTreeSet<EventId>,
    submissions: VecDeque<Submission>,
    submitted: Vec<Submission>,
    features: Features,
    contested_keys: BTreeSet<TxKey>,
    custom_byzantine: bool,
    next_id: u64,
    time: u64,
    steps: u64,
    round: u64,
    closed_round: Option<u64>,
    /// Hop depth per node and instance; index `n` is the sequencer.
    depth: Vec<BTreeMap<TxKey, u32>>,
    acceptances: BTreeMap<ServerId, BTreeMap<TxKey, Acceptance>>,
    trace: Vec<TraceRecord>,
    counts: BTreeMap<KindTag, u64>,
    consensus_invocations: u64,
    violations: Vec<String>,
    forged_dropped: u64,
    enqueued: u64,
    truncated: bool,
}

impl Network {
    pub fn build(config: NetworkConfig) -> Result<Network, BuildError> {
        let params = config.params.validated()?;
        if config.max_steps == 0 {
            return Err(BuildError::ZeroMaxSteps);
        }
        if let Some(&bad) = config.byzantine.keys().find(|s| s.0 >= params.n) {
            return Err(BuildError::UnknownServer(bad));
        }
        if config.byzantine.len() > params.f && !params.allow_threshold_violation {
            return Err(BuildError::TooManyByzantine {
                count: config.byzantine.len(),
                f: params.f,
            });
        }
        let mut contested_keys = BTreeSet::new();
        let mut custom_byzantine = false;
        for s in config.byzantine.values() {
            match s {
                ByzantineStrategy::Silent => {}
                ByzantineStrategy::Equivocate { t, t_prime, .. } => {
                    contested_keys.insert(t.key());
                    contested_keys.insert(t_prime.key());
                }
                ByzantineStrategy::AckStuff { target } => {
                    contested_keys.insert(target.key());
                }
                ByzantineStrategy::Custom(_) => custom_byzantine = true,
            }
        }
        let ledger = LedgerState::new(config.initial_distribution.iter().cloned())?;
        let nodes = (0..params.n)
            .map(|i| match config.byzantine.get(&ServerId(i)) {
                Some(s) => Slot::Byzantine(ByzantineNode::new(s.clone())),
                None => Slot::Honest(HonestNode::new(
                    ServerId(i),
                    params,
                    config.protocol,
                    config.features,
                    ledger.clone(),
                )),
            })
            .collect();
        let sequencer = (config.protocol == Protocol::Cod).then(|| SequencerNode {
            inner: Sequencer::new(params),
        });
        Ok(Network {
            params,
            protocol: config.protocol,
            max_steps: config.max_steps,
            nodes,
            sequencer,
            selector: Selector::new(&config.policy),
            pending: Vec::new(),
            delivered: BTreeSet::new(),
            submissions: VecDeque::new(),
            submitted: Vec::new(),
            features: config.features,
            contested_keys,
            custom_byzantine,
            next_id: 0,
            time: 0,
            steps: 0,
            round: 0,
            closed_round: None,
            depth: vec![BTreeMap::new(); params.n + 1],
            acceptances: BTreeMap::new(),
            trace: Vec::new(),
            counts: BTreeMap::new(),
            consensus_invocations: 0,
            violations: Vec::new(),
            forged_dropped: 0,
            enqueued: 0,
            truncated: false,
        })
    }

    pub fn params(&self) -> SystemParams {
        self.params
    }

    /// Schedules a client submission. Submissions are handed over in time
    /// order, ties in the order they were scheduled.
    pub fn submit(&mut self, sub: Submission) -> Result<(), BuildError> {
        if sub.entry.0 >= self.params.n {
            return Err(BuildError::UnknownServer(sub.entry));
        }
        let at = self.submissions.partition_point(|s| s.time <= sub.time);
        self.submissions.insert(at, sub);
        Ok(())
    }

    pub fn pending(&self) -> &[ScheduledEvent] {
        &self.pending
    }

    pub fn time(&self) -> u64 {
        self.time
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn is_quiescent(&self) -> bool {
        self.pending.is_empty() && self.submissions.is_empty()
    }

    /// Lets the policy pick one pending event and delivers it, together with
    /// any self-addressed messages it causes. `None` once quiescent or out
    /// of steps.
    pub fn step(&mut self) -> Option<ScheduledEvent> {
        self.release_submissions();
        if self.selector.is_rounds() {
            self.close_rounds();
        }
        if self.pending.is_empty() {
            let next = self.submissions.front()?.time;
            self.time = self.time.max(next);
            self.release_submissions();
            if self.selector.is_rounds() {
                self.close_rounds();
            }
            if self.pending.is_empty() {
                return None;
            }
        }
        if self.steps >= self.max_steps {
            self.truncated = true;
            return None;
        }
        let idx = self.selector.select(&self.pending, &self.delivered);
        let ev = self.pending.remove(idx);
        self.steps += 1;
        self.dispatch(ev.clone());
        Some(ev)
    }

    /// Delivers the pending event `id` regardless of the policy. Returns
    /// false if no such event is pending.
    pub fn deliver(&mut self, id: EventId) -> bool {
        self.release_submissions();
        let Ok(idx) = self.pending.binary_search_by_key(&id, |e| e.id) else {
            return false;
        };
        let ev = self.pending.remove(idx);
        self.steps += 1;
        self.dispatch(ev);
        true
    }

    pub fn run_to_quiescence(mut self) -> RunResult {
        while self.step().is_some() {}
        self.into_result()
    }

    /// Closes every round with nothing left to deliver, calling the
    /// round-end hook on honest servers.
    fn close_rounds(&mut self) {
        loop {
            let next = self.pending.iter().map(|e| e.round).min();
            if next.is_some_and(|r| r <= self.round) {
                return;
            }
            if self.closed_round.is_none_or(|c| c < self.round) {
                self.end_round(self.round);
            }
            match self.pending.iter().map(|e| e.round).min() {
                Some(r) if r > self.round => self.round += 1,
                Some(_) => return,
                None => return,
            }
        }
    }

    fn end_round(&mut self, round: u64) {
        self.closed_round = Some(round);
        self.trace.push(TraceRecord::RoundEnd {
            time: self.time,
            round,
        });
        let mut local = VecDeque::new();
        for i in 0..self.params.n {
            if let Slot::Honest(node) = &mut self.nodes[i] {
                let out = node.on_round_end(round);
                self.apply(ServerId(i), out, &mut local);
            }
        }
        self.drain_local(local);
    }

    /// Hands over every submission due at the current time.
    pub fn release_submissions(&mut self) {
        while self.submissions.front().is_some_and(|s| s.time <= self.time) {
            let sub = self.submissions.pop_front().expect("front exists");
            let key = sub.tx.key();
            self.trace.push(TraceRecord::Submit {
                time: self.time,
                entry: sub.entry.0,
                instance: key.to_string(),
                tx_hash: sub.tx.digest().short_hex(),
            });
            self.submitted.push(sub.clone());
            self.depth[sub.entry.0].entry(key).or_insert(0);
            if let Slot::Honest(node) = &mut self.nodes[sub.entry.0] {
                let out = node.submit(&sub.tx);
                let mut local = VecDeque::new();
                self.apply(sub.entry, out, &mut local);
                self.drain_local(local);
            }
        }
    }

    fn dispatch(&mut self, ev: ScheduledEvent) {
        let mut local = VecDeque::new();
        if self.selector.is_rounds() {
            self.round = self.round.max(ev.round);
        }
        self.deliver_one(ev, &mut local);
        self.drain_local(local);
    }

    fn drain_local(&mut self, mut local: VecDeque<ScheduledEvent>) {
        while let Some(ev) = local.pop_front() {
            self.deliver_one(ev, &mut local);
        }
    }

    fn deliver_one(&mut self, ev: ScheduledEvent, local: &mut VecDeque<ScheduledEvent>) {
        self.time += 1;
        self.delivered.insert(ev.id);
        let key = ev.msg.instance();
        let to = ev.to;
        let d = self.depth[to.0].entry(key.clone()).or_insert(0);
        *d = (*d).max(ev.depth);

        let delivery_index = self.trace.len();
        self.trace.push(TraceRecord::Delivery {
            step: self.steps,
            time: self.time,
            from: ev.from.0,
            to: to.0,
            kind: ev.msg.kind.tag(),
            instance: key.to_string(),
            tx_hash: ev.msg.tx().digest().short_hex(),
            node_state_digest: String::new(),
        });

        let digest = if to.0 == self.params.n {
            let seq = self.sequencer.as_mut().expect("sequencer events only exist under cod");
            let fx = seq.on_message(&ev.msg);
            let digest = seq.state_digest(&key);
            let out = Output {
                messages: fx.messages,
                transitions: fx.transitions,
                ..Output::default()
            };
            self.apply(to, out, local);
            digest
        } else {
            let ctx = ByzContext {
                me: to,
                params: self.params,
                protocol: self.protocol,
                sequencer: self.sequencer.as_ref().map(|_| ServerId(self.params.n)),
            };
            match &mut self.nodes[to.0] {
                Slot::Honest(node) => {
                    let out = node.on_message(&ev.msg);
                    let digest = node.state_digest(&key);
                    self.apply(to, out, local);
                    digest
                }
                Slot::Byzantine(node) => {
                    let envs = node.on_message(&ctx, ev.from, &ev.msg);
                    let digest = format!("{:016x}", node.received);
                    self.send(to, envs, local);
                    digest
                }
            }
        };
        if let TraceRecord::Delivery {
            node_state_digest, ..
        } = &mut self.trace[delivery_index]
        {
            *node_state_digest = digest;
        }
    }

    /// Records what a node did and puts its messages on the wire.
    fn apply(&mut self, server: ServerId, out: Output, local: &mut VecDeque<ScheduledEvent>) {
        for Transition { kind, tx, count } in out.transitions {
            self.trace.push(TraceRecord::Transition {
                time: self.time,
                server: server.0,
                instance: tx.key().to_string(),
                event: kind,
                tx_hash: tx.digest().short_hex(),
                count,
            });
        }
        for (value, path) in out.accepted {
            let key = value.key();
            let hops = self.depth[server.0].get(&key).copied().unwrap_or(0);
            let time = self.time;
            self.acceptances
                .entry(server)
                .or_default()
                .entry(key)
                .or_insert(Acceptance {
                    value,
                    path,
                    hops,
                    time,
                });
        }
        for t in out.executed {
            self.trace.push(TraceRecord::Executed {
                time: self.time,
                server: server.0,
                instance: t.key().to_string(),
                tx_hash: t.digest().short_hex(),
            });
        }
        self.consensus_invocations += out.proposals as u64;
        self.violations.extend(out.violations);
        self.send(server, out.messages, local);
    }

    fn send(&mut self, from: ServerId, envs: Vec<Envelope>, local: &mut VecDeque<ScheduledEvent>) {
        let has_sequencer = self.sequencer.is_some();
        for env in envs {
            if env.msg.origin != from {
                self.forged_dropped += 1;
                continue;
            }
            let to_ok = env.to.0 < self.params.n || (has_sequencer && env.to.0 == self.params.n);
            if !to_ok {
                continue;
            }
            let key = env.msg.instance();
            let base = self.depth[from.0].get(&key).copied().unwrap_or(0);
            let depth = if env.to == from { base } else { base + 1 };
            let ev = ScheduledEvent {
                id: EventId(self.next_id),
                from,
                to: env.to,
                msg: env.msg,
                enqueue_time: self.time,
                round: self.round + 1,
                depth,
            };
            self.next_id += 1;
            self.enqueued += 1;
            *self.counts.entry(ev.msg.kind.tag()).or_insert(0) += 1;
            if ev.to == from {
                local.push_back(ev);
            } else {
                self.pending.push(ev);
            }
        }
    }

    pub fn into_result(self) -> RunResult {
        let quiescent = self.is_quiescent();
        let mut honest = BTreeMap::new();
        let mut byzantine = BTreeSet::new();
        for (i, slot) in self.nodes.into_iter().enumerate() {
            let id = ServerId(i);
            match slot {
                Slot::Honest(node) => {
                    honest.insert(
                        id,
                        NodeOutcome {
                            accepted: self.acceptances.get(&id).cloned().unwrap_or_default(),
                            snapshot: node.ledger.snapshot(),
                            ledger: node.ledger,
                            executed: node.executed,
                        },
                    );
                }
                Slot::Byzantine(_) => {
                    byzantine.insert(id);
                }
            }
        }
        RunResult {
            params: self.params,
            protocol: self.protocol,
            features: self.features,
            honest,
            byzantine,
            submitted: self.submitted,
            contested_keys: self.contested_keys,
            custom_byzantine: self.custom_byzantine,
            sequencer_decisions: self
                .sequencer
                .map(|s| s.inner.decisions().to_vec())
                .unwrap_or_default(),
            trace: self.trace,
            message_counts: self.counts,
            consensus_invocations: self.consensus_invocations,
            steps: self.steps,
            time: self.time,
            events_enqueued: self.enqueued,
            events_delivered: self.delivered.len() as u64,
            truncated: self.truncated,
            quiescent,
            invariant_violations: self.violations,
            forged_dropped: self.forged_dropped,
        }
    }
}

/// Builds a network, schedules `submissions` and runs it to quiescence.
pub fn simulate(
    config: NetworkConfig,
    submissions: impl IntoIterator<Item = Submission>,
) -> Result<RunResult, BuildError> {
    let mut net = Network::build(config)?;
    for s in submissions {
        net.submit(s)?;
    }
    Ok(net.run_to_quiescence())
}
