//! Scenario files: a JSON description of one simulation run.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use ondemand_core::{AuthToken, ClientId, DecideRule, ServerId, SystemParams, Transaction};
use ondemand_simnet::{
    ByzantineStrategy, DeliveryPolicy, EventId, Features, NetworkConfig, Protocol, Submission,
    DEFAULT_MAX_STEPS,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed scenario: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("{field}: {reason}")]
    Invalid { field: String, reason: String },
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        field: field.into(),
        reason: reason.into(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolName {
    Brb,
    Cod,
    /// Single-round decider without fallback; only meaningful for the
    /// impossibility constructions.
    Naive,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFeatures {
    #[serde(default)]
    pub post_consensus_sync: bool,
    #[serde(default)]
    pub ack_requires_funds: bool,
    /// Naive decider only: decide at the end of this synchronous round
    /// instead of on the first `n - f` acknowledgements.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub naive_decide_round: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TxSpec {
    pub sender: String,
    pub sn: u64,
    pub recipient: String,
    pub amount: u64,
    /// Hex token; signed on load when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth: Option<String>,
}

impl TxSpec {
    pub fn from_tx(t: &Transaction) -> Self {
        TxSpec {
            sender: t.sender.to_string(),
            sn: t.sn,
            recipient: t.recipient.to_string(),
            amount: t.amount,
            auth: t.auth.map(|a| a.to_hex()),
        }
    }

    pub fn to_tx(&self, field: &str) -> Result<Transaction, ScenarioError> {
        let t = Transaction::unsigned(
            self.sender.as_str(),
            self.sn,
            self.recipient.as_str(),
            self.amount,
        );
        match &self.auth {
            None => Ok(Transaction::signed(t.sender, t.sn, t.recipient, t.amount)),
            Some(hex) => {
                let token = AuthToken::from_hex(hex)
                    .ok_or_else(|| invalid(format!("{field}.auth"), "not a 64-digit hex token"))?;
                let t = t.with_auth(Some(token));
                if t.verify() {
                    Ok(t)
                } else {
                    Err(invalid(format!("{field}.auth"), "token does not verify"))
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientSubmission {
    pub time: u64,
    pub entry: usize,
    pub tx: TxSpec,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case", deny_unknown_fields)]
pub enum StrategySpec {
    // Unit variants skip the unknown-field check, hence the braces.
    Silent {},
    Equivocate {
        partition: BTreeSet<usize>,
        t: TxSpec,
        t_prime: TxSpec,
    },
    AckStuff {
        target: TxSpec,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicySpec {
    Fifo {},
    /// Uses the scenario seed.
    SeededRandom {},
    Scripted {
        script: Vec<u64>,
    },
    RoundSynchronous {},
}

fn default_max_steps() -> u64 {
    DEFAULT_MAX_STEPS
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub params: SystemParams,
    pub protocol: ProtocolName,
    #[serde(default)]
    pub features: ScenarioFeatures,
    #[serde(default)]
    pub initial_distribution: BTreeMap<String, i64>,
    #[serde(default)]
    pub client_script: Vec<ClientSubmission>,
    /// Keyed by server index, as a string.
    #[serde(default)]
    pub byzantine: BTreeMap<String, StrategySpec>,
    pub policy: PolicySpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_max_steps")]
    pub max_steps: u64,
}

/// A scenario checked and converted into simulator inputs.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub config: NetworkConfig,
    pub submissions: Vec<Submission>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Scenario, ScenarioError> {
        let s: Scenario = serde_json::from_str(text)?;
        s.prepare()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Scenario, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Scenario::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenarios always serialize")
    }

    /// SHA-256 of the compact JSON form.
    pub fn digest(&self) -> String {
        let compact = serde_json::to_string(self).expect("scenarios always serialize");
        hex::encode(Sha256::digest(compact.as_bytes()))
    }

    pub fn protocol(&self) -> Protocol {
        match self.protocol {
            ProtocolName::Brb => Protocol::Brb,
            ProtocolName::Cod => Protocol::Cod,
            ProtocolName::Naive => Protocol::OneRound(match self.features.naive_decide_round {
                Some(r) => DecideRule::EndOfRound(r),
                None => DecideRule::OnSample,
            }),
        }
    }

    /// Validates every field and builds the simulator inputs.
    pub fn prepare(&self) -> Result<Prepared, ScenarioError> {
        let params = self
            .params
            .validated()
            .map_err(|e| invalid("params", e.to_string()))?;
        let n = params.n;
        if self.max_steps == 0 {
            return Err(invalid("max_steps", "must be positive"));
        }
        if self.features.naive_decide_round.is_some() && self.protocol != ProtocolName::Naive {
            return Err(invalid(
                "features.naive_decide_round",
                "only applies to protocol \"naive\"",
            ));
        }
        let server = |field: String, i: usize| {
            if i < n {
                Ok(ServerId(i))
            } else {
                Err(invalid(field, format!("server {i} does not exist (n = {n})")))
            }
        };

        let mut submissions = Vec::with_capacity(self.client_script.len());
        for (i, c) in self.client_script.iter().enumerate() {
            let field = format!("client_script[{i}]");
            submissions.push(Submission {
                time: c.time,
                entry: server(format!("{field}.entry"), c.entry)?,
                tx: c.tx.to_tx(&format!("{field}.tx"))?,
            });
        }

        let mut byzantine = BTreeMap::new();
        for (k, spec) in &self.byzantine {
            let field = format!("byzantine.{k}");
            let idx: usize = k
                .parse()
                .map_err(|_| invalid(field.clone(), "key must be a server index"))?;
            let id = server(field.clone(), idx)?;
            let strategy = match spec {
                StrategySpec::Silent {} => ByzantineStrategy::Silent,
                StrategySpec::Equivocate {
                    partition,
                    t,
                    t_prime,
                } => {
                    let t = t.to_tx(&format!("{field}.t"))?;
                    let t_prime = t_prime.to_tx(&format!("{field}.t_prime"))?;
                    if t.key() != t_prime.key() {
                        return Err(invalid(
                            format!("{field}.t_prime"),
                            "must share sender and sn with t",
                        ));
                    }
                    let partition = partition
                        .iter()
                        .map(|&p| server(format!("{field}.partition"), p))
                        .collect::<Result<_, _>>()?;
                    ByzantineStrategy::Equivocate {
                        partition,
                        t,
                        t_prime,
                    }
                }
                StrategySpec::AckStuff { target } => ByzantineStrategy::AckStuff {
                    target: target.to_tx(&format!("{field}.target"))?,
                },
            };
            byzantine.insert(id, strategy);
        }
        if byzantine.len() > params.f && !params.allow_threshold_violation {
            return Err(invalid(
                "byzantine",
                format!("{} faulty servers exceed f = {}", byzantine.len(), params.f),
            ));
        }

        let mut initial_distribution = Vec::new();
        for (c, &amount) in &self.initial_distribution {
            if amount < 0 {
                return Err(invalid(
                    format!("initial_distribution.{c}"),
                    "amount must be non-negative",
                ));
            }
            initial_distribution.push((ClientId::new(c.as_str()), amount));
        }

        let policy = match &self.policy {
            PolicySpec::Fifo {} => DeliveryPolicy::Fifo,
            PolicySpec::SeededRandom {} => DeliveryPolicy::SeededRandom(self.seed),
            PolicySpec::Scripted { script } => {
                DeliveryPolicy::Scripted(script.iter().copied().map(EventId).collect())
            }
            PolicySpec::RoundSynchronous {} => DeliveryPolicy::RoundSynchronous,
        };

        Ok(Prepared {
            config: NetworkConfig {
                params,
                protocol: self.protocol(),
                features: Features {
                    post_consensus_sync: self.features.post_consensus_sync,
                    ack_requires_funds: self.features.ack_requires_funds,
                },
                initial_distribution,
                byzantine,
                policy,
                max_steps: self.max_steps,
            },
            submissions,
        })
    }
}
