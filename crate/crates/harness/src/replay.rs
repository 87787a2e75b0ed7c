//! Replay bundles: a scenario together with the trace it produced.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::scenario::{Scenario, ScenarioError};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplayBundle {
    pub scenario: Scenario,
    pub scenario_digest: String,
    pub trace_sha256: String,
    /// The trace, one JSON record per line.
    pub trace: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ReplayOutcome {
    pub identical: bool,
    pub expected_sha256: String,
    pub actual_sha256: String,
    /// 1-based line of the first difference.
    pub first_divergence: Option<usize>,
}

impl ReplayBundle {
    /// Runs `scenario` and captures its trace.
    pub fn record(scenario: &Scenario) -> Result<ReplayBundle, ScenarioError> {
        let run = crate::run(scenario)?;
        Ok(ReplayBundle {
            scenario: scenario.clone(),
            scenario_digest: scenario.digest(),
            trace_sha256: run.trace_sha256(),
            trace: run.trace_jsonl(),
        })
    }

    pub fn load(path: &Path) -> Result<ReplayBundle, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bundles always serialize")
    }

    /// Re-runs the scenario and compares the new trace byte for byte.
    pub fn replay(&self) -> Result<ReplayOutcome, ScenarioError> {
        if self.scenario.digest() != self.scenario_digest {
            return Err(ScenarioError::Invalid {
                field: "scenario_digest".into(),
                reason: "does not match the embedded scenario".into(),
            });
        }
        let run = crate::run(&self.scenario)?;
        let actual = run.trace_jsonl();
        let first_divergence = if actual == self.trace {
            None
        } else {
            let mut a = actual.lines();
            let mut e = self.trace.lines();
            let mut line = 1;
            loop {
                match (a.next(), e.next()) {
                    (Some(x), Some(y)) if x == y => line += 1,
                    _ => break Some(line),
                }
            }
        };
        Ok(ReplayOutcome {
            identical: first_divergence.is_none(),
            expected_sha256: self.trace_sha256.clone(),
            actual_sha256: run.trace_sha256(),
            first_divergence,
        })
    }
}
