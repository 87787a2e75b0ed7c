//! Scenario runner, property checks, sweeps and the exhaustive checkers
//! behind the `ondemand` command line tool.

pub mod impossibility;
pub mod majority;
pub mod multishot_check;
pub mod properties;
pub mod replay;
pub mod report;
pub mod scenario;
pub mod sweep;

use ondemand_simnet::{simulate, RunResult};

pub use scenario::{Scenario, ScenarioError};

/// Validates a scenario and runs it to quiescence or its step bound.
pub fn run(s: &Scenario) -> Result<RunResult, ScenarioError> {
    let p = s.prepare()?;
    simulate(p.config, p.submissions).map_err(|e| ScenarioError::Invalid {
        field: "scenario".into(),
        reason: e.to_string(),
    })
}
