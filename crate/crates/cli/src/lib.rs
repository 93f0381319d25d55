//! Batch front end: input loading, combination selection, report writing and
//! the invariant audit behind `ecshare verify`.

pub mod verify;

use std::fs;
use std::path::Path;
use std::time::Instant;

use ecshare_core::ingestion::IngestErrors;
use ecshare_core::model::{validate_config, Violation};
use ecshare_core::reporting::{CombinationReport, RunReport, Timing};
use ecshare_core::{load_timeseries, Combination, CommunityConfig, Execution, Method, Scenario, Scheme, Strategy};
use serde_json::json;
use thiserror::Error;

pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INVARIANT: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad input files. The payload is the JSON error list.
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Invariant(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::Io(_) => EXIT_VALIDATION,
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Invariant(_) => EXIT_INVARIANT,
        }
    }

    fn single(kind: &str, message: impl ToString) -> Self {
        CliError::Validation(json!({ "errors": [{ "kind": kind, "message": message.to_string() }] }).to_string())
    }

    fn violations(violations: &[Violation]) -> Self {
        let entries: Vec<_> = violations
            .iter()
            .map(|v| json!({ "kind": "config", "subject": v.subject, "message": v.message }))
            .collect();
        CliError::Validation(json!({ "errors": entries }).to_string())
    }
}

impl From<IngestErrors> for CliError {
    fn from(e: IngestErrors) -> Self {
        CliError::Validation(e.to_json())
    }
}

pub fn load_config(path: &Path) -> Result<CommunityConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::single("io", format!("{}: {e}", path.display())))?;
    let config = CommunityConfig::from_json(&text).map_err(|e| CliError::single("config", e))?;
    let violations = validate_config(&config);
    if !violations.is_empty() {
        return Err(CliError::violations(&violations));
    }
    Ok(config)
}

/// Loads config and data, optionally resampling to `resample` minutes. The
/// returned config carries the interval actually simulated.
pub fn load_inputs(
    config_path: &Path,
    data_path: &Path,
    resample: Option<u32>,
) -> Result<(CommunityConfig, Scenario), CliError> {
    let mut config = load_config(config_path)?;
    let mut profiles = load_timeseries(data_path, &config)?;
    if let Some(minutes) = resample {
        if minutes == 0 {
            return Err(CliError::Usage("--resample must be at least 1 minute".into()));
        }
        profiles = profiles.resample(minutes).map_err(IngestErrors::from)?;
        config.interval_minutes = minutes;
    }
    let scenario = Scenario::new(&config, &profiles).map_err(|e| CliError::single("scenario", e))?;
    Ok((config, scenario))
}

/// Which combinations to run. Empty lists fall back to the config's choice.
#[derive(Debug, Clone, Default)]
pub struct Selection {
    pub strategies: Vec<Strategy>,
    pub schemes: Vec<Scheme>,
    pub methods: Vec<Method>,
}

impl Selection {
    /// Selected combinations in report order.
    pub fn combinations(&self, config: &CommunityConfig) -> Vec<Combination> {
        let strategies = or_config(&self.strategies, config.strategy);
        let schemes = or_config(&self.schemes, config.scheme);
        let methods = or_config(&self.methods, config.method);
        Combination::all()
            .into_iter()
            .filter(|c| strategies.contains(&c.strategy) && schemes.contains(&c.scheme) && methods.contains(&c.method))
            .collect()
    }
}

fn or_config<T: Copy>(chosen: &[T], fallback: T) -> Vec<T> {
    if chosen.is_empty() {
        vec![fallback]
    } else {
        chosen.to_vec()
    }
}

/// Runs each combination over the shared scenario, one after another.
pub fn run(
    config: &CommunityConfig,
    scenario: &Scenario,
    combinations: &[Combination],
    execution: Execution,
) -> Result<RunReport, CliError> {
    let mut report = RunReport::new(config, scenario);
    for &combination in combinations {
        let started = Instant::now();
        let summary = scenario
            .simulate(combination, execution)
            .map_err(|e| CliError::Invariant(format!("{combination}: {e}")))?;
        report.timings.push(Timing {
            combination,
            millis: started.elapsed().as_secs_f64() * 1e3,
        });
        report.combinations.push(CombinationReport::new(scenario, &summary));
    }
    Ok(report)
}
