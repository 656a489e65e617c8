//! Differential analysis of oracle verdicts against agent traces.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::TerminalStatus;
use crate::oracle::SearchVerdict;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictKind {
    Pass,
    AgentError,
    EnvError,
    Undetermined,
}

impl VerdictKind {
    pub fn is_anomaly(self) -> bool {
        matches!(self, VerdictKind::AgentError | VerdictKind::EnvError)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            VerdictKind::Pass => "pass",
            VerdictKind::AgentError => "agent_error",
            VerdictKind::EnvError => "env_error",
            VerdictKind::Undetermined => "undetermined",
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum AttributionError {
    #[error("oracle result is for {oracle:?} but the trace is for {trace:?}")]
    TaskMismatch { oracle: String, trace: String },
    #[error("task {0:?}: agent reached a goal the oracle proved unreachable")]
    Contradiction(String),
    #[error("task {0:?}: feasible task without an agent trace")]
    MissingTrace(String),
}

/// Oracle-side evidence for one task.
#[derive(Debug, Clone, Copy)]
pub struct OracleEvidence<'a> {
    pub task_id: &'a str,
    pub verdict: SearchVerdict,
}

/// Agent-side evidence for one task.
#[derive(Debug, Clone, Copy)]
pub struct TraceEvidence<'a> {
    pub task_id: &'a str,
    pub status: TerminalStatus,
}

/// Infeasible tasks are environment errors whatever the agent did; on
/// feasible tasks the agent passes or errs; otherwise the task is
/// undetermined unless the agent itself demonstrated feasibility.
pub fn classify(oracle: OracleEvidence<'_>, trace: Option<TraceEvidence<'_>>) -> Result<VerdictKind, AttributionError> {
    if let Some(t) = trace {
        if t.task_id != oracle.task_id {
            return Err(AttributionError::TaskMismatch {
                oracle: oracle.task_id.to_string(),
                trace: t.task_id.to_string(),
            });
        }
    }
    let reached = trace.map(|t| t.status == TerminalStatus::Goal);
    match (oracle.verdict, reached) {
        (SearchVerdict::Infeasible, Some(true)) => Err(AttributionError::Contradiction(oracle.task_id.to_string())),
        (SearchVerdict::Infeasible, _) => Ok(VerdictKind::EnvError),
        (SearchVerdict::Feasible, Some(true)) => Ok(VerdictKind::Pass),
        (SearchVerdict::Feasible, Some(false)) => Ok(VerdictKind::AgentError),
        (SearchVerdict::Feasible, None) => Err(AttributionError::MissingTrace(oracle.task_id.to_string())),
        (_, Some(true)) => Ok(VerdictKind::Pass),
        _ => Ok(VerdictKind::Undetermined),
    }
}

/// One line of the records file: the outcome of one agent variant on one
/// task. Timing lives elsewhere so this stays reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignRecord {
    pub task_id: String,
    pub config_id: String,
    pub seed: u64,
    pub agent_variant: String,
    pub verdict: VerdictKind,
    /// `None` when the oracle itself failed.
    pub oracle_verdict: Option<SearchVerdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent_status: Option<TerminalStatus>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anomaly_signature: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

pub fn bins_key(bins: &[u8]) -> String {
    bins.iter().map(|b| b.to_string()).collect::<Vec<_>>().join(".")
}

pub fn agent_error_signature(variant: &str, terminal_bins: &[u8]) -> String {
    format!("agent_error/{variant}/{}", bins_key(terminal_bins))
}

/// Environment errors are identified by the configuration's env-level bins
/// and the task's start and goal bins.
pub fn env_error_signature(config_bins: &[u8], start_bins: &[u8], goal_bins: &[u8]) -> String {
    format!(
        "env_error/{}/{}/{}",
        bins_key(config_bins),
        bins_key(start_bins),
        bins_key(goal_bins)
    )
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnomalyCount {
    pub total: u64,
    pub unique: u64,
}

pub fn count_anomalies<'a, I: IntoIterator<Item = &'a CampaignRecord>>(records: I) -> AnomalyCount {
    let mut total = 0;
    let mut seen = BTreeSet::new();
    for r in records.into_iter().filter(|r| r.verdict.is_anomaly()) {
        total += 1;
        seen.insert(
            r.anomaly_signature
                .clone()
                .unwrap_or_else(|| format!("unsigned/{}", r.task_id)),
        );
    }
    AnomalyCount {
        total,
        unique: seen.len() as u64,
    }
}
