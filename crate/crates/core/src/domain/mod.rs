//! Deterministic simulator contract, black-box agents, and the built-in
//! domains.

use std::collections::HashSet;
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use thiserror::Error;

use crate::lhs::Task;
use crate::template::{EnvironmentTemplate, TemplateError};

pub mod lava;
mod planner;
pub mod pointnav;

pub use lava::LavaDomain;
pub use pointnav::PointNavDomain;

pub type Action = usize;

#[derive(Debug, Error)]
pub enum DomainError {
    #[error("unknown domain {0:?}")]
    UnknownDomain(String),
    #[error("unknown agent variant {variant:?} for domain {domain}")]
    UnknownVariant { domain: String, variant: String },
    #[error("unknown action symbol {0:?}")]
    UnknownAction(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("configuration does not fit this domain: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

/// Rounds to 12 significant digits so equal attribute values compare and
/// hash equal regardless of the arithmetic path that produced them.
pub fn canonical(v: f64) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return if v == 0.0 { 0.0 } else { v };
    }
    if v.fract() == 0.0 && v.abs() < 1e12 {
        return v;
    }
    format!("{v:.11e}").parse().unwrap_or(v)
}

/// Dynamic attribute values of a simulator state, in schema order.
/// Categorical attributes hold the label index.
#[derive(Clone, Default)]
pub struct SimState {
    values: SmallVec<[f64; 4]>,
}

impl SimState {
    pub fn new<I: IntoIterator<Item = f64>>(values: I) -> Self {
        SimState {
            values: values.into_iter().map(canonical).collect(),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Stable hash of the canonical values.
    pub fn digest(&self) -> u64 {
        let mut h = crate::hash::fnv1a(b"state");
        for v in &self.values {
            h = crate::hash::fnv1a_extend(h, &v.to_bits().to_le_bytes());
        }
        h
    }
}

impl PartialEq for SimState {
    fn eq(&self, other: &Self) -> bool {
        self.values.len() == other.values.len()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl Eq for SimState {}

impl Hash for SimState {
    fn hash<H: Hasher>(&self, state: &mut H) {
        for v in &self.values {
            v.to_bits().hash(state);
        }
    }
}

impl fmt::Debug for SimState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.values.iter()).finish()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StateDimKind {
    Numeric { lo: f64, hi: f64 },
    Categorical { labels: Vec<String> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateDim {
    pub name: String,
    pub kind: StateDimKind,
}

impl StateDim {
    pub fn numeric(name: &str, lo: f64, hi: f64) -> Self {
        StateDim {
            name: name.to_string(),
            kind: StateDimKind::Numeric { lo, hi },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepStatus {
    Ok,
    ReachedUnfavorable,
    ReachedGoal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub final_state: SimState,
    pub status: StepStatus,
    pub steps_consumed: usize,
}

/// A deterministic simulator bound to one task: configuration, static
/// objects, start and goal are fixed at construction.
pub trait Simulator: Send + Sync {
    fn action_symbols(&self) -> &[&'static str];
    /// Dynamic state attributes with the bounds the search heuristic bins over.
    fn schema(&self) -> &[StateDim];
    fn start(&self) -> &SimState;
    fn goal(&self) -> &SimState;
    /// State of a task-level assignment under this task's static layout.
    fn reset(&self, state: &crate::template::Assignment) -> Result<SimState, DomainError>;
    fn is_goal(&self, s: &SimState) -> bool;
    fn is_unfavorable(&self, s: &SimState) -> bool;
    /// One transition; callers halt on terminal states themselves.
    fn step(&self, s: &SimState, a: Action) -> SimState;
    /// Full observation tuple with feature names; agents see a subset.
    fn observation_names(&self) -> &[&'static str];
    fn observe(&self, s: &SimState) -> Vec<f64>;
    /// Values the coverage ledger bins, aligned with the domain's coverage dims.
    fn coverage_point(&self, s: &SimState) -> Vec<f64>;

    fn status(&self, s: &SimState) -> StepStatus {
        if self.is_unfavorable(s) {
            StepStatus::ReachedUnfavorable
        } else if self.is_goal(s) {
            StepStatus::ReachedGoal
        } else {
            StepStatus::Ok
        }
    }

    /// Applies actions in order, halting at the first goal or unfavorable
    /// state. A terminal input state consumes nothing.
    fn apply(&self, s: &SimState, actions: &[Action]) -> StepOutcome {
        let mut cur = s.clone();
        let mut status = self.status(&cur);
        let mut steps = 0;
        if status == StepStatus::Ok {
            for &a in actions {
                cur = self.step(&cur, a);
                steps += 1;
                status = self.status(&cur);
                if status != StepStatus::Ok {
                    break;
                }
            }
        }
        StepOutcome {
            final_state: cur,
            status,
            steps_consumed: steps,
        }
    }

    fn action_index(&self, symbol: &str) -> Result<Action, DomainError> {
        self.action_symbols()
            .iter()
            .position(|s| *s == symbol)
            .ok_or_else(|| DomainError::UnknownAction(symbol.to_string()))
    }

    fn apply_symbols(&self, s: &SimState, symbols: &[&str]) -> Result<StepOutcome, DomainError> {
        let actions = symbols
            .iter()
            .map(|sym| self.action_index(sym))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(self.apply(s, &actions))
    }
}

/// A black-box agent: sees only the observation features it declares and
/// answers with an action index. Out-of-range answers are invalid.
pub trait Agent: Send {
    fn observed_features(&self) -> &[&'static str];
    fn act(&mut self, observation: &[f64]) -> Action;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalStatus {
    Goal,
    Unfavorable,
    StepLimit,
    CycleDetected,
    InvalidAction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentTrace {
    pub states: Vec<SimState>,
    pub actions: Vec<Action>,
    pub terminal_status: TerminalStatus,
}

impl AgentTrace {
    pub fn last_state(&self) -> &SimState {
        self.states.last().expect("trace holds the start state")
    }
}

/// Runs an agent from the simulator's start until goal, unfavorable, a
/// revisited state (the agents are memoryless and deterministic, so a revisit
/// is a livelock), an invalid action, or `max_steps` transitions.
pub fn run_agent(sim: &dyn Simulator, agent: &mut dyn Agent, max_steps: usize) -> AgentTrace {
    let names = sim.observation_names();
    let picks: Vec<usize> = agent
        .observed_features()
        .iter()
        .filter_map(|f| names.iter().position(|n| n == f))
        .collect();
    let mut cur = sim.start().clone();
    let mut states = vec![cur.clone()];
    let mut actions = Vec::new();
    let finish = |states, actions, terminal_status| AgentTrace {
        states,
        actions,
        terminal_status,
    };
    match sim.status(&cur) {
        StepStatus::ReachedUnfavorable => return finish(states, actions, TerminalStatus::Unfavorable),
        StepStatus::ReachedGoal => return finish(states, actions, TerminalStatus::Goal),
        StepStatus::Ok => {}
    }
    let mut seen: HashSet<SimState> = HashSet::from([cur.clone()]);
    for _ in 0..max_steps {
        let full = sim.observe(&cur);
        let obs: Vec<f64> = picks.iter().map(|&i| full[i]).collect();
        let a = agent.act(&obs);
        if a >= sim.action_symbols().len() {
            return finish(states, actions, TerminalStatus::InvalidAction);
        }
        cur = sim.step(&cur, a);
        actions.push(a);
        states.push(cur.clone());
        match sim.status(&cur) {
            StepStatus::ReachedUnfavorable => return finish(states, actions, TerminalStatus::Unfavorable),
            StepStatus::ReachedGoal => return finish(states, actions, TerminalStatus::Goal),
            StepStatus::Ok => {}
        }
        if !seen.insert(cur.clone()) {
            return finish(states, actions, TerminalStatus::CycleDetected);
        }
    }
    finish(states, actions, TerminalStatus::StepLimit)
}

/// A pluggable domain, selected by the template's environment type.
pub trait Domain: Send + Sync {
    fn name(&self) -> &'static str;
    fn variants(&self) -> &'static [&'static str];
    fn simulator(&self, task: &Task) -> Result<Box<dyn Simulator>, DomainError>;
    fn make_agent(&self, variant: &str, task: &Task) -> Result<Box<dyn Agent>, DomainError>;
    fn default_max_steps(&self, sim: &dyn Simulator) -> usize;
    /// Campaign-wide coverage dimensions, bounded by the template.
    fn coverage_dims(&self, template: &EnvironmentTemplate) -> Result<Vec<StateDim>, DomainError>;
}

pub fn domain(name: &str) -> Result<&'static dyn Domain, DomainError> {
    match name {
        "lava" => Ok(&LavaDomain),
        "pointnav" => Ok(&PointNavDomain),
        other => Err(DomainError::UnknownDomain(other.to_string())),
    }
}

pub fn domain_names() -> &'static [&'static str] {
    &["lava", "pointnav"]
}

/// Agent variants shared by both built-in domains.
pub const VARIANTS: &[&str] = &["base", "inacc_state", "inacc_reward", "both"];

/// What an agent variant's internal model gets wrong.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Defects {
    pub drops_hazard_feature: bool,
    pub ignores_hazard_penalty: bool,
}

impl Defects {
    pub fn of(domain: &str, variant: &str) -> Result<Defects, DomainError> {
        let (drops_hazard_feature, ignores_hazard_penalty) = match variant {
            "base" => (false, false),
            "inacc_state" => (true, false),
            "inacc_reward" => (false, true),
            "both" => (true, true),
            _ => {
                return Err(DomainError::UnknownVariant {
                    domain: domain.to_string(),
                    variant: variant.to_string(),
                })
            }
        };
        Ok(Defects {
            drops_hazard_feature,
            ignores_hazard_penalty,
        })
    }

    /// Hazards are terminal and penalized in the model only when the model
    /// can both see and is penalized for them.
    pub fn models_hazards(self) -> bool {
        !self.drops_hazard_feature && !self.ignores_hazard_penalty
    }
}

/// Reads a numeric task attribute.
pub(crate) fn num(state: &crate::template::Assignment, key: &str) -> Result<f64, DomainError> {
    state
        .get(key)
        .and_then(|v| v.as_f64())
        .ok_or_else(|| DomainError::InvalidState(format!("missing numeric attribute {key:?}")))
}
