//! Campaign driver: generate tasks per seed, decide each task once with the
//! oracle, run every agent variant on the feasible ones, and attribute.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attribution::{
    agent_error_signature, classify, env_error_signature, CampaignRecord, OracleEvidence, TraceEvidence, VerdictKind,
};
use crate::coverage::{BinTuple, CoverageLedger};
use crate::domain::{run_agent, Domain, DomainError, SimState, Simulator, StateDim};
use crate::hash::{fnv1a, mix};
use crate::lhs::{generate_batch, SampleError, Task};
use crate::oracle::{
    bfs_verify, bin_index, category_bin, decide, plan_is_sound, SearchParams, SearchVerdict, VerdictSource,
};
use crate::template::{DimKind, EnvironmentConfig, EnvironmentTemplate, Level, TemplateError};

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("invalid campaign: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone)]
pub struct CampaignSpec {
    pub configs_per_seed: usize,
    pub tasks_per_config: usize,
    pub seeds: Vec<u64>,
    pub variants: Vec<String>,
    /// `seed` is replaced per task.
    pub search: SearchParams,
    /// Overrides the domain's default agent step limit.
    pub max_steps: Option<usize>,
    /// Worker threads; 0 lets the pool decide.
    pub workers: usize,
    /// Also run the breadth-first verifier on tasks the search solved.
    pub verify_all: bool,
}

impl Default for CampaignSpec {
    fn default() -> Self {
        CampaignSpec {
            configs_per_seed: 10,
            tasks_per_config: 10,
            seeds: vec![0],
            variants: crate::domain::VARIANTS.iter().map(|v| v.to_string()).collect(),
            search: SearchParams::default(),
            max_steps: None,
            workers: 0,
            verify_all: false,
        }
    }
}

impl CampaignSpec {
    pub fn validate(&self, domain: &dyn Domain) -> Result<(), CampaignError> {
        if self.configs_per_seed == 0 || self.tasks_per_config == 0 {
            return Err(CampaignError::Invalid(
                "bins and tasks per config must be positive".into(),
            ));
        }
        if self.variants.is_empty() {
            return Err(CampaignError::Invalid("at least one agent variant is required".into()));
        }
        if let Some(v) = self.variants.iter().find(|v| !domain.variants().contains(&v.as_str())) {
            return Err(DomainError::UnknownVariant {
                domain: domain.name().to_string(),
                variant: v.clone(),
            }
            .into());
        }
        self.search
            .validate()
            .map_err(|e| CampaignError::Invalid(e.to_string()))
    }
}

/// Per-task oracle outcome, one line of `oracle.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRecord {
    pub task_id: String,
    pub config_id: String,
    pub seed: u64,
    pub verdict: Option<SearchVerdict>,
    pub source: Option<VerdictSource>,
    pub search_verdict: Option<SearchVerdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bfs_verdict: Option<SearchVerdict>,
    pub plan: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan_sound: Option<bool>,
    pub nodes_expanded: u64,
    pub sim_steps: u64,
    pub search_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub task_id: String,
    pub oracle_ms: f64,
    pub agent_ms: BTreeMap<String, f64>,
}

#[derive(Debug, Clone)]
pub struct CampaignOutput {
    pub records: Vec<CampaignRecord>,
    pub oracle: Vec<OracleRecord>,
    pub timings: Vec<TimingRecord>,
    pub agent_coverage: CoverageLedger,
    pub oracle_coverage: CoverageLedger,
}

impl CampaignOutput {
    /// Feasible verdicts whose plan failed to replay.
    pub fn replay_failures(&self) -> usize {
        self.oracle.iter().filter(|o| o.plan_sound == Some(false)).count()
    }
}

struct TaskOutcome {
    oracle: OracleRecord,
    records: Vec<CampaignRecord>,
    timing: TimingRecord,
    agent_points: Vec<BinTuple>,
    oracle_points: Vec<BinTuple>,
}

pub fn task_search_seed(seed: u64, task_id: &str) -> u64 {
    mix(&[seed, fnv1a(task_id.as_bytes())])
}

/// Bins of the configuration's env-level mutable attributes under their
/// resolved bounds.
fn config_bins(template: &EnvironmentTemplate, config: &EnvironmentConfig) -> Result<Vec<u8>, TemplateError> {
    let ctx = config.env_values();
    let dims = template.extract_dimensions(Level::EnvLevel, &ctx)?;
    let mut out = Vec::new();
    for d in dims {
        let kind = d.resolve(&ctx)?;
        for name in d.scalar_names() {
            let v = ctx.get(&name);
            let b = match &kind {
                DimKind::Continuous { lo, hi, .. } => {
                    bin_index(v.and_then(|v| v.as_f64()).unwrap_or(*lo), *lo, *hi, 100)
                }
                DimKind::Categorical { labels } => {
                    let i = v
                        .and_then(|v| v.as_cat())
                        .and_then(|c| labels.iter().position(|l| l == c))
                        .unwrap_or(0);
                    category_bin(i as f64, labels.len(), 100)
                }
            };
            out.push(b as u8);
        }
    }
    Ok(out)
}

fn bins(ledger: &CoverageLedger, sim: &dyn Simulator, s: &SimState) -> BinTuple {
    ledger.bins_of(&sim.coverage_point(s)).unwrap_or_default()
}

fn failed_task(task: &Task, spec: &CampaignSpec, note: String) -> TaskOutcome {
    let records = spec
        .variants
        .iter()
        .map(|v| CampaignRecord {
            task_id: task.task_id.clone(),
            config_id: task.config_id.clone(),
            seed: task.seed,
            agent_variant: v.clone(),
            verdict: VerdictKind::Undetermined,
            oracle_verdict: None,
            agent_status: None,
            agent_steps: None,
            anomaly_signature: None,
            note: Some(note.clone()),
        })
        .collect();
    TaskOutcome {
        oracle: OracleRecord {
            task_id: task.task_id.clone(),
            config_id: task.config_id.clone(),
            seed: task.seed,
            verdict: None,
            source: None,
            search_verdict: None,
            bfs_verdict: None,
            plan: Vec::new(),
            plan_sound: None,
            nodes_expanded: 0,
            sim_steps: 0,
            search_seed: task_search_seed(task.seed, &task.task_id),
            error: Some(note),
        },
        records,
        timing: TimingRecord {
            task_id: task.task_id.clone(),
            oracle_ms: 0.0,
            agent_ms: BTreeMap::new(),
        },
        agent_points: Vec::new(),
        oracle_points: Vec::new(),
    }
}

fn evaluate_task(
    domain: &dyn Domain,
    task: &Task,
    spec: &CampaignSpec,
    ledger: &CoverageLedger,
    cfg_bins: &[u8],
) -> Result<TaskOutcome, DomainError> {
    let sim = domain.simulator(task)?;
    let sim = sim.as_ref();
    let params = SearchParams {
        seed: task_search_seed(task.seed, &task.task_id),
        ..spec.search.clone()
    };
    let t0 = Instant::now();
    let outcome = decide(sim, &params);
    let bfs_verdict = match (&outcome.bfs, spec.verify_all) {
        (Some(b), _) => Some(b.verdict),
        (None, true) => Some(bfs_verify(sim, params.time_budget, params.bfs_max_states).verdict),
        (None, false) => None,
    };
    let oracle_ms = t0.elapsed().as_secs_f64() * 1e3;
    let mut verdict = outcome.verdict;
    let mut note = None;
    let plan_sound = (verdict == SearchVerdict::Feasible).then(|| plan_is_sound(sim, &outcome.plan));
    if plan_sound == Some(false) {
        verdict = SearchVerdict::Timeout;
        note = Some("oracle plan failed to replay".to_string());
    }
    let symbols = sim.action_symbols();
    let mut oracle_points = Vec::new();
    let mut s = sim.start().clone();
    oracle_points.push(bins(ledger, sim, &s));
    if verdict == SearchVerdict::Feasible {
        for &a in &outcome.plan {
            s = sim.step(&s, a);
            oracle_points.push(bins(ledger, sim, &s));
        }
    }
    let oracle = OracleRecord {
        task_id: task.task_id.clone(),
        config_id: task.config_id.clone(),
        seed: task.seed,
        verdict: Some(verdict),
        source: Some(outcome.source),
        search_verdict: Some(outcome.search.verdict),
        bfs_verdict,
        plan: outcome.plan.iter().map(|&a| symbols[a].to_string()).collect(),
        plan_sound,
        nodes_expanded: outcome.search.stats.nodes_expanded,
        sim_steps: outcome.sim_steps(),
        search_seed: params.seed,
        error: note.clone(),
    };

    let max_steps = spec.max_steps.unwrap_or_else(|| domain.default_max_steps(sim));
    let mut records = Vec::with_capacity(spec.variants.len());
    let mut agent_ms = BTreeMap::new();
    let mut agent_points = Vec::new();
    for variant in &spec.variants {
        let mut record = CampaignRecord {
            task_id: task.task_id.clone(),
            config_id: task.config_id.clone(),
            seed: task.seed,
            agent_variant: variant.clone(),
            verdict: VerdictKind::Undetermined,
            oracle_verdict: Some(verdict),
            agent_status: None,
            agent_steps: None,
            anomaly_signature: None,
            note: note.clone(),
        };
        let trace = if verdict == SearchVerdict::Feasible {
            let t = Instant::now();
            let mut agent = domain.make_agent(variant, task)?;
            let trace = run_agent(sim, agent.as_mut(), max_steps);
            agent_ms.insert(variant.clone(), t.elapsed().as_secs_f64() * 1e3);
            agent_points.extend(trace.states.iter().map(|s| bins(ledger, sim, s)));
            Some(trace)
        } else {
            None
        };
        let evidence = trace.as_ref().map(|t| TraceEvidence {
            task_id: &task.task_id,
            status: t.terminal_status,
        });
        let oracle_evidence = OracleEvidence {
            task_id: &task.task_id,
            verdict,
        };
        match classify(oracle_evidence, evidence) {
            Ok(kind) => record.verdict = kind,
            Err(e) => record.note = Some(e.to_string()),
        }
        if let Some(t) = &trace {
            record.agent_status = Some(t.terminal_status);
            record.agent_steps = Some(t.actions.len());
        }
        record.anomaly_signature = match record.verdict {
            VerdictKind::AgentError => trace
                .as_ref()
                .map(|t| agent_error_signature(variant, &bins(ledger, sim, t.last_state()))),
            VerdictKind::EnvError => Some(env_error_signature(
                cfg_bins,
                &bins(ledger, sim, sim.start()),
                &bins(ledger, sim, sim.goal()),
            )),
            _ => None,
        };
        records.push(record);
    }
    Ok(TaskOutcome {
        oracle,
        records,
        timing: TimingRecord {
            task_id: task.task_id.clone(),
            oracle_ms,
            agent_ms,
        },
        agent_points,
        oracle_points,
    })
}

fn panic_message(p: &(dyn std::any::Any + Send)) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "panic".to_string())
}

/// Evaluates the given tasks. Results are ordered by task id.
pub fn run_tasks(
    template: &EnvironmentTemplate,
    domain: &dyn Domain,
    tasks: &[Task],
    spec: &CampaignSpec,
) -> Result<CampaignOutput, CampaignError> {
    spec.validate(domain)?;
    let dims: Vec<StateDim> = domain.coverage_dims(template)?;
    let ledger = CoverageLedger::new(dims);
    let mut cfg_bins: BTreeMap<&str, Vec<u8>> = BTreeMap::new();
    for t in tasks {
        if !cfg_bins.contains_key(t.config_id.as_str()) {
            cfg_bins.insert(&t.config_id, config_bins(template, &t.config)?);
        }
    }
    let work = || -> Vec<TaskOutcome> {
        tasks
            .par_iter()
            .map(|task| {
                let cb = &cfg_bins[task.config_id.as_str()];
                match catch_unwind(AssertUnwindSafe(|| evaluate_task(domain, task, spec, &ledger, cb))) {
                    Ok(Ok(o)) => o,
                    Ok(Err(e)) => failed_task(task, spec, e.to_string()),
                    Err(p) => failed_task(task, spec, format!("task panicked: {}", panic_message(p.as_ref()))),
                }
            })
            .collect()
    };
    let mut outcomes = if spec.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(spec.workers)
            .build()
            .map_err(|e| CampaignError::Invalid(e.to_string()))?
            .install(work)
    } else {
        work()
    };
    outcomes.sort_by(|a, b| a.oracle.task_id.cmp(&b.oracle.task_id));
    let mut out = CampaignOutput {
        records: Vec::new(),
        oracle: Vec::new(),
        timings: Vec::new(),
        agent_coverage: ledger.clone(),
        oracle_coverage: ledger,
    };
    for o in outcomes {
        for p in o.agent_points.iter().filter(|p| !p.is_empty()) {
            let v: Vec<usize> = p.iter().map(|&b| b as usize).collect();
            let _ = out.agent_coverage.insert_bins(&v);
        }
        for p in o.oracle_points.iter().filter(|p| !p.is_empty()) {
            let v: Vec<usize> = p.iter().map(|&b| b as usize).collect();
            let _ = out.oracle_coverage.insert_bins(&v);
        }
        out.records.extend(o.records);
        out.oracle.push(o.oracle);
        out.timings.push(o.timing);
    }
    Ok(out)
}

/// Generates every seed's configurations and tasks.
pub fn generate_tasks_for(template: &EnvironmentTemplate, spec: &CampaignSpec) -> Result<Vec<Task>, CampaignError> {
    let mut tasks = Vec::new();
    for &seed in &spec.seeds {
        tasks.extend(generate_batch(template, spec.configs_per_seed, spec.tasks_per_config, seed)?.tasks);
    }
    Ok(tasks)
}

pub fn run_campaign(
    template: &EnvironmentTemplate,
    domain: &dyn Domain,
    spec: &CampaignSpec,
) -> Result<CampaignOutput, CampaignError> {
    spec.validate(domain)?;
    let tasks = generate_tasks_for(template, spec)?;
    run_tasks(template, domain, &tasks, spec)
}
