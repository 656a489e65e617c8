//! Latin Hypercube sampling over mixed continuous/categorical dimensions,
//! and generation of environment configurations and tasks from a template.
//!
//! Every dimension is sampled in the unit interval first: `b` strata of
//! width `1/b`, one random permutation of strata over the rows, and a
//! uniform draw inside each stratum. Unit values are then mapped through the
//! dimension's bounds, which may differ per row when they reference other
//! sampled attributes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::template::{
    Assignment, DimKind, DimensionSpec, EnvironmentConfig, EnvironmentTemplate, Level, Owner, TemplateError, Value,
};

/// Row redraws allowed when a dependent bound fails to resolve.
pub const MAX_ROW_RETRIES: usize = 16;

#[derive(Debug, Error)]
pub enum SampleError {
    #[error("invalid range: lo {lo} > hi {hi}")]
    InvalidRange { lo: f64, hi: f64 },
    #[error("bin count must be positive")]
    ZeroBins,
    #[error("values per stratum must be positive")]
    ZeroPerStratum,
    #[error("empty category list")]
    NoCategories,
    #[error("cyclic dependency among sampled dimensions at {0:?}")]
    Cycle(String),
    #[error("row {row}: no valid sample after {MAX_ROW_RETRIES} redraws: {source}")]
    RetriesExhausted {
        row: usize,
        #[source]
        source: TemplateError,
    },
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("malformed task file: {0}")]
    TaskFile(String),
}

/// Which part of a generated sample a column feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Env,
    Start,
    Goal,
}

/// Raw stratified draws for one dimension and role.
#[derive(Debug, Clone)]
pub struct SampleColumn {
    pub name: String,
    pub role: Role,
    /// 0-based stratum per row.
    pub strata: Vec<usize>,
    /// Unit-interval draws, `unit[row][j]` for `j < values_per_sample`.
    pub unit: Vec<Vec<f64>>,
}

/// `b` rows, one column per (dimension, role).
#[derive(Debug, Clone)]
pub struct SampleMatrix {
    pub bins: usize,
    pub columns: Vec<SampleColumn>,
}

/// Stratified unit draws: row `r` gets `per_stratum` values from stratum
/// `strata[r]`. Each draw lies in `(k/b, (k+1)/b]`.
fn lhs_unit<R: Rng + ?Sized>(b: usize, per_stratum: usize, rng: &mut R) -> (Vec<usize>, Vec<Vec<f64>>) {
    let mut strata: Vec<usize> = (0..b).collect();
    strata.shuffle(rng);
    let unit = strata
        .iter()
        .map(|&k| (0..per_stratum).map(|_| draw_in_stratum(k, b, rng)).collect())
        .collect();
    (strata, unit)
}

fn draw_in_stratum<R: Rng + ?Sized>(k: usize, b: usize, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    (((k + 1) as f64 - u) / b as f64).min(1.0)
}

fn check_counts(b: usize, per_stratum: usize) -> Result<(), SampleError> {
    if b == 0 {
        return Err(SampleError::ZeroBins);
    }
    if per_stratum == 0 {
        return Err(SampleError::ZeroPerStratum);
    }
    Ok(())
}

/// `b * per_stratum` values over `[lo, hi]`; values `r*per_stratum ..
/// (r+1)*per_stratum` share one stratum and strata are permuted over rows.
pub fn lhs_continuous<R: Rng + ?Sized>(
    lo: f64,
    hi: f64,
    b: usize,
    per_stratum: usize,
    rng: &mut R,
) -> Result<Vec<f64>, SampleError> {
    if lo > hi || !lo.is_finite() || !hi.is_finite() {
        return Err(SampleError::InvalidRange { lo, hi });
    }
    check_counts(b, per_stratum)?;
    let (_, unit) = lhs_unit(b, per_stratum, rng);
    Ok(unit.into_iter().flatten().map(|u| scale(u, lo, hi)).collect())
}

fn scale(u: f64, lo: f64, hi: f64) -> f64 {
    (lo + u * (hi - lo)).clamp(lo, hi)
}

/// 1-based index of the smallest segment `i` with `u <= i/k`.
pub fn category_index(u: f64, k: usize) -> usize {
    ((u * k as f64).ceil() as usize).clamp(1, k)
}

/// Stratified categorical draws via the unit interval split into `k` equal
/// segments.
pub fn lhs_categorical<R: Rng + ?Sized>(
    categories: &[String],
    b: usize,
    per_stratum: usize,
    rng: &mut R,
) -> Result<Vec<String>, SampleError> {
    if categories.is_empty() {
        return Err(SampleError::NoCategories);
    }
    check_counts(b, per_stratum)?;
    let (_, unit) = lhs_unit(b, per_stratum, rng);
    Ok(unit
        .into_iter()
        .flatten()
        .map(|u| categories[category_index(u, categories.len()) - 1].clone())
        .collect())
}

/// Maps a unit draw to a concrete value under resolved bounds. Integers are
/// drawn over `[lo - 0.5, hi + 0.5]`, rounded, then clamped.
pub fn map_unit(u: f64, kind: &DimKind) -> Value {
    match kind {
        DimKind::Continuous {
            lo, hi, integer: false, ..
        } => Value::Real(scale(u, *lo, *hi)),
        DimKind::Continuous {
            lo, hi, integer: true, ..
        } => {
            let v = scale(u, lo - 0.5, hi + 0.5).round().clamp(lo.ceil(), hi.floor());
            Value::Int(v as i64)
        }
        DimKind::Categorical { labels } => Value::Cat(labels[category_index(u, labels.len()) - 1].clone()),
    }
}

/// Dimension indices ordered so that every dimension follows the dimensions
/// its bounds reference.
fn dependency_order(dims: &[DimensionSpec]) -> Result<Vec<usize>, SampleError> {
    let index: BTreeMap<String, usize> = dims.iter().enumerate().map(|(i, d)| (d.qualified_name(), i)).collect();
    let mut order = Vec::with_capacity(dims.len());
    let mut state = vec![0u8; dims.len()]; // 0 new, 1 open, 2 done
    fn visit(
        i: usize,
        dims: &[DimensionSpec],
        index: &BTreeMap<String, usize>,
        state: &mut [u8],
        order: &mut Vec<usize>,
    ) -> Result<(), SampleError> {
        match state[i] {
            2 => return Ok(()),
            1 => return Err(SampleError::Cycle(dims[i].qualified_name())),
            _ => {}
        }
        state[i] = 1;
        for dep in &dims[i].depends_on {
            if let Some(&j) = index.get(dep) {
                visit(j, dims, index, state, order)?;
            }
        }
        state[i] = 2;
        order.push(i);
        Ok(())
    }
    for i in 0..dims.len() {
        visit(i, dims, &index, &mut state, &mut order)?;
    }
    Ok(order)
}

/// Maps one row of unit draws to values, resolving bounds in dependency
/// order on top of `base`.
fn map_row(
    dims: &[DimensionSpec],
    order: &[usize],
    units: &[&[f64]],
    base: &Assignment,
) -> Result<Assignment, TemplateError> {
    let mut ctx = base.clone();
    let mut out = Assignment::new();
    for &i in order {
        let dim = &dims[i];
        let kind = dim.resolve(&ctx)?;
        for (name, &u) in dim.scalar_names().into_iter().zip(units[i]) {
            let v = map_unit(u, &kind);
            ctx.insert(name.clone(), v.clone());
            out.insert(name, v);
        }
    }
    Ok(out)
}

/// Samples `b` rows over `dims`, one LHS column per dimension, and maps them
/// to assignments. Rows whose dependent bounds fail to resolve are redrawn
/// inside the same strata.
fn sample_rows<R: Rng + ?Sized>(
    dims: &[DimensionSpec],
    b: usize,
    role: Role,
    base: &Assignment,
    rng: &mut R,
) -> Result<(Vec<SampleColumn>, Vec<Assignment>), SampleError> {
    check_counts(b, 1)?;
    let order = dependency_order(dims)?;
    let mut columns: Vec<SampleColumn> = dims
        .iter()
        .map(|d| {
            let (strata, unit) = lhs_unit(b, d.values_per_sample, rng);
            SampleColumn {
                name: d.qualified_name(),
                role,
                strata,
                unit,
            }
        })
        .collect();
    let mut rows = Vec::with_capacity(b);
    for r in 0..b {
        let mut attempt = 0;
        loop {
            let units: Vec<&[f64]> = columns.iter().map(|c| c.unit[r].as_slice()).collect();
            match map_row(dims, &order, &units, base) {
                Ok(row) => {
                    rows.push(row);
                    break;
                }
                Err(source) if attempt + 1 >= MAX_ROW_RETRIES => {
                    return Err(SampleError::RetriesExhausted { row: r, source });
                }
                Err(_) => {
                    attempt += 1;
                    for c in columns.iter_mut() {
                        let k = c.strata[r];
                        for u in c.unit[r].iter_mut() {
                            *u = draw_in_stratum(k, b, rng);
                        }
                    }
                }
            }
        }
    }
    Ok((columns, rows))
}

/// Random stream for one seed: stream 0 drives environment configurations,
/// stream `i + 1` drives tasks of configuration `i`.
pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Environment configurations with the matrix that produced them.
#[derive(Debug, Clone)]
pub struct EnvSample {
    pub configs: Vec<EnvironmentConfig>,
    pub assignments: Vec<Assignment>,
    pub matrix: SampleMatrix,
}

pub fn sample_env_configs<R: Rng + ?Sized>(
    template: &EnvironmentTemplate,
    b: usize,
    rng: &mut R,
) -> Result<EnvSample, SampleError> {
    check_counts(b, 1)?;
    let dims = template.extract_dimensions(Level::EnvLevel, &Assignment::new())?;
    let base = template.env_assignment();
    let (columns, rows) = if dims.is_empty() {
        (Vec::new(), vec![Assignment::new(); b])
    } else {
        sample_rows(&dims, b, Role::Env, &base, rng)?
    };
    let mut configs = Vec::with_capacity(b);
    let mut assignments = Vec::with_capacity(b);
    for row in rows {
        let mut full = base.clone();
        full.extend(row);
        configs.push(template.instantiate(&full)?);
        assignments.push(full);
    }
    Ok(EnvSample {
        configs,
        assignments,
        matrix: SampleMatrix { bins: b, columns },
    })
}

pub fn generate_env_configs<R: Rng + ?Sized>(
    template: &EnvironmentTemplate,
    b: usize,
    rng: &mut R,
) -> Result<Vec<EnvironmentConfig>, SampleError> {
    Ok(sample_env_configs(template, b, rng)?.configs)
}

/// A start/goal pair of task-level assignments inside one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub task_id: String,
    pub config_id: String,
    pub seed: u64,
    pub config: Arc<EnvironmentConfig>,
    pub start_state: Assignment,
    pub goal_state: Assignment,
}

#[derive(Debug, Clone)]
pub struct TaskSample {
    /// `(start, goal)` per row.
    pub states: Vec<(Assignment, Assignment)>,
    pub matrix: SampleMatrix,
}

/// Two draws per stratum for every task-level dimension: one feeds the start
/// column and one the goal column, each under its own stratum permutation.
/// The matrix keeps every draw; in the returned states the goal's object
/// attributes are copied from the start.
pub fn sample_tasks<R: Rng + ?Sized>(
    config: &EnvironmentConfig,
    b: usize,
    rng: &mut R,
) -> Result<TaskSample, SampleError> {
    check_counts(b, 1)?;
    let dims = config.task_dimensions()?;
    let defaults = config.task_defaults();
    if dims.is_empty() {
        return Ok(TaskSample {
            states: vec![(defaults.clone(), defaults); b],
            matrix: SampleMatrix {
                bins: b,
                columns: Vec::new(),
            },
        });
    }
    let mut base = config.env_values();
    base.extend(defaults.clone());
    let (mut start_cols, starts) = sample_rows(&dims, b, Role::Start, &base, rng)?;
    let (goal_cols, goals) = sample_rows(&dims, b, Role::Goal, &base, rng)?;
    start_cols.extend(goal_cols);
    // objects are scene constants within a task; only agents differ between
    // start and goal, so the goal inherits the start's object values
    let object_keys: Vec<String> = dims
        .iter()
        .filter(|d| matches!(d.owner, Owner::Object(_)))
        .flat_map(|d| d.scalar_names())
        .collect();
    let states = starts
        .into_iter()
        .zip(goals)
        .map(|(s, g)| {
            let mut start = defaults.clone();
            start.extend(s);
            let mut goal = defaults.clone();
            goal.extend(g);
            for k in &object_keys {
                goal.insert(k.clone(), start[k].clone());
            }
            (start, goal)
        })
        .collect();
    Ok(TaskSample {
        states,
        matrix: SampleMatrix {
            bins: b,
            columns: start_cols,
        },
    })
}

pub fn generate_tasks<R: Rng + ?Sized>(
    config: &Arc<EnvironmentConfig>,
    config_id: &str,
    seed: u64,
    b: usize,
    rng: &mut R,
) -> Result<Vec<Task>, SampleError> {
    let width = digits(b);
    Ok(sample_tasks(config, b, rng)?
        .states
        .into_iter()
        .enumerate()
        .map(|(i, (start_state, goal_state))| Task {
            task_id: format!("{config_id}-t{i:0width$}"),
            config_id: config_id.to_string(),
            seed,
            config: Arc::clone(config),
            start_state,
            goal_state,
        })
        .collect())
}

fn digits(n: usize) -> usize {
    n.saturating_sub(1).to_string().len().max(3)
}

/// All configurations and tasks for one seed.
#[derive(Debug, Clone)]
pub struct SeedBatch {
    pub seed: u64,
    pub config_ids: Vec<String>,
    pub configs: Vec<Arc<EnvironmentConfig>>,
    pub tasks: Vec<Task>,
}

pub fn config_id(seed: u64, index: usize, count: usize) -> String {
    let width = digits(count);
    format!("s{seed}-c{index:0width$}")
}

pub fn generate_batch(
    template: &EnvironmentTemplate,
    configs_per_seed: usize,
    tasks_per_config: usize,
    seed: u64,
) -> Result<SeedBatch, SampleError> {
    let mut env_rng = stream(seed, 0);
    let configs: Vec<Arc<EnvironmentConfig>> = generate_env_configs(template, configs_per_seed, &mut env_rng)?
        .into_iter()
        .map(Arc::new)
        .collect();
    let mut config_ids = Vec::with_capacity(configs.len());
    let mut tasks = Vec::with_capacity(configs.len() * tasks_per_config);
    for (i, cfg) in configs.iter().enumerate() {
        let id = config_id(seed, i, configs_per_seed);
        let mut rng = stream(seed, i as u64 + 1);
        tasks.extend(generate_tasks(cfg, &id, seed, tasks_per_config, &mut rng)?);
        config_ids.push(id);
    }
    Ok(SeedBatch {
        seed,
        config_ids,
        configs,
        tasks,
    })
}

impl Task {
    /// `<Task>` document holding the configuration materialized at the start
    /// and at the goal state.
    pub fn to_xml(&self) -> Result<String, SampleError> {
        let start = self.config.with_task_state(&self.start_state)?;
        let goal = self.config.with_task_state(&self.goal_state)?;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "<Task id=\"{}\" config=\"{}\" seed=\"{}\">",
            quick_xml::escape::escape(self.task_id.as_str()),
            quick_xml::escape::escape(self.config_id.as_str()),
            self.seed
        );
        out.push_str("  <Start>\n");
        crate::template::write_environment_into(&mut out, start.template(), "    ");
        out.push_str("  </Start>\n  <Goal>\n");
        crate::template::write_environment_into(&mut out, goal.template(), "    ");
        out.push_str("  </Goal>\n</Task>\n");
        Ok(out)
    }

    /// Reads a task document. The configuration is taken from the start
    /// document; task-level values of both documents form start and goal.
    pub fn from_xml(text: &str) -> Result<Task, SampleError> {
        let (task_id, config_id, seed, start, goal) = crate::template::parse_task_documents(text)?;
        let start_state = EnvironmentConfig(start.clone()).task_defaults();
        let goal_cfg = EnvironmentConfig(goal);
        let goal_state = goal_cfg.task_defaults();
        let start_keys: BTreeSet<_> = start_state.keys().collect();
        if start_keys != goal_state.keys().collect() || start.env_attributes != goal_cfg.0.env_attributes {
            return Err(SampleError::TaskFile(
                "start and goal describe different configurations".into(),
            ));
        }
        Ok(Task {
            task_id,
            config_id,
            seed,
            config: Arc::new(EnvironmentConfig(start)),
            start_state,
            goal_state,
        })
    }
}
