//! Agent-independent feasibility oracle: heuristic-guided depth-limited
//! search with backtracking, and a breadth-first verifier that is the only
//! source of `Infeasible`.

use std::collections::{HashMap, HashSet, VecDeque};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Action, SimState, Simulator, StateDim, StateDimKind, StepStatus};
use crate::hash::{fnv1a, fnv1a_extend, mix};

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("state has {got} attributes, schema has {want}")]
    SchemaMismatch { got: usize, want: usize },
    #[error("cannot backtrack an empty plan")]
    EmptyPlan,
    #[error("invalid search parameters: {0}")]
    BadParams(&'static str),
}

/// 1-based stratum of `value` among `b` equal bins of `[lo, hi]`. Values are
/// clamped; `lo` itself and degenerate ranges map to bin 1.
pub fn bin_index(value: f64, lo: f64, hi: f64, b: usize) -> usize {
    if hi <= lo || b == 0 {
        return 1;
    }
    let v = value.clamp(lo, hi);
    let t = (b as f64 * (v - lo) / (hi - lo)).ceil();
    (t as usize).clamp(1, b)
}

/// Bin index of a categorical label index: the label's segment midpoint in
/// the unit interval.
pub fn category_bin(index: f64, k: usize, b: usize) -> usize {
    bin_index((index + 0.5) / k.max(1) as f64, 0.0, 1.0, b)
}

/// L1 distance between bin indices of numeric attributes, plus 1 per
/// differing categorical attribute; at least 1 for distinct states.
pub fn try_heuristic(schema: &[StateDim], curr: &SimState, goal: &SimState, b: usize) -> Result<u64, OracleError> {
    for s in [curr, goal] {
        if s.values().len() != schema.len() {
            return Err(OracleError::SchemaMismatch {
                got: s.values().len(),
                want: schema.len(),
            });
        }
    }
    if curr == goal {
        return Ok(0);
    }
    let mut h = 0u64;
    for (dim, (&c, &g)) in schema.iter().zip(curr.values().iter().zip(goal.values())) {
        h += match &dim.kind {
            StateDimKind::Numeric { lo, hi } => bin_index(c, *lo, *hi, b).abs_diff(bin_index(g, *lo, *hi, b)) as u64,
            StateDimKind::Categorical { .. } => u64::from(c != g),
        };
    }
    Ok(h.max(1))
}

/// Infallible form for states produced by the same simulator.
pub fn heuristic(schema: &[StateDim], curr: &SimState, goal: &SimState, b: usize) -> u64 {
    try_heuristic(schema, curr, goal, b).unwrap_or(1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchParams {
    pub bins: usize,
    pub paths_per_iteration: usize,
    pub max_depth: usize,
    pub time_budget: Duration,
    pub seed: u64,
    /// Deterministic budget on simulator transitions, replays included.
    pub max_sim_steps: u64,
    /// Cap on visited (state, plan) pairs.
    pub max_visited: usize,
    /// Cap on states the breadth-first verifier may discover.
    pub bfs_max_states: usize,
    /// Keep every expanded (state, plan) pair in the result; for auditing.
    pub record_expansions: bool,
}

impl Default for SearchParams {
    fn default() -> Self {
        SearchParams {
            bins: 100,
            paths_per_iteration: 5,
            max_depth: 50,
            time_budget: Duration::from_secs(10),
            seed: 0,
            max_sim_steps: 1_000_000,
            max_visited: 1_000_000,
            bfs_max_states: 2_000_000,
            record_expansions: false,
        }
    }
}

impl SearchParams {
    pub fn validate(&self) -> Result<(), OracleError> {
        if self.bins == 0 || self.paths_per_iteration == 0 || self.max_depth == 0 {
            return Err(OracleError::BadParams("bins, N and D must be positive"));
        }
        if self.time_budget.is_zero() || self.max_sim_steps == 0 || self.max_visited == 0 {
            return Err(OracleError::BadParams("budgets must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchVerdict {
    Feasible,
    Infeasible,
    Exhausted,
    Timeout,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SearchStats {
    pub nodes_expanded: u64,
    pub sim_steps: u64,
    pub visited: usize,
    pub backtracks: u64,
    /// Expansions of a (state, plan) pair that had already been expanded.
    pub duplicate_expansions: u64,
    pub wall: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub verdict: SearchVerdict,
    pub plan: Vec<Action>,
    pub stats: SearchStats,
    pub expansions: Vec<(SimState, Vec<Action>)>,
}

fn plan_digest(plan: &[Action]) -> u64 {
    plan.iter()
        .fold(fnv1a(b"plan"), |h, &a| fnv1a_extend(h, &(a as u32).to_le_bytes()))
}

/// State reached by replaying `plan` from the start.
pub fn replay(sim: &dyn Simulator, plan: &[Action]) -> SimState {
    sim.apply(sim.start(), plan).final_state
}

/// Drops the most recent segment and recomputes its predecessor state by
/// replaying the remaining prefix from the start.
pub fn backtrack(sim: &dyn Simulator, segments: &[Vec<Action>]) -> Result<(SimState, Vec<Vec<Action>>), OracleError> {
    let (_, rest) = segments.split_last().ok_or(OracleError::EmptyPlan)?;
    let flat: Vec<Action> = rest.iter().flatten().copied().collect();
    Ok((replay(sim, &flat), rest.to_vec()))
}

struct Searcher<'a> {
    sim: &'a dyn Simulator,
    params: &'a SearchParams,
    started: Instant,
    visited: HashSet<(SimState, u64, usize)>,
    expanded: HashSet<(SimState, Vec<Action>)>,
    plan: Vec<Action>,
    /// Digest of `plan` at each segment boundary; `digests[0]` is the empty plan.
    digests: Vec<u64>,
    boundaries: Vec<usize>,
    stats: SearchStats,
    expansions: Vec<(SimState, Vec<Action>)>,
    out_of_budget: bool,
}

impl Searcher<'_> {
    fn budget_spent(&mut self) -> bool {
        if !self.out_of_budget
            && (self.stats.sim_steps >= self.params.max_sim_steps
                || self.visited.len() >= self.params.max_visited
                || self.started.elapsed() >= self.params.time_budget)
        {
            self.out_of_budget = true;
        }
        self.out_of_budget
    }

    fn push_segment(&mut self, seg: &[Action]) {
        let d = seg.iter().fold(*self.digests.last().expect("root digest"), |h, &a| {
            fnv1a_extend(h, &(a as u32).to_le_bytes())
        });
        self.boundaries.push(self.plan.len());
        self.plan.extend_from_slice(seg);
        self.digests.push(d);
    }

    fn pop_segment(&mut self) -> Vec<Action> {
        let at = self.boundaries.pop().expect("non-empty plan");
        self.digests.pop();
        self.plan.split_off(at)
    }

    fn search(&mut self, cur: SimState, depth: usize) -> bool {
        if self.budget_spent() || depth > self.params.max_depth {
            return false;
        }
        if self.sim.is_unfavorable(&cur) {
            if self.plan.is_empty() {
                return false; // terminal start state
            }
            self.stats.backtracks += 1;
            let seg = self.pop_segment();
            let prev = self.sim.apply(self.sim.start(), &self.plan);
            self.stats.sim_steps += prev.steps_consumed as u64;
            if self.search(prev.final_state, depth + 1) {
                return true;
            }
            self.push_segment(&seg);
            return false;
        }
        let digest = *self.digests.last().expect("root digest");
        if !self.visited.insert((cur.clone(), digest, self.plan.len())) {
            return false;
        }
        if self.sim.is_goal(&cur) {
            return true;
        }
        if self.params.record_expansions {
            if !self.expanded.insert((cur.clone(), self.plan.clone())) {
                self.stats.duplicate_expansions += 1;
            }
            self.expansions.push((cur.clone(), self.plan.clone()));
        }
        self.stats.nodes_expanded += 1;
        let h = heuristic(self.sim.schema(), &cur, self.sim.goal(), self.params.bins) as usize;
        let n_actions = self.sim.action_symbols().len();
        let mut rng = ChaCha8Rng::seed_from_u64(mix(&[self.params.seed, cur.digest(), digest, self.plan.len() as u64]));
        for _ in 0..self.params.paths_per_iteration {
            let mut seg: Vec<Action> = (0..h).map(|_| rng.random_range(0..n_actions)).collect();
            let out = self.sim.apply(&cur, &seg);
            self.stats.sim_steps += out.steps_consumed as u64;
            // a goal or failure mid-sequence ends the segment there
            if out.status != StepStatus::Ok {
                seg.truncate(out.steps_consumed);
            }
            self.push_segment(&seg);
            if self.search(out.final_state, depth + 1) {
                return true;
            }
            self.pop_segment();
            if self.out_of_budget {
                return false;
            }
        }
        false
    }
}

/// Heuristic-guided depth-limited search from the simulator's start. Never
/// returns `Infeasible`.
pub fn search(sim: &dyn Simulator, params: &SearchParams) -> SearchResult {
    let started = Instant::now();
    let mut s = Searcher {
        sim,
        params,
        started,
        visited: HashSet::new(),
        expanded: HashSet::new(),
        plan: Vec::new(),
        digests: vec![plan_digest(&[])],
        boundaries: Vec::new(),
        stats: SearchStats::default(),
        expansions: Vec::new(),
        out_of_budget: false,
    };
    let found = s.search(sim.start().clone(), 0);
    let verdict = if found {
        SearchVerdict::Feasible
    } else if s.out_of_budget {
        SearchVerdict::Timeout
    } else {
        SearchVerdict::Exhausted
    };
    let mut stats = s.stats;
    stats.visited = s.visited.len();
    stats.wall = started.elapsed();
    SearchResult {
        verdict,
        plan: if found { s.plan } else { Vec::new() },
        stats,
        expansions: s.expansions,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BfsResult {
    pub verdict: SearchVerdict,
    pub plan: Vec<Action>,
    pub states_discovered: usize,
    pub sim_steps: u64,
    pub wall: Duration,
}

/// Breadth-first search over single actions, never entering unfavorable
/// states. Plans are shortest in action count.
pub fn bfs_verify(sim: &dyn Simulator, time_budget: Duration, max_states: usize) -> BfsResult {
    let started = Instant::now();
    let done = |verdict, plan, states_discovered, sim_steps| BfsResult {
        verdict,
        plan,
        states_discovered,
        sim_steps,
        wall: started.elapsed(),
    };
    let start = sim.start().clone();
    if sim.is_unfavorable(&start) {
        return done(SearchVerdict::Infeasible, Vec::new(), 1, 0);
    }
    if sim.is_goal(&start) {
        return done(SearchVerdict::Feasible, Vec::new(), 1, 0);
    }
    let n_actions = sim.action_symbols().len();
    let mut parent: HashMap<SimState, Option<(SimState, Action)>> = HashMap::from([(start.clone(), None)]);
    let mut queue = VecDeque::from([start]);
    let mut steps = 0u64;
    while let Some(s) = queue.pop_front() {
        if parent.len() > max_states || (steps.is_multiple_of(4096) && started.elapsed() >= time_budget) {
            return done(SearchVerdict::Timeout, Vec::new(), parent.len(), steps);
        }
        for a in 0..n_actions {
            let t = sim.step(&s, a);
            steps += 1;
            if sim.is_unfavorable(&t) || parent.contains_key(&t) {
                continue;
            }
            parent.insert(t.clone(), Some((s.clone(), a)));
            if sim.is_goal(&t) {
                let mut plan = Vec::new();
                let mut at = t;
                while let Some(Some((p, a))) = parent.get(&at) {
                    plan.push(*a);
                    at = p.clone();
                }
                plan.reverse();
                return done(SearchVerdict::Feasible, plan, parent.len(), steps);
            }
            queue.push_back(t);
        }
    }
    done(SearchVerdict::Infeasible, Vec::new(), parent.len(), steps)
}

/// Which solver produced the final verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictSource {
    Search,
    Bfs,
}

/// Heuristic search followed, on failure, by breadth-first verification.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleOutcome {
    /// Feasible, Infeasible or Timeout.
    pub verdict: SearchVerdict,
    pub plan: Vec<Action>,
    pub source: VerdictSource,
    pub search: SearchResult,
    pub bfs: Option<BfsResult>,
}

impl OracleOutcome {
    pub fn sim_steps(&self) -> u64 {
        self.search.stats.sim_steps + self.bfs.as_ref().map_or(0, |b| b.sim_steps)
    }
}

pub fn decide(sim: &dyn Simulator, params: &SearchParams) -> OracleOutcome {
    let search = search(sim, params);
    if search.verdict == SearchVerdict::Feasible {
        return OracleOutcome {
            verdict: SearchVerdict::Feasible,
            plan: search.plan.clone(),
            source: VerdictSource::Search,
            search,
            bfs: None,
        };
    }
    let bfs = bfs_verify(sim, params.time_budget, params.bfs_max_states);
    OracleOutcome {
        verdict: bfs.verdict,
        plan: bfs.plan.clone(),
        source: VerdictSource::Bfs,
        search,
        bfs: Some(bfs),
    }
}

/// True when `plan` replays from the start to the goal without touching an
/// unfavorable state.
pub fn plan_is_sound(sim: &dyn Simulator, plan: &[Action]) -> bool {
    let out = sim.apply(sim.start(), plan);
    out.status == StepStatus::ReachedGoal && out.steps_consumed == plan.len()
}

#[cfg(test)]
mod tests;
