//! Value iteration on an agent's own deterministic model.

use std::collections::{HashMap, VecDeque};

use super::{Action, SimState};

pub(crate) const GAMMA: f64 = 0.99;
pub(crate) const GOAL_REWARD: f64 = 100.0;
pub(crate) const HAZARD_PENALTY: f64 = -10.0;

/// Greedy policy over the model states reachable from the start.
#[derive(Debug, Clone)]
pub(crate) struct TabularPolicy {
    table: HashMap<SimState, Action>,
}

impl TabularPolicy {
    pub fn action(&self, s: &SimState) -> Action {
        self.table.get(s).copied().unwrap_or(0)
    }
}

#[derive(Clone, Copy)]
enum Next {
    State(usize),
    Goal,
    Hazard,
}

pub(crate) struct Model<'a> {
    pub n_actions: usize,
    pub step: &'a dyn Fn(&SimState, Action) -> SimState,
    pub is_goal: &'a dyn Fn(&SimState) -> bool,
    /// Terminal and penalized in this model.
    pub is_hazard: &'a dyn Fn(&SimState) -> bool,
}

/// Entering the goal pays `GOAL_REWARD`, entering a hazard `HAZARD_PENALTY`;
/// both end the episode. Ties go to the lowest action index.
pub(crate) fn solve(model: &Model<'_>, start: &SimState) -> TabularPolicy {
    let mut table = HashMap::new();
    if (model.is_hazard)(start) || (model.is_goal)(start) {
        return TabularPolicy { table };
    }
    let mut index: HashMap<SimState, usize> = HashMap::from([(start.clone(), 0)]);
    let mut states = vec![start.clone()];
    let mut succ: Vec<Vec<Next>> = Vec::new();
    let mut i = 0;
    while i < states.len() {
        let s = states[i].clone();
        let mut row = Vec::with_capacity(model.n_actions);
        for a in 0..model.n_actions {
            let t = (model.step)(&s, a);
            // hazard first: a goal inside a hazard is still a failure
            let next = if (model.is_hazard)(&t) {
                Next::Hazard
            } else if (model.is_goal)(&t) {
                Next::Goal
            } else {
                let j = *index.entry(t.clone()).or_insert_with(|| {
                    states.push(t);
                    states.len() - 1
                });
                Next::State(j)
            };
            row.push(next);
        }
        succ.push(row);
        i += 1;
    }

    // sweep in order of distance to the goal so values settle in few passes
    let n = states.len();
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut dist = vec![usize::MAX; n];
    let mut queue = VecDeque::new();
    for (s, row) in succ.iter().enumerate() {
        for next in row {
            match *next {
                Next::State(j) => preds[j].push(s),
                Next::Goal if dist[s] == usize::MAX => {
                    dist[s] = 1;
                    queue.push_back(s);
                }
                _ => {}
            }
        }
    }
    while let Some(s) = queue.pop_front() {
        for &p in &preds[s] {
            if dist[p] == usize::MAX {
                dist[p] = dist[s] + 1;
                queue.push_back(p);
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&s| (dist[s], s));

    let q = |v: &[f64], next: Next| match next {
        Next::State(j) => GAMMA * v[j],
        Next::Goal => GOAL_REWARD,
        Next::Hazard => HAZARD_PENALTY,
    };
    let mut v = vec![0.0f64; n];
    for _ in 0..=n {
        let mut changed = false;
        for &s in &order {
            let best = succ[s].iter().map(|&nx| q(&v, nx)).fold(f64::NEG_INFINITY, f64::max);
            if best != v[s] {
                v[s] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    for (s, row) in succ.iter().enumerate() {
        let mut best = 0;
        let mut best_q = f64::NEG_INFINITY;
        for (a, &nx) in row.iter().enumerate() {
            let qa = q(&v, nx);
            if qa > best_q {
                best_q = qa;
                best = a;
            }
        }
        table.insert(states[s].clone(), best);
    }
    TabularPolicy { table }
}
