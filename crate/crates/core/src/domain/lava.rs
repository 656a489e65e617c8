//! Lava gridworld: an `n x n` grid, agent pose `(x, y, d)`, lava tiles as
//! failure terminal states. North is `y + 1`; moving into the boundary is a
//! no-op.

use std::collections::HashSet;

use super::planner::{self, Model, TabularPolicy};
use super::{num, Action, Agent, Defects, Domain, DomainError, SimState, Simulator, StateDim, StateDimKind};
use crate::lhs::Task;
use crate::template::{Assignment, Constraint, EnvironmentConfig, EnvironmentTemplate};

pub const ACTIONS: &[&str] = &["left", "right", "forward"];
pub const LEFT: Action = 0;
pub const RIGHT: Action = 1;
pub const FORWARD: Action = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Heading {
    North,
    South,
    East,
    West,
}

impl Heading {
    fn from_label(s: &str) -> Option<Heading> {
        match s {
            "north" => Some(Heading::North),
            "south" => Some(Heading::South),
            "east" => Some(Heading::East),
            "west" => Some(Heading::West),
            _ => None,
        }
    }

    pub fn left(self) -> Heading {
        match self {
            Heading::North => Heading::West,
            Heading::West => Heading::South,
            Heading::South => Heading::East,
            Heading::East => Heading::North,
        }
    }

    pub fn right(self) -> Heading {
        match self {
            Heading::North => Heading::East,
            Heading::East => Heading::South,
            Heading::South => Heading::West,
            Heading::West => Heading::North,
        }
    }

    pub fn delta(self) -> (i64, i64) {
        match self {
            Heading::North => (0, 1),
            Heading::South => (0, -1),
            Heading::East => (1, 0),
            Heading::West => (-1, 0),
        }
    }
}

/// Static layout of one task.
#[derive(Debug, Clone)]
pub struct LavaLayout {
    pub n: i64,
    pub lava: HashSet<(i64, i64)>,
    /// Heading labels in template order; state `d` is an index into this.
    pub labels: Vec<String>,
    headings: Vec<Heading>,
}

impl LavaLayout {
    pub fn is_lava(&self, x: i64, y: i64) -> bool {
        self.lava.contains(&(x, y))
    }

    fn index_of(&self, h: Heading) -> usize {
        self.headings
            .iter()
            .position(|&k| k == h)
            .expect("all four headings are present")
    }

    pub fn transition(&self, (x, y, d): (i64, i64, usize), a: Action) -> (i64, i64, usize) {
        let h = self.headings[d];
        match a {
            LEFT => (x, y, self.index_of(h.left())),
            RIGHT => (x, y, self.index_of(h.right())),
            _ => {
                let (dx, dy) = h.delta();
                let (nx, ny) = (x + dx, y + dy);
                if (1..=self.n).contains(&nx) && (1..=self.n).contains(&ny) {
                    (nx, ny, d)
                } else {
                    (x, y, d)
                }
            }
        }
    }
}

fn pose(s: &SimState) -> (i64, i64, usize) {
    let v = s.values();
    (v[0] as i64, v[1] as i64, v[2] as usize)
}

fn state((x, y, d): (i64, i64, usize)) -> SimState {
    SimState::new([x as f64, y as f64, d as f64])
}

pub struct LavaSim {
    pub layout: LavaLayout,
    agent: String,
    schema: Vec<StateDim>,
    start: SimState,
    goal: SimState,
}

fn agent_id(config: &EnvironmentConfig) -> Result<&str, DomainError> {
    config
        .template()
        .agents
        .first()
        .map(|a| a.id.as_str())
        .ok_or_else(|| DomainError::BadConfig("no agent declared".into()))
}

fn heading_labels(config: &EnvironmentConfig, agent: &str) -> Result<Vec<String>, DomainError> {
    let spec = config
        .template()
        .agents
        .iter()
        .find(|a| a.id == agent)
        .and_then(|a| a.attributes.iter().find(|x| x.name == "d"))
        .ok_or_else(|| DomainError::BadConfig("agent has no heading attribute d".into()))?;
    match &spec.constraint {
        Constraint::Categories(labels) => Ok(labels.clone()),
        Constraint::Range { .. } => Err(DomainError::BadConfig("heading d must be categorical".into())),
    }
}

impl LavaSim {
    pub fn new(task: &Task) -> Result<LavaSim, DomainError> {
        let config = &task.config;
        let n = config
            .env_f64("grid_size")
            .ok_or_else(|| DomainError::BadConfig("missing grid_size".into()))? as i64;
        let agent = agent_id(config)?;
        let labels = heading_labels(config, agent)?;
        let headings = labels
            .iter()
            .map(|l| Heading::from_label(l))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| DomainError::BadConfig(format!("unknown heading in {labels:?}")))?;
        let distinct: HashSet<_> = headings.iter().map(|h| *h as u8).collect();
        if distinct.len() != 4 || headings.len() != 4 {
            return Err(DomainError::BadConfig(
                "heading categories must be the four compass points".into(),
            ));
        }
        let mut lava = HashSet::new();
        for o in config.template().objects.iter().filter(|o| o.kind == "lava") {
            let x = num(&task.start_state, &format!("{}.x", o.id))? as i64;
            let y = num(&task.start_state, &format!("{}.y", o.id))? as i64;
            lava.insert((x, y));
        }
        let layout = LavaLayout {
            n,
            lava,
            labels,
            headings,
        };
        let schema = vec![
            StateDim::numeric("x", 0.0, n as f64),
            StateDim::numeric("y", 0.0, n as f64),
            StateDim {
                name: "d".into(),
                kind: StateDimKind::Categorical {
                    labels: layout.labels.clone(),
                },
            },
        ];
        let start = Self::pose_of(&layout, &task.start_state, agent)?;
        let goal = Self::pose_of(&layout, &task.goal_state, agent)?;
        Ok(LavaSim {
            layout,
            agent: agent.to_string(),
            schema,
            start,
            goal,
        })
    }

    fn pose_of(layout: &LavaLayout, s: &Assignment, agent: &str) -> Result<SimState, DomainError> {
        let x = num(s, &format!("{agent}.x"))?;
        let y = num(s, &format!("{agent}.y"))?;
        let d = s
            .get(&format!("{agent}.d"))
            .and_then(|v| v.as_cat())
            .ok_or_else(|| DomainError::InvalidState("missing heading".into()))?;
        let d = layout
            .labels
            .iter()
            .position(|l| l == d)
            .ok_or_else(|| DomainError::InvalidState(format!("unknown heading {d:?}")))?;
        let n = layout.n as f64;
        if !(1.0..=n).contains(&x) || !(1.0..=n).contains(&y) || x.fract() != 0.0 || y.fract() != 0.0 {
            return Err(DomainError::InvalidState(format!(
                "agent at ({x}, {y}) is off the {n}x{n} grid"
            )));
        }
        Ok(state((x as i64, y as i64, d)))
    }

    /// Agent pose as an assignment-free state; used by tests and fixtures.
    pub fn state_of(&self, x: i64, y: i64, heading: &str) -> SimState {
        let d = self
            .layout
            .labels
            .iter()
            .position(|l| l == heading)
            .expect("known heading");
        state((x, y, d))
    }
}

impl Simulator for LavaSim {
    fn action_symbols(&self) -> &[&'static str] {
        ACTIONS
    }

    fn schema(&self) -> &[StateDim] {
        &self.schema
    }

    fn start(&self) -> &SimState {
        &self.start
    }

    fn goal(&self) -> &SimState {
        &self.goal
    }

    fn reset(&self, s: &Assignment) -> Result<SimState, DomainError> {
        Self::pose_of(&self.layout, s, &self.agent)
    }

    fn is_goal(&self, s: &SimState) -> bool {
        *s == self.goal
    }

    fn is_unfavorable(&self, s: &SimState) -> bool {
        let (x, y, _) = pose(s);
        self.layout.is_lava(x, y)
    }

    fn step(&self, s: &SimState, a: Action) -> SimState {
        state(self.layout.transition(pose(s), a))
    }

    fn observation_names(&self) -> &[&'static str] {
        &["x", "y", "d", "l"]
    }

    fn observe(&self, s: &SimState) -> Vec<f64> {
        let (x, y, d) = pose(s);
        vec![
            x as f64,
            y as f64,
            d as f64,
            if self.layout.is_lava(x, y) { 1.0 } else { 0.0 },
        ]
    }

    fn coverage_point(&self, s: &SimState) -> Vec<f64> {
        self.observe(s)
    }
}

/// Model-based planning agent: solves its own model of the grid and acts
/// greedily on it.
pub struct LavaAgent {
    features: &'static [&'static str],
    policy: TabularPolicy,
}

impl Agent for LavaAgent {
    fn observed_features(&self) -> &[&'static str] {
        self.features
    }

    fn act(&mut self, observation: &[f64]) -> Action {
        // the model state is the pose; the lava flag is a function of it
        self.policy.action(&SimState::new(observation.iter().take(3).copied()))
    }
}

pub fn make_lava_agent(variant: &str, sim: &LavaSim) -> Result<LavaAgent, DomainError> {
    let defects = Defects::of("lava", variant)?;
    let features: &'static [&'static str] = if defects.drops_hazard_feature {
        &["x", "y", "d"]
    } else {
        &["x", "y", "d", "l"]
    };
    let layout = &sim.layout;
    let sees_lava = defects.models_hazards();
    let step = |s: &SimState, a: Action| state(layout.transition(pose(s), a));
    let is_goal = |s: &SimState| *s == sim.goal;
    let is_hazard = |s: &SimState| {
        let (x, y, _) = pose(s);
        sees_lava && layout.is_lava(x, y)
    };
    let model = Model {
        n_actions: ACTIONS.len(),
        step: &step,
        is_goal: &is_goal,
        is_hazard: &is_hazard,
    };
    Ok(LavaAgent {
        features,
        policy: planner::solve(&model, &sim.start),
    })
}

pub struct LavaDomain;

impl Domain for LavaDomain {
    fn name(&self) -> &'static str {
        "lava"
    }

    fn variants(&self) -> &'static [&'static str] {
        super::VARIANTS
    }

    fn simulator(&self, task: &Task) -> Result<Box<dyn Simulator>, DomainError> {
        Ok(Box::new(LavaSim::new(task)?))
    }

    fn make_agent(&self, variant: &str, task: &Task) -> Result<Box<dyn Agent>, DomainError> {
        let sim = LavaSim::new(task)?;
        Ok(Box::new(make_lava_agent(variant, &sim)?))
    }

    /// `4 n^2`: every cell in every heading.
    fn default_max_steps(&self, sim: &dyn Simulator) -> usize {
        let n = match sim.schema().first().map(|d| &d.kind) {
            Some(StateDimKind::Numeric { hi, .. }) => *hi as usize,
            _ => 0,
        };
        4 * n * n
    }

    fn coverage_dims(&self, template: &EnvironmentTemplate) -> Result<Vec<StateDim>, DomainError> {
        let grid = template
            .env_attributes
            .iter()
            .find(|a| a.name == "grid_size")
            .ok_or_else(|| DomainError::BadConfig("missing grid_size".into()))?;
        let max = match &grid.constraint {
            Constraint::Range { hi, .. } if grid.mutable => hi.constant(),
            _ => grid.current_value.first().and_then(|v| v.as_f64()),
        }
        .ok_or_else(|| DomainError::BadConfig("grid_size upper bound must be a constant".into()))?;
        let agent = template
            .agents
            .first()
            .ok_or_else(|| DomainError::BadConfig("no agent declared".into()))?;
        let labels = agent
            .attributes
            .iter()
            .find(|a| a.name == "d")
            .and_then(|a| match &a.constraint {
                Constraint::Categories(l) => Some(l.clone()),
                _ => None,
            })
            .ok_or_else(|| DomainError::BadConfig("agent heading d must be categorical".into()))?;
        Ok(vec![
            StateDim::numeric("x", 0.0, max),
            StateDim::numeric("y", 0.0, max),
            StateDim {
                name: "d".into(),
                kind: StateDimKind::Categorical { labels },
            },
            StateDim::numeric("l", 0.0, 1.0),
        ])
    }
}

/// Builds a task on the built-in Lava template from an explicit layout.
/// Poses are `(x, y, heading)`.
pub fn lava_task(
    n: i64,
    tiles: &[(i64, i64)],
    start: (i64, i64, &str),
    goal: (i64, i64, &str),
) -> Result<Task, DomainError> {
    use crate::template::Value;
    let template = EnvironmentTemplate::parse(crate::builtin::LAVA)?;
    let mut env = Assignment::new();
    env.insert("grid_size".into(), Value::Int(n));
    env.insert("lava_count".into(), Value::Int(tiles.len() as i64));
    let config = template.instantiate(&env)?;
    let mut tile_state = Assignment::new();
    for (i, (x, y)) in tiles.iter().enumerate() {
        tile_state.insert(format!("lava_{i}.x"), Value::Int(*x));
        tile_state.insert(format!("lava_{i}.y"), Value::Int(*y));
    }
    let pose = |(x, y, d): (i64, i64, &str)| {
        let mut s = tile_state.clone();
        s.insert("agent.x".into(), Value::Int(x));
        s.insert("agent.y".into(), Value::Int(y));
        s.insert("agent.d".into(), Value::Cat(d.to_string()));
        s
    };
    let (start_state, goal_state) = (pose(start), pose(goal));
    config.with_task_state(&start_state)?;
    config.with_task_state(&goal_state)?;
    Ok(Task {
        task_id: "lava-fixture".into(),
        config_id: "lava-fixture".into(),
        seed: 0,
        config: std::sync::Arc::new(config),
        start_state,
        goal_state,
    })
}
