//! Continuous point navigation: a point in `[0, A]^2` moves by a fixed step in
//! four directions, circular hazards are failure terminal states, and the
//! goal is a disc around the goal point. A move leaving the arena is a no-op.

use super::planner::{self, Model, TabularPolicy};
use super::{canonical, num, Action, Agent, Defects, Domain, DomainError, SimState, Simulator, StateDim, StateDimKind};
use crate::lhs::Task;
use crate::template::{Assignment, Constraint, EnvironmentTemplate};

pub const ACTIONS: &[&str] = &["north", "south", "east", "west"];
const DELTAS: [(f64, f64); 4] = [(0.0, 1.0), (0.0, -1.0), (1.0, 0.0), (-1.0, 0.0)];
const EDGE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hazard {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
}

#[derive(Debug, Clone)]
pub struct PointLayout {
    pub arena: f64,
    pub step: f64,
    pub goal_radius: f64,
    pub hazards: Vec<Hazard>,
}

impl PointLayout {
    pub fn in_hazard(&self, x: f64, y: f64) -> bool {
        self.hazards.iter().any(|h| (x - h.x).hypot(y - h.y) < h.radius)
    }

    pub fn transition(&self, x: f64, y: f64, a: Action) -> (f64, f64) {
        let (dx, dy) = DELTAS[a.min(3)];
        let nx = canonical(x + dx * self.step);
        let ny = canonical(y + dy * self.step);
        let inside = |v: f64| (-EDGE_TOLERANCE..=self.arena + EDGE_TOLERANCE).contains(&v);
        if inside(nx) && inside(ny) {
            (nx, ny)
        } else {
            (x, y)
        }
    }
}

fn xy(s: &SimState) -> (f64, f64) {
    (s.values()[0], s.values()[1])
}

pub struct PointNavSim {
    pub layout: PointLayout,
    agent: String,
    schema: Vec<StateDim>,
    start: SimState,
    goal: SimState,
}

impl PointNavSim {
    pub fn new(task: &Task) -> Result<PointNavSim, DomainError> {
        let config = &task.config;
        let env = |name: &str| {
            config
                .env_f64(name)
                .ok_or_else(|| DomainError::BadConfig(format!("missing {name}")))
        };
        let arena = env("arena_size")?;
        let step = env("step_length")?;
        let goal_radius = env("goal_radius")?;
        if step <= 0.0 || arena <= 0.0 {
            return Err(DomainError::BadConfig("arena and step length must be positive".into()));
        }
        let mut hazards = Vec::new();
        for o in config.template().objects.iter().filter(|o| o.kind == "hazard") {
            let key = |attr: &str| format!("{}.{attr}", o.id);
            hazards.push(Hazard {
                x: num(&task.start_state, &key("x"))?,
                y: num(&task.start_state, &key("y"))?,
                radius: num(&task.start_state, &key("radius"))?,
            });
        }
        let agent = config
            .template()
            .agents
            .first()
            .map(|a| a.id.clone())
            .ok_or_else(|| DomainError::BadConfig("no agent declared".into()))?;
        let mut sim = PointNavSim {
            layout: PointLayout {
                arena,
                step,
                goal_radius,
                hazards,
            },
            agent,
            schema: vec![StateDim::numeric("x", 0.0, arena), StateDim::numeric("y", 0.0, arena)],
            start: SimState::default(),
            goal: SimState::default(),
        };
        sim.start = sim.reset(&task.start_state)?;
        sim.goal = sim.reset(&task.goal_state)?;
        Ok(sim)
    }

    pub fn at(x: f64, y: f64) -> SimState {
        SimState::new([x, y])
    }
}

impl Simulator for PointNavSim {
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
        let x = num(s, &format!("{}.x", self.agent))?;
        let y = num(s, &format!("{}.y", self.agent))?;
        let a = self.layout.arena;
        if !(0.0..=a).contains(&x) || !(0.0..=a).contains(&y) {
            return Err(DomainError::InvalidState(format!(
                "point ({x}, {y}) outside the arena [0, {a}]"
            )));
        }
        Ok(Self::at(x, y))
    }

    fn is_goal(&self, s: &SimState) -> bool {
        let (x, y) = xy(s);
        let (gx, gy) = xy(&self.goal);
        (x - gx).hypot(y - gy) <= self.layout.goal_radius
    }

    fn is_unfavorable(&self, s: &SimState) -> bool {
        let (x, y) = xy(s);
        self.layout.in_hazard(x, y)
    }

    fn step(&self, s: &SimState, a: Action) -> SimState {
        let (x, y) = xy(s);
        let (nx, ny) = self.layout.transition(x, y, a);
        Self::at(nx, ny)
    }

    fn observation_names(&self) -> &[&'static str] {
        &["x", "y", "h"]
    }

    fn observe(&self, s: &SimState) -> Vec<f64> {
        let (x, y) = xy(s);
        vec![x, y, if self.layout.in_hazard(x, y) { 1.0 } else { 0.0 }]
    }

    fn coverage_point(&self, s: &SimState) -> Vec<f64> {
        self.observe(s)
    }
}

pub struct PointAgent {
    features: &'static [&'static str],
    policy: TabularPolicy,
}

impl Agent for PointAgent {
    fn observed_features(&self) -> &[&'static str] {
        self.features
    }

    fn act(&mut self, observation: &[f64]) -> Action {
        self.policy.action(&SimState::new(observation.iter().take(2).copied()))
    }
}

pub fn make_pointnav_agent(variant: &str, sim: &PointNavSim) -> Result<PointAgent, DomainError> {
    let defects = Defects::of("pointnav", variant)?;
    let features: &'static [&'static str] = if defects.drops_hazard_feature {
        &["x", "y"]
    } else {
        &["x", "y", "h"]
    };
    let sees = defects.models_hazards();
    let step = |s: &SimState, a: Action| sim.step(s, a);
    let is_goal = |s: &SimState| sim.is_goal(s);
    let is_hazard = |s: &SimState| sees && sim.is_unfavorable(s);
    let model = Model {
        n_actions: ACTIONS.len(),
        step: &step,
        is_goal: &is_goal,
        is_hazard: &is_hazard,
    };
    Ok(PointAgent {
        features,
        policy: planner::solve(&model, &sim.start),
    })
}

pub struct PointNavDomain;

impl Domain for PointNavDomain {
    fn name(&self) -> &'static str {
        "pointnav"
    }

    fn variants(&self) -> &'static [&'static str] {
        super::VARIANTS
    }

    fn simulator(&self, task: &Task) -> Result<Box<dyn Simulator>, DomainError> {
        Ok(Box::new(PointNavSim::new(task)?))
    }

    fn make_agent(&self, variant: &str, task: &Task) -> Result<Box<dyn Agent>, DomainError> {
        let sim = PointNavSim::new(task)?;
        Ok(Box::new(make_pointnav_agent(variant, &sim)?))
    }

    /// Ten times the start heuristic at 100 bins.
    fn default_max_steps(&self, sim: &dyn Simulator) -> usize {
        10 * crate::oracle::heuristic(sim.schema(), sim.start(), sim.goal(), 100).max(1) as usize
    }

    fn coverage_dims(&self, template: &EnvironmentTemplate) -> Result<Vec<StateDim>, DomainError> {
        let arena = template
            .env_attributes
            .iter()
            .find(|a| a.name == "arena_size")
            .ok_or_else(|| DomainError::BadConfig("missing arena_size".into()))?;
        let max = match &arena.constraint {
            Constraint::Range { hi, .. } if arena.mutable => hi.constant(),
            _ => arena.current_value.first().and_then(|v| v.as_f64()),
        }
        .ok_or_else(|| DomainError::BadConfig("arena_size upper bound must be a constant".into()))?;
        Ok(vec![
            StateDim::numeric("x", 0.0, max),
            StateDim::numeric("y", 0.0, max),
            StateDim {
                name: "h".into(),
                kind: StateDimKind::Numeric { lo: 0.0, hi: 1.0 },
            },
        ])
    }
}

/// Builds a task on the built-in point-navigation template from an explicit
/// layout. Hazards are `(x, y, radius)`.
pub fn pointnav_task(
    arena: f64,
    hazards: &[(f64, f64, f64)],
    start: (f64, f64),
    goal: (f64, f64),
) -> Result<Task, DomainError> {
    use crate::template::Value;
    let template = EnvironmentTemplate::parse(crate::builtin::POINTNAV)?;
    let mut env = Assignment::new();
    env.insert("arena_size".into(), Value::Real(arena));
    env.insert("hazard_count".into(), Value::Int(hazards.len() as i64));
    let config = template.instantiate(&env)?;
    let mut scene = Assignment::new();
    for (i, (x, y, r)) in hazards.iter().enumerate() {
        scene.insert(format!("hazard_{i}.x"), Value::Real(*x));
        scene.insert(format!("hazard_{i}.y"), Value::Real(*y));
        scene.insert(format!("hazard_{i}.radius"), Value::Real(*r));
    }
    let at = |(x, y): (f64, f64)| {
        let mut s = scene.clone();
        s.insert("agent.x".into(), Value::Real(x));
        s.insert("agent.y".into(), Value::Real(y));
        s
    };
    let (start_state, goal_state) = (at(start), at(goal));
    config.with_task_state(&start_state)?;
    config.with_task_state(&goal_state)?;
    Ok(Task {
        task_id: "pointnav-fixture".into(),
        config_id: "pointnav-fixture".into(),
        seed: 0,
        config: std::sync::Arc::new(config),
        start_state,
        goal_state,
    })
}
