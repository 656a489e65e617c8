//! Environment templates: the XML schema of environment, object and agent
//! attributes, constraint resolution, and the mutable dimensions that the
//! sampler operates on.

mod expr;
mod xml;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use expr::{BinOp, Expr, ExprError};
pub(crate) use xml::{parse_task_documents, write_environment as write_environment_into};
pub use xml::{parse_template, serialize_template};

/// A concrete attribute value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    Real(f64),
    Cat(String),
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(v) => Some(*v as f64),
            Value::Real(v) => Some(*v),
            Value::Cat(_) => None,
        }
    }

    pub fn as_cat(&self) -> Option<&str> {
        match self {
            Value::Cat(s) => Some(s),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Real(v) => write!(f, "{v}"),
            Value::Cat(s) => f.write_str(s),
        }
    }
}

/// Values keyed by qualified scalar name (`grid_size`, `agent.x`,
/// `lava_3.y`, `ground[2]`).
pub type Assignment = BTreeMap<String, Value>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataType {
    Int,
    Real,
    Categorical,
}

impl DataType {
    pub fn as_str(self) -> &'static str {
        match self {
            DataType::Int => "int",
            DataType::Real => "real",
            DataType::Categorical => "categorical",
        }
    }

    pub fn parse(s: &str) -> Option<DataType> {
        match s.trim() {
            "int" => Some(DataType::Int),
            "real" => Some(DataType::Real),
            "categorical" => Some(DataType::Categorical),
            _ => None,
        }
    }

    /// Parses one scalar token under this type.
    pub fn parse_value(self, s: &str) -> Option<Value> {
        let s = s.trim();
        match self {
            DataType::Int => s.parse::<i64>().ok().map(Value::Int),
            DataType::Real => s.parse::<f64>().ok().filter(|v| v.is_finite()).map(Value::Real),
            DataType::Categorical => (!s.is_empty()).then(|| Value::Cat(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Constraint {
    Range { lo: Expr, hi: Expr },
    Categories(Vec<String>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributeSpec {
    pub name: String,
    pub description: String,
    pub data_type: DataType,
    /// One entry per value; `len() == num_values`.
    pub current_value: Vec<Value>,
    pub mutable: bool,
    pub constraint: Constraint,
    pub num_values: usize,
}

impl AttributeSpec {
    pub fn is_list(&self) -> bool {
        self.num_values > 1
    }

    /// Scalar sub-names: `name` or `name[0]..name[k-1]`.
    pub fn scalar_names(&self) -> Vec<String> {
        if self.is_list() {
            (0..self.num_values).map(|i| format!("{}[{i}]", self.name)).collect()
        } else {
            vec![self.name.clone()]
        }
    }
}

/// An object or agent block.
#[derive(Debug, Clone, PartialEq)]
pub struct Entity {
    pub id: String,
    pub kind: String,
    /// Replication count (`<Object count="lava_count">`); expanded into
    /// `id_0 .. id_{k-1}` on instantiation.
    pub count: Option<Expr>,
    pub attributes: Vec<AttributeSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentTemplate {
    pub env_id: String,
    pub env_type: String,
    pub env_attributes: Vec<AttributeSpec>,
    pub objects: Vec<Entity>,
    pub agents: Vec<Entity>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "id")]
pub enum Owner {
    Environment,
    Object(String),
    Agent(String),
}

impl Owner {
    pub fn qualify(&self, name: &str) -> String {
        match self {
            Owner::Environment => name.to_string(),
            Owner::Object(id) | Owner::Agent(id) => format!("{id}.{name}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Level {
    EnvLevel,
    TaskLevel,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DimKind {
    Continuous {
        lo_expr: Expr,
        hi_expr: Expr,
        lo: f64,
        hi: f64,
        integer: bool,
    },
    Categorical {
        labels: Vec<String>,
    },
}

/// One mutable attribute viewed as a sampling dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct DimensionSpec {
    pub owner: Owner,
    pub attribute_name: String,
    pub kind: DimKind,
    /// EC_i: number of scalar values drawn per sample.
    pub values_per_sample: usize,
    pub level: Level,
    /// Qualified names the bounds depend on.
    pub depends_on: BTreeSet<String>,
}

impl DimensionSpec {
    pub fn qualified_name(&self) -> String {
        self.owner.qualify(&self.attribute_name)
    }

    /// Qualified scalar names, one per value (`agent.x`, `walker.ground[0]`).
    pub fn scalar_names(&self) -> Vec<String> {
        let base = self.qualified_name();
        if self.values_per_sample > 1 {
            (0..self.values_per_sample).map(|i| format!("{base}[{i}]")).collect()
        } else {
            vec![base]
        }
    }

    /// Re-resolves range bounds under a new context.
    pub fn resolve(&self, ctx: &Assignment) -> Result<DimKind, TemplateError> {
        match &self.kind {
            DimKind::Continuous {
                lo_expr,
                hi_expr,
                integer,
                ..
            } => {
                let (lo, hi) = eval_range(&self.owner, lo_expr, hi_expr, ctx, &self.qualified_name())?;
                Ok(DimKind::Continuous {
                    lo_expr: lo_expr.clone(),
                    hi_expr: hi_expr.clone(),
                    lo,
                    hi,
                    integer: *integer,
                })
            }
            DimKind::Categorical { .. } => Ok(self.kind.clone()),
        }
    }
}

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("line {line}: malformed XML: {message}")]
    Xml { line: usize, message: String },
    #[error("line {line}: unknown tag <{tag}>")]
    UnknownTag { line: usize, tag: String },
    #[error("line {line}: <{parent}> is missing required <{child}>")]
    MissingChild { line: usize, parent: String, child: String },
    #[error("line {line}: <{tag}> is missing attribute {attr:?}")]
    MissingXmlAttr { line: usize, tag: String, attr: String },
    #[error("line {line}: invalid value {value:?} for {what}")]
    InvalidValue { line: usize, what: String, value: String },
    #[error("line {line}: bad constraint on {attribute:?}: {message}")]
    BadConstraint {
        line: usize,
        attribute: String,
        message: String,
    },
    #[error("duplicate name {0:?}")]
    Duplicate(String),
    #[error("{attribute:?} references unknown attribute {reference:?}")]
    UnknownReference { attribute: String, reference: String },
    #[error("cyclic formula reference through {0:?}")]
    Cycle(String),
    #[error("cannot resolve bounds of {attribute:?}: {source}")]
    Resolve {
        attribute: String,
        #[source]
        source: ExprError,
    },
    #[error("{attribute:?}: resolved bounds are inverted ({lo} > {hi})")]
    InvertedBounds { attribute: String, lo: f64, hi: f64 },
    #[error("{attribute:?}: value {value} violates constraint {constraint}")]
    ConstraintViolation {
        attribute: String,
        value: String,
        constraint: String,
    },
    #[error("no value assigned to mutable attribute {0:?}")]
    MissingAssignment(String),
    #[error("{0:?} is not an attribute of this template")]
    UnknownAssignment(String),
    #[error("{0:?} is immutable and cannot be reassigned")]
    ImmutableAssigned(String),
    #[error("object count for {id:?} must be a non-negative integer, got {value}")]
    BadCount { id: String, value: f64 },
}

fn eval_range(
    owner: &Owner,
    lo: &Expr,
    hi: &Expr,
    ctx: &Assignment,
    attribute: &str,
) -> Result<(f64, f64), TemplateError> {
    let lookup = |name: &str| lookup_ref(owner, name, ctx);
    let wrap = |source| TemplateError::Resolve {
        attribute: attribute.to_string(),
        source,
    };
    let lo = lo.eval(&lookup).map_err(wrap)?;
    let hi = hi.eval(&lookup).map_err(wrap)?;
    if lo > hi {
        return Err(TemplateError::InvertedBounds {
            attribute: attribute.to_string(),
            lo,
            hi,
        });
    }
    Ok((lo, hi))
}

/// Same-owner attribute first, then environment attribute.
fn lookup_ref(owner: &Owner, name: &str, ctx: &Assignment) -> Option<f64> {
    if *owner != Owner::Environment {
        if let Some(v) = ctx.get(&owner.qualify(name)) {
            return v.as_f64();
        }
    }
    ctx.get(name).and_then(Value::as_f64)
}

/// Checks a single scalar against a constraint resolved in `ctx`.
fn check_value(
    owner: &Owner,
    attr: &AttributeSpec,
    qualified: &str,
    value: &Value,
    ctx: &Assignment,
) -> Result<(), TemplateError> {
    let violation = |constraint: String| TemplateError::ConstraintViolation {
        attribute: qualified.to_string(),
        value: value.to_string(),
        constraint,
    };
    match (&attr.constraint, attr.data_type, value) {
        (Constraint::Range { lo, hi }, DataType::Int, Value::Int(_))
        | (Constraint::Range { lo, hi }, DataType::Real, Value::Real(_)) => {
            let (l, h) = eval_range(owner, lo, hi, ctx, qualified)?;
            let v = value.as_f64().unwrap_or(f64::NAN);
            if v < l || v > h {
                return Err(violation(format!("[{l}, {h}]")));
            }
            Ok(())
        }
        (Constraint::Categories(labels), DataType::Categorical, Value::Cat(s)) => {
            if labels.iter().any(|l| l == s) {
                Ok(())
            } else {
                Err(violation(format!("{{{}}}", labels.join(", "))))
            }
        }
        _ => Err(violation(format!("type {}", attr.data_type.as_str()))),
    }
}

impl EnvironmentTemplate {
    pub fn parse(xml_text: &str) -> Result<Self, TemplateError> {
        parse_template(xml_text)
    }

    pub fn to_xml(&self) -> String {
        serialize_template(self)
    }

    /// Current values of all environment attributes.
    pub fn env_assignment(&self) -> Assignment {
        let mut out = Assignment::new();
        push_values(&Owner::Environment, &self.env_attributes, &mut out);
        out
    }

    /// Current values of every attribute, with entity counts expanded under
    /// the current environment values.
    pub fn current_assignment(&self) -> Result<Assignment, TemplateError> {
        let env = self.env_assignment();
        let mut out = env.clone();
        for (owner, attrs) in self.expanded_entities(&env)? {
            push_values(&owner, &attrs, &mut out);
        }
        Ok(out)
    }

    /// Objects and agents with replication counts resolved against `env`.
    pub fn expanded_entities(&self, env: &Assignment) -> Result<Vec<(Owner, Vec<AttributeSpec>)>, TemplateError> {
        let mut out = Vec::new();
        for obj in &self.objects {
            for id in expand_ids(obj, env)? {
                out.push((Owner::Object(id), obj.attributes.clone()));
            }
        }
        for agent in &self.agents {
            for id in expand_ids(agent, env)? {
                out.push((Owner::Agent(id), agent.attributes.clone()));
            }
        }
        Ok(out)
    }

    /// Validates structure: unique names, resolvable references, no cycles,
    /// defaults within constraints.
    pub fn validate(&self) -> Result<(), TemplateError> {
        let mut env_names = BTreeSet::new();
        for a in &self.env_attributes {
            if !env_names.insert(a.name.clone()) {
                return Err(TemplateError::Duplicate(a.name.clone()));
            }
        }
        let mut ids = BTreeSet::new();
        let mut graph: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for a in &self.env_attributes {
            graph.insert(
                a.name.clone(),
                self.resolve_refs(&Owner::Environment, a, &env_names, &BTreeSet::new())?,
            );
        }
        for (is_agent, entity) in self
            .objects
            .iter()
            .map(|o| (false, o))
            .chain(self.agents.iter().map(|a| (true, a)))
        {
            if !ids.insert(entity.id.clone()) {
                return Err(TemplateError::Duplicate(entity.id.clone()));
            }
            let owner = if is_agent {
                Owner::Agent(entity.id.clone())
            } else {
                Owner::Object(entity.id.clone())
            };
            let mut own = BTreeSet::new();
            for a in &entity.attributes {
                if !own.insert(a.name.clone()) {
                    return Err(TemplateError::Duplicate(owner.qualify(&a.name)));
                }
            }
            if let Some(count) = &entity.count {
                for r in count.references() {
                    if !env_names.contains(&r) {
                        return Err(TemplateError::UnknownReference {
                            attribute: format!("{}@count", entity.id),
                            reference: r,
                        });
                    }
                }
            }
            for a in &entity.attributes {
                let refs = self.resolve_refs(&owner, a, &env_names, &own)?;
                graph.insert(owner.qualify(&a.name), refs);
            }
        }
        detect_cycle(&graph)?;
        // Defaults must satisfy their own constraints.
        let current = self.current_assignment()?;
        for a in &self.env_attributes {
            check_attr_values(&Owner::Environment, a, &current)?;
        }
        for (owner, attrs) in self.expanded_entities(&current)? {
            for a in &attrs {
                check_attr_values(&owner, a, &current)?;
            }
        }
        Ok(())
    }

    fn resolve_refs(
        &self,
        owner: &Owner,
        attr: &AttributeSpec,
        env_names: &BTreeSet<String>,
        own_names: &BTreeSet<String>,
    ) -> Result<BTreeSet<String>, TemplateError> {
        let mut out = BTreeSet::new();
        if let Constraint::Range { lo, hi } = &attr.constraint {
            for r in lo.references().into_iter().chain(hi.references()) {
                if *owner != Owner::Environment && own_names.contains(&r) {
                    out.insert(owner.qualify(&r));
                } else if env_names.contains(&r) {
                    out.insert(r);
                } else {
                    return Err(TemplateError::UnknownReference {
                        attribute: owner.qualify(&attr.name),
                        reference: r,
                    });
                }
            }
        }
        Ok(out)
    }

    /// Mutable attributes at `level` as sampling dimensions, in document
    /// order. `bindings` overrides current values when resolving bounds and
    /// entity counts.
    pub fn extract_dimensions(&self, level: Level, bindings: &Assignment) -> Result<Vec<DimensionSpec>, TemplateError> {
        let mut ctx = self.env_assignment();
        ctx.extend(bindings.iter().map(|(k, v)| (k.clone(), v.clone())));
        let mut dims = Vec::new();
        match level {
            Level::EnvLevel => {
                for a in self.env_attributes.iter().filter(|a| a.mutable) {
                    dims.push(make_dim(&Owner::Environment, a, Level::EnvLevel, &ctx)?);
                }
            }
            Level::TaskLevel => {
                let entities = self.expanded_entities(&ctx)?;
                // Entity defaults fill in same-owner references not in bindings.
                for (owner, attrs) in &entities {
                    for a in attrs {
                        for (name, v) in a.scalar_names().iter().zip(&a.current_value) {
                            ctx.entry(owner.qualify(name)).or_insert_with(|| v.clone());
                        }
                    }
                }
                for (owner, attrs) in &entities {
                    for a in attrs.iter().filter(|a| a.mutable) {
                        dims.push(make_dim(owner, a, Level::TaskLevel, &ctx)?);
                    }
                }
            }
        }
        Ok(dims)
    }

    /// Applies an assignment, yielding a concrete configuration. Every
    /// mutable environment attribute must be assigned; entity attributes may
    /// be assigned optionally (used to materialize task start/goal states).
    pub fn instantiate(&self, assignment: &Assignment) -> Result<EnvironmentConfig, TemplateError> {
        let mut env_ctx = Assignment::new();
        let mut out = self.clone();
        let mut used = BTreeSet::new();
        for a in out.env_attributes.iter_mut() {
            assign_attr(&Owner::Environment, a, assignment, &mut used)?;
            push_values(&Owner::Environment, std::slice::from_ref(a), &mut env_ctx);
        }
        let mut objects = Vec::new();
        for obj in &self.objects {
            for id in expand_ids(obj, &env_ctx)? {
                objects.push(Entity {
                    id,
                    kind: obj.kind.clone(),
                    count: None,
                    attributes: obj.attributes.clone(),
                });
            }
        }
        let mut agents = Vec::new();
        for agent in &self.agents {
            for id in expand_ids(agent, &env_ctx)? {
                agents.push(Entity {
                    id,
                    kind: agent.kind.clone(),
                    count: None,
                    attributes: agent.attributes.clone(),
                });
            }
        }
        for (is_agent, e) in objects
            .iter_mut()
            .map(|o| (false, o))
            .chain(agents.iter_mut().map(|a| (true, a)))
        {
            let owner = if is_agent {
                Owner::Agent(e.id.clone())
            } else {
                Owner::Object(e.id.clone())
            };
            for a in e.attributes.iter_mut() {
                assign_attr_optional(&owner, a, assignment, &mut used)?;
            }
        }
        if let Some(extra) = assignment.keys().find(|k| !used.contains(*k)) {
            return Err(TemplateError::UnknownAssignment(extra.clone()));
        }
        out.objects = objects;
        out.agents = agents;
        // Validate everything against the final values.
        let ctx = out.current_assignment()?;
        for a in &out.env_attributes {
            check_attr_values(&Owner::Environment, a, &ctx)?;
        }
        for (owner, attrs) in out.expanded_entities(&ctx)? {
            for a in &attrs {
                check_attr_values(&owner, a, &ctx)?;
            }
        }
        Ok(EnvironmentConfig(out))
    }
}

fn push_values(owner: &Owner, attrs: &[AttributeSpec], out: &mut Assignment) {
    for a in attrs {
        for (name, v) in a.scalar_names().iter().zip(&a.current_value) {
            out.insert(owner.qualify(name), v.clone());
        }
    }
}

fn check_attr_values(owner: &Owner, a: &AttributeSpec, ctx: &Assignment) -> Result<(), TemplateError> {
    for (name, v) in a.scalar_names().iter().zip(&a.current_value) {
        check_value(owner, a, &owner.qualify(name), v, ctx)?;
    }
    Ok(())
}

fn expand_ids(entity: &Entity, env: &Assignment) -> Result<Vec<String>, TemplateError> {
    let Some(count) = &entity.count else {
        return Ok(vec![entity.id.clone()]);
    };
    let lookup = |name: &str| env.get(name).and_then(Value::as_f64);
    let k = count.eval(&lookup).map_err(|source| TemplateError::Resolve {
        attribute: format!("{}@count", entity.id),
        source,
    })?;
    if k < 0.0 || k.fract() != 0.0 {
        return Err(TemplateError::BadCount {
            id: entity.id.clone(),
            value: k,
        });
    }
    Ok((0..k as usize).map(|i| format!("{}_{i}", entity.id)).collect())
}

fn coerce(a: &AttributeSpec, qualified: &str, v: &Value) -> Result<Value, TemplateError> {
    let bad = || TemplateError::ConstraintViolation {
        attribute: qualified.to_string(),
        value: v.to_string(),
        constraint: format!("type {}", a.data_type.as_str()),
    };
    match (a.data_type, v) {
        (DataType::Int, Value::Int(i)) => Ok(Value::Int(*i)),
        (DataType::Int, Value::Real(r)) if r.fract() == 0.0 => Ok(Value::Int(*r as i64)),
        (DataType::Real, Value::Real(r)) => Ok(Value::Real(*r)),
        (DataType::Real, Value::Int(i)) => Ok(Value::Real(*i as f64)),
        (DataType::Categorical, Value::Cat(s)) => Ok(Value::Cat(s.clone())),
        _ => Err(bad()),
    }
}

fn assign_attr(
    owner: &Owner,
    a: &mut AttributeSpec,
    assignment: &Assignment,
    used: &mut BTreeSet<String>,
) -> Result<(), TemplateError> {
    if a.mutable {
        for n in a.scalar_names() {
            let q = owner.qualify(&n);
            if !assignment.contains_key(&q) {
                return Err(TemplateError::MissingAssignment(q));
            }
        }
    }
    assign_attr_optional(owner, a, assignment, used)
}

fn assign_attr_optional(
    owner: &Owner,
    a: &mut AttributeSpec,
    assignment: &Assignment,
    used: &mut BTreeSet<String>,
) -> Result<(), TemplateError> {
    let names = a.scalar_names();
    for (i, n) in names.iter().enumerate() {
        let q = owner.qualify(n);
        if let Some(v) = assignment.get(&q) {
            let v = coerce(a, &q, v)?;
            if !a.mutable && v != a.current_value[i] {
                return Err(TemplateError::ImmutableAssigned(q));
            }
            a.current_value[i] = v;
            used.insert(q);
        }
    }
    Ok(())
}

fn make_dim(owner: &Owner, a: &AttributeSpec, level: Level, ctx: &Assignment) -> Result<DimensionSpec, TemplateError> {
    let qualified = owner.qualify(&a.name);
    let (kind, depends_on) = match &a.constraint {
        Constraint::Range { lo, hi } => {
            let (l, h) = eval_range(owner, lo, hi, ctx, &qualified)?;
            let mut deps = BTreeSet::new();
            for r in lo.references().into_iter().chain(hi.references()) {
                let own = owner.qualify(&r);
                if *owner != Owner::Environment && ctx.contains_key(&own) {
                    deps.insert(own);
                } else {
                    deps.insert(r);
                }
            }
            (
                DimKind::Continuous {
                    lo_expr: lo.clone(),
                    hi_expr: hi.clone(),
                    lo: l,
                    hi: h,
                    integer: a.data_type == DataType::Int,
                },
                deps,
            )
        }
        Constraint::Categories(labels) => (DimKind::Categorical { labels: labels.clone() }, BTreeSet::new()),
    };
    Ok(DimensionSpec {
        owner: owner.clone(),
        attribute_name: a.name.clone(),
        kind,
        values_per_sample: a.num_values,
        level,
        depends_on,
    })
}

fn detect_cycle(graph: &BTreeMap<String, BTreeSet<String>>) -> Result<(), TemplateError> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Open,
        Done,
    }
    fn visit(
        node: &str,
        graph: &BTreeMap<String, BTreeSet<String>>,
        marks: &mut BTreeMap<String, Mark>,
    ) -> Result<(), TemplateError> {
        match marks.get(node) {
            Some(Mark::Done) => return Ok(()),
            Some(Mark::Open) => return Err(TemplateError::Cycle(node.to_string())),
            None => {}
        }
        marks.insert(node.to_string(), Mark::Open);
        if let Some(next) = graph.get(node) {
            for n in next {
                visit(n, graph, marks)?;
            }
        }
        marks.insert(node.to_string(), Mark::Done);
        Ok(())
    }
    let mut marks = BTreeMap::new();
    for node in graph.keys() {
        visit(node, graph, &mut marks)?;
    }
    Ok(())
}

/// A template with every environment attribute fixed and entity counts
/// expanded. Serializes to the same XML format as a template.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentConfig(pub EnvironmentTemplate);

impl EnvironmentConfig {
    pub fn template(&self) -> &EnvironmentTemplate {
        &self.0
    }

    pub fn env_type(&self) -> &str {
        &self.0.env_type
    }

    pub fn to_xml(&self) -> String {
        self.0.to_xml()
    }

    pub fn from_xml(xml_text: &str) -> Result<Self, TemplateError> {
        let t = parse_template(xml_text)?;
        if let Some(e) = t.objects.iter().chain(&t.agents).find(|e| e.count.is_some()) {
            return Err(TemplateError::InvalidValue {
                line: 0,
                what: "count on a concrete configuration".into(),
                value: e.id.clone(),
            });
        }
        Ok(EnvironmentConfig(t))
    }

    pub fn env_values(&self) -> Assignment {
        self.0.env_assignment()
    }

    pub fn env_f64(&self, name: &str) -> Option<f64> {
        self.0
            .env_attributes
            .iter()
            .find(|a| a.name == name)
            .and_then(|a| a.current_value.first())
            .and_then(Value::as_f64)
    }

    /// Task-level dimensions of this configuration.
    pub fn task_dimensions(&self) -> Result<Vec<DimensionSpec>, TemplateError> {
        self.0.extract_dimensions(Level::TaskLevel, &Assignment::new())
    }

    /// Current values of every entity attribute.
    pub fn task_defaults(&self) -> Assignment {
        let mut out = Assignment::new();
        for o in &self.0.objects {
            push_values(&Owner::Object(o.id.clone()), &o.attributes, &mut out);
        }
        for a in &self.0.agents {
            push_values(&Owner::Agent(a.id.clone()), &a.attributes, &mut out);
        }
        out
    }

    /// Checks a task-level assignment against this configuration's resolved
    /// constraints, by instantiating it.
    pub fn with_task_state(&self, state: &Assignment) -> Result<EnvironmentConfig, TemplateError> {
        let mut full = self.env_values();
        full.extend(state.iter().map(|(k, v)| (k.clone(), v.clone())));
        self.0.instantiate(&full)
    }
}

#[cfg(test)]
mod tests;
