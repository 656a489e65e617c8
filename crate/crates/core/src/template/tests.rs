use super::*;
use proptest::prelude::*;

const LAVA: &str = include_str!("../../templates/lava.xml");

fn attr_xml(name: &str, dt: &str, cur: &str, mutable: bool, constraint: &str) -> String {
    format!(
        r#"<Attribute>
  <Name value="{name}"/>
  <Description value=""/>
  <DataType value="{dt}"/>
  <CurrentValue value="{cur}"/>
  <Mutable value="{mutable}"/>
  <Constraint {constraint}/>
</Attribute>"#
    )
}

fn env_xml(body: &str) -> String {
    format!(r#"<Environment id="e" type="t">{body}</Environment>"#)
}

#[test]
fn single_grid_size_attribute_yields_one_dimension() {
    let xml = env_xml(&attr_xml("grid_size", "int", "5", true, r#"Range="[3, 50]""#));
    let t = EnvironmentTemplate::parse(&xml).unwrap();
    let dims = t.extract_dimensions(Level::EnvLevel, &Assignment::new()).unwrap();
    assert_eq!(dims.len(), 1);
    match &dims[0].kind {
        DimKind::Continuous { lo, hi, integer, .. } => {
            assert_eq!((*lo, *hi, *integer), (3.0, 50.0, true));
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn all_immutable_yields_no_dimensions() {
    let xml = env_xml(&format!(
        "{}{}",
        attr_xml("a", "int", "5", false, r#"Range="[3, 50]""#),
        attr_xml("b", "real", "0.5", false, r#"Range="[0, 1]""#)
    ));
    let t = EnvironmentTemplate::parse(&xml).unwrap();
    assert!(t
        .extract_dimensions(Level::EnvLevel, &Assignment::new())
        .unwrap()
        .is_empty());
    assert!(t
        .extract_dimensions(Level::TaskLevel, &Assignment::new())
        .unwrap()
        .is_empty());
}

#[test]
fn lava_env_level_dimensions_depend_on_grid_size() {
    let t = EnvironmentTemplate::parse(LAVA).unwrap();
    let dims = t.extract_dimensions(Level::EnvLevel, &Assignment::new()).unwrap();
    let names: Vec<_> = dims.iter().map(|d| d.qualified_name()).collect();
    assert_eq!(names, ["grid_size", "lava_count"]);
    assert!(dims[1].depends_on.contains("grid_size"));
    let mut ctx = Assignment::new();
    ctx.insert("grid_size".into(), Value::Int(7));
    match dims[1].resolve(&ctx).unwrap() {
        DimKind::Continuous { lo, hi, .. } => assert_eq!((lo, hi), (0.0, 49.0)),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn lava_task_level_dimensions_expand_tiles() {
    let t = EnvironmentTemplate::parse(LAVA).unwrap();
    let mut b = Assignment::new();
    b.insert("grid_size".into(), Value::Int(5));
    b.insert("lava_count".into(), Value::Int(10));
    let dims = t.extract_dimensions(Level::TaskLevel, &b).unwrap();
    // 10 tiles x (x, y) + agent (x, y, d)
    assert_eq!(dims.len(), 23);
    let tile_dims = dims.iter().filter(|d| matches!(d.owner, Owner::Object(_))).count();
    assert_eq!(tile_dims, 20);
    for d in &dims {
        assert_eq!(d.level, Level::TaskLevel);
        if let DimKind::Continuous { lo, hi, .. } = d.kind {
            assert_eq!((lo, hi), (1.0, 5.0), "{}", d.qualified_name());
        }
    }
    assert_eq!(dims[0].qualified_name(), "lava_0.x");
    assert_eq!(dims[22].qualified_name(), "agent.d");
}

#[test]
fn empty_entities_give_env_dims_only() {
    let xml = env_xml(&attr_xml("n", "int", "4", true, r#"Range="[1, 9]""#));
    let t = EnvironmentTemplate::parse(&xml).unwrap();
    assert_eq!(
        t.extract_dimensions(Level::EnvLevel, &Assignment::new()).unwrap().len(),
        1
    );
    assert!(t
        .extract_dimensions(Level::TaskLevel, &Assignment::new())
        .unwrap()
        .is_empty());
}

#[test]
fn instantiate_lava_creates_tile_slots() {
    let t = EnvironmentTemplate::parse(LAVA).unwrap();
    let mut a = Assignment::new();
    a.insert("grid_size".into(), Value::Int(5));
    a.insert("lava_count".into(), Value::Int(10));
    let cfg = t.instantiate(&a).unwrap();
    assert_eq!(cfg.template().objects.len(), 10);
    assert_eq!(cfg.template().objects[3].id, "lava_3");
    assert_eq!(cfg.env_f64("grid_size"), Some(5.0));
    let back = EnvironmentConfig::from_xml(&cfg.to_xml()).unwrap();
    assert_eq!(back, cfg);
}

#[test]
fn instantiate_with_current_values_is_identity() {
    let xml = env_xml(&format!(
        "{}{}<Agents><Agent id=\"a\" type=\"p\">{}</Agent></Agents>",
        attr_xml("n", "int", "4", true, r#"Range="[1, 9]""#),
        attr_xml("mode", "categorical", "fast", true, r#"Categories="slow, fast""#),
        attr_xml("x", "int", "2", true, r#"Range="[1, n]""#),
    ));
    let t = EnvironmentTemplate::parse(&xml).unwrap();
    let cfg = t.instantiate(&t.current_assignment().unwrap()).unwrap();
    assert_eq!(cfg.0, t);
}

#[test]
fn instantiate_rejects_out_of_range() {
    let t = EnvironmentTemplate::parse(LAVA).unwrap();
    let mut a = Assignment::new();
    a.insert("grid_size".into(), Value::Int(2));
    a.insert("lava_count".into(), Value::Int(0));
    assert!(matches!(
        t.instantiate(&a),
        Err(TemplateError::ConstraintViolation { .. })
    ));
    a.insert("grid_size".into(), Value::Int(3));
    a.insert("lava_count".into(), Value::Int(10));
    assert!(matches!(
        t.instantiate(&a),
        Err(TemplateError::ConstraintViolation { .. })
    ));
}

#[test]
fn instantiate_requires_every_mutable_env_attribute() {
    let t = EnvironmentTemplate::parse(LAVA).unwrap();
    let mut a = Assignment::new();
    a.insert("grid_size".into(), Value::Int(4));
    assert!(matches!(t.instantiate(&a), Err(TemplateError::MissingAssignment(n)) if n == "lava_count"));
    a.insert("lava_count".into(), Value::Int(1));
    a.insert("bogus".into(), Value::Int(1));
    assert!(matches!(t.instantiate(&a), Err(TemplateError::UnknownAssignment(_))));
}

#[test]
fn parse_errors() {
    // malformed
    let e = EnvironmentTemplate::parse("<Environment id=\"e\" type=\"t\">\n<Attribute>").unwrap_err();
    assert!(matches!(e, TemplateError::Xml { .. }), "{e}");
    // unknown tag, reported with its line
    let e = EnvironmentTemplate::parse("<Environment id=\"e\" type=\"t\">\n\n<Bogus/></Environment>").unwrap_err();
    assert!(matches!(e, TemplateError::UnknownTag { line: 3, .. }), "{e}");
    // missing Mutable
    let xml = env_xml(
        r#"<Attribute><Name value="a"/><DataType value="int"/><CurrentValue value="1"/><Constraint Range="[0, 1]"/></Attribute>"#,
    );
    assert!(matches!(
        EnvironmentTemplate::parse(&xml).unwrap_err(),
        TemplateError::MissingChild { child, .. } if child == "Mutable"
    ));
    // unparseable bound
    let xml = env_xml(&attr_xml("a", "int", "1", true, r#"Range="[0, 2 *]""#));
    assert!(matches!(
        EnvironmentTemplate::parse(&xml).unwrap_err(),
        TemplateError::BadConstraint { .. }
    ));
    // both range and categories
    let xml = env_xml(&attr_xml("a", "int", "1", true, r#"Range="[0, 2]" Categories="x, y""#));
    assert!(matches!(
        EnvironmentTemplate::parse(&xml).unwrap_err(),
        TemplateError::BadConstraint { .. }
    ));
    // cyclic reference
    let xml = env_xml(&format!(
        "{}{}",
        attr_xml("a", "int", "1", true, r#"Range="[0, b]""#),
        attr_xml("b", "int", "1", true, r#"Range="[0, a + 1]""#)
    ));
    assert!(matches!(
        EnvironmentTemplate::parse(&xml).unwrap_err(),
        TemplateError::Cycle(_)
    ));
    // unknown reference
    let xml = env_xml(&attr_xml("a", "int", "1", true, r#"Range="[0, zz]""#));
    assert!(matches!(
        EnvironmentTemplate::parse(&xml).unwrap_err(),
        TemplateError::UnknownReference { .. }
    ));
    // default outside its own constraint
    let xml = env_xml(&attr_xml("a", "int", "9", true, r#"Range="[0, 3]""#));
    assert!(matches!(
        EnvironmentTemplate::parse(&xml).unwrap_err(),
        TemplateError::ConstraintViolation { .. }
    ));
}

#[test]
fn inverted_bounds_fail_extraction() {
    let xml = env_xml(&format!(
        "{}<Agents><Agent id=\"a\" type=\"p\">{}</Agent></Agents>",
        attr_xml("n", "int", "4", true, r#"Range="[1, 9]""#),
        attr_xml("x", "int", "2", true, r#"Range="[2, n]""#),
    ));
    let t = EnvironmentTemplate::parse(&xml).unwrap();
    let mut b = Assignment::new();
    b.insert("n".into(), Value::Int(1));
    assert!(matches!(
        t.extract_dimensions(Level::TaskLevel, &b),
        Err(TemplateError::InvertedBounds { .. })
    ));
}

#[test]
fn list_attributes_flatten() {
    let xml = env_xml(&attr_xml(
        "ground",
        "categorical",
        "grass, stump, grass",
        true,
        r#"Categories="grass, stump, pit" NumValues="3""#,
    ));
    let t = EnvironmentTemplate::parse(&xml).unwrap();
    let dims = t.extract_dimensions(Level::EnvLevel, &Assignment::new()).unwrap();
    assert_eq!(dims[0].values_per_sample, 3);
    assert_eq!(dims[0].scalar_names(), ["ground[0]", "ground[1]", "ground[2]"]);
    assert_eq!(t.env_assignment().get("ground[1]"), Some(&Value::Cat("stump".into())));
    // wrong arity
    let xml = env_xml(&attr_xml("g", "int", "1, 2", true, r#"Range="[0, 3]" NumValues="3""#));
    assert!(EnvironmentTemplate::parse(&xml).is_err());
}

#[test]
fn owner_qualified_names_disambiguate() {
    let xml = env_xml(&format!(
        "<Objects><Object id=\"box\" type=\"o\">{}</Object></Objects><Agents><Agent id=\"robot\" type=\"p\">{}</Agent></Agents>",
        attr_xml("x", "int", "1", true, r#"Range="[0, 3]""#),
        attr_xml("x", "int", "2", true, r#"Range="[0, 3]""#),
    ));
    let t = EnvironmentTemplate::parse(&xml).unwrap();
    let names: Vec<_> = t
        .extract_dimensions(Level::TaskLevel, &Assignment::new())
        .unwrap()
        .iter()
        .map(|d| d.qualified_name())
        .collect();
    assert_eq!(names, ["box.x", "robot.x"]);
}

#[test]
fn resolution_is_deterministic() {
    let t = EnvironmentTemplate::parse(LAVA).unwrap();
    let mut b = Assignment::new();
    b.insert("grid_size".into(), Value::Int(9));
    b.insert("lava_count".into(), Value::Int(3));
    let a = t.extract_dimensions(Level::TaskLevel, &b).unwrap();
    let c = t.extract_dimensions(Level::TaskLevel, &b).unwrap();
    assert_eq!(a, c);
}

/// A random template: `n_env` env attributes and a handful of entities,
/// each attribute independently mutable or not.
fn arb_template() -> impl Strategy<Value = (String, usize, usize)> {
    (
        proptest::collection::vec(any::<bool>(), 1..5),
        proptest::collection::vec(proptest::collection::vec(any::<bool>(), 0..4), 0..4),
    )
        .prop_map(|(env_mut, entities)| {
            let mut body = String::new();
            for (i, m) in env_mut.iter().enumerate() {
                body.push_str(&attr_xml(&format!("e{i}"), "int", "3", *m, r#"Range="[1, 10]""#));
            }
            body.push_str("<Objects>");
            for (j, attrs) in entities.iter().enumerate() {
                body.push_str(&format!("<Object id=\"o{j}\" type=\"thing\">"));
                for (k, m) in attrs.iter().enumerate() {
                    if k % 2 == 0 {
                        body.push_str(&attr_xml(&format!("a{k}"), "real", "1.5", *m, r#"Range="[0, e0 * 2]""#));
                    } else {
                        body.push_str(&attr_xml(
                            &format!("a{k}"),
                            "categorical",
                            "u",
                            *m,
                            r#"Categories="u, v""#,
                        ));
                    }
                }
                body.push_str("</Object>");
            }
            body.push_str("</Objects>");
            let env_count = env_mut.iter().filter(|m| **m).count();
            let task_count = entities.iter().flatten().filter(|m| **m).count();
            (env_xml(&body), env_count, task_count)
        })
}

proptest! {
    #[test]
    fn dimension_count_matches_mutable_attributes((xml, env_count, task_count) in arb_template()) {
        let t = EnvironmentTemplate::parse(&xml).unwrap();
        prop_assert_eq!(t.extract_dimensions(Level::EnvLevel, &Assignment::new()).unwrap().len(), env_count);
        prop_assert_eq!(t.extract_dimensions(Level::TaskLevel, &Assignment::new()).unwrap().len(), task_count);
        let back = EnvironmentTemplate::parse(&t.to_xml()).unwrap();
        prop_assert_eq!(back, t);
    }
}
