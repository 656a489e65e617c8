//! XML encoding of templates and configurations.
//!
//! ```xml
//! <Environment id="" type="">
//!   <Attribute> ... </Attribute>
//!   <Objects>
//!     <Object id="" type="" count="">  <!-- count is optional -->
//!       <Attribute> ... </Attribute>
//!     </Object>
//!   </Objects>
//!   <Agents>
//!     <Agent id="" type=""> <Attribute> ... </Attribute> </Agent>
//!   </Agents>
//! </Environment>
//!
//! <Attribute>
//!   <Name value=""/>
//!   <Description value=""/>
//!   <DataType value=""/>
//!   <CurrentValue value=""/>
//!   <Mutable value=""/>
//!   <Constraint Range="" Categories="" NumValues=""/>
//! </Attribute>
//! ```

use std::fmt::Write as _;

use quick_xml::escape::escape;
use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use super::{AttributeSpec, Constraint, DataType, Entity, EnvironmentTemplate, Expr, TemplateError, Value};

/// Minimal element tree; text content is ignored.
#[derive(Debug)]
pub(crate) struct Element {
    pub name: String,
    pub attrs: Vec<(String, String)>,
    pub children: Vec<Element>,
    pub line: usize,
}

impl Element {
    pub fn attr(&self, key: &str) -> Option<&str> {
        self.attrs.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    fn require_attr(&self, key: &str) -> Result<&str, TemplateError> {
        self.attr(key).ok_or_else(|| TemplateError::MissingXmlAttr {
            line: self.line,
            tag: self.name.clone(),
            attr: key.to_string(),
        })
    }

    fn child(&self, name: &str) -> Option<&Element> {
        self.children.iter().find(|c| c.name == name)
    }

    fn require_child(&self, name: &str) -> Result<&Element, TemplateError> {
        self.child(name).ok_or_else(|| TemplateError::MissingChild {
            line: self.line,
            parent: self.name.clone(),
            child: name.to_string(),
        })
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    let end = offset.min(text.len());
    text.as_bytes()[..end].iter().filter(|&&b| b == b'\n').count() + 1
}

fn open_element(text: &str, e: &BytesStart<'_>, offset: usize) -> Result<Element, TemplateError> {
    let line = line_of(text, offset);
    let name = String::from_utf8_lossy(e.name().as_ref()).into_owned();
    let mut attrs = Vec::new();
    for a in e.attributes() {
        let a = a.map_err(|err| TemplateError::Xml {
            line,
            message: err.to_string(),
        })?;
        let key = String::from_utf8_lossy(a.key.as_ref()).into_owned();
        let value = a
            .unescape_value()
            .map_err(|err| TemplateError::Xml {
                line,
                message: err.to_string(),
            })?
            .into_owned();
        attrs.push((key, value));
    }
    Ok(Element {
        name,
        attrs,
        children: Vec::new(),
        line,
    })
}

/// Parses a document into an element tree rooted at its single top-level
/// element.
pub(crate) fn parse_tree(text: &str) -> Result<Element, TemplateError> {
    let mut reader = Reader::from_str(text);
    reader.config_mut().trim_text(true);
    let mut stack: Vec<Element> = Vec::new();
    let mut root: Option<Element> = None;
    loop {
        let before = reader.buffer_position() as usize;
        // trimmed whitespace is consumed with the event; point at the tag itself
        let offset = text
            .get(before..)
            .and_then(|t| t.find('<'))
            .map_or(before, |i| before + i);
        let event = reader.read_event().map_err(|err| TemplateError::Xml {
            line: line_of(text, reader.buffer_position() as usize),
            message: err.to_string(),
        })?;
        match event {
            Event::Start(e) => stack.push(open_element(text, &e, offset)?),
            Event::Empty(e) => {
                let el = open_element(text, &e, offset)?;
                match stack.last_mut() {
                    Some(parent) => parent.children.push(el),
                    None if root.is_none() => root = Some(el),
                    None => {
                        return Err(TemplateError::Xml {
                            line: el.line,
                            message: "multiple root elements".into(),
                        })
                    }
                }
            }
            Event::End(_) => {
                let el = stack.pop().ok_or_else(|| TemplateError::Xml {
                    line: line_of(text, offset),
                    message: "unbalanced closing tag".into(),
                })?;
                match stack.last_mut() {
                    Some(parent) => parent.children.push(el),
                    None if root.is_none() => root = Some(el),
                    None => {
                        return Err(TemplateError::Xml {
                            line: el.line,
                            message: "multiple root elements".into(),
                        })
                    }
                }
            }
            Event::Text(t) => {
                let raw = String::from_utf8_lossy(t.as_ref()).into_owned();
                if !raw.trim().is_empty() {
                    return Err(TemplateError::Xml {
                        line: line_of(text, offset),
                        message: format!("unexpected text {:?}", raw.trim()),
                    });
                }
            }
            Event::Eof => break,
            _ => {}
        }
    }
    if let Some(open) = stack.last() {
        return Err(TemplateError::Xml {
            line: open.line,
            message: format!("unclosed <{}>", open.name),
        });
    }
    root.ok_or(TemplateError::Xml {
        line: 1,
        message: "empty document".into(),
    })
}

fn unknown(el: &Element) -> TemplateError {
    TemplateError::UnknownTag {
        line: el.line,
        tag: el.name.clone(),
    }
}

pub fn parse_template(xml_text: &str) -> Result<EnvironmentTemplate, TemplateError> {
    let root = parse_tree(xml_text)?;
    let template = template_from_element(&root)?;
    template.validate()?;
    Ok(template)
}

pub(crate) fn template_from_element(root: &Element) -> Result<EnvironmentTemplate, TemplateError> {
    if root.name != "Environment" {
        return Err(unknown(root));
    }
    let mut template = EnvironmentTemplate {
        env_id: root.require_attr("id")?.to_string(),
        env_type: root.require_attr("type")?.to_string(),
        env_attributes: Vec::new(),
        objects: Vec::new(),
        agents: Vec::new(),
    };
    for child in &root.children {
        match child.name.as_str() {
            "Attribute" => template.env_attributes.push(parse_attribute(child)?),
            "Objects" => {
                for obj in &child.children {
                    if obj.name != "Object" {
                        return Err(unknown(obj));
                    }
                    template.objects.push(parse_entity(obj)?);
                }
            }
            "Agents" => {
                for agent in &child.children {
                    if agent.name != "Agent" {
                        return Err(unknown(agent));
                    }
                    template.agents.push(parse_entity(agent)?);
                }
            }
            _ => return Err(unknown(child)),
        }
    }
    Ok(template)
}

fn parse_entity(el: &Element) -> Result<Entity, TemplateError> {
    let count = match el.attr("count").map(str::trim).filter(|s| !s.is_empty()) {
        Some(src) => Some(Expr::parse(src).map_err(|e| TemplateError::InvalidValue {
            line: el.line,
            what: format!("count of {}: {e}", el.name),
            value: src.to_string(),
        })?),
        None => None,
    };
    let mut attributes = Vec::new();
    for child in &el.children {
        if child.name != "Attribute" {
            return Err(unknown(child));
        }
        attributes.push(parse_attribute(child)?);
    }
    Ok(Entity {
        id: el.require_attr("id")?.to_string(),
        kind: el.require_attr("type")?.to_string(),
        count,
        attributes,
    })
}

const ATTRIBUTE_CHILDREN: [&str; 6] = [
    "Name",
    "Description",
    "DataType",
    "CurrentValue",
    "Mutable",
    "Constraint",
];

/// Splits `[lo, hi]` at its top-level comma.
fn split_range(src: &str) -> Option<(&str, &str)> {
    let inner = src.trim().strip_prefix('[')?.strip_suffix(']')?;
    let mut depth = 0i32;
    let mut split = None;
    for (i, c) in inner.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                if split.is_some() {
                    return None;
                }
                split = Some(i);
            }
            _ => {}
        }
    }
    let i = split?;
    Some((inner[..i].trim(), inner[i + 1..].trim()))
}

fn split_list(src: &str) -> Vec<&str> {
    let src = src.trim();
    let src = src.strip_prefix('[').and_then(|s| s.strip_suffix(']')).unwrap_or(src);
    src.split(',').map(str::trim).filter(|s| !s.is_empty()).collect()
}

fn parse_attribute(el: &Element) -> Result<AttributeSpec, TemplateError> {
    for child in &el.children {
        if !ATTRIBUTE_CHILDREN.contains(&child.name.as_str()) {
            return Err(unknown(child));
        }
    }
    let value_of = |tag: &str| -> Result<&str, TemplateError> { el.require_child(tag)?.require_attr("value") };
    let name = value_of("Name")?.trim().to_string();
    if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return Err(TemplateError::InvalidValue {
            line: el.line,
            what: "attribute name".into(),
            value: name,
        });
    }
    let description = match el.child("Description") {
        Some(d) => d.attr("value").unwrap_or_default().to_string(),
        None => String::new(),
    };
    let dt_src = value_of("DataType")?;
    let data_type = DataType::parse(dt_src).ok_or_else(|| TemplateError::InvalidValue {
        line: el.line,
        what: format!("DataType of {name}"),
        value: dt_src.to_string(),
    })?;
    let mutable = match value_of("Mutable")?.trim() {
        "true" => true,
        "false" => false,
        other => {
            return Err(TemplateError::InvalidValue {
                line: el.line,
                what: format!("Mutable of {name}"),
                value: other.to_string(),
            })
        }
    };
    let c = el.require_child("Constraint")?;
    let bad = |message: String| TemplateError::BadConstraint {
        line: c.line,
        attribute: name.clone(),
        message,
    };
    let num_values = match c.attr("NumValues").map(str::trim).filter(|s| !s.is_empty()) {
        Some(s) => s
            .parse::<usize>()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| bad(format!("NumValues {s:?} is not a positive integer")))?,
        None => 1,
    };
    let range = c.attr("Range").map(str::trim).filter(|s| !s.is_empty());
    let categories = c.attr("Categories").map(str::trim).filter(|s| !s.is_empty());
    let constraint = match (range, categories) {
        (Some(_), Some(_)) => return Err(bad("both Range and Categories are set".into())),
        (None, None) => return Err(bad("neither Range nor Categories is set".into())),
        (Some(r), None) => {
            if data_type == DataType::Categorical {
                return Err(bad("Range on a categorical attribute".into()));
            }
            let (lo, hi) = split_range(r).ok_or_else(|| bad(format!("range {r:?} is not of the form [lo, hi]")))?;
            let lo = Expr::parse(lo).map_err(|e| bad(format!("lower bound {lo:?}: {e}")))?;
            let hi = Expr::parse(hi).map_err(|e| bad(format!("upper bound {hi:?}: {e}")))?;
            Constraint::Range { lo, hi }
        }
        (None, Some(cats)) => {
            if data_type != DataType::Categorical {
                return Err(bad("Categories on a numeric attribute".into()));
            }
            let labels: Vec<String> = split_list(cats).into_iter().map(String::from).collect();
            if labels.is_empty() {
                return Err(bad("empty category list".into()));
            }
            for (i, l) in labels.iter().enumerate() {
                if labels[..i].contains(l) {
                    return Err(bad(format!("duplicate category {l:?}")));
                }
            }
            Constraint::Categories(labels)
        }
    };
    let cv_src = value_of("CurrentValue")?;
    let tokens = if num_values > 1 {
        split_list(cv_src)
    } else {
        vec![cv_src.trim()]
    };
    if tokens.len() != num_values {
        return Err(TemplateError::InvalidValue {
            line: el.line,
            what: format!("CurrentValue of {name} (expected {num_values} values)"),
            value: cv_src.to_string(),
        });
    }
    let current_value = tokens
        .iter()
        .map(|t| {
            data_type.parse_value(t).ok_or_else(|| TemplateError::InvalidValue {
                line: el.line,
                what: format!("CurrentValue of {name}"),
                value: t.to_string(),
            })
        })
        .collect::<Result<Vec<Value>, _>>()?;
    Ok(AttributeSpec {
        name,
        description,
        data_type,
        current_value,
        mutable,
        constraint,
        num_values,
    })
}

fn write_attribute(out: &mut String, a: &AttributeSpec, indent: &str) {
    let value = a
        .current_value
        .iter()
        .map(Value::to_string)
        .collect::<Vec<_>>()
        .join(", ");
    let (range, categories) = match &a.constraint {
        Constraint::Range { lo, hi } => (format!("[{lo}, {hi}]"), String::new()),
        Constraint::Categories(labels) => (String::new(), labels.join(", ")),
    };
    let _ = writeln!(out, "{indent}<Attribute>");
    let _ = writeln!(out, "{indent}  <Name value=\"{}\"/>", escape(a.name.as_str()));
    let _ = writeln!(
        out,
        "{indent}  <Description value=\"{}\"/>",
        escape(a.description.as_str())
    );
    let _ = writeln!(out, "{indent}  <DataType value=\"{}\"/>", a.data_type.as_str());
    let _ = writeln!(out, "{indent}  <CurrentValue value=\"{}\"/>", escape(value.as_str()));
    let _ = writeln!(out, "{indent}  <Mutable value=\"{}\"/>", a.mutable);
    let _ = writeln!(
        out,
        "{indent}  <Constraint Range=\"{}\" Categories=\"{}\" NumValues=\"{}\"/>",
        escape(range.as_str()),
        escape(categories.as_str()),
        a.num_values
    );
    let _ = writeln!(out, "{indent}</Attribute>");
}

fn write_entity(out: &mut String, tag: &str, e: &Entity, indent: &str) {
    let count = match &e.count {
        Some(c) => format!(" count=\"{}\"", escape(c.to_string().as_str())),
        None => String::new(),
    };
    let _ = writeln!(
        out,
        "{indent}<{tag} id=\"{}\" type=\"{}\"{count}>",
        escape(e.id.as_str()),
        escape(e.kind.as_str())
    );
    let inner = format!("{indent}  ");
    for a in &e.attributes {
        write_attribute(out, a, &inner);
    }
    let _ = writeln!(out, "{indent}</{tag}>");
}

pub(crate) fn write_environment(out: &mut String, t: &EnvironmentTemplate, indent: &str) {
    let _ = writeln!(
        out,
        "{indent}<Environment id=\"{}\" type=\"{}\">",
        escape(t.env_id.as_str()),
        escape(t.env_type.as_str())
    );
    let i1 = format!("{indent}  ");
    let i2 = format!("{indent}    ");
    for a in &t.env_attributes {
        write_attribute(out, a, &i1);
    }
    let _ = writeln!(out, "{i1}<Objects>");
    for o in &t.objects {
        write_entity(out, "Object", o, &i2);
    }
    let _ = writeln!(out, "{i1}</Objects>");
    let _ = writeln!(out, "{i1}<Agents>");
    for a in &t.agents {
        write_entity(out, "Agent", a, &i2);
    }
    let _ = writeln!(out, "{i1}</Agents>");
    let _ = writeln!(out, "{indent}</Environment>");
}

pub fn serialize_template(t: &EnvironmentTemplate) -> String {
    let mut out = String::new();
    write_environment(&mut out, t, "");
    out
}

/// Splits a `<Task>` document into its id, configuration id, seed and the
/// start and goal environments.
pub(crate) fn parse_task_documents(
    text: &str,
) -> Result<(String, String, u64, EnvironmentTemplate, EnvironmentTemplate), TemplateError> {
    let root = parse_tree(text)?;
    if root.name != "Task" {
        return Err(TemplateError::UnknownTag {
            line: root.line,
            tag: root.name.clone(),
        });
    }
    let id = root.require_attr("id")?.to_string();
    let config = root.require_attr("config")?.to_string();
    let seed_text = root.attr("seed").unwrap_or("0");
    let seed = seed_text.parse().map_err(|_| TemplateError::InvalidValue {
        line: root.line,
        what: "task seed".into(),
        value: seed_text.to_string(),
    })?;
    let env = |part: &str| -> Result<EnvironmentTemplate, TemplateError> {
        let p = root.require_child(part)?;
        template_from_element(p.require_child("Environment")?)
    };
    Ok((id, config, seed, env("Start")?, env("Goal")?))
}
