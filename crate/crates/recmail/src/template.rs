//! Parsing of tag-annotated email templates into the component library.
//!
//! A template file is a single XML-like document rooted at
//! `<template audience="follower|non_follower" company="...">`. Child
//! elements carry registered component names and may nest. Parsing walks
//! the tree recursively: each child element's reduced content becomes a
//! library entry for that component, and the child is replaced in its
//! parent by the slot marker `[% name %]`. The root's residual content
//! becomes a follower or non-follower skeleton entry.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ComponentKind, SlotMarker};

pub const SKELETON_FOLLOWER: &str = "skeleton_follower";
pub const SKELETON_NON_FOLLOWER: &str = "skeleton_non_follower";

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("unknown tag <{0}>")]
    UnknownTag(String),
    #[error("malformed markup at byte {position}: {reason}")]
    MalformedMarkup { position: usize, reason: String },
    #[error("template {id}: {source}")]
    InTemplate {
        id: String,
        #[source]
        source: Box<TemplateError>,
    },
    #[error("no general template yields a skeleton entry")]
    NoSkeletons,
    #[error("invalid library: {0}")]
    InvalidLibrary(String),
    #[error("corrupt library: {0}")]
    CorruptLibrary(String),
}

/// Which skeleton a general template contributes to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Audience {
    Follower,
    #[default]
    NonFollower,
}

impl Audience {
    pub fn skeleton_key(self) -> &'static str {
        match self {
            Audience::Follower => SKELETON_FOLLOWER,
            Audience::NonFollower => SKELETON_NON_FOLLOWER,
        }
    }
}

impl fmt::Display for Audience {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Audience::Follower => write!(f, "follower"),
            Audience::NonFollower => write!(f, "non_follower"),
        }
    }
}

/// One annotated template document.
#[derive(Debug, Clone)]
pub struct AnnotatedTemplate {
    pub id: String,
    /// Present on company-specific templates.
    pub company: Option<String>,
    pub audience: Audience,
    pub markup: String,
}

impl AnnotatedTemplate {
    /// Parses a template document from its file contents. The root
    /// element must be `<template>`; `audience` and `company` are read
    /// from its attributes.
    pub fn from_markup(id: impl Into<String>, markup: &str) -> Result<Self, TemplateError> {
        let root = parse_tree(markup)?;
        let audience = match root.attrs.get("audience").map(String::as_str) {
            Some("follower") => Audience::Follower,
            Some("non_follower") | None => Audience::NonFollower,
            Some(other) => {
                return Err(TemplateError::MalformedMarkup {
                    position: 0,
                    reason: format!("unknown audience {other:?}"),
                })
            }
        };
        let company = root.attrs.get("company").cloned().filter(|c| !c.is_empty());
        Ok(AnnotatedTemplate {
            id: id.into(),
            company,
            audience,
            markup: markup.to_string(),
        })
    }
}

/// A named component with its kind, as registered for the corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegisteredComponent {
    pub name: String,
    pub kind: ComponentKind,
    #[serde(default)]
    pub description: String,
}

/// The inventory of component names the parser accepts.
#[derive(Debug, Clone)]
pub struct ComponentRegistry {
    components: Vec<RegisteredComponent>,
    kinds: BTreeMap<String, ComponentKind>,
}

impl ComponentRegistry {
    pub fn new(components: Vec<RegisteredComponent>) -> Result<Self, TemplateError> {
        let mut kinds = BTreeMap::new();
        for c in &components {
            if kinds.insert(c.name.clone(), c.kind).is_some() {
                return Err(TemplateError::InvalidLibrary(format!(
                    "duplicate component name {:?}",
                    c.name
                )));
            }
        }
        Ok(ComponentRegistry { components, kinds })
    }

    /// The fixture inventory shipped with the crate. Covers all three
    /// component kinds with realistic nesting; extensible via
    /// [`ComponentRegistry::from_json`].
    pub fn default_set() -> Self {
        let reg = |name: &str, kind: ComponentKind, description: &str| RegisteredComponent {
            name: name.to_string(),
            kind,
            description: description.to_string(),
        };
        use ComponentKind::*;
        ComponentRegistry::new(vec![
            reg(SKELETON_FOLLOWER, Functional, "top-level structure for followers"),
            reg(SKELETON_NON_FOLLOWER, Functional, "top-level structure for non-followers"),
            reg("greeting", Functional, "salutation line"),
            reg("intro", Functional, "opening sentence"),
            reg("job_mention", Functional, "sentence introducing the job"),
            reg("follower_note", Functional, "mentions that the candidate follows the company"),
            reg("cta", Functional, "call to action"),
            reg("signature", Functional, "sign-off block"),
            reg("motivation", CaseSpecific, "why the candidate fits the job"),
            reg("matched_skills", CaseSpecific, "joined list of matched skills"),
            reg("matched_occupations", CaseSpecific, "joined list of matched occupations"),
            reg("candidate_name", AutoFill, "candidate's name"),
            reg("job_title", AutoFill, "job title"),
            reg("company_name", AutoFill, "company name"),
            reg("apply_link", AutoFill, "application URL"),
            reg("recruiter_name", AutoFill, "recruiter's name"),
        ])
        .expect("default registry is valid")
    }

    /// Loads a registry from a JSON array of `{name, kind, description}`.
    pub fn from_json(raw: &str) -> Result<Self, TemplateError> {
        let components: Vec<RegisteredComponent> = serde_json::from_str(raw)
            .map_err(|e| TemplateError::InvalidLibrary(format!("registry: {e}")))?;
        ComponentRegistry::new(components)
    }

    pub fn kind_of(&self, name: &str) -> Option<ComponentKind> {
        self.kinds.get(name).copied()
    }

    pub fn components(&self) -> &[RegisteredComponent] {
        &self.components
    }
}

/// The email component library: component name to alternative contents,
/// plus whole templates for companies that require their own.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentLibrary {
    pub entries: BTreeMap<String, Vec<String>>,
    pub kinds: BTreeMap<String, ComponentKind>,
    pub company_templates: BTreeMap<String, Vec<String>>,
}

impl ComponentLibrary {
    pub fn contents_of(&self, name: &str) -> Option<&[String]> {
        self.entries.get(name).map(Vec::as_slice)
    }

    pub fn kind_of(&self, name: &str) -> Option<ComponentKind> {
        self.kinds.get(name).copied()
    }

    /// Checks the structural invariants: skeletons present, markers
    /// resolve, entry lists sorted and duplicate-free.
    pub fn validate(&self) -> Result<(), TemplateError> {
        for key in [SKELETON_FOLLOWER, SKELETON_NON_FOLLOWER] {
            if self.entries.get(key).is_none_or(|v| v.is_empty()) {
                return Err(TemplateError::InvalidLibrary(format!("missing {key} entries")));
            }
        }
        let all_contents = self
            .entries
            .values()
            .chain(self.company_templates.values());
        for contents in all_contents {
            let mut seen = std::collections::BTreeSet::new();
            for (i, content) in contents.iter().enumerate() {
                if i > 0 && contents[i - 1] > *content {
                    return Err(TemplateError::InvalidLibrary("entries not sorted".into()));
                }
                if !seen.insert(content) {
                    return Err(TemplateError::InvalidLibrary("duplicate entry".into()));
                }
                for marker in SlotMarker::find_all(content) {
                    let Some(kind) = self.kinds.get(marker) else {
                        return Err(TemplateError::InvalidLibrary(format!(
                            "marker [% {marker} %] names an unregistered component"
                        )));
                    };
                    let has_contents = self.entries.get(marker).is_some_and(|v| !v.is_empty());
                    if *kind == ComponentKind::Functional && !has_contents {
                        return Err(TemplateError::InvalidLibrary(format!(
                            "functional component {marker:?} has no contents"
                        )));
                    }
                }
            }
        }
        // Case-specific slot templates carry at most two `{}` slots.
        for (name, contents) in &self.entries {
            if self.kinds.get(name) == Some(&ComponentKind::CaseSpecific) {
                for content in contents {
                    let slots = content.matches("{}").count();
                    if slots > 2 {
                        return Err(TemplateError::InvalidLibrary(format!(
                            "{name:?} entry has {slots} '{{}}' slots, at most 2 supported"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Markup tree
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub(crate) struct Element {
    pub name: String,
    pub attrs: BTreeMap<String, String>,
    pub children: Vec<Node>,
}

#[derive(Debug)]
pub(crate) enum Node {
    Text(String),
    Element(Element),
}

fn is_name_char(c: char) -> bool {
    c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_'
}

fn malformed(position: usize, reason: impl Into<String>) -> TemplateError {
    TemplateError::MalformedMarkup {
        position,
        reason: reason.into(),
    }
}

/// Parses markup into a tree rooted at the single top-level element.
/// Attributes are accepted on the root only.
pub(crate) fn parse_tree(markup: &str) -> Result<Element, TemplateError> {
    let mut pos = 0;
    let bytes = markup.as_bytes();
    // leading whitespace before the root tag
    while pos < bytes.len() && (bytes[pos] as char).is_whitespace() {
        pos += 1;
    }
    if pos >= bytes.len() || bytes[pos] != b'<' {
        return Err(malformed(pos, "expected root element"));
    }
    let (root_name, attrs, body_start) = parse_open_tag(markup, pos, true)?;
    let mut stack: Vec<Element> = vec![Element {
        name: root_name,
        attrs,
        children: Vec::new(),
    }];
    let mut cursor = body_start;
    let mut text_start = cursor;
    while cursor < markup.len() {
        if markup[cursor..].starts_with('<') {
            if text_start < cursor {
                let text = &markup[text_start..cursor];
                stack
                    .last_mut()
                    .unwrap()
                    .children
                    .push(Node::Text(text.to_string()));
            }
            if markup[cursor..].starts_with("</") {
                let end = markup[cursor..]
                    .find('>')
                    .map(|i| cursor + i)
                    .ok_or_else(|| malformed(cursor, "unterminated close tag"))?;
                let name = &markup[cursor + 2..end];
                let element = stack.pop().unwrap();
                if element.name != name {
                    return Err(malformed(
                        cursor,
                        format!("</{name}> does not close <{}>", element.name),
                    ));
                }
                if stack.is_empty() {
                    let rest = markup[end + 1..].trim();
                    if !rest.is_empty() {
                        return Err(malformed(end + 1, "content after root close tag"));
                    }
                    return Ok(element);
                }
                stack.last_mut().unwrap().children.push(Node::Element(element));
                cursor = end + 1;
            } else {
                let (name, attrs, after) = parse_open_tag(markup, cursor, false)?;
                stack.push(Element {
                    name,
                    attrs,
                    children: Vec::new(),
                });
                cursor = after;
            }
            text_start = cursor;
        } else {
            cursor += markup[cursor..].chars().next().unwrap().len_utf8();
        }
    }
    Err(malformed(
        markup.len(),
        format!("unclosed <{}>", stack.last().unwrap().name),
    ))
}

/// Parses `<name>` or, when `allow_attrs`, `<name key="value" ...>`.
/// Returns (name, attrs, position after `>`).
fn parse_open_tag(
    markup: &str,
    start: usize,
    allow_attrs: bool,
) -> Result<(String, BTreeMap<String, String>, usize), TemplateError> {
    let end = markup[start..]
        .find('>')
        .map(|i| start + i)
        .ok_or_else(|| malformed(start, "unterminated tag"))?;
    let inner = &markup[start + 1..end];
    let name: String = inner.chars().take_while(|c| is_name_char(*c)).collect();
    if name.is_empty() || !name.chars().next().unwrap().is_ascii_lowercase() {
        return Err(malformed(start, format!("invalid tag name in {inner:?}")));
    }
    let mut attrs = BTreeMap::new();
    let mut rest = inner[name.len()..].trim_start();
    while !rest.is_empty() {
        if !allow_attrs {
            return Err(malformed(start, "attributes are only allowed on the root"));
        }
        let Some((key, after_eq)) = rest.split_once('=') else {
            return Err(malformed(start, format!("bad attribute {rest:?}")));
        };
        let after_eq = after_eq
            .strip_prefix('"')
            .ok_or_else(|| malformed(start, format!("unquoted attribute value for {key:?}")))?;
        let Some((value, tail)) = after_eq.split_once('"') else {
            return Err(malformed(start, format!("unterminated attribute value for {key:?}")));
        };
        attrs.insert(key.trim().to_string(), value.to_string());
        rest = tail.trim_start();
    }
    Ok((name, attrs, end + 1))
}

// ---------------------------------------------------------------------------
// Recursive parse into (component, content) entries
// ---------------------------------------------------------------------------

/// Reduces `element`: recursively emits an entry per descendant element
/// and returns the element's residual content with children replaced by
/// their markers.
fn reduce(
    element: &Element,
    registry: &ComponentRegistry,
    out: &mut Vec<(String, String)>,
) -> Result<String, TemplateError> {
    let mut content = String::new();
    for child in &element.children {
        match child {
            Node::Text(text) => content.push_str(text),
            Node::Element(child_element) => {
                if registry.kind_of(&child_element.name).is_none() {
                    return Err(TemplateError::UnknownTag(child_element.name.clone()));
                }
                let child_content = reduce(child_element, registry, out)?;
                out.push((child_element.name.clone(), child_content.trim().to_string()));
                content.push_str(&SlotMarker::new(&child_element.name).render());
            }
        }
    }
    Ok(content)
}

/// Parses one general template into its component entries. The last
/// entry is the skeleton for the template's audience.
pub fn parse_template(
    template: &AnnotatedTemplate,
    registry: &ComponentRegistry,
) -> Result<Vec<(String, String)>, TemplateError> {
    let in_template = |e: TemplateError| TemplateError::InTemplate {
        id: template.id.clone(),
        source: Box::new(e),
    };
    let root = parse_tree(&template.markup).map_err(in_template)?;
    let mut entries = Vec::new();
    let skeleton = reduce(&root, registry, &mut entries).map_err(in_template)?;
    entries.push((
        template.audience.skeleton_key().to_string(),
        skeleton.trim().to_string(),
    ));
    Ok(entries)
}

/// Renders a company template body: functional elements are inlined in
/// place, case-specific and auto-fill elements become markers so that
/// slot filling still runs on company templates.
fn flatten(element: &Element, registry: &ComponentRegistry) -> Result<String, TemplateError> {
    let mut content = String::new();
    for child in &element.children {
        match child {
            Node::Text(text) => content.push_str(text),
            Node::Element(child_element) => match registry.kind_of(&child_element.name) {
                None => return Err(TemplateError::UnknownTag(child_element.name.clone())),
                Some(ComponentKind::Functional) => {
                    content.push_str(&flatten(child_element, registry)?)
                }
                Some(ComponentKind::CaseSpecific) | Some(ComponentKind::AutoFill) => {
                    content.push_str(&SlotMarker::new(&child_element.name).render())
                }
            },
        }
    }
    Ok(content)
}

/// Normalized form for company-name lookups: lowercase, whitespace
/// collapsed.
pub fn normalize_company(name: &str) -> String {
    name.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Builds the component library from a template corpus. General
/// templates contribute per-component entries; company templates are
/// stored whole under the normalized company name.
pub fn build_library(
    templates: &[AnnotatedTemplate],
    registry: &ComponentRegistry,
) -> Result<ComponentLibrary, TemplateError> {
    let mut entries: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut company_templates: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for template in templates {
        match &template.company {
            Some(company) => {
                let in_template = |e: TemplateError| TemplateError::InTemplate {
                    id: template.id.clone(),
                    source: Box::new(e),
                };
                let root = parse_tree(&template.markup).map_err(in_template)?;
                let body = flatten(&root, registry).map_err(in_template)?;
                company_templates
                    .entry(normalize_company(company))
                    .or_default()
                    .push(body.trim().to_string());
            }
            None => {
                for (name, content) in parse_template(template, registry)? {
                    entries.entry(name).or_default().push(content);
                }
            }
        }
    }
    for contents in entries.values_mut().chain(company_templates.values_mut()) {
        contents.sort();
        contents.dedup();
    }
    if !entries.contains_key(SKELETON_FOLLOWER) && !entries.contains_key(SKELETON_NON_FOLLOWER) {
        return Err(TemplateError::NoSkeletons);
    }
    // A corpus usually only covers one audience at fixture scale; the
    // missing skeleton falls back to the other so both branches stay
    // selectable.
    for (missing, other) in [
        (SKELETON_FOLLOWER, SKELETON_NON_FOLLOWER),
        (SKELETON_NON_FOLLOWER, SKELETON_FOLLOWER),
    ] {
        if !entries.contains_key(missing) {
            let fallback = entries.get(other).cloned().unwrap();
            entries.insert(missing.to_string(), fallback);
        }
    }
    let kinds = registry
        .components()
        .iter()
        .map(|c| (c.name.clone(), c.kind))
        .collect();
    let library = ComponentLibrary {
        entries,
        kinds,
        company_templates,
    };
    library.validate()?;
    Ok(library)
}

/// Serializes a library to canonical bytes: JSON with sorted keys and
/// sorted entry lists, so equal libraries serialize identically.
pub fn save_library(library: &ComponentLibrary) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(library).expect("library serializes");
    bytes.push(b'\n');
    bytes
}

/// Inverse of [`save_library`].
pub fn load_library(bytes: &[u8]) -> Result<ComponentLibrary, TemplateError> {
    let library: ComponentLibrary = serde_json::from_slice(bytes)
        .map_err(|e| TemplateError::CorruptLibrary(e.to_string()))?;
    library
        .validate()
        .map_err(|e| TemplateError::CorruptLibrary(e.to_string()))?;
    Ok(library)
}
