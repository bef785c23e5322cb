//! Causal DAG data model, its line-oriented text format, and structural validation.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("cycle detected: {}", .0.join(" -> "))]
    Cycle(Vec<String>),
    #[error("duplicate variable `{0}`")]
    DuplicateVariable(String),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("invalid variable name `{0}`")]
    InvalidName(String),
    #[error("edge {0} -> {1} already exists")]
    DuplicateEdge(String, String),
    #[error("edge {0} -> {1} does not exist")]
    MissingEdge(String, String),
    #[error("self-loop on `{0}`")]
    SelfLoop(String),
    #[error("`{0}` must name an observed variable")]
    RoleNotObserved(String),
    #[error("DAG is invalid: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariableKind {
    Observed,
    Latent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub kind: VariableKind,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub from: String,
    pub to: String,
}

impl Edge {
    pub fn new(from: impl Into<String>, to: impl Into<String>) -> Self {
        Edge {
            from: from.into(),
            to: to.into(),
        }
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -> {}", self.from, self.to)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditKind {
    AddEdge,
    RemoveEdge,
    ReverseEdge,
}

/// A single structural change. For `ReverseEdge`, `from -> to` names the edge
/// as it exists before the edit.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DagEdit {
    pub kind: EditKind,
    pub from: String,
    pub to: String,
    #[serde(default)]
    pub rationale: String,
}

impl DagEdit {
    pub fn add(from: impl Into<String>, to: impl Into<String>) -> Self {
        Self::new(EditKind::AddEdge, from, to)
    }

    pub fn remove(from: impl Into<String>, to: impl Into<String>) -> Self {
        Self::new(EditKind::RemoveEdge, from, to)
    }

    pub fn reverse(from: impl Into<String>, to: impl Into<String>) -> Self {
        Self::new(EditKind::ReverseEdge, from, to)
    }

    fn new(kind: EditKind, from: impl Into<String>, to: impl Into<String>) -> Self {
        DagEdit {
            kind,
            from: from.into(),
            to: to.into(),
            rationale: String::new(),
        }
    }

    pub fn with_rationale(mut self, rationale: impl Into<String>) -> Self {
        self.rationale = rationale.into();
        self
    }
}

impl fmt::Display for DagEdit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            EditKind::AddEdge => write!(f, "add {} -> {}", self.from, self.to),
            EditKind::RemoveEdge => write!(f, "remove {} -> {}", self.from, self.to),
            EditKind::ReverseEdge => {
                write!(f, "reverse {} -> {} into {} -> {}", self.from, self.to, self.to, self.from)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Parents,
    Children,
    Ancestors,
    Descendants,
}

/// One violated structural invariant, as reported by [`validate_dag`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub message: String,
    pub variables: Vec<String>,
}

/// A causal DAG. Construct through [`CausalDag::new`], [`CausalDag::builder`] or
/// [`parse_dag`], all of which validate; the value is immutable afterwards.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CausalDag {
    variables: BTreeMap<String, Variable>,
    edges: BTreeSet<Edge>,
    exposure: Option<String>,
    outcome: Option<String>,
    parents: BTreeMap<String, BTreeSet<String>>,
    children: BTreeMap<String, BTreeSet<String>>,
}

/// Unvalidated DAG under construction.
#[derive(Debug, Clone, Default)]
pub struct DagBuilder {
    variables: BTreeMap<String, Variable>,
    edges: BTreeSet<Edge>,
    exposure: Option<String>,
    outcome: Option<String>,
}

impl DagBuilder {
    pub fn variable(mut self, name: &str, kind: VariableKind) -> Self {
        self.variables
            .entry(name.to_string())
            .and_modify(|v| v.kind = kind)
            .or_insert_with(|| Variable {
                name: name.to_string(),
                kind,
                description: String::new(),
            });
        self
    }

    pub fn edge(mut self, from: &str, to: &str) -> Self {
        for n in [from, to] {
            if !self.variables.contains_key(n) {
                self = self.variable(n, VariableKind::Observed);
            }
        }
        self.edges.insert(Edge::new(from, to));
        self
    }

    pub fn exposure(mut self, name: &str) -> Self {
        self.exposure = Some(name.to_string());
        self
    }

    pub fn outcome(mut self, name: &str) -> Self {
        self.outcome = Some(name.to_string());
        self
    }

    pub fn build(self) -> Result<CausalDag, GraphError> {
        CausalDag::new(
            self.variables.into_values().collect(),
            self.edges.into_iter().collect(),
            self.exposure,
            self.outcome,
        )
    }
}

pub(crate) fn valid_name(name: &str) -> bool {
    !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl CausalDag {
    pub fn builder() -> DagBuilder {
        DagBuilder::default()
    }

    pub fn empty() -> Self {
        CausalDag {
            variables: BTreeMap::new(),
            edges: BTreeSet::new(),
            exposure: None,
            outcome: None,
            parents: BTreeMap::new(),
            children: BTreeMap::new(),
        }
    }

    pub fn new(
        variables: Vec<Variable>,
        edges: Vec<Edge>,
        exposure: Option<String>,
        outcome: Option<String>,
    ) -> Result<Self, GraphError> {
        let mut vars = BTreeMap::new();
        for v in variables {
            if !valid_name(&v.name) {
                return Err(GraphError::InvalidName(v.name));
            }
            if vars.contains_key(&v.name) {
                return Err(GraphError::DuplicateVariable(v.name));
            }
            vars.insert(v.name.clone(), v);
        }
        let mut edge_set = BTreeSet::new();
        for e in edges {
            for end in [&e.from, &e.to] {
                if !vars.contains_key(end) {
                    return Err(GraphError::UnknownVariable(end.clone()));
                }
            }
            if e.from == e.to {
                return Err(GraphError::SelfLoop(e.from));
            }
            if edge_set.contains(&Edge::new(e.to.clone(), e.from.clone())) {
                return Err(GraphError::Cycle(vec![e.from.clone(), e.to.clone(), e.from.clone()]));
            }
            if !edge_set.insert(e.clone()) {
                return Err(GraphError::DuplicateEdge(e.from, e.to));
            }
        }
        for role in [&exposure, &outcome].into_iter().flatten() {
            match vars.get(role) {
                None => return Err(GraphError::UnknownVariable(role.clone())),
                Some(v) if v.kind != VariableKind::Observed => {
                    return Err(GraphError::RoleNotObserved(role.clone()))
                }
                _ => {}
            }
        }
        let dag = Self::assemble(vars, edge_set, exposure, outcome);
        if let Some(cycle) = dag.find_cycle() {
            return Err(GraphError::Cycle(cycle));
        }
        Ok(dag)
    }

    fn assemble(
        variables: BTreeMap<String, Variable>,
        edges: BTreeSet<Edge>,
        exposure: Option<String>,
        outcome: Option<String>,
    ) -> Self {
        let mut parents: BTreeMap<String, BTreeSet<String>> =
            variables.keys().map(|k| (k.clone(), BTreeSet::new())).collect();
        let mut children = parents.clone();
        for e in &edges {
            if let Some(p) = parents.get_mut(&e.to) {
                p.insert(e.from.clone());
            }
            if let Some(c) = children.get_mut(&e.from) {
                c.insert(e.to.clone());
            }
        }
        CausalDag {
            variables,
            edges,
            exposure,
            outcome,
            parents,
            children,
        }
    }

    fn find_cycle(&self) -> Option<Vec<String>> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            White,
            Grey,
            Black,
        }
        let mut mark: BTreeMap<&str, Mark> =
            self.variables.keys().map(|k| (k.as_str(), Mark::White)).collect();
        let mut stack: Vec<&str> = Vec::new();

        fn visit<'a>(
            dag: &'a CausalDag,
            v: &'a str,
            mark: &mut BTreeMap<&'a str, Mark>,
            stack: &mut Vec<&'a str>,
        ) -> Option<Vec<String>> {
            mark.insert(v, Mark::Grey);
            stack.push(v);
            for c in &dag.children[v] {
                match mark[c.as_str()] {
                    Mark::Grey => {
                        let start = stack.iter().position(|s| *s == c).unwrap_or(0);
                        let mut cycle: Vec<String> =
                            stack[start..].iter().map(|s| s.to_string()).collect();
                        cycle.push(c.clone());
                        return Some(cycle);
                    }
                    Mark::White => {
                        if let Some(cy) = visit(dag, c, mark, stack) {
                            return Some(cy);
                        }
                    }
                    Mark::Black => {}
                }
            }
            stack.pop();
            mark.insert(v, Mark::Black);
            None
        }

        let names: Vec<&str> = self.variables.keys().map(String::as_str).collect();
        for v in names {
            if mark[v] == Mark::White {
                if let Some(c) = visit(self, v, &mut mark, &mut stack) {
                    return Some(c);
                }
            }
        }
        None
    }

    pub fn variables(&self) -> impl Iterator<Item = &Variable> {
        self.variables.values()
    }

    pub fn variable(&self, name: &str) -> Option<&Variable> {
        self.variables.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.variables.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.variables.keys().map(String::as_str)
    }

    pub fn observed(&self) -> BTreeSet<String> {
        self.variables
            .values()
            .filter(|v| v.kind == VariableKind::Observed)
            .map(|v| v.name.clone())
            .collect()
    }

    pub fn is_observed(&self, name: &str) -> bool {
        self.variables
            .get(name)
            .is_some_and(|v| v.kind == VariableKind::Observed)
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.iter()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn has_edge(&self, from: &str, to: &str) -> bool {
        self.children.get(from).is_some_and(|c| c.contains(to))
    }

    pub fn adjacent(&self, a: &str, b: &str) -> bool {
        self.has_edge(a, b) || self.has_edge(b, a)
    }

    pub fn exposure(&self) -> Option<&str> {
        self.exposure.as_deref()
    }

    pub fn outcome(&self) -> Option<&str> {
        self.outcome.as_deref()
    }

    pub(crate) fn parents_of(&self, v: &str) -> &BTreeSet<String> {
        &self.parents[v]
    }

    pub(crate) fn children_of(&self, v: &str) -> &BTreeSet<String> {
        &self.children[v]
    }

    fn require(&self, v: &str) -> Result<(), GraphError> {
        if self.contains(v) {
            Ok(())
        } else {
            Err(GraphError::UnknownVariable(v.to_string()))
        }
    }

    pub fn relatives(&self, v: &str, relation: Relation) -> Result<BTreeSet<String>, GraphError> {
        self.require(v)?;
        Ok(match relation {
            Relation::Parents => self.parents[v].clone(),
            Relation::Children => self.children[v].clone(),
            Relation::Ancestors => self.closure([v], &self.parents),
            Relation::Descendants => self.closure([v], &self.children),
        })
    }

    /// Ancestors of every node in `seeds`, excluding the seeds unless reached
    /// through another seed.
    pub(crate) fn ancestors_of_set<'a>(
        &self,
        seeds: impl IntoIterator<Item = &'a str>,
    ) -> BTreeSet<String> {
        self.closure(seeds, &self.parents)
    }

    pub(crate) fn descendants_of_set<'a>(
        &self,
        seeds: impl IntoIterator<Item = &'a str>,
    ) -> BTreeSet<String> {
        self.closure(seeds, &self.children)
    }

    fn closure<'a>(
        &self,
        seeds: impl IntoIterator<Item = &'a str>,
        step: &BTreeMap<String, BTreeSet<String>>,
    ) -> BTreeSet<String> {
        let mut seen = BTreeSet::new();
        let mut queue: VecDeque<&str> = seeds.into_iter().collect();
        while let Some(v) = queue.pop_front() {
            for n in &step[v] {
                if seen.insert(n.clone()) {
                    queue.push_back(n);
                }
            }
        }
        seen
    }

    /// Kahn topological order; ties broken lexicographically so the order is
    /// deterministic.
    pub fn topological_order(&self) -> Vec<String> {
        let mut indeg: BTreeMap<&str, usize> = self
            .variables
            .keys()
            .map(|k| (k.as_str(), self.parents[k].len()))
            .collect();
        let mut ready: BTreeSet<&str> =
            indeg.iter().filter(|(_, d)| **d == 0).map(|(k, _)| *k).collect();
        let mut order = Vec::with_capacity(self.len());
        while let Some(v) = ready.pop_first() {
            order.push(v.to_string());
            for c in &self.children[v] {
                let d = indeg.get_mut(c.as_str()).expect("child is declared");
                *d -= 1;
                if *d == 0 {
                    ready.insert(c);
                }
            }
        }
        order
    }

    pub fn with_kind(&self, name: &str, kind: VariableKind) -> Result<CausalDag, GraphError> {
        self.require(name)?;
        let mut vars = self.variables.clone();
        vars.get_mut(name).expect("checked").kind = kind;
        CausalDag::new(
            vars.into_values().collect(),
            self.edges.iter().cloned().collect(),
            self.exposure.clone(),
            self.outcome.clone(),
        )
    }

    pub fn with_roles(
        &self,
        exposure: Option<String>,
        outcome: Option<String>,
    ) -> Result<CausalDag, GraphError> {
        CausalDag::new(
            self.variables.values().cloned().collect(),
            self.edges.iter().cloned().collect(),
            exposure,
            outcome,
        )
    }

    /// SHA-256 of the canonical serialization, hex encoded.
    pub fn fingerprint(&self) -> String {
        let text = serialize_dag(self);
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

/// Applies one edit, failing without side effects if the result is not a DAG.
pub fn apply_edit(dag: &CausalDag, edit: &DagEdit) -> Result<CausalDag, GraphError> {
    dag.require(&edit.from)?;
    dag.require(&edit.to)?;
    let mut edges = dag.edges.clone();
    match edit.kind {
        EditKind::AddEdge => {
            if edit.from == edit.to {
                return Err(GraphError::SelfLoop(edit.from.clone()));
            }
            if !edges.insert(Edge::new(&edit.from, &edit.to)) {
                return Err(GraphError::DuplicateEdge(edit.from.clone(), edit.to.clone()));
            }
        }
        EditKind::RemoveEdge => {
            if !edges.remove(&Edge::new(&edit.from, &edit.to)) {
                return Err(GraphError::MissingEdge(edit.from.clone(), edit.to.clone()));
            }
        }
        EditKind::ReverseEdge => {
            if !edges.remove(&Edge::new(&edit.from, &edit.to)) {
                return Err(GraphError::MissingEdge(edit.from.clone(), edit.to.clone()));
            }
            edges.insert(Edge::new(&edit.to, &edit.from));
        }
    }
    CausalDag::new(
        dag.variables.values().cloned().collect(),
        edges.into_iter().collect(),
        dag.exposure.clone(),
        dag.outcome.clone(),
    )
}

/// Checks every structural invariant and reports violations as data.
pub fn validate_dag(
    variables: &[Variable],
    edges: &[Edge],
    exposure: Option<&str>,
    outcome: Option<&str>,
) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut declared: BTreeMap<&str, VariableKind> = BTreeMap::new();
    for v in variables {
        if !valid_name(&v.name) {
            out.push(Violation {
                message: format!("invalid variable name `{}`", v.name),
                variables: vec![v.name.clone()],
            });
        }
        if declared.insert(&v.name, v.kind).is_some() {
            out.push(Violation {
                message: format!("duplicate variable `{}`", v.name),
                variables: vec![v.name.clone()],
            });
        }
    }
    let mut seen = BTreeSet::new();
    let mut usable = Vec::new();
    for e in edges {
        let mut ok = true;
        for end in [&e.from, &e.to] {
            if !declared.contains_key(end.as_str()) {
                out.push(Violation {
                    message: format!("edge {e} references undeclared variable `{end}`"),
                    variables: vec![end.clone()],
                });
                ok = false;
            }
        }
        if e.from == e.to {
            out.push(Violation {
                message: format!("self-loop on `{}`", e.from),
                variables: vec![e.from.clone()],
            });
            ok = false;
        } else if !seen.insert((e.from.clone(), e.to.clone())) {
            out.push(Violation {
                message: format!("duplicate edge {e}"),
                variables: vec![e.from.clone(), e.to.clone()],
            });
            ok = false;
        } else if seen.contains(&(e.to.clone(), e.from.clone())) {
            out.push(Violation {
                message: format!("edges in both directions between `{}` and `{}`", e.from, e.to),
                variables: vec![e.from.clone(), e.to.clone()],
            });
            ok = false;
        }
        if ok {
            usable.push(e.clone());
        }
    }
    for (role, name) in [("exposure", exposure), ("outcome", outcome)] {
        if let Some(name) = name {
            match declared.get(name) {
                None => out.push(Violation {
                    message: format!("{role} `{name}` is not declared"),
                    variables: vec![name.to_string()],
                }),
                Some(VariableKind::Latent) => out.push(Violation {
                    message: format!("{role} `{name}` is latent"),
                    variables: vec![name.to_string()],
                }),
                _ => {}
            }
        }
    }
    let vars: BTreeMap<String, Variable> = variables
        .iter()
        .filter(|v| valid_name(&v.name))
        .map(|v| (v.name.clone(), v.clone()))
        .collect();
    let probe = CausalDag::assemble(vars, usable.into_iter().collect(), None, None);
    if let Some(cycle) = probe.find_cycle() {
        out.push(Violation {
            message: format!("cycle {}", cycle.join(" -> ")),
            variables: cycle,
        });
    }
    out
}

impl CausalDag {
    /// Validation report for an already-constructed DAG; always empty, since
    /// construction enforces the invariants.
    pub fn validate(&self) -> Vec<Violation> {
        let vars: Vec<Variable> = self.variables.values().cloned().collect();
        let edges: Vec<Edge> = self.edges.iter().cloned().collect();
        validate_dag(&vars, &edges, self.exposure(), self.outcome())
    }
}

/// Statements of a DAG document, before validation.
#[derive(Debug, Clone, Default)]
pub struct DagDocument {
    pub variables: Vec<Variable>,
    pub edges: Vec<Edge>,
    pub exposure: Option<String>,
    pub outcome: Option<String>,
}

impl DagDocument {
    pub fn violations(&self) -> Vec<Violation> {
        validate_dag(
            &self.variables,
            &self.edges,
            self.exposure.as_deref(),
            self.outcome.as_deref(),
        )
    }

    pub fn into_dag(self) -> Result<CausalDag, GraphError> {
        CausalDag::new(self.variables, self.edges, self.exposure, self.outcome)
    }
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> GraphError {
    GraphError::Syntax {
        line,
        column,
        message: message.into(),
    }
}

/// Parses the text format into statements without structural checks.
pub fn parse_document(text: &str) -> Result<DagDocument, GraphError> {
    let mut doc = DagDocument::default();
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    let mut declare = |doc: &mut DagDocument, name: &str, kind: Option<VariableKind>| {
        match index.get(name) {
            Some(&i) => {
                if let Some(k) = kind {
                    doc.variables[i].kind = k;
                }
            }
            None => {
                index.insert(name.to_string(), doc.variables.len());
                doc.variables.push(Variable {
                    name: name.to_string(),
                    kind: kind.unwrap_or(VariableKind::Observed),
                    description: String::new(),
                });
            }
        }
    };

    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let content = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        };
        if content.trim().is_empty() {
            continue;
        }
        let tokens: Vec<(usize, &str)> = tokenize(content);
        let check_name = |(col, tok): (usize, &str)| -> Result<(), GraphError> {
            if valid_name(tok) {
                Ok(())
            } else {
                Err(syntax(line_no, col, format!("invalid variable name `{tok}`")))
            }
        };
        match tokens.as_slice() {
            [a, (col, "->"), b] => {
                check_name(*a)?;
                check_name(*b).map_err(|_| {
                    syntax(line_no, b.0, format!("invalid variable name `{}`", b.1))
                })?;
                let _ = col;
                declare(&mut doc, a.1, None);
                declare(&mut doc, b.1, None);
                doc.edges.push(Edge::new(a.1, b.1));
            }
            [(_, "latent"), n] => {
                check_name(*n)?;
                declare(&mut doc, n.1, Some(VariableKind::Latent));
            }
            [(_, "observed"), n] => {
                check_name(*n)?;
                declare(&mut doc, n.1, Some(VariableKind::Observed));
            }
            [(_, "exposure"), n] => {
                check_name(*n)?;
                declare(&mut doc, n.1, None);
                doc.exposure = Some(n.1.to_string());
            }
            [(_, "outcome"), n] => {
                check_name(*n)?;
                declare(&mut doc, n.1, None);
                doc.outcome = Some(n.1.to_string());
            }
            [(col, tok), ..] => {
                return Err(syntax(line_no, *col, format!("unexpected statement starting with `{tok}`")))
            }
            [] => unreachable!("blank lines skipped"),
        }
    }
    Ok(doc)
}

fn tokenize(content: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let bytes = content.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i].is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if content[i..].starts_with("->") {
            i += 2;
        } else {
            while i < bytes.len() && !bytes[i].is_ascii_whitespace() && !content[i..].starts_with("->") {
                i += 1;
            }
        }
        out.push((start + 1, &content[start..i]));
    }
    out
}

/// Parses and validates a DAG document.
pub fn parse_dag(text: &str) -> Result<CausalDag, GraphError> {
    parse_document(text)?.into_dag()
}

/// Canonical text form: role lines, then every variable (sorted), then edges
/// sorted by (from, to).
pub fn serialize_dag(dag: &CausalDag) -> String {
    let mut out = String::new();
    if let Some(e) = &dag.exposure {
        out.push_str(&format!("exposure {e}\n"));
    }
    if let Some(o) = &dag.outcome {
        out.push_str(&format!("outcome {o}\n"));
    }
    for v in dag.variables.values() {
        let kw = match v.kind {
            VariableKind::Observed => "observed",
            VariableKind::Latent => "latent",
        };
        out.push_str(&format!("{kw} {}\n", v.name));
    }
    for e in &dag.edges {
        out.push_str(&format!("{} -> {}\n", e.from, e.to));
    }
    out
}

/// Serializes as the canonical text form.
impl Serialize for CausalDag {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&serialize_dag(self))
    }
}

impl<'de> Deserialize<'de> for CausalDag {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        parse_dag(&text).map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for CausalDag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serialize_dag(self))
    }
}
