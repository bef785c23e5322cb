//! d-separation, path enumeration, backdoor paths and minimal separating sets.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use itertools::Itertools;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{CausalDag, GraphError};

/// Default cap on the number of simple paths [`enumerate_paths`] will return.
pub const DEFAULT_PATH_LIMIT: usize = 10_000;

/// Separator searches give up beyond this many candidate variables.
pub const MAX_SEARCH_CANDIDATES: usize = 22;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DsepError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("variable `{0}` appears in more than one of the x, y, z sets")]
    Overlap(String),
    #[error("endpoints must differ, got `{0}` twice")]
    SameEndpoint(String),
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("more than {0} simple paths; raise the limit or use reachability")]
    TooManyPaths(usize),
    #[error("`{0}` and `{1}` are adjacent")]
    Adjacent(String, String),
    #[error("`{0}` is not an observed variable")]
    NotObserved(String),
    #[error("search over {0} candidate variables exceeds the limit of {MAX_SEARCH_CANDIDATES}")]
    SearchTooLarge(usize),
}

pub type VarSet = BTreeSet<String>;

pub fn var_set<I, S>(names: I) -> VarSet
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    names.into_iter().map(|s| s.as_ref().to_string()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// `nodes[i] -> nodes[i + 1]`
    Forward,
    /// `nodes[i] <- nodes[i + 1]`
    Backward,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Path {
    pub nodes: Vec<String>,
    pub directions: Vec<Direction>,
}

impl Path {
    /// Builds a path from a node sequence, reading edge directions off the DAG.
    pub fn from_nodes(dag: &CausalDag, nodes: &[&str]) -> Result<Path, DsepError> {
        let mut directions = Vec::with_capacity(nodes.len().saturating_sub(1));
        for w in nodes.windows(2) {
            directions.push(if dag.has_edge(w[0], w[1]) {
                Direction::Forward
            } else if dag.has_edge(w[1], w[0]) {
                Direction::Backward
            } else {
                return Err(DsepError::InvalidPath(format!("{} and {} are not adjacent", w[0], w[1])));
            });
        }
        Ok(Path {
            nodes: nodes.iter().map(|s| s.to_string()).collect(),
            directions,
        })
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    /// True if inner node `i` (0 < i < nodes.len() - 1) has both path edges pointing into it.
    pub fn is_collider(&self, i: usize) -> bool {
        self.directions[i - 1] == Direction::Forward && self.directions[i] == Direction::Backward
    }

    fn validate(&self, dag: &CausalDag) -> Result<(), DsepError> {
        if self.nodes.len() < 2 || self.directions.len() + 1 != self.nodes.len() {
            return Err(DsepError::InvalidPath("needs at least two nodes and one direction per step".into()));
        }
        let distinct: BTreeSet<&String> = self.nodes.iter().collect();
        if distinct.len() != self.nodes.len() {
            return Err(DsepError::InvalidPath("repeated node".into()));
        }
        for (i, d) in self.directions.iter().enumerate() {
            let (a, b) = (&self.nodes[i], &self.nodes[i + 1]);
            let ok = match d {
                Direction::Forward => dag.has_edge(a, b),
                Direction::Backward => dag.has_edge(b, a),
            };
            if !ok {
                return Err(DsepError::InvalidPath(format!("no edge for step {a} - {b}")));
            }
        }
        Ok(())
    }
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, n) in self.nodes.iter().enumerate() {
            if i > 0 {
                f.write_str(match self.directions[i - 1] {
                    Direction::Forward => " -> ",
                    Direction::Backward => " <- ",
                })?;
            }
            f.write_str(n)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathStatus {
    pub open: bool,
    pub blocking_nodes: VarSet,
    pub colliders_opened: VarSet,
}

fn check_declared(dag: &CausalDag, names: &[&str]) -> Result<(), DsepError> {
    for n in names {
        if !dag.contains(n) {
            return Err(GraphError::UnknownVariable(n.to_string()).into());
        }
    }
    Ok(())
}

/// All simple paths between `x` and `y`, in lexicographic order of node sequence.
pub fn enumerate_paths(dag: &CausalDag, x: &str, y: &str) -> Result<Vec<Path>, DsepError> {
    enumerate_paths_limited(dag, x, y, DEFAULT_PATH_LIMIT)
}

pub fn enumerate_paths_limited(
    dag: &CausalDag,
    x: &str,
    y: &str,
    limit: usize,
) -> Result<Vec<Path>, DsepError> {
    check_declared(dag, &[x, y])?;
    if x == y {
        return Err(DsepError::SameEndpoint(x.to_string()));
    }
    let mut out = Vec::new();
    let mut nodes = vec![x.to_string()];
    let mut directions = Vec::new();
    let mut on_path: BTreeSet<String> = BTreeSet::from([x.to_string()]);
    extend_paths(dag, y, limit, &mut nodes, &mut directions, &mut on_path, &mut out)?;
    Ok(out)
}

fn extend_paths(
    dag: &CausalDag,
    target: &str,
    limit: usize,
    nodes: &mut Vec<String>,
    directions: &mut Vec<Direction>,
    on_path: &mut BTreeSet<String>,
    out: &mut Vec<Path>,
) -> Result<(), DsepError> {
    let last = nodes.last().expect("path is non-empty").clone();
    // Neighbors in name order keeps the output lexicographic.
    let mut steps: Vec<(&String, Direction)> = dag
        .children_of(&last)
        .iter()
        .map(|c| (c, Direction::Forward))
        .chain(dag.parents_of(&last).iter().map(|p| (p, Direction::Backward)))
        .collect();
    steps.sort();
    for (next, dir) in steps {
        if on_path.contains(next) {
            continue;
        }
        nodes.push(next.clone());
        directions.push(dir);
        if next == target {
            if out.len() == limit {
                return Err(DsepError::TooManyPaths(limit));
            }
            out.push(Path {
                nodes: nodes.clone(),
                directions: directions.clone(),
            });
        } else {
            on_path.insert(next.clone());
            extend_paths(dag, target, limit, nodes, directions, on_path, out)?;
            on_path.remove(next);
        }
        nodes.pop();
        directions.pop();
    }
    Ok(())
}

/// Evaluates the blocking rules on every inner node of `path`.
pub fn path_status(dag: &CausalDag, path: &Path, conditioning: &VarSet) -> Result<PathStatus, DsepError> {
    path.validate(dag)?;
    for z in conditioning {
        check_declared(dag, &[z])?;
    }
    let mut blocking = VarSet::new();
    let mut opened = VarSet::new();
    for i in 1..path.nodes.len() - 1 {
        let v = &path.nodes[i];
        if path.is_collider(i) {
            let conditioned = conditioning.contains(v)
                || dag
                    .descendants_of_set([v.as_str()])
                    .iter()
                    .any(|d| conditioning.contains(d));
            if conditioned {
                opened.insert(v.clone());
            } else {
                blocking.insert(v.clone());
            }
        } else if conditioning.contains(v) {
            blocking.insert(v.clone());
        }
    }
    Ok(PathStatus {
        open: blocking.is_empty(),
        blocking_nodes: blocking,
        colliders_opened: opened,
    })
}

/// Nodes reachable from `x` along paths that are active given `z`.
fn reachable(dag: &CausalDag, x: &VarSet, z: &VarSet) -> VarSet {
    let mut z_and_anc = dag.ancestors_of_set(z.iter().map(String::as_str));
    z_and_anc.extend(z.iter().cloned());

    #[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
    enum Arrive {
        // reached from a child, travelling against the edge
        Up,
        // reached from a parent, travelling along the edge
        Down,
    }

    let mut visited: BTreeSet<(String, Arrive)> = BTreeSet::new();
    let mut queue: VecDeque<(String, Arrive)> = x.iter().map(|v| (v.clone(), Arrive::Up)).collect();
    let mut reached = VarSet::new();
    while let Some((v, dir)) = queue.pop_front() {
        if !visited.insert((v.clone(), dir)) {
            continue;
        }
        let in_z = z.contains(&v);
        if !in_z {
            reached.insert(v.clone());
        }
        match dir {
            Arrive::Up if !in_z => {
                for p in dag.parents_of(&v) {
                    queue.push_back((p.clone(), Arrive::Up));
                }
                for c in dag.children_of(&v) {
                    queue.push_back((c.clone(), Arrive::Down));
                }
            }
            Arrive::Up => {}
            Arrive::Down => {
                if !in_z {
                    for c in dag.children_of(&v) {
                        queue.push_back((c.clone(), Arrive::Down));
                    }
                }
                if z_and_anc.contains(&v) {
                    for p in dag.parents_of(&v) {
                        queue.push_back((p.clone(), Arrive::Up));
                    }
                }
            }
        }
    }
    reached
}

/// Linear-time d-separation test by reachability.
pub fn is_d_separated(dag: &CausalDag, x: &VarSet, y: &VarSet, z: &VarSet) -> Result<bool, DsepError> {
    for v in x.iter().chain(y).chain(z) {
        check_declared(dag, &[v])?;
    }
    for v in x {
        if y.contains(v) || z.contains(v) {
            return Err(DsepError::Overlap(v.clone()));
        }
    }
    for v in y {
        if z.contains(v) {
            return Err(DsepError::Overlap(v.clone()));
        }
    }
    let r = reachable(dag, x, z);
    Ok(y.iter().all(|v| !r.contains(v)))
}

/// Single-variable convenience form of [`is_d_separated`].
pub fn d_separated(dag: &CausalDag, x: &str, y: &str, z: &VarSet) -> Result<bool, DsepError> {
    is_d_separated(dag, &var_set([x]), &var_set([y]), z)
}

/// Simple paths from exposure to outcome that start with an edge into the exposure.
pub fn backdoor_paths(dag: &CausalDag, exposure: &str, outcome: &str) -> Result<Vec<Path>, DsepError> {
    Ok(enumerate_paths(dag, exposure, outcome)?
        .into_iter()
        .filter(|p| p.directions[0] == Direction::Backward)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdjustmentSets {
    pub exposure: String,
    pub outcome: String,
    /// False when no observed set satisfies the backdoor criterion; `sets` is then empty.
    pub admissible: bool,
    pub sets: Vec<VarSet>,
}

/// All inclusion-minimal observed sets satisfying the backdoor criterion, by size then lexicographic.
pub fn minimal_adjustment_sets(
    dag: &CausalDag,
    exposure: &str,
    outcome: &str,
) -> Result<AdjustmentSets, DsepError> {
    check_declared(dag, &[exposure, outcome])?;
    if exposure == outcome {
        return Err(DsepError::SameEndpoint(exposure.to_string()));
    }
    for v in [exposure, outcome] {
        if !dag.is_observed(v) {
            return Err(DsepError::NotObserved(v.to_string()));
        }
    }
    // Backdoor graph: drop the exposure's outgoing edges, then separate.
    let mut bd = dag.clone();
    for c in dag.children_of(exposure).clone() {
        bd = crate::graph::apply_edit(&bd, &crate::graph::DagEdit::remove(exposure, c.as_str()))?;
    }
    let descendants = dag.descendants_of_set([exposure]);
    let relevant = bd.ancestors_of_set([exposure, outcome]);
    let candidates: Vec<String> = dag
        .observed()
        .into_iter()
        .filter(|v| v != exposure && v != outcome && !descendants.contains(v) && relevant.contains(v))
        .collect();
    let sets = minimal_sets(&candidates, |s| d_separated(&bd, exposure, outcome, s))?;
    Ok(AdjustmentSets {
        exposure: exposure.to_string(),
        outcome: outcome.to_string(),
        admissible: !sets.is_empty(),
        sets,
    })
}

/// Enumerates subsets of `candidates` by size then lexicographically and keeps
/// those accepted by `pred` that contain no previously kept set.
fn minimal_sets(
    candidates: &[String],
    mut pred: impl FnMut(&VarSet) -> Result<bool, DsepError>,
) -> Result<Vec<VarSet>, DsepError> {
    if candidates.len() > MAX_SEARCH_CANDIDATES {
        return Err(DsepError::SearchTooLarge(candidates.len()));
    }
    let mut sorted = candidates.to_vec();
    sorted.sort();
    let mut found: Vec<VarSet> = Vec::new();
    for k in 0..=sorted.len() {
        for combo in sorted.iter().combinations(k) {
            let s: VarSet = combo.into_iter().cloned().collect();
            if found.iter().any(|f| f.is_subset(&s)) {
                continue;
            }
            if pred(&s)? {
                found.push(s);
            }
        }
    }
    Ok(found)
}

fn separator_candidates(dag: &CausalDag, x: &str, y: &str, restricted_to: &VarSet) -> Result<Vec<String>, DsepError> {
    check_declared(dag, &[x, y])?;
    if x == y {
        return Err(DsepError::SameEndpoint(x.to_string()));
    }
    if dag.adjacent(x, y) {
        return Err(DsepError::Adjacent(x.to_string(), y.to_string()));
    }
    // A separator within `restricted_to` exists iff its restriction to An({x, y}) separates.
    let anc = dag.ancestors_of_set([x, y]);
    Ok(restricted_to
        .iter()
        .filter(|v| v.as_str() != x && v.as_str() != y && anc.contains(*v))
        .cloned()
        .collect())
}

/// Smallest separating set within `restricted_to`, lexicographically first among equals.
pub fn find_minimal_separator(
    dag: &CausalDag,
    x: &str,
    y: &str,
    restricted_to: &VarSet,
) -> Result<Option<VarSet>, DsepError> {
    let cands = separator_candidates(dag, x, y, restricted_to)?;
    let full: VarSet = cands.iter().cloned().collect();
    if !d_separated(dag, x, y, &full)? {
        return Ok(None);
    }
    if cands.len() > MAX_SEARCH_CANDIDATES {
        return Err(DsepError::SearchTooLarge(cands.len()));
    }
    for k in 0..=cands.len() {
        for combo in cands.iter().combinations(k) {
            let s: VarSet = combo.into_iter().cloned().collect();
            if d_separated(dag, x, y, &s)? {
                return Ok(Some(s));
            }
        }
    }
    unreachable!("the full candidate set separates")
}

/// Every inclusion-minimal separating set within `restricted_to`, by size then lexicographic.
pub fn all_minimal_separators(
    dag: &CausalDag,
    x: &str,
    y: &str,
    restricted_to: &VarSet,
) -> Result<Vec<VarSet>, DsepError> {
    let cands = separator_candidates(dag, x, y, restricted_to)?;
    let full: VarSet = cands.iter().cloned().collect();
    if !d_separated(dag, x, y, &full)? {
        return Ok(Vec::new());
    }
    minimal_sets(&cands, |s| d_separated(dag, x, y, s))
}
