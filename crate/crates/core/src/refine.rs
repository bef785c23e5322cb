//! Guess-and-test refinement: diagnose a failed implication, propose single
//! structural edits with the follow-up claims that would confirm them, test,
//! apply, and repeat until the DAG's implications agree with the data.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dsep::{d_separated, enumerate_paths, path_status, Direction, DsepError, Path};
use crate::graph::{apply_edit, CausalDag, DagEdit, Edge, GraphError};
use crate::implications::{implied_independencies, IndependenceClaim};
use crate::stats::{
    coverage_gap, dcov_test, kernel::standardize, test_claim, DatasetTable, StatsError, Summary, TestConfig,
    TestResult,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RefineError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Dsep(#[from] DsepError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("claim `{0}` is not implied by the DAG")]
    NotImplied(String),
    #[error("no decision is pending")]
    NothingPending,
    #[error("no candidate with index {0}")]
    NoSuchCandidate(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    ColliderToChain,
    ChainToCollider,
    AddDirectEdge,
    ReverseEdge,
}

impl Mechanism {
    pub fn label(self) -> &'static str {
        match self {
            Mechanism::ColliderToChain => "collider to chain",
            Mechanism::ChainToCollider => "chain to collider",
            Mechanism::AddDirectEdge => "add direct edge",
            Mechanism::ReverseEdge => "reverse edge",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditProposal {
    pub edit: DagEdit,
    pub mechanism: Mechanism,
    pub followup_claims: Vec<IndependenceClaim>,
    pub rationale: String,
    /// Filled in once the follow-ups have been tested.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub followup_results: Vec<TestResult>,
}

impl EditProposal {
    /// True if the follow-ups were tested, there is at least one, and none was rejected.
    pub fn confirmed(&self) -> bool {
        !self.followup_results.is_empty()
            && self.followup_results.len() == self.followup_claims.len()
            && self.followup_results.iter().all(|r| !r.rejected())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureDiagnosis {
    pub failed_claim: IndependenceClaim,
    /// Paths between the endpoints that a single candidate edit would open.
    pub connecting_paths: Vec<Path>,
    pub candidates: Vec<EditProposal>,
    /// Unconditional test of the failed pair, recorded for context.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auxiliary: Option<TestResult>,
}

fn with_var(z: &BTreeSet<String>, v: &str) -> BTreeSet<String> {
    let mut z = z.clone();
    z.insert(v.to_string());
    z
}

fn without_var(z: &BTreeSet<String>, v: &str) -> BTreeSet<String> {
    let mut z = z.clone();
    z.remove(v);
    z
}

/// Structural candidates for explaining why `failed` does not hold, untested.
pub fn propose_edits(dag: &CausalDag, failed: &IndependenceClaim) -> Result<FailureDiagnosis, RefineError> {
    if !implied_independencies(dag)?.claims.contains(failed) {
        return Err(RefineError::NotImplied(failed.to_string()));
    }
    let (x, y, z) = (&failed.x, &failed.y, &failed.conditioning);
    let mut proposals: Vec<EditProposal> = Vec::new();
    let mut connecting = Vec::new();
    for path in enumerate_paths(dag, x, y)? {
        let status = path_status(dag, &path, z)?;
        if status.blocking_nodes.len() != 1 {
            continue;
        }
        let c = status.blocking_nodes.iter().next().expect("one blocker").clone();
        let i = path.nodes.iter().position(|n| *n == c).expect("blocker on path");
        let (prev, next) = (&path.nodes[i - 1], &path.nodes[i + 1]);
        let mut any = false;
        if path.is_collider(i) {
            let followups = if dag.is_observed(&c) {
                vec![IndependenceClaim {
                    x: x.clone(),
                    y: y.clone(),
                    conditioning: with_var(z, &c),
                }]
            } else {
                Vec::new()
            };
            for (parent, other) in [(prev, next), (next, prev)] {
                proposals.push(EditProposal {
                    edit: DagEdit::reverse(parent.as_str(), c.as_str()),
                    mechanism: Mechanism::ColliderToChain,
                    followup_claims: followups.clone(),
                    rationale: format!("{path}: {c} may be a chain node {other} -> {c} -> {parent}, not a collider"),
                    followup_results: Vec::new(),
                });
                any = true;
            }
        } else {
            // forks would need both edges reversed; only single edits are proposed
            if path.directions[i - 1] == path.directions[i] {
                let forward = path.directions[i] == Direction::Forward;
                let (child, other) = if forward { (next, prev) } else { (prev, next) };
                proposals.push(EditProposal {
                    edit: DagEdit::reverse(c.as_str(), child.as_str()),
                    mechanism: Mechanism::ChainToCollider,
                    followup_claims: vec![IndependenceClaim {
                        x: x.clone(),
                        y: y.clone(),
                        conditioning: without_var(z, &c),
                    }],
                    rationale: format!("{path}: {c} may be a collider {other} -> {c} <- {child}, not a chain node"),
                    followup_results: Vec::new(),
                });
                any = true;
            }
        }
        if any {
            connecting.push(path);
        }
    }
    let order = dag.topological_order();
    let pos = |v: &str| order.iter().position(|o| o == v).expect("declared");
    let (from, to) = if pos(x) < pos(y) { (x, y) } else { (y, x) };
    proposals.push(EditProposal {
        edit: DagEdit::add(from.as_str(), to.as_str()),
        mechanism: Mechanism::AddDirectEdge,
        followup_claims: Vec::new(),
        rationale: format!("{from} may affect {to} directly"),
        followup_results: Vec::new(),
    });

    let mut seen = BTreeSet::new();
    let mut candidates = Vec::new();
    for mut p in proposals {
        let key = (p.edit.kind, p.edit.from.clone(), p.edit.to.clone());
        if !seen.insert(key) {
            continue;
        }
        let Ok(edited) = apply_edit(dag, &p.edit) else {
            continue;
        };
        // The edit must actually connect the pair under the failed conditioning set.
        if d_separated(&edited, x, y, z)? {
            continue;
        }
        p.followup_claims.sort();
        p.followup_claims.dedup();
        candidates.push(p);
    }
    candidates.sort_by(|a, b| {
        (a.mechanism, &a.edit.from, &a.edit.to).cmp(&(b.mechanism, &b.edit.from, &b.edit.to))
    });
    Ok(FailureDiagnosis {
        failed_claim: failed.clone(),
        connecting_paths: connecting,
        candidates,
        auxiliary: None,
    })
}

/// Seed for a claim that does not depend on its position in any batch.
pub fn stable_claim_seed(base: u64, claim: &IndependenceClaim) -> u64 {
    let h = Sha256::digest(claim.to_string().as_bytes());
    base ^ u64::from_le_bytes(h[..8].try_into().expect("8 bytes"))
}

/// Test results memoized by claim for the lifetime of a session.
#[derive(Debug, Clone, Default)]
pub struct TestCache {
    results: BTreeMap<IndependenceClaim, TestResult>,
    unconditional: BTreeMap<(String, String), TestResult>,
}

impl TestCache {
    pub fn len(&self) -> usize {
        self.results.len()
    }

    pub fn is_empty(&self) -> bool {
        self.results.is_empty()
    }

    /// Results for `claims` in order, running only the ones not seen before.
    pub fn test_all(
        &mut self,
        data: &DatasetTable,
        claims: &[IndependenceClaim],
        config: &TestConfig,
    ) -> Result<Vec<TestResult>, StatsError> {
        let missing: Vec<&IndependenceClaim> = claims
            .iter()
            .filter(|c| !self.results.contains_key(*c))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let run = |c: &&IndependenceClaim| test_claim(data, c, &config.with_seed(stable_claim_seed(config.rng_seed, c)));
        #[cfg(feature = "parallel")]
        let fresh: Vec<TestResult> = {
            use rayon::prelude::*;
            missing.par_iter().map(run).collect::<Result<_, _>>()?
        };
        #[cfg(not(feature = "parallel"))]
        let fresh: Vec<TestResult> = missing.iter().map(run).collect::<Result<_, _>>()?;
        for r in fresh {
            self.results.insert(r.claim.clone(), r);
        }
        Ok(claims.iter().map(|c| self.results[c].clone()).collect())
    }

    fn unconditional(
        &mut self,
        data: &DatasetTable,
        claim: &IndependenceClaim,
        config: &TestConfig,
    ) -> Result<TestResult, StatsError> {
        let key = (claim.x.clone(), claim.y.clone());
        if let Some(r) = self.unconditional.get(&key) {
            return Ok(r.clone());
        }
        let pair = IndependenceClaim {
            x: claim.x.clone(),
            y: claim.y.clone(),
            conditioning: BTreeSet::new(),
        };
        let r = if let Some(r) = self.results.get(&pair) {
            r.clone()
        } else {
            let x = standardize(data.column(&claim.x)?);
            let y = standardize(data.column(&claim.y)?);
            let cfg = config.with_seed(stable_claim_seed(config.rng_seed, &pair));
            TestResult {
                claim: pair,
                outcome: dcov_test(&x, &y, &cfg)?,
            }
        };
        self.unconditional.insert(key, r.clone());
        Ok(r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefineOptions {
    pub max_iterations: usize,
    /// Record an unconditional test of each failed pair in its diagnosis.
    pub auxiliary_test: bool,
}

impl Default for RefineOptions {
    fn default() -> Self {
        RefineOptions {
            max_iterations: 25,
            auxiliary_test: true,
        }
    }
}

/// Tests every candidate's follow-ups (and the auxiliary test, if enabled).
pub fn diagnose_failure(
    dag: &CausalDag,
    failed: &IndependenceClaim,
    data: &DatasetTable,
    config: &TestConfig,
    options: &RefineOptions,
    cache: &mut TestCache,
) -> Result<FailureDiagnosis, RefineError> {
    let mut diag = propose_edits(dag, failed)?;
    let all: Vec<IndependenceClaim> = diag
        .candidates
        .iter()
        .flat_map(|c| c.followup_claims.iter().cloned())
        .collect();
    cache.test_all(data, &all, config)?;
    for c in &mut diag.candidates {
        c.followup_results = cache.test_all(data, &c.followup_claims, config)?;
    }
    if options.auxiliary_test {
        diag.auxiliary = Some(cache.unconditional(data, failed, config)?);
    }
    Ok(diag)
}

/// Automatic policy: the first structural candidate whose follow-ups all pass,
/// else the first direct-edge candidate.
pub fn automatic_choice(diag: &FailureDiagnosis) -> Option<usize> {
    diag.candidates
        .iter()
        .position(|c| c.mechanism != Mechanism::AddDirectEdge && c.confirmed())
        .or_else(|| diag.candidates.iter().position(|c| c.mechanism == Mechanism::AddDirectEdge))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeciderKind {
    Auto,
    Human,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "choice", content = "candidate")]
pub enum Choice {
    Accept(usize),
    Decline,
    Abort,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    /// Waiting for a decision on the last step's diagnosis.
    Pending,
    Consistent,
    Exhausted,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppliedEdit {
    pub edit: DagEdit,
    pub mechanism: Mechanism,
    pub candidate: usize,
    pub decider: DeciderKind,
}

/// One evaluation of one DAG, with the edit applied after it, if any.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionStep {
    pub dag_fingerprint: String,
    pub summary: Summary,
    pub results: Vec<TestResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnosis: Option<FailureDiagnosis>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub applied: Option<AppliedEdit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementSession {
    pub initial_dag: CausalDag,
    pub config: TestConfig,
    pub options: RefineOptions,
    pub steps: Vec<SessionStep>,
    pub status: SessionStatus,
    pub final_dag: CausalDag,
    /// Edges of the final DAG whose orientation no independence pins down.
    pub undetermined_edges: Vec<Edge>,
}

impl RefinementSession {
    pub fn edits(&self) -> impl Iterator<Item = &AppliedEdit> {
        self.steps.iter().filter_map(|s| s.applied.as_ref())
    }

    /// Re-applies the journaled edits to the initial DAG.
    pub fn replay(&self) -> Result<CausalDag, GraphError> {
        self.edits().try_fold(self.initial_dag.clone(), |d, a| apply_edit(&d, &a.edit))
    }

    pub fn pending(&self) -> Option<&FailureDiagnosis> {
        match self.status {
            SessionStatus::Pending => self.steps.last().and_then(|s| s.diagnosis.as_ref()),
            _ => None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("session serializes")
    }
}

/// Edges left unoriented in the DAG's Markov equivalence class (CPDAG): keep
/// v-structure edges, then close under Meek's orientation rules.
pub fn undetermined_edges(dag: &CausalDag) -> Vec<Edge> {
    let mut directed: BTreeSet<(String, String)> = BTreeSet::new();
    for e in dag.edges() {
        let in_v = dag
            .parents_of(&e.to)
            .iter()
            .any(|p| p != &e.from && !dag.adjacent(p, &e.from));
        if in_v {
            directed.insert((e.from.clone(), e.to.clone()));
        }
    }
    let mut undirected: BTreeSet<(String, String)> = dag
        .edges()
        .map(|e| (e.from.clone(), e.to.clone()))
        .filter(|k| !directed.contains(k))
        .collect();
    let dir = |d: &BTreeSet<(String, String)>, a: &str, b: &str| d.contains(&(a.to_string(), b.to_string()));
    let und = |u: &BTreeSet<(String, String)>, a: &str, b: &str| {
        u.contains(&(a.to_string(), b.to_string())) || u.contains(&(b.to_string(), a.to_string()))
    };
    let names: Vec<String> = dag.names().map(str::to_string).collect();
    loop {
        let mut orient = None;
        'search: for (u, v) in &undirected {
            for (a, b) in [(u, v), (v, u)] {
                // R1: c -> a - b, c and b non-adjacent
                let r1 = names.iter().any(|c| dir(&directed, c, a) && !dag.adjacent(c, b));
                // R2: a -> c -> b with a - b
                let r2 = names.iter().any(|c| dir(&directed, a, c) && dir(&directed, c, b));
                // R3: a - c -> b, a - d -> b, c and d non-adjacent
                let r3 = names.iter().any(|c| {
                    und(&undirected, a, c)
                        && dir(&directed, c, b)
                        && names.iter().any(|d| {
                            d != c && und(&undirected, a, d) && dir(&directed, d, b) && !dag.adjacent(c, d)
                        })
                });
                if r1 || r2 || r3 {
                    orient = Some(((u.clone(), v.clone()), (a.clone(), b.clone())));
                    break 'search;
                }
            }
        }
        match orient {
            Some((key, arrow)) => {
                undirected.remove(&key);
                directed.insert(arrow);
            }
            None => break,
        }
    }
    undirected.into_iter().map(|(f, t)| Edge::new(f, t)).collect()
}

/// A refinement session in progress, driven one decision at a time.
pub struct Refiner<'a> {
    data: &'a DatasetTable,
    cache: TestCache,
    session: RefinementSession,
}

impl<'a> Refiner<'a> {
    /// Evaluates the starting DAG and, if a claim fails, diagnoses it.
    pub fn start(
        dag: CausalDag,
        data: &'a DatasetTable,
        config: TestConfig,
        options: RefineOptions,
    ) -> Result<Self, RefineError> {
        config.validate()?;
        let gap = coverage_gap(data, &dag);
        if !gap.is_empty() {
            return Err(StatsError::CoverageGap(gap).into());
        }
        let mut r = Refiner {
            data,
            cache: TestCache::default(),
            session: RefinementSession {
                initial_dag: dag.clone(),
                config,
                options,
                steps: Vec::new(),
                status: SessionStatus::Pending,
                final_dag: dag,
                undetermined_edges: Vec::new(),
            },
        };
        r.evaluate()?;
        Ok(r)
    }

    /// Continues a journaled session against the same data; test results are
    /// recomputed on demand with the journal's seeds.
    pub fn resume(session: RefinementSession, data: &'a DatasetTable) -> Result<Self, RefineError> {
        session.config.validate()?;
        let gap = coverage_gap(data, &session.final_dag);
        if !gap.is_empty() {
            return Err(StatsError::CoverageGap(gap).into());
        }
        if session.replay()? != session.final_dag {
            return Err(GraphError::Invalid("journal does not replay to its final DAG".into()).into());
        }
        Ok(Refiner {
            data,
            cache: TestCache::default(),
            session,
        })
    }

    fn evaluate(&mut self) -> Result<(), RefineError> {
        let s = &self.session;
        let dag = &s.final_dag;
        let hyp = implied_independencies(dag)?;
        let results = self.cache.test_all(self.data, &hyp.claims, &s.config)?;
        let summary = Summary::of(&results);
        let edits_done = s.steps.len();
        let mut step = SessionStep {
            dag_fingerprint: hyp.dag_fingerprint,
            summary,
            results,
            diagnosis: None,
            applied: None,
        };
        let status = if summary.failed == 0 {
            SessionStatus::Consistent
        } else if edits_done >= s.options.max_iterations {
            SessionStatus::Exhausted
        } else {
            let failed = step.results.iter().find(|r| r.rejected()).expect("a failure").claim.clone();
            let (config, options) = (s.config, s.options);
            let dag = s.final_dag.clone();
            let diag = diagnose_failure(&dag, &failed, self.data, &config, &options, &mut self.cache)?;
            let empty = diag.candidates.is_empty();
            step.diagnosis = Some(diag);
            if empty {
                SessionStatus::Exhausted
            } else {
                SessionStatus::Pending
            }
        };
        self.session.steps.push(step);
        self.session.status = status;
        if status != SessionStatus::Pending {
            self.session.undetermined_edges = undetermined_edges(&self.session.final_dag);
        }
        Ok(())
    }

    pub fn session(&self) -> &RefinementSession {
        &self.session
    }

    pub fn into_session(self) -> RefinementSession {
        self.session
    }

    pub fn pending(&self) -> Option<&FailureDiagnosis> {
        self.session.pending()
    }

    pub fn current_dag(&self) -> &CausalDag {
        &self.session.final_dag
    }

    /// Applies a decision to the pending diagnosis.
    pub fn choose(&mut self, choice: Choice, decider: DeciderKind) -> Result<(), RefineError> {
        let diag = self.pending().ok_or(RefineError::NothingPending)?;
        match choice {
            Choice::Decline | Choice::Abort => {
                self.session.status = SessionStatus::Aborted;
                self.session.undetermined_edges = undetermined_edges(&self.session.final_dag);
                Ok(())
            }
            Choice::Accept(i) => {
                let cand = diag.candidates.get(i).ok_or(RefineError::NoSuchCandidate(i))?;
                let applied = AppliedEdit {
                    edit: cand.edit.clone(),
                    mechanism: cand.mechanism,
                    candidate: i,
                    decider,
                };
                let next = apply_edit(&self.session.final_dag, &applied.edit)?;
                self.session.steps.last_mut().expect("pending step").applied = Some(applied);
                self.session.final_dag = next;
                self.evaluate()
            }
        }
    }

    /// Decides with [`automatic_choice`] until the session ends.
    pub fn run_automatic(mut self) -> Result<RefinementSession, RefineError> {
        while let Some(diag) = self.pending() {
            match automatic_choice(diag) {
                Some(i) => self.choose(Choice::Accept(i), DeciderKind::Auto)?,
                None => {
                    self.session.status = SessionStatus::Exhausted;
                    break;
                }
            }
        }
        Ok(self.session)
    }
}

/// External decision source for interactive sessions.
pub trait Decider {
    fn decide(&mut self, dag: &CausalDag, diagnosis: &FailureDiagnosis) -> Choice;
}

pub enum Policy<'d> {
    Automatic,
    Interactive(&'d mut dyn Decider),
}

/// Runs a whole session under `policy`.
pub fn refine(
    dag: CausalDag,
    data: &DatasetTable,
    config: TestConfig,
    options: RefineOptions,
    policy: Policy<'_>,
) -> Result<RefinementSession, RefineError> {
    let mut r = Refiner::start(dag, data, config, options)?;
    match policy {
        Policy::Automatic => r.run_automatic(),
        Policy::Interactive(decider) => {
            while let Some(diag) = r.pending() {
                let choice = decider.decide(r.current_dag(), diag);
                r.choose(choice, DeciderKind::Human)?;
            }
            Ok(r.into_session())
        }
    }
}
