//! Independence tests and batch evaluation of a DAG's implications against data.

pub mod dataset;
pub mod dcov;
pub mod kci;
pub mod kernel;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dsep::DsepError;
use crate::graph::CausalDag;
use crate::implications::{implied_independencies, IndependenceClaim};

pub use dataset::DatasetTable;
pub use dcov::{dcov_statistic, dcov_test};
pub use kci::{kci_statistics, kci_test, KciStatistics};
pub use kernel::{median_bandwidth, BandwidthEstimate};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("{rows} complete rows, need at least {min}")]
    TooFewRows { rows: usize, min: usize },
    #[error("dataset has no column `{0}`")]
    MissingColumn(String),
    #[error("duplicate column `{0}`")]
    DuplicateColumn(String),
    #[error("dataset lacks observed variables: {}", .0.join(", "))]
    CoverageGap(Vec<String>),
    #[error("csv: {0}")]
    Csv(String),
    #[error("conditional test needs at least one conditioning column")]
    EmptyConditioning,
    #[error("regularized kernel system is singular (regularization {regularization})")]
    SingularSystem { regularization: f64 },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Dsep(#[from] DsepError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    MedianHeuristic,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KciNull {
    GammaApproximation,
    Permutation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    pub alpha: f64,
    pub permutations: usize,
    pub rng_seed: u64,
    pub kernel_bandwidth: Bandwidth,
    pub kci_regularization: f64,
    pub kci_null: KciNull,
}

impl Default for TestConfig {
    fn default() -> Self {
        TestConfig {
            alpha: 0.05,
            permutations: 999,
            rng_seed: 0,
            kernel_bandwidth: Bandwidth::MedianHeuristic,
            kci_regularization: 1e-3,
            kci_null: KciNull::GammaApproximation,
        }
    }
}

impl TestConfig {
    pub fn validate(&self) -> Result<(), StatsError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(StatsError::InvalidConfig(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        if self.permutations < 99 {
            return Err(StatsError::InvalidConfig(format!(
                "{} permutations, need at least 99",
                self.permutations
            )));
        }
        if let Bandwidth::Fixed(v) = self.kernel_bandwidth {
            if !(v > 0.0 && v.is_finite()) {
                return Err(StatsError::InvalidConfig(format!("bandwidth {v} must be positive")));
            }
        }
        if self.kci_regularization.is_nan() || self.kci_regularization <= 0.0 {
            return Err(StatsError::InvalidConfig("kci regularization must be positive".into()));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    /// SHA-256 of the JSON form, hex encoded.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_string(self).expect("config serializes").as_bytes()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    DistanceCovariance,
    KernelConditional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    RejectIndependence,
    FailToReject,
}

impl Decision {
    pub fn from_p(p: f64, alpha: f64) -> Self {
        if p < alpha {
            Decision::RejectIndependence
        } else {
            Decision::FailToReject
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Decision::RejectIndependence => "reject",
            Decision::FailToReject => "fail to reject",
        }
    }
}

/// One test's numbers, before it is tied to a claim.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub method: Method,
    pub statistic: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub decision: Decision,
    pub seed: u64,
    pub permutations: usize,
    /// Constant input: statistic 0, p-value 1.
    #[serde(default)]
    pub degenerate: bool,
}

impl TestOutcome {
    pub(crate) fn degenerate(method: Method, config: &TestConfig, permutations: usize) -> Self {
        TestOutcome {
            method,
            statistic: 0.0,
            p_value: 1.0,
            alpha: config.alpha,
            decision: Decision::FailToReject,
            seed: config.rng_seed,
            permutations,
            degenerate: true,
        }
    }

    pub fn rejected(&self) -> bool {
        self.decision == Decision::RejectIndependence
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub claim: IndependenceClaim,
    #[serde(flatten)]
    pub outcome: TestOutcome,
}

impl TestResult {
    pub fn rejected(&self) -> bool {
        self.outcome.rejected()
    }

    /// Alternative display rule for the unconditional test: a statistic above 1 reads as dependence.
    pub fn statistic_exceeds_one(&self) -> Option<bool> {
        (self.outcome.method == Method::DistanceCovariance).then_some(self.outcome.statistic > 1.0)
    }
}

/// Runs the test matching the claim's shape on standardized columns.
pub fn test_claim(data: &DatasetTable, claim: &IndependenceClaim, config: &TestConfig) -> Result<TestResult, StatsError> {
    let x = kernel::standardize(data.column(&claim.x)?);
    let y = kernel::standardize(data.column(&claim.y)?);
    let outcome = if claim.conditioning.is_empty() {
        dcov_test(&x, &y, config)?
    } else {
        let cols: Vec<&[f64]> = claim
            .conditioning
            .iter()
            .map(|c| data.column(c))
            .collect::<Result<_, _>>()?;
        let n = data.row_count();
        let z = DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]);
        kci_test(&x, &y, &z, config)?
    };
    Ok(TestResult {
        claim: claim.clone(),
        outcome,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Summary {
    pub passed: usize,
    pub failed: usize,
    pub degenerate: usize,
}

impl Summary {
    pub fn of(results: &[TestResult]) -> Self {
        let mut s = Summary::default();
        for r in results {
            if r.outcome.degenerate {
                s.degenerate += 1;
            } else if r.rejected() {
                s.failed += 1;
            } else {
                s.passed += 1;
            }
        }
        s
    }

    pub fn total(&self) -> usize {
        self.passed + self.failed + self.degenerate
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub dag_fingerprint: String,
    pub results: Vec<TestResult>,
    pub summary: Summary,
}

impl Evaluation {
    pub fn consistent(&self) -> bool {
        self.summary.failed == 0
    }

    pub fn first_failure(&self) -> Option<&TestResult> {
        self.results.iter().find(|r| r.rejected())
    }
}

/// Seed used for the claim at `index` of a batch.
pub fn claim_seed(base: u64, index: usize) -> u64 {
    base ^ index as u64
}

/// Tests each claim with seed `config.rng_seed ^ index`; parallel when enabled,
/// with output identical to a serial run.
pub fn evaluate_claims(
    data: &DatasetTable,
    claims: &[IndependenceClaim],
    config: &TestConfig,
) -> Result<Vec<TestResult>, StatsError> {
    config.validate()?;
    let run = |(i, c): (usize, &IndependenceClaim)| test_claim(data, c, &config.with_seed(claim_seed(config.rng_seed, i)));
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        claims.par_iter().enumerate().map(run).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        claims.iter().enumerate().map(run).collect()
    }
}

/// Observed DAG variables the dataset has no column for.
pub fn coverage_gap(data: &DatasetTable, dag: &CausalDag) -> Vec<String> {
    dag.observed().into_iter().filter(|v| !data.has_column(v)).collect()
}

/// Tests every implication of `dag`, in hypothesis-set order.
pub fn evaluate_dag(data: &DatasetTable, dag: &CausalDag, config: &TestConfig) -> Result<Evaluation, StatsError> {
    let gap = coverage_gap(data, dag);
    if !gap.is_empty() {
        return Err(StatsError::CoverageGap(gap));
    }
    let hyp = implied_independencies(dag)?;
    let results = evaluate_claims(data, &hyp.claims, config)?;
    Ok(Evaluation {
        dag_fingerprint: hyp.dag_fingerprint,
        summary: Summary::of(&results),
        results,
    })
}

/// Serial form of [`evaluate_dag`] that hands each result to `sink` as soon as
/// it is computed; results equal those of [`evaluate_dag`].
pub fn evaluate_dag_streaming(
    data: &DatasetTable,
    dag: &CausalDag,
    config: &TestConfig,
    mut sink: impl FnMut(&TestResult),
) -> Result<Evaluation, StatsError> {
    config.validate()?;
    let gap = coverage_gap(data, dag);
    if !gap.is_empty() {
        return Err(StatsError::CoverageGap(gap));
    }
    let hyp = implied_independencies(dag)?;
    let mut results = Vec::with_capacity(hyp.claims.len());
    for (i, c) in hyp.claims.iter().enumerate() {
        let r = test_claim(data, c, &config.with_seed(claim_seed(config.rng_seed, i)))?;
        sink(&r);
        results.push(r);
    }
    Ok(Evaluation {
        dag_fingerprint: hyp.dag_fingerprint,
        summary: Summary::of(&results),
        results,
    })
}
