//! The two shipped DAGs: the literature-based graph and its data-validated refinement.

use crate::graph::{parse_dag, CausalDag};

pub const LITERATURE_DAG: &str = include_str!("../../../fixtures/literature.dag");
pub const DATA_VALIDATED_DAG: &str = include_str!("../../../fixtures/data_validated.dag");

/// The seven measured variables, as dataset column names.
pub const OBSERVED_VARIABLES: [&str; 7] = [
    "Age",
    "BugReport",
    "CI",
    "CommitFrequency",
    "Communication",
    "MergeConflicts",
    "TestsVolume",
];

pub fn literature() -> CausalDag {
    parse_dag(LITERATURE_DAG).expect("literature fixture parses")
}

pub fn data_validated() -> CausalDag {
    parse_dag(DATA_VALIDATED_DAG).expect("data-validated fixture parses")
}
