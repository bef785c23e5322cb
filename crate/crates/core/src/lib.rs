pub mod dsep;
pub mod fixtures;
pub mod graph;
pub mod implications;
pub mod metrics;
pub mod refine;
pub mod report;
pub mod stats;
pub mod synth;
