//! Linear-Gaussian structural equation data generated from a DAG.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::graph::CausalDag;
use crate::stats::{kernel::standardize, DatasetTable, StatsError};

#[derive(Debug, Clone)]
pub struct SemOptions {
    /// Edge coefficients are drawn uniformly from this range.
    pub weight_range: (f64, f64),
    pub noise_sd: f64,
    /// Variables thresholded at zero into {0, 1} after generation.
    pub binary: Vec<String>,
}

impl Default for SemOptions {
    fn default() -> Self {
        SemOptions {
            weight_range: (0.5, 0.9),
            noise_sd: 1.0,
            binary: Vec::new(),
        }
    }
}

/// Samples every variable (latents included) in topological order as a weighted
/// sum of its standardized parents plus Gaussian noise, standardizes it, and
/// returns the observed columns.
pub fn simulate_linear_gaussian(
    dag: &CausalDag,
    n: usize,
    seed: u64,
    options: &SemOptions,
) -> Result<DatasetTable, StatsError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = options.weight_range;
    let weights: BTreeMap<(String, String), f64> = dag
        .edges()
        .map(|e| ((e.from.clone(), e.to.clone()), rng.gen_range(lo..=hi)))
        .collect();
    let mut values: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for v in dag.topological_order() {
        let mut col: Vec<f64> = (0..n)
            .map(|_| options.noise_sd * rng.sample::<f64, _>(StandardNormal))
            .collect();
        for p in dag.parents_of(&v) {
            let w = weights[&(p.clone(), v.clone())];
            for (c, pv) in col.iter_mut().zip(&values[p]) {
                *c += w * pv;
            }
        }
        values.insert(v, standardize(&col));
    }
    let columns = dag
        .observed()
        .into_iter()
        .map(|name| {
            let mut col = values.remove(&name).expect("every variable simulated");
            if options.binary.contains(&name) {
                col.iter_mut().for_each(|x| *x = if *x > 0.0 { 1.0 } else { 0.0 });
            }
            (name, col)
        })
        .collect();
    DatasetTable::from_columns(columns)
}
