//! Distance covariance with a permutation null.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::kernel::is_constant;
use super::{Decision, Method, StatsError, TestConfig, TestOutcome};

/// Doubly centered pairwise distance matrix, row-major.
pub(crate) fn centered_distances(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] = (v[i] - v[j]).abs();
        }
    }
    let row_means: Vec<f64> = (0..n).map(|i| a[i * n..(i + 1) * n].iter().sum::<f64>() / n as f64).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    for i in 0..n {
        for j in 0..n {
            // the matrix is symmetric, so column means equal row means
            a[i * n + j] += grand - row_means[i] - row_means[j];
        }
    }
    a
}

/// `n * V_n^2`, the scaled squared sample distance covariance.
pub fn dcov_statistic(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    let a = centered_distances(x);
    let b = centered_distances(y);
    let s: f64 = a.iter().zip(&b).map(|(p, q)| p * q).sum();
    Ok((s / n as f64).max(0.0))
}

/// Unconditional independence test of `x` and `y`; p-value from permuting `y`.
pub fn dcov_test(x: &[f64], y: &[f64], config: &TestConfig) -> Result<TestOutcome, StatsError> {
    config.validate()?;
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 4 {
        return Err(StatsError::TooFewRows { rows: n, min: 4 });
    }
    if is_constant(x) || is_constant(y) {
        return Ok(TestOutcome::degenerate(Method::DistanceCovariance, config, config.permutations));
    }
    let a = centered_distances(x);
    let b = centered_distances(y);
    let obs_sum: f64 = a.iter().zip(&b).map(|(p, q)| p * q).sum();
    let statistic = (obs_sum / n as f64).max(0.0);

    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut perm: Vec<usize> = (0..n).collect();
    let tie = 1e-10 * obs_sum.abs().max(1e-300);
    let mut exceed = 0usize;
    for _ in 0..config.permutations {
        perm.shuffle(&mut rng);
        let mut s = 0.0;
        for i in 0..n {
            let arow = &a[i * n..(i + 1) * n];
            let brow = &b[perm[i] * n..(perm[i] + 1) * n];
            s += arow.iter().zip(&perm).map(|(av, &pj)| av * brow[pj]).sum::<f64>();
        }
        if s >= obs_sum - tie {
            exceed += 1;
        }
    }
    let p_value = (1 + exceed) as f64 / (config.permutations + 1) as f64;
    Ok(TestOutcome {
        method: Method::DistanceCovariance,
        statistic,
        p_value,
        alpha: config.alpha,
        decision: Decision::from_p(p_value, config.alpha),
        seed: config.rng_seed,
        permutations: config.permutations,
        degenerate: false,
    })
}
