//! Kernel conditional independence test on low-rank kernel factors.
//!
//! With centered Gram matrices `Kx ≈ Gx Gxᵀ` (x augmented by z/2), `Ky ≈ Gy Gyᵀ`
//! and `Kz ≈ Gz Gzᵀ`, the residual operator `Rz = ε (Kz + εI)⁻¹` equals
//! `I - Gz (GzᵀGz + εI)⁻¹ Gzᵀ`. With `A = Rz Gx` and `B = Rz Gy` the statistic is
//! `Σ (AAᵀ ⊙ BBᵀ) = ‖AᵀB‖²`, and the null is a gamma law matched to
//! `mean = Σ_t ‖a_t‖² ‖b_t‖²` and `var = 2 ‖AAᵀ ⊙ BBᵀ‖²_F`.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Gamma};

use super::kernel::{center_columns, gaussian_factor, is_constant, median_bandwidth, standardize};
use super::{Bandwidth, Decision, KciNull, Method, StatsError, TestConfig, TestOutcome};

/// Residual diagonal below which the incomplete Cholesky factorization stops.
/// Well under the default ridge of 1e-3 so dropped directions barely move `Rz`.
pub const FACTOR_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KciStatistics {
    pub statistic: f64,
    pub null_mean: f64,
    pub null_variance: f64,
}

pub(crate) struct KciInputs {
    /// `[x, z/2]`, standardized
    pub xz: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub z: DMatrix<f64>,
}

pub(crate) fn prepare(x: &[f64], y: &[f64], z: &DMatrix<f64>) -> Result<KciInputs, StatsError> {
    let n = x.len();
    if y.len() != n {
        return Err(StatsError::LengthMismatch(n, y.len()));
    }
    if z.nrows() != n {
        return Err(StatsError::LengthMismatch(n, z.nrows()));
    }
    if z.ncols() == 0 {
        return Err(StatsError::EmptyConditioning);
    }
    if n < 10 {
        return Err(StatsError::TooFewRows { rows: n, min: 10 });
    }
    let zs: Vec<Vec<f64>> = z.column_iter().map(|c| standardize(c.as_slice())).collect();
    let xs = standardize(x);
    let ys = standardize(y);
    let dz = zs.len();
    let xz = DMatrix::from_fn(n, 1 + dz, |i, j| if j == 0 { xs[i] } else { zs[j - 1][i] / 2.0 });
    let zm = DMatrix::from_fn(n, dz, |i, j| zs[j][i]);
    Ok(KciInputs {
        xz,
        y: DMatrix::from_column_slice(n, 1, &ys),
        z: zm,
    })
}

fn width(data: &DMatrix<f64>, bw: Bandwidth) -> Result<f64, StatsError> {
    match bw {
        Bandwidth::MedianHeuristic => Ok(median_bandwidth(data)?.value),
        Bandwidth::Fixed(v) => Ok(v),
    }
}

fn centered_factor(data: &DMatrix<f64>, bw: Bandwidth) -> Result<DMatrix<f64>, StatsError> {
    let mut g = gaussian_factor(data, width(data, bw)?, FACTOR_TOLERANCE);
    center_columns(&mut g);
    Ok(g)
}

/// `Rz M` through the Woodbury identity.
fn residualize(gz: &DMatrix<f64>, m: &DMatrix<f64>, eps: f64) -> Result<DMatrix<f64>, StatsError> {
    if gz.ncols() == 0 {
        return Ok(m.clone());
    }
    let mut inner = gz.transpose() * gz;
    for i in 0..inner.nrows() {
        inner[(i, i)] += eps;
    }
    let chol = inner.cholesky().ok_or(StatsError::SingularSystem { regularization: eps })?;
    let proj = chol.solve(&(gz.transpose() * m));
    Ok(m - gz * proj)
}

/// Residualized factors `A = Rz Gx`, `B = Rz Gy`.
pub(crate) fn residual_factors(
    inputs: &KciInputs,
    config: &TestConfig,
) -> Result<(DMatrix<f64>, DMatrix<f64>), StatsError> {
    let gx = centered_factor(&inputs.xz, config.kernel_bandwidth)?;
    let gy = centered_factor(&inputs.y, config.kernel_bandwidth)?;
    let gz = centered_factor(&inputs.z, config.kernel_bandwidth)?;
    let eps = config.kci_regularization;
    Ok((residualize(&gz, &gx, eps)?, residualize(&gz, &gy, eps)?))
}

pub(crate) fn statistics_from_factors(a: &DMatrix<f64>, b: &DMatrix<f64>) -> KciStatistics {
    let statistic = (a.transpose() * b).norm_squared();
    let n = a.nrows();
    let an: Vec<f64> = a.row_iter().map(|r| r.norm_squared()).collect();
    let bn: Vec<f64> = b.row_iter().map(|r| r.norm_squared()).collect();
    let null_mean = an.iter().zip(&bn).map(|(p, q)| p * q).sum();
    let kx = a * a.transpose();
    let ky = b * b.transpose();
    let mut var = 0.0;
    for j in 0..n {
        for i in 0..n {
            let v = kx[(i, j)] * ky[(i, j)];
            var += v * v;
        }
    }
    KciStatistics {
        statistic,
        null_mean,
        null_variance: 2.0 * var,
    }
}

/// Statistic and gamma-null moments without a decision.
pub fn kci_statistics(x: &[f64], y: &[f64], z: &DMatrix<f64>, config: &TestConfig) -> Result<KciStatistics, StatsError> {
    let inputs = prepare(x, y, z)?;
    let (a, b) = residual_factors(&inputs, config)?;
    Ok(statistics_from_factors(&a, &b))
}

/// Upper tail of the moment-matched gamma law.
pub fn gamma_p_value(s: &KciStatistics) -> f64 {
    if !(s.null_mean > 0.0 && s.null_variance > 0.0) {
        return 1.0;
    }
    let shape = s.null_mean * s.null_mean / s.null_variance;
    let scale = s.null_variance / s.null_mean;
    match Gamma::new(shape, 1.0 / scale) {
        Ok(g) => g.sf(s.statistic).clamp(0.0, 1.0),
        Err(_) => 1.0,
    }
}

/// Tests `x _||_ y | z`.
pub fn kci_test(x: &[f64], y: &[f64], z: &DMatrix<f64>, config: &TestConfig) -> Result<TestOutcome, StatsError> {
    config.validate()?;
    let inputs = prepare(x, y, z)?;
    let perms = match config.kci_null {
        KciNull::GammaApproximation => 0,
        KciNull::Permutation => config.permutations,
    };
    if is_constant(x) || is_constant(y) {
        return Ok(TestOutcome::degenerate(Method::KernelConditional, config, perms));
    }
    let (a, b) = residual_factors(&inputs, config)?;
    let stats = statistics_from_factors(&a, &b);
    let p_value = match config.kci_null {
        KciNull::GammaApproximation => gamma_p_value(&stats),
        KciNull::Permutation => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
            let mut perm: Vec<usize> = (0..b.nrows()).collect();
            let tie = 1e-10 * stats.statistic.abs().max(1e-300);
            let mut exceed = 0usize;
            for _ in 0..perms {
                perm.shuffle(&mut rng);
                let bp = b.select_rows(&perm);
                if (a.transpose() * bp).norm_squared() >= stats.statistic - tie {
                    exceed += 1;
                }
            }
            (1 + exceed) as f64 / (perms + 1) as f64
        }
    };
    Ok(TestOutcome {
        method: Method::KernelConditional,
        statistic: stats.statistic,
        p_value,
        alpha: config.alpha,
        decision: Decision::from_p(p_value, config.alpha),
        seed: config.rng_seed,
        permutations: perms,
        degenerate: false,
    })
}
