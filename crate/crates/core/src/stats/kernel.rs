//! Gaussian kernels, the median bandwidth heuristic and low-rank kernel factors.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::StatsError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthEstimate {
    pub value: f64,
    /// Set when every row is identical and the value is the fallback 1.
    pub degenerate: bool,
}

fn sq_dist(m: &DMatrix<f64>, i: usize, j: usize) -> f64 {
    (0..m.ncols()).map(|c| (m[(i, c)] - m[(j, c)]).powi(2)).sum()
}

/// Median Euclidean distance over all row pairs; falls back to the smallest
/// positive distance when the median is zero, and to 1 when all rows coincide.
pub fn median_bandwidth(rows: &DMatrix<f64>) -> Result<BandwidthEstimate, StatsError> {
    let n = rows.nrows();
    if n < 2 || rows.ncols() == 0 {
        return Err(StatsError::TooFewRows { rows: n, min: 2 });
    }
    let mut d = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            d.push(sq_dist(rows, i, j));
        }
    }
    // Median of squared distances, then sqrt: sqrt is monotone.
    let m = d.len();
    let mid = m / 2;
    let (_, hi, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    let hi = *hi;
    let med_sq = if m % 2 == 1 {
        hi
    } else {
        let lo = d[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        // average the two middle distances, not their squares
        let med = (lo.sqrt() + hi.sqrt()) / 2.0;
        med * med
    };
    if med_sq > 0.0 {
        return Ok(BandwidthEstimate {
            value: med_sq.sqrt(),
            degenerate: false,
        });
    }
    match d.iter().copied().filter(|v| *v > 0.0).min_by(f64::total_cmp) {
        Some(v) => Ok(BandwidthEstimate {
            value: v.sqrt(),
            degenerate: false,
        }),
        None => Ok(BandwidthEstimate {
            value: 1.0,
            degenerate: true,
        }),
    }
}

/// Dense Gaussian Gram matrix `exp(-d^2 / (2 sigma^2))`.
pub fn gaussian_gram(rows: &DMatrix<f64>, sigma: f64) -> DMatrix<f64> {
    let n = rows.nrows();
    let g = 1.0 / (2.0 * sigma * sigma);
    DMatrix::from_fn(n, n, |i, j| (-g * sq_dist(rows, i, j)).exp())
}

/// Pivoted incomplete Cholesky of the Gaussian Gram matrix, `K ≈ L Lᵀ`, stopping
/// once every residual diagonal entry is below `tol`.
pub fn gaussian_factor(rows: &DMatrix<f64>, sigma: f64, tol: f64) -> DMatrix<f64> {
    let n = rows.nrows();
    let g = 1.0 / (2.0 * sigma * sigma);
    let mut diag = vec![1.0f64; n];
    let mut cols: Vec<Vec<f64>> = Vec::new();
    // row-major copy of the data for cache-friendly kernel evaluation
    let d = rows.ncols();
    let data: Vec<f64> = (0..n).flat_map(|i| (0..d).map(move |c| (i, c))).map(|(i, c)| rows[(i, c)]).collect();
    while cols.len() < n {
        let (pivot, &best) = diag
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("n > 0");
        if best <= tol {
            break;
        }
        let pr = &data[pivot * d..pivot * d + d];
        let mut col: Vec<f64> = (0..n)
            .map(|i| {
                let r = &data[i * d..i * d + d];
                let s: f64 = r.iter().zip(pr).map(|(a, b)| (a - b) * (a - b)).sum();
                (-g * s).exp()
            })
            .collect();
        for prev in &cols {
            let f = prev[pivot];
            if f != 0.0 {
                for (c, p) in col.iter_mut().zip(prev) {
                    *c -= f * p;
                }
            }
        }
        let scale = best.sqrt();
        for (i, c) in col.iter_mut().enumerate() {
            *c /= scale;
            diag[i] -= *c * *c;
        }
        diag[pivot] = 0.0;
        cols.push(col);
    }
    let m = cols.len();
    DMatrix::from_fn(n, m, |i, j| cols[j][i])
}

/// Subtracts each column's mean, turning a factor of `K` into a factor of `HKH`.
pub fn center_columns(m: &mut DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
}

/// `H K H` for a dense symmetric matrix.
pub fn center_gram(k: &DMatrix<f64>) -> DMatrix<f64> {
    let n = k.nrows();
    let h = DMatrix::<f64>::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64);
    &h * k * &h
}

/// Zero mean, unit sample variance; constant input becomes all zeros.
pub fn standardize(v: &[f64]) -> Vec<f64> {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let sd = var.sqrt();
    if sd > 0.0 {
        v.iter().map(|x| (x - mean) / sd).collect()
    } else {
        vec![0.0; v.len()]
    }
}

pub fn is_constant(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] == w[1])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(v.len(), 1, v)
    }

    #[test]
    fn bandwidth_examples() {
        let b = median_bandwidth(&col(&[0.0, 1.0])).unwrap();
        assert_eq!(b.value, 1.0);
        assert!(!b.degenerate);
        let b = median_bandwidth(&col(&[0.0, 0.0, 0.0])).unwrap();
        assert_eq!(b.value, 1.0);
        assert!(b.degenerate);
        // distances 0, 0, 0, 2, 2, 2 (pairs among {0, 0, 0, 2}): median 1.0
        let b = median_bandwidth(&col(&[0.0, 0.0, 0.0, 2.0])).unwrap();
        assert_eq!(b.value, 1.0);
        // distances 0,0,0,0,0,3 → median 0 → smallest positive
        let b = median_bandwidth(&col(&[5.0, 5.0, 5.0, 8.0])).unwrap();
        assert!(b.value > 0.0);
        assert!(median_bandwidth(&col(&[1.0])).is_err());
    }

    #[test]
    fn full_rank_factor_reproduces_gram() {
        let x = DMatrix::from_fn(12, 2, |i, j| ((i * 7 + j * 3) % 5) as f64 * 0.3 + i as f64 * 0.01);
        let k = gaussian_gram(&x, 0.8);
        let l = gaussian_factor(&x, 0.8, 1e-12);
        let diff = (&l * l.transpose() - &k).abs().max();
        assert!(diff < 1e-8, "{diff}");
    }

    #[test]
    fn standardize_basic() {
        let s = standardize(&[1.0, 2.0, 3.0]);
        assert!((s[0] + 1.0).abs() < 1e-12 && s[1].abs() < 1e-12);
        assert_eq!(standardize(&[4.0, 4.0]), vec![0.0, 0.0]);
    }
}
