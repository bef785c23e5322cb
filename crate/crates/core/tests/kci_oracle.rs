//! Dense reference implementation of the KCI statistic, checked against the low-rank path.

use dagcheck::stats::kci::{gamma_p_value, kci_statistics, KciStatistics};
use dagcheck::stats::kernel::{center_gram, gaussian_gram, median_bandwidth, standardize};
use dagcheck::stats::{median_bandwidth as mb, TestConfig};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn dense_kci(x: &[f64], y: &[f64], z: &[Vec<f64>], eps: f64) -> KciStatistics {
    let n = x.len();
    let xs = standardize(x);
    let ys = standardize(y);
    let zs: Vec<Vec<f64>> = z.iter().map(|c| standardize(c)).collect();
    let xz = DMatrix::from_fn(n, 1 + zs.len(), |i, j| if j == 0 { xs[i] } else { zs[j - 1][i] / 2.0 });
    let ym = DMatrix::from_column_slice(n, 1, &ys);
    let zm = DMatrix::from_fn(n, zs.len(), |i, j| zs[j][i]);
    let kx = center_gram(&gaussian_gram(&xz, median_bandwidth(&xz).unwrap().value));
    let ky = center_gram(&gaussian_gram(&ym, median_bandwidth(&ym).unwrap().value));
    let kz = center_gram(&gaussian_gram(&zm, median_bandwidth(&zm).unwrap().value));
    let reg = &kz + DMatrix::<f64>::identity(n, n) * eps;
    let rz = reg.try_inverse().unwrap() * eps;
    let kxz = &rz * kx * &rz;
    let kyz = &rz * ky * &rz;
    let prod = kxz.component_mul(&kyz);
    KciStatistics {
        statistic: prod.sum(),
        null_mean: (0..n).map(|t| kxz[(t, t)] * kyz[(t, t)]).sum(),
        null_variance: 2.0 * prod.norm_squared(),
    }
}

fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-12)
}

#[test]
fn low_rank_matches_dense() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cfg = TestConfig::default();
    for (n, dz, dependent) in [(60, 1, false), (120, 1, true), (150, 2, false), (200, 2, true)] {
        let z: Vec<Vec<f64>> = (0..dz).map(|_| normals(&mut rng, n)).collect();
        let x: Vec<f64> = normals(&mut rng, n).iter().zip(&z[0]).map(|(e, z)| z + 0.5 * e).collect();
        let e = normals(&mut rng, n);
        let y: Vec<f64> = (0..n)
            .map(|i| z[dz - 1][i] + 0.5 * e[i] + if dependent { x[i] } else { 0.0 })
            .collect();
        let zm = DMatrix::from_fn(n, dz, |i, j| z[j][i]);
        let fast = kci_statistics(&x, &y, &zm, &cfg).unwrap();
        let slow = dense_kci(&x, &y, &z, cfg.kci_regularization);
        assert!(rel(fast.statistic, slow.statistic) < 1e-4, "{fast:?} vs {slow:?}");
        assert!(rel(fast.null_mean, slow.null_mean) < 1e-4, "{fast:?} vs {slow:?}");
        assert!(rel(fast.null_variance, slow.null_variance) < 1e-4, "{fast:?} vs {slow:?}");
        assert!((gamma_p_value(&fast) - gamma_p_value(&slow)).abs() < 1e-4);
    }
}

#[test]
fn bandwidth_matches_pairwise_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let v = normals(&mut rng, 100);
    let m = DMatrix::from_column_slice(100, 1, &v);
    let mut d = Vec::new();
    for i in 0..100 {
        for j in i + 1..100 {
            d.push((v[i] - v[j]).abs());
        }
    }
    d.sort_by(f64::total_cmp);
    let k = d.len();
    let expect = if k % 2 == 1 { d[k / 2] } else { (d[k / 2 - 1] + d[k / 2]) / 2.0 };
    let got = mb(&m).unwrap();
    assert!((got.value - expect).abs() < 1e-12 * expect);
    assert!(!got.degenerate);
}
