use fir_core::data::{
    gen_binary_hypersphere, gen_nonlinear_regression, gen_xor4, Targets, SHELL_MAX, SHELL_MIN,
};
use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn labels(t: &Targets) -> &[usize] {
    t.labels().unwrap()
}

#[test]
fn xor_classes_are_balanced() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for n in [4, 101, 1000, 4096] {
        let ds = gen_xor4(n, &mut rng).unwrap();
        let bound = 3.0 * (n as f64).sqrt() / 2.0;
        for c in 0..4 {
            let count = labels(&ds.targets).iter().filter(|&&l| l == c).count() as f64;
            assert!((count - n as f64 / 4.0).abs() <= bound, "n={n} class {c}: {count}");
        }
    }
}

#[test]
fn xor_noise_features_have_identity_covariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let ds = gen_xor4(4096, &mut rng).unwrap();
    let x = ds.features.slice(ndarray::s![.., 3..10]).to_owned();
    let n = x.nrows() as f64;
    let mean = x.mean_axis(ndarray::Axis(0)).unwrap();
    let centered = &x - &mean;
    let cov = centered.t().dot(&centered) / (n - 1.0);
    for i in 0..7 {
        for j in 0..7 {
            let expect = if i == j { 1.0 } else { 0.0 };
            assert!((cov[[i, j]] - expect).abs() < 0.15, "cov[{i},{j}] = {}", cov[[i, j]]);
        }
    }
}

#[test]
fn xor_relevant_features_cluster_at_signed_corners() {
    // per class, the products x0·x2 and x1·x2 carry the class bits on average
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let ds = gen_xor4(4096, &mut rng).unwrap();
    for c in 0..4 {
        let rows: Vec<usize> = (0..ds.len()).filter(|&r| labels(&ds.targets)[r] == c).collect();
        let mean = |a: usize, b: usize| {
            rows.iter().map(|&r| ds.features[[r, a]] * ds.features[[r, b]]).sum::<f64>() / rows.len() as f64
        };
        let bit02 = usize::from(mean(0, 2) > 0.0);
        let bit12 = usize::from(mean(1, 2) > 0.0);
        assert_eq!(2 * bit02 + bit12, c);
    }
}

/// Least squares with intercept via the normal equations.
fn r_squared(x: &Array2<f64>, y: &Array1<f64>) -> f64 {
    let n = x.nrows();
    let p = x.ncols() + 1;
    let mut a = Array2::<f64>::ones((n, p));
    a.slice_mut(ndarray::s![.., 1..]).assign(x);
    let mut m = a.t().dot(&a);
    let mut v = a.t().dot(y);
    // Gaussian elimination with partial pivoting
    for col in 0..p {
        let piv = (col..p).max_by(|&i, &j| m[[i, col]].abs().total_cmp(&m[[j, col]].abs())).unwrap();
        for k in 0..p {
            m.swap([col, k], [piv, k]);
        }
        v.swap(col, piv);
        for row in col + 1..p {
            let f = m[[row, col]] / m[[col, col]];
            for k in col..p {
                m[[row, k]] -= f * m[[col, k]];
            }
            v[row] -= f * v[col];
        }
    }
    let mut beta = Array1::<f64>::zeros(p);
    for row in (0..p).rev() {
        let tail: f64 = (row + 1..p).map(|k| m[[row, k]] * beta[k]).sum();
        beta[row] = (v[row] - tail) / m[[row, row]];
    }
    let fit = a.dot(&beta);
    let mean = y.mean().unwrap();
    let ss_res: f64 = y.iter().zip(&fit).map(|(a, b)| (a - b).powi(2)).sum();
    let ss_tot: f64 = y.iter().map(|a| (a - mean).powi(2)).sum();
    1.0 - ss_res / ss_tot
}

#[test]
fn regression_target_ignores_features_four_to_nine() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let ds = gen_nonlinear_regression(4096, &mut rng).unwrap();
    let Targets::Real(y) = &ds.targets else { panic!() };
    let y = Array1::from_vec(y.clone());
    let noise_only = ds.features.slice(ndarray::s![.., 4..10]).to_owned();
    let r2 = r_squared(&noise_only, &y);
    assert!(r2.abs() < 0.05, "R² on irrelevant features = {r2}");
    // sanity: the relevant block explains a real share of the variance
    let relevant = ds.features.slice(ndarray::s![.., 0..4]).to_owned();
    assert!(r_squared(&relevant, &y) > 0.2);
}

#[test]
fn hypersphere_classes_are_balanced() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for n in [2, 3, 99, 1000] {
        let ds = gen_binary_hypersphere(n, &mut rng).unwrap();
        let pos = labels(&ds.targets).iter().filter(|&&l| l == 1).count() as f64;
        assert!((pos - n as f64 / 2.0).abs() <= 1.0);
    }
}

#[test]
fn negative_rows_fall_in_the_shell_at_chi_square_rate() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let ds = gen_binary_hypersphere(8192, &mut rng).unwrap();
    let chi = ChiSquared::new(4.0).unwrap();
    let expected = chi.cdf(SHELL_MAX) - chi.cdf(SHELL_MIN);
    let neg: Vec<usize> = (0..ds.len()).filter(|&r| labels(&ds.targets)[r] == 0).collect();
    let inside = neg
        .iter()
        .filter(|&&r| {
            let q: f64 = (0..4).map(|j| ds.features[[r, j]].powi(2)).sum();
            (SHELL_MIN..=SHELL_MAX).contains(&q)
        })
        .count() as f64
        / neg.len() as f64;
    assert!((inside - expected).abs() < 0.03, "{inside} vs {expected}");
}
