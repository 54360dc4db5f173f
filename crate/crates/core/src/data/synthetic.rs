//! The three synthetic benchmarks: 4-way XOR, nonlinear regression and the
//! hypersphere-shell binary problem. All have `d = 10`.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::{default_feature_names, Dataset, Targets, TaskKind};
use crate::error::{FirError, Result};

pub const SYNTHETIC_DIM: usize = 10;
/// Shell bounds on `Σ_{i<4} x_i²` for the positive class.
pub const SHELL_MIN: f64 = 9.0;
pub const SHELL_MAX: f64 = 16.0;
const SHELL_ATTEMPTS: usize = 1_000_000;

/// Class of a cube corner `(v0, v1, v2) ∈ {±1}³`: `2·bit(v0·v2) + bit(v1·v2)`
/// with `bit(±1) = (±1 + 1) / 2`.
pub fn xor4_class_of_corner(v: [i8; 3]) -> usize {
    let bit = |x: i8| ((x + 1) / 2) as usize;
    2 * bit(v[0] * v[2]) + bit(v[1] * v[2])
}

/// Representative corner of a class (the one with `v2 = +1`).
fn xor4_corner(class: usize) -> [f64; 3] {
    let sign = |b: usize| if b == 1 { 1.0 } else { -1.0 };
    [sign(class >> 1 & 1), sign(class & 1), 1.0]
}

fn shuffled_labels<R: Rng + ?Sized>(n: usize, classes: usize, rng: &mut R) -> Vec<usize> {
    let mut labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    labels.shuffle(rng);
    labels
}

/// Balanced 4-way XOR over features 0–2 plus seven N(0, 1) noise features.
pub fn gen_xor4<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Dataset> {
    if n < 4 {
        return Err(FirError::Argument(format!("xor4 needs n >= 4, got {n}")));
    }
    let labels = shuffled_labels(n, 4, rng);
    let cluster = Normal::new(0.0, 0.5f64.sqrt()).expect("valid sd");
    let mut x = Array2::zeros((n, SYNTHETIC_DIM));
    for (i, &c) in labels.iter().enumerate() {
        let corner = xor4_corner(c);
        let flip = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        for j in 0..3 {
            x[[i, j]] = flip * corner[j] + cluster.sample(rng);
        }
        for j in 3..SYNTHETIC_DIM {
            x[[i, j]] = StandardNormal.sample(rng);
        }
    }
    Ok(Dataset::new(
        x,
        Targets::Labels(labels),
        TaskKind::Multiclass(4),
        default_feature_names(SYNTHETIC_DIM),
    )?
    .with_class_names((0..4).map(|c| c.to_string()).collect()))
}

/// `y = -2 sin(2 x0) + max(x1, 0) + x2 + exp(-x3) + ε`.
pub fn nonlinear_regression_target(x: &[f64], noise: f64) -> f64 {
    -2.0 * (2.0 * x[0]).sin() + x[1].max(0.0) + x[2] + (-x[3]).exp() + noise
}

pub fn gen_nonlinear_regression<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Dataset> {
    if n == 0 {
        return Err(FirError::Argument("nonlinear regression needs n >= 1".into()));
    }
    let mut x = Array2::zeros((n, SYNTHETIC_DIM));
    let mut y = Vec::with_capacity(n);
    for mut row in x.rows_mut() {
        for v in row.iter_mut() {
            *v = StandardNormal.sample(rng);
        }
        let eps: f64 = StandardNormal.sample(rng);
        y.push(nonlinear_regression_target(row.as_slice().expect("row-major"), eps));
    }
    Dataset::new(
        x,
        Targets::Real(y),
        TaskKind::Regression,
        default_feature_names(SYNTHETIC_DIM),
    )
}

/// Label 0 (`y = -1`): `x ~ N(0, I)`. Label 1 (`y = +1`): `x0..x3` standard
/// normal conditioned on `9 <= Σ x_i² <= 16`, the rest `N(0, I)`.
pub fn gen_binary_hypersphere<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Dataset> {
    if n < 2 {
        return Err(FirError::Argument(format!("binary hypersphere needs n >= 2, got {n}")));
    }
    let labels = shuffled_labels(n, 2, rng);
    let mut x = Array2::zeros((n, SYNTHETIC_DIM));
    for (i, &label) in labels.iter().enumerate() {
        if label == 1 {
            let shell = sample_shell(rng)?;
            for j in 0..4 {
                x[[i, j]] = shell[j];
            }
        } else {
            for j in 0..4 {
                x[[i, j]] = StandardNormal.sample(rng);
            }
        }
        for j in 4..SYNTHETIC_DIM {
            x[[i, j]] = StandardNormal.sample(rng);
        }
    }
    Ok(Dataset::new(
        x,
        Targets::Labels(labels),
        TaskKind::Binary,
        default_feature_names(SYNTHETIC_DIM),
    )?
    .with_class_names(vec!["-1".into(), "+1".into()]))
}

fn sample_shell<R: Rng + ?Sized>(rng: &mut R) -> Result<[f64; 4]> {
    for _ in 0..SHELL_ATTEMPTS {
        let v: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(rng));
        let r2: f64 = v.iter().map(|a| a * a).sum();
        if (SHELL_MIN..=SHELL_MAX).contains(&r2) {
            return Ok(v);
        }
    }
    Err(FirError::Data(format!(
        "shell rejection sampling exhausted {SHELL_ATTEMPTS} attempts"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn corner_mapping() {
        assert_eq!(xor4_class_of_corner([1, 1, 1]), 3);
        assert_eq!(xor4_class_of_corner([-1, -1, -1]), 3);
        assert_eq!(xor4_class_of_corner([1, -1, -1]), 1);
        for c in 0..4 {
            let v = xor4_corner(c);
            let corner = [v[0] as i8, v[1] as i8, v[2] as i8];
            assert_eq!(xor4_class_of_corner(corner), c);
            assert_eq!(xor4_class_of_corner([-corner[0], -corner[1], -corner[2]]), c);
        }
    }

    #[test]
    fn regression_formula() {
        let mut x = [0.0; 10];
        assert_eq!(nonlinear_regression_target(&x, 0.0), 1.0);
        x[0] = std::f64::consts::FRAC_PI_4;
        assert!((nonlinear_regression_target(&x, 0.0) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn generators_are_seed_deterministic() {
        let a = gen_xor4(64, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = gen_xor4(64, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a, b);
        let c = gen_binary_hypersphere(64, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let d = gen_binary_hypersphere(64, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(c, d);
    }

    #[test]
    fn size_preconditions() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(gen_xor4(3, &mut rng).is_err());
        assert!(gen_binary_hypersphere(1, &mut rng).is_err());
        assert!(gen_nonlinear_regression(0, &mut rng).is_err());
    }

    #[test]
    fn hypersphere_positive_rows_lie_in_shell() {
        let ds = gen_binary_hypersphere(501, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        let labels = ds.targets.labels().unwrap();
        let pos = labels.iter().filter(|&&l| l == 1).count();
        assert!(pos.abs_diff(501 / 2) <= 1);
        for (row, &l) in ds.features.rows().into_iter().zip(labels) {
            if l == 1 {
                let r2: f64 = row.iter().take(4).map(|v| v * v).sum();
                assert!((SHELL_MIN..=SHELL_MAX).contains(&r2));
            }
        }
    }
}
