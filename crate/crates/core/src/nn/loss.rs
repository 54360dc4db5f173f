use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::network::{Activation, Network};
use crate::error::{FirError, Result};

/// Probabilities fed to a logarithm are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]`.
pub const PROB_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Mse,
    BinaryCrossEntropy,
    CategoricalCrossEntropy,
}

/// Supervision for one batch.
#[derive(Debug, Clone, Copy)]
pub enum Target<'a> {
    /// `n × output_dim` real targets (regression values, or 0/1 for binary).
    Values(ArrayView2<'a, f64>),
    /// One class index per row.
    Classes(&'a [usize]),
}

impl Target<'_> {
    fn rows(&self) -> usize {
        match self {
            Target::Values(v) => v.nrows(),
            Target::Classes(c) => c.len(),
        }
    }
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

fn in_clamp_range(p: f64) -> bool {
    (PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&p)
}

impl LossKind {
    /// Checks that the network's output head suits this loss.
    pub fn check_compatible(self, net: &Network) -> Result<()> {
        match self {
            LossKind::Mse => Ok(()),
            LossKind::BinaryCrossEntropy if net.output_activation() == Activation::Sigmoid => Ok(()),
            LossKind::CategoricalCrossEntropy
                if net.output_activation() == Activation::Softmax =>
            {
                Ok(())
            }
            _ => Err(FirError::Config(format!(
                "{self:?} cannot be used with a {} output layer",
                net.output_activation().name()
            ))),
        }
    }

    fn check_target(self, outputs: &Array2<f64>, target: Target<'_>) -> Result<()> {
        if target.rows() != outputs.nrows() {
            return Err(FirError::Config(format!(
                "{} target rows for {} output rows",
                target.rows(),
                outputs.nrows()
            )));
        }
        match (self, target) {
            (LossKind::Mse | LossKind::BinaryCrossEntropy, Target::Values(v)) => {
                if v.ncols() != outputs.ncols() {
                    return Err(FirError::Config(format!(
                        "target width {} != output width {}",
                        v.ncols(),
                        outputs.ncols()
                    )));
                }
                Ok(())
            }
            (LossKind::CategoricalCrossEntropy, Target::Classes(c)) => {
                match c.iter().find(|&&k| k >= outputs.ncols()) {
                    Some(k) => Err(FirError::Config(format!(
                        "class index {k} out of range for {} outputs",
                        outputs.ncols()
                    ))),
                    None => Ok(()),
                }
            }
            (kind, _) => Err(FirError::Config(format!(
                "target kind does not match loss {kind:?}"
            ))),
        }
    }

    /// One loss value per row. Multi-output rows average over their outputs.
    pub fn instance_losses(self, outputs: &Array2<f64>, target: Target<'_>) -> Result<Array1<f64>> {
        self.check_target(outputs, target)?;
        let k = outputs.ncols() as f64;
        let losses = match (self, target) {
            (LossKind::Mse, Target::Values(y)) => outputs
                .rows()
                .into_iter()
                .zip(y.rows())
                .map(|(p, t)| p.iter().zip(t).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / k)
                .collect(),
            (LossKind::BinaryCrossEntropy, Target::Values(y)) => outputs
                .rows()
                .into_iter()
                .zip(y.rows())
                .map(|(p, t)| {
                    p.iter()
                        .zip(t)
                        .map(|(&pi, &ti)| {
                            let q = clamp_prob(pi);
                            -(ti * q.ln() + (1.0 - ti) * (1.0 - q).ln())
                        })
                        .sum::<f64>()
                        / k
                })
                .collect(),
            (LossKind::CategoricalCrossEntropy, Target::Classes(c)) => outputs
                .rows()
                .into_iter()
                .zip(c)
                .map(|(p, &cls)| -clamp_prob(p[cls]).ln())
                .collect(),
            _ => unreachable!("checked by check_target"),
        };
        Ok(losses)
    }

    pub fn mean_loss(self, outputs: &Array2<f64>, target: Target<'_>) -> Result<f64> {
        let losses = self.instance_losses(outputs, target)?;
        Ok(losses.sum() / losses.len() as f64)
    }

    /// `∂(mean loss)/∂outputs`.
    pub fn output_gradient(self, outputs: &Array2<f64>, target: Target<'_>) -> Result<Array2<f64>> {
        self.check_target(outputs, target)?;
        let n = outputs.nrows() as f64;
        let k = outputs.ncols() as f64;
        let grad = match (self, target) {
            (LossKind::Mse, Target::Values(y)) => {
                let mut g = outputs - &y;
                g.mapv_inplace(|v| 2.0 * v / (n * k));
                g
            }
            (LossKind::BinaryCrossEntropy, Target::Values(y)) => {
                let mut g = Array2::zeros(outputs.raw_dim());
                ndarray::Zip::from(&mut g)
                    .and(outputs)
                    .and(&y)
                    .for_each(|g, &p, &t| {
                        if in_clamp_range(p) {
                            *g = (-t / p + (1.0 - t) / (1.0 - p)) / (n * k);
                        }
                    });
                g
            }
            (LossKind::CategoricalCrossEntropy, Target::Classes(c)) => {
                let mut g = Array2::zeros(outputs.raw_dim());
                for (i, &cls) in c.iter().enumerate() {
                    let p = outputs[[i, cls]];
                    if in_clamp_range(p) {
                        g[[i, cls]] = -1.0 / (n * p);
                    }
                }
                g
            }
            _ => unreachable!("checked by check_target"),
        };
        Ok(grad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn mse_perfect_fit() {
        let out = array![[1.0], [2.5]];
        let y = array![[1.0], [2.5]];
        let loss = LossKind::Mse;
        assert_eq!(loss.mean_loss(&out, Target::Values(y.view())).unwrap(), 0.0);
        let g = loss.output_gradient(&out, Target::Values(y.view())).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cce_uniform_is_ln_k() {
        let out = Array2::from_elem((3, 4), 0.25);
        let l = LossKind::CategoricalCrossEntropy
            .mean_loss(&out, Target::Classes(&[0, 3, 1]))
            .unwrap();
        assert!((l - 4f64.ln()).abs() < 1e-12);
        assert!((l - 1.386294).abs() < 1e-6);
    }

    #[test]
    fn clamped_cross_entropy_stays_finite() {
        let out = array![[0.0, 1.0]];
        let l = LossKind::CategoricalCrossEntropy
            .mean_loss(&out, Target::Classes(&[0]))
            .unwrap();
        assert!(l.is_finite() && l > 0.0);
        let g = LossKind::CategoricalCrossEntropy
            .output_gradient(&out, Target::Classes(&[0]))
            .unwrap();
        assert!(g.iter().all(|v| v.is_finite()));

        let p = array![[0.0], [1.0]];
        let y = array![[1.0], [0.0]];
        let l = LossKind::BinaryCrossEntropy
            .mean_loss(&p, Target::Values(y.view()))
            .unwrap();
        assert!(l.is_finite() && l > 0.0);
    }

    #[test]
    fn target_shape_errors() {
        let out = array![[0.5, 0.5]];
        assert!(LossKind::CategoricalCrossEntropy
            .mean_loss(&out, Target::Classes(&[2]))
            .is_err());
        assert!(LossKind::CategoricalCrossEntropy
            .mean_loss(&out, Target::Classes(&[0, 1]))
            .is_err());
        let y = array![[1.0]];
        assert!(LossKind::Mse.mean_loss(&out, Target::Values(y.view())).is_err());
        assert!(LossKind::Mse.mean_loss(&out, Target::Classes(&[0])).is_err());
    }
}
