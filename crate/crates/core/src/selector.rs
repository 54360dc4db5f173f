//! The selector net: regresses the operator's mean loss for a mask.

use ndarray::Array2;

use crate::error::{FirError, Result};
use crate::mask::{ImportanceScores, Mask, SubsetScorer};
use crate::nn::{AdamConfig, Network, OptimizerState};

/// Loss weight for the best-performing mask of the previous step.
pub const WEIGHT_BEST: f64 = 10.0;
/// Loss weight for the freshly generated optimal mask.
pub const WEIGHT_OPT: f64 = 5.0;
pub const WEIGHT_OTHER: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SelectorExample {
    pub mask: Mask,
    pub target_loss: f64,
    pub weight: f64,
}

/// `10` for `best`, else `5` for `opt`, else `1`.
pub fn example_weight(mask: &Mask, best: Option<&Mask>, opt: Option<&Mask>) -> f64 {
    if best == Some(mask) {
        WEIGHT_BEST
    } else if opt == Some(mask) {
        WEIGHT_OPT
    } else {
        WEIGHT_OTHER
    }
}

#[derive(Debug, Clone)]
pub struct SelectorModel {
    pub net: Network,
    pub optimizer: OptimizerState,
}

impl SelectorModel {
    pub fn new(net: Network, optimizer: AdamConfig) -> Result<Self> {
        if net.output_dim() != 1 {
            return Err(FirError::Config(format!(
                "selector must have a scalar output, got {}",
                net.output_dim()
            )));
        }
        let optimizer = OptimizerState::new(&net, optimizer);
        Ok(SelectorModel { net, optimizer })
    }

    pub fn feature_dim(&self) -> usize {
        self.net.input_dim()
    }

    fn mask_matrix(&self, examples: &[SelectorExample]) -> Result<Array2<f64>> {
        let d = self.feature_dim();
        if examples.is_empty() {
            return Err(FirError::Argument("empty selector example set".into()));
        }
        let mut x = Array2::zeros((examples.len(), d));
        for (i, ex) in examples.iter().enumerate() {
            if ex.mask.len() != d {
                return Err(FirError::Argument(format!(
                    "mask of length {} for a selector over {d} features",
                    ex.mask.len()
                )));
            }
            for j in ex.mask.ones() {
                x[[i, j]] = 1.0;
            }
        }
        Ok(x)
    }

    /// `1/(2N) Σ w_m (f(m) − target_m)²`.
    pub fn loss(&self, examples: &[SelectorExample]) -> Result<f64> {
        let x = self.mask_matrix(examples)?;
        let pred = self.net.predict(&x)?;
        Ok(weighted_half_mse(pred.column(0).iter().copied(), examples))
    }

    /// One Adam step on the weighted loss. Returns the loss before the step.
    pub fn train_step(&mut self, examples: &[SelectorExample]) -> Result<f64> {
        let (loss, grads) = self.loss_and_gradients(examples)?;
        if !loss.is_finite() {
            return Err(FirError::NonFiniteLoss(format!("selector loss {loss}")));
        }
        self.optimizer.step(&mut self.net, &grads)?;
        Ok(loss)
    }

    /// Weighted loss and its parameter gradients.
    pub fn loss_and_gradients(
        &self,
        examples: &[SelectorExample],
    ) -> Result<(f64, crate::nn::Gradients)> {
        let x = self.mask_matrix(examples)?;
        let (pred, cache) = self.net.forward(&x)?;
        let n = examples.len() as f64;
        let loss = weighted_half_mse(pred.column(0).iter().copied(), examples);
        let d_out = Array2::from_shape_fn((examples.len(), 1), |(i, _)| {
            examples[i].weight * (pred[[i, 0]] - examples[i].target_loss) / n
        });
        let (grads, _) = self.net.backward(&cache, d_out, false)?;
        Ok((loss, grads))
    }

    /// `−∂f/∂m` at an arbitrary point of `[0, 1]^d`.
    pub fn importance_at(&self, m: &[f64]) -> Result<ImportanceScores> {
        self.importance(m)
    }

    pub fn predict(&self, m: &Mask) -> Result<f64> {
        self.predict_mask(m)
    }
}

fn weighted_half_mse(pred: impl Iterator<Item = f64>, examples: &[SelectorExample]) -> f64 {
    let sum: f64 = pred
        .zip(examples)
        .map(|(p, ex)| ex.weight * (p - ex.target_loss).powi(2))
        .sum();
    sum / (2.0 * examples.len() as f64)
}

fn point_matrix(net: &Network, m: &[f64]) -> Result<Array2<f64>> {
    if m.len() != net.input_dim() {
        return Err(FirError::Argument(format!(
            "point of length {} for a network over {} inputs",
            m.len(),
            net.input_dim()
        )));
    }
    Ok(Array2::from_shape_vec((1, m.len()), m.to_vec()).expect("shape"))
}

impl SubsetScorer for Network {
    fn input_dim(&self) -> usize {
        Network::input_dim(self)
    }

    fn predict_point(&self, m: &[f64]) -> Result<f64> {
        if self.output_dim() != 1 {
            return Err(FirError::Config("scorer network must have a scalar output".into()));
        }
        Ok(self.predict(&point_matrix(self, m)?)?[[0, 0]])
    }

    fn gradient_at(&self, m: &[f64]) -> Result<Vec<f64>> {
        if self.output_dim() != 1 {
            return Err(FirError::Config("scorer network must have a scalar output".into()));
        }
        Ok(self.input_gradient(&point_matrix(self, m)?)?.row(0).to_vec())
    }
}

impl SubsetScorer for SelectorModel {
    fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    fn predict_point(&self, m: &[f64]) -> Result<f64> {
        self.net.predict_point(m)
    }

    fn gradient_at(&self, m: &[f64]) -> Result<Vec<f64>> {
        self.net.gradient_at(m)
    }
}
