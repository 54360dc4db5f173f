//! The operator net: a supervised model fed `[x ⊗ m ; m]`.
//!
//! A batch of `B` examples and a candidate set of `|M|` masks becomes one
//! `|M|·B × 2d` matrix, mask-major: rows `j·B .. (j+1)·B` hold every example
//! under mask `j`.

use ndarray::Array2;

use crate::data::Dataset;
use crate::error::{FirError, Result};
use crate::mask::Mask;
use crate::nn::{AdamConfig, LossKind, Network, OptimizerState};
use crate::par::Execution;

/// Masks evaluated per forward pass when computing per-mask losses.
const MASKS_PER_CHUNK: usize = 8;

/// `[x ⊗ m ; m]`.
pub fn masked_input(x: &[f64], m: &Mask) -> Result<Vec<f64>> {
    if x.len() != m.len() {
        return Err(FirError::Argument(format!(
            "feature vector has {} entries, mask has {}",
            x.len(),
            m.len()
        )));
    }
    let bits = m.to_reals();
    Ok(x.iter()
        .zip(&bits)
        .map(|(a, b)| a * b)
        .chain(bits.iter().copied())
        .collect())
}

/// Stacks `rows` of `features` under every mask in `masks`, mask-major.
pub fn masked_batch(features: &Array2<f64>, rows: &[usize], masks: &[Mask]) -> Result<Array2<f64>> {
    let d = features.ncols();
    if let Some(bad) = masks.iter().find(|m| m.len() != d) {
        return Err(FirError::Argument(format!(
            "mask of length {} for {d} features",
            bad.len()
        )));
    }
    let n = rows.len();
    let mut out = Array2::zeros((n * masks.len(), 2 * d));
    for (j, m) in masks.iter().enumerate() {
        let bits = m.to_reals();
        for (i, &r) in rows.iter().enumerate() {
            let mut row = out.row_mut(j * n + i);
            let x = features.row(r);
            for k in 0..d {
                row[k] = x[k] * bits[k];
                row[d + k] = bits[k];
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct OperatorModel {
    pub net: Network,
    pub loss: LossKind,
    pub optimizer: OptimizerState,
}

impl OperatorModel {
    pub fn new(net: Network, loss: LossKind, optimizer: AdamConfig) -> Result<Self> {
        if !net.input_dim().is_multiple_of(2) {
            return Err(FirError::Config(format!(
                "operator input must be 2·d, got {}",
                net.input_dim()
            )));
        }
        loss.check_compatible(&net)?;
        let optimizer = OptimizerState::new(&net, optimizer);
        Ok(OperatorModel {
            net,
            loss,
            optimizer,
        })
    }

    /// Number of features `d`.
    pub fn feature_dim(&self) -> usize {
        self.net.input_dim() / 2
    }

    fn check_data(&self, data: &Dataset, rows: &[usize], masks: &[Mask]) -> Result<()> {
        if data.dim() != self.feature_dim() {
            return Err(FirError::Config(format!(
                "operator expects {} features, dataset has {}",
                self.feature_dim(),
                data.dim()
            )));
        }
        if data.task.loss() != self.loss {
            return Err(FirError::Config(format!(
                "dataset task {:?} does not match operator loss {:?}",
                data.task, self.loss
            )));
        }
        if rows.is_empty() {
            return Err(FirError::Argument("empty data".into()));
        }
        if masks.is_empty() {
            return Err(FirError::Argument("empty mask set".into()));
        }
        Ok(())
    }

    /// Instance losses for `rows × masks`, laid out mask-major.
    fn instance_losses(&self, data: &Dataset, rows: &[usize], masks: &[Mask]) -> Result<Vec<f64>> {
        let input = masked_batch(&data.features, rows, masks)?;
        let outputs = self.net.predict(&input)?;
        let target = data.tiled_targets(rows, masks.len());
        Ok(self.loss.instance_losses(&outputs, target.view())?.to_vec())
    }

    /// Mean instance loss of each mask over `rows`.
    pub fn per_mask_losses_on(
        &self,
        data: &Dataset,
        rows: &[usize],
        masks: &[Mask],
        exec: Execution,
    ) -> Result<Vec<f64>> {
        self.check_data(data, rows, masks)?;
        let chunks: Vec<&[Mask]> = masks.chunks(MASKS_PER_CHUNK).collect();
        let n = rows.len();
        let parts = exec.map(&chunks, |chunk| -> Result<Vec<f64>> {
            let losses = self.instance_losses(data, rows, chunk)?;
            Ok(losses.chunks(n).map(|c| c.iter().sum::<f64>() / n as f64).collect())
        });
        let mut out = Vec::with_capacity(masks.len());
        for p in parts {
            out.extend(p?);
        }
        Ok(out)
    }

    /// Mean instance loss of each mask over the whole dataset.
    pub fn per_mask_losses(&self, data: &Dataset, masks: &[Mask], exec: Execution) -> Result<Vec<f64>> {
        let rows: Vec<usize> = (0..data.len()).collect();
        self.per_mask_losses_on(data, &rows, masks, exec)
    }

    pub fn per_mask_loss(&self, data: &Dataset, m: &Mask) -> Result<f64> {
        Ok(self.per_mask_losses(data, std::slice::from_ref(m), Execution::Sequential)?[0])
    }

    /// `1/(|M||D|) Σ_m Σ_(x,y) l(x ⊗ m, y)`.
    pub fn operator_loss(&self, data: &Dataset, masks: &[Mask]) -> Result<f64> {
        let per_mask = self.per_mask_losses(data, masks, Execution::Sequential)?;
        Ok(per_mask.iter().sum::<f64>() / per_mask.len() as f64)
    }

    /// One optimizer step on the double-mean loss over `rows × masks`.
    ///
    /// Returns the loss before the step and the per-mask losses it was made of.
    pub fn train_step(&mut self, data: &Dataset, rows: &[usize], masks: &[Mask]) -> Result<StepLoss> {
        self.check_data(data, rows, masks)?;
        let input = masked_batch(&data.features, rows, masks)?;
        let target = data.tiled_targets(rows, masks.len());
        let (outputs, cache) = self.net.forward(&input)?;
        let losses = self.loss.instance_losses(&outputs, target.view())?;
        let n = rows.len();
        let per_mask: Vec<f64> = losses
            .as_slice()
            .expect("contiguous")
            .chunks(n)
            .map(|c| c.iter().sum::<f64>() / n as f64)
            .collect();
        let mean = losses.sum() / losses.len() as f64;
        if !mean.is_finite() {
            return Err(FirError::NonFiniteLoss(format!("operator loss {mean}")));
        }
        let d_out = self.loss.output_gradient(&outputs, target.view())?;
        let (grads, _) = self.net.backward(&cache, d_out, false)?;
        self.optimizer.step(&mut self.net, &grads)?;
        Ok(StepLoss { mean, per_mask })
    }

    /// Raw network outputs for `features` under a single mask.
    pub fn predict(&self, features: &Array2<f64>, m: &Mask) -> Result<Array2<f64>> {
        if features.ncols() != self.feature_dim() {
            return Err(FirError::Argument(format!(
                "expected {} feature columns, got {}",
                self.feature_dim(),
                features.ncols()
            )));
        }
        let rows: Vec<usize> = (0..features.nrows()).collect();
        let input = masked_batch(features, &rows, std::slice::from_ref(m))?;
        self.net.predict(&input)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepLoss {
    pub mean: f64,
    pub per_mask: Vec<f64>,
}
