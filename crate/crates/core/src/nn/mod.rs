//! Dense feed-forward networks with exact reverse-mode gradients.
//!
//! Batches are row-major `n × input_dim` matrices. Weight matrices are stored
//! `out × in`, so a layer computes `z = x · Wᵀ + b` followed by its activation.
//! [`Network::backward`] returns gradients for every parameter and, on request,
//! for the batch inputs as well; the selector relies on the latter.

mod adam;
mod checkpoint;
mod loss;
mod network;

pub use adam::{AdamConfig, OptimizerState};
pub use checkpoint::{NetworkCheckpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use loss::{LossKind, Target, PROB_CLAMP};
pub use network::{Activation, ForwardCache, Gradients, Layer, LayerGrad, Network};

use ndarray::Array2;

use crate::error::Result;

/// Mean loss over a batch with gradients for the parameters and the inputs.
#[derive(Debug, Clone)]
pub struct LossGradients {
    pub mean_loss: f64,
    pub params: Gradients,
    pub inputs: Array2<f64>,
}

/// Forward pass, mean loss, and a full backward pass.
pub fn loss_and_gradients(
    net: &Network,
    batch: &Array2<f64>,
    target: Target<'_>,
    loss: LossKind,
) -> Result<LossGradients> {
    let (outputs, cache) = net.forward(batch)?;
    loss.check_compatible(net)?;
    let mean_loss = loss.mean_loss(&outputs, target)?;
    let d_out = loss.output_gradient(&outputs, target)?;
    let (params, inputs) = net.backward(&cache, d_out, true)?;
    Ok(LossGradients {
        mean_loss,
        params,
        inputs: inputs.expect("input gradients requested"),
    })
}
