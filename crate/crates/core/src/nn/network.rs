use ndarray::{linalg::general_mat_mul, Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FirError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    Relu,
    Linear,
    Softmax,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Relu => "relu",
            Activation::Linear => "linear",
            Activation::Softmax => "softmax",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "sigmoid" => Some(Activation::Sigmoid),
            "relu" => Some(Activation::Relu),
            "linear" => Some(Activation::Linear),
            "softmax" => Some(Activation::Softmax),
            _ => None,
        }
    }

    fn apply(self, z: &mut Array2<f64>) {
        match self {
            Activation::Sigmoid => z.mapv_inplace(sigmoid),
            Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
            Activation::Linear => {}
            Activation::Softmax => {
                for mut row in z.rows_mut() {
                    let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                    row.mapv_inplace(|v| (v - max).exp());
                    let sum = row.sum();
                    row.mapv_inplace(|v| v / sum);
                }
            }
        }
    }

    /// Turns `dL/da` into `dL/dz` given the pre-activation `z` and output `a`.
    fn backprop(self, z: &Array2<f64>, a: &Array2<f64>, mut grad: Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Sigmoid => {
                grad.zip_mut_with(a, |g, &s| *g *= s * (1.0 - s));
                grad
            }
            Activation::Relu => {
                grad.zip_mut_with(z, |g, &v| {
                    if v <= 0.0 {
                        *g = 0.0
                    }
                });
                grad
            }
            Activation::Linear => grad,
            Activation::Softmax => {
                for (mut g, p) in grad.rows_mut().into_iter().zip(a.rows()) {
                    let dot = g.dot(&p);
                    g.zip_mut_with(&p, |gi, &pi| *gi = pi * (*gi - dot));
                }
                grad
            }
        }
    }
}

#[inline]
pub(crate) fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out × in`, row-major.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.nrows()
    }

    /// Uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn glorot<R: Rng + ?Sized>(
        input_dim: usize,
        output_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let limit = (6.0 / (input_dim + output_dim) as f64).sqrt();
        let weights =
            Array2::from_shape_fn((output_dim, input_dim), |_| rng.random_range(-limit..=limit));
        Layer {
            weights,
            bias: Array1::zeros(output_dim),
            activation,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Gradients {
            layers: net
                .layers()
                .iter()
                .map(|l| LayerGrad {
                    weights: Array2::zeros(l.weights.raw_dim()),
                    bias: Array1::zeros(l.bias.raw_dim()),
                })
                .collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|g| g.weights.iter().chain(g.bias.iter()))
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Per-layer values kept by [`Network::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `inputs[k]` is the input to layer `k`; `inputs[0]` is the batch itself.
    inputs: Vec<Array2<f64>>,
    pre_activations: Vec<Array2<f64>>,
    outputs: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn layer_input(&self, k: usize) -> &Array2<f64> {
        &self.inputs[k]
    }

    pub fn pre_activation(&self, k: usize) -> &Array2<f64> {
        &self.pre_activations[k]
    }

    pub fn post_activation(&self, k: usize) -> &Array2<f64> {
        &self.outputs[k]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
}

impl Network {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(FirError::Config("network needs at least one layer".into()));
        }
        for (k, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.output_dim() {
                return Err(FirError::Config(format!(
                    "layer {k}: bias length {} != output dim {}",
                    layer.bias.len(),
                    layer.output_dim()
                )));
            }
            if layer.input_dim() == 0 || layer.output_dim() == 0 {
                return Err(FirError::Config(format!("layer {k}: zero-sized layer")));
            }
            if layer.activation == Activation::Softmax && k + 1 != layers.len() {
                return Err(FirError::Config(format!(
                    "layer {k}: softmax is only allowed on the output layer"
                )));
            }
            if let Some(next) = layers.get(k + 1) {
                if next.input_dim() != layer.output_dim() {
                    return Err(FirError::Config(format!(
                        "layer {k} outputs {} values but layer {} expects {}",
                        layer.output_dim(),
                        k + 1,
                        next.input_dim()
                    )));
                }
            }
            if !layer
                .weights
                .iter()
                .chain(layer.bias.iter())
                .all(|v| v.is_finite())
            {
                return Err(FirError::Numeric {
                    layer: k,
                    message: "non-finite parameter".into(),
                });
            }
        }
        Ok(Network { layers })
    }

    /// Builds `dims[0] → dims[1] → … → dims[last]` with `hidden` activations
    /// on every layer but the last.
    pub fn mlp<R: Rng + ?Sized>(
        dims: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if dims.len() < 2 {
            return Err(FirError::Config(
                "an MLP needs an input and an output dimension".into(),
            ));
        }
        let n = dims.len() - 1;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(k, w)| {
                let act = if k + 1 == n { output } else { hidden };
                Layer::glorot(w[0], w[1], act, rng)
            })
            .collect();
        Network::new(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn output_activation(&self) -> Activation {
        self.layers[self.layers.len() - 1].activation
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    fn check_batch(&self, batch: &Array2<f64>) -> Result<()> {
        if batch.ncols() != self.input_dim() {
            return Err(FirError::Config(format!(
                "batch has {} columns, network expects {}",
                batch.ncols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    fn affine(layer: &Layer, input: &Array2<f64>) -> Array2<f64> {
        let mut z = Array2::zeros((input.nrows(), layer.output_dim()));
        z.rows_mut().into_iter().for_each(|mut r| r.assign(&layer.bias));
        general_mat_mul(1.0, input, &layer.weights.t(), 1.0, &mut z);
        z
    }

    fn check_finite(k: usize, a: &Array2<f64>) -> Result<()> {
        if a.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(FirError::Numeric {
                layer: k,
                message: "non-finite activation".into(),
            })
        }
    }

    /// Outputs only; skips the cache.
    pub fn predict(&self, batch: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_batch(batch)?;
        let mut current: Option<Array2<f64>> = None;
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = Self::affine(layer, current.as_ref().unwrap_or(batch));
            layer.activation.apply(&mut z);
            Self::check_finite(k, &z)?;
            current = Some(z);
        }
        Ok(current.expect("at least one layer"))
    }

    pub fn forward(&self, batch: &Array2<f64>) -> Result<(Array2<f64>, ForwardCache)> {
        self.check_batch(batch)?;
        let mut cache = ForwardCache {
            inputs: Vec::with_capacity(self.layers.len()),
            pre_activations: Vec::with_capacity(self.layers.len()),
            outputs: Vec::with_capacity(self.layers.len()),
        };
        let mut input = batch.clone();
        for (k, layer) in self.layers.iter().enumerate() {
            let z = Self::affine(layer, &input);
            let mut a = z.clone();
            layer.activation.apply(&mut a);
            Self::check_finite(k, &a)?;
            cache.inputs.push(input);
            cache.pre_activations.push(z);
            input = a.clone();
            cache.outputs.push(a);
        }
        Ok((input, cache))
    }

    /// Back-propagates `d_out = dL/d(outputs)` through the cached pass.
    ///
    /// The input gradient is only computed when `want_inputs` is set.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        d_out: Array2<f64>,
        want_inputs: bool,
    ) -> Result<(Gradients, Option<Array2<f64>>)> {
        let last = self.layers.len() - 1;
        if d_out.dim() != cache.outputs[last].dim() {
            return Err(FirError::Config(format!(
                "output gradient shape {:?} does not match outputs {:?}",
                d_out.dim(),
                cache.outputs[last].dim()
            )));
        }
        let mut grads: Vec<LayerGrad> = Vec::with_capacity(self.layers.len());
        let mut upstream = d_out;
        let mut input_grad = None;
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let dz = layer.activation.backprop(
                &cache.pre_activations[k],
                &cache.outputs[k],
                upstream,
            );
            let mut dw = Array2::zeros(layer.weights.raw_dim());
            general_mat_mul(1.0, &dz.t(), &cache.inputs[k], 0.0, &mut dw);
            let db = dz.sum_axis(Axis(0));
            if k > 0 || want_inputs {
                let mut dx = Array2::zeros(cache.inputs[k].raw_dim());
                general_mat_mul(1.0, &dz, &layer.weights, 0.0, &mut dx);
                if k == 0 {
                    input_grad = Some(dx);
                    upstream = Array2::zeros((0, 0));
                } else {
                    upstream = dx;
                }
            } else {
                upstream = Array2::zeros((0, 0));
            }
            grads.push(LayerGrad {
                weights: dw,
                bias: db,
            });
        }
        grads.reverse();
        Ok((Gradients { layers: grads }, input_grad))
    }

    /// Gradient of the summed outputs with respect to each input row.
    ///
    /// For a scalar-output network this is `∂f/∂x` row by row.
    pub fn input_gradient(&self, batch: &Array2<f64>) -> Result<Array2<f64>> {
        let (out, cache) = self.forward(batch)?;
        let seed = Array2::ones(out.raw_dim());
        let (_, dx) = self.backward(&cache, seed, true)?;
        Ok(dx.expect("input gradients requested"))
    }
}
