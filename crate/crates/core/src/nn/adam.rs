use ndarray::{Array1, Array2, Zip};
use serde::{Deserialize, Serialize};

use super::network::{Gradients, Network};
use crate::error::{FirError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Nesterov momentum (Nadam) instead of plain Adam.
    pub nesterov: bool,
}

impl AdamConfig {
    pub fn adam(learning_rate: f64) -> Self {
        AdamConfig {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            nesterov: false,
        }
    }

    pub fn nadam(learning_rate: f64) -> Self {
        AdamConfig {
            nesterov: true,
            ..Self::adam(learning_rate)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Moments {
    weights: Array2<f64>,
    bias: Array1<f64>,
}

/// Adam / Nadam moment estimates for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: AdamConfig,
    first: Vec<Moments>,
    second: Vec<Moments>,
    step_count: u64,
}

impl OptimizerState {
    pub fn new(net: &Network, config: AdamConfig) -> Self {
        let zeros = || {
            net.layers()
                .iter()
                .map(|l| Moments {
                    weights: Array2::zeros(l.weights.raw_dim()),
                    bias: Array1::zeros(l.bias.raw_dim()),
                })
                .collect::<Vec<_>>()
        };
        OptimizerState {
            config,
            first: zeros(),
            second: zeros(),
            step_count: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    fn check_shapes(&self, net: &Network, grads: &Gradients) -> Result<()> {
        let layers = net.layers();
        if grads.layers.len() != layers.len() || self.first.len() != layers.len() {
            return Err(FirError::Config(format!(
                "optimizer tracks {} layers, gradients have {}, network has {}",
                self.first.len(),
                grads.layers.len(),
                layers.len()
            )));
        }
        for (k, ((l, g), m)) in layers.iter().zip(&grads.layers).zip(&self.first).enumerate() {
            if l.weights.dim() != g.weights.dim()
                || l.bias.dim() != g.bias.dim()
                || l.weights.dim() != m.weights.dim()
                || l.bias.dim() != m.bias.dim()
            {
                return Err(FirError::Config(format!("layer {k}: parameter shape mismatch")));
            }
        }
        Ok(())
    }

    /// Applies one update to `net` in place.
    pub fn step(&mut self, net: &mut Network, grads: &Gradients) -> Result<()> {
        self.check_shapes(net, grads)?;
        if self.step_count >= 1 << 53 {
            return Err(FirError::Config("optimizer step counter exhausted".into()));
        }
        let t = (self.step_count + 1) as f64;
        let AdamConfig {
            learning_rate: lr,
            beta1: b1,
            beta2: b2,
            epsilon: eps,
            nesterov,
        } = self.config;
        let bc1 = 1.0 - b1.powf(t);
        let bc1_next = 1.0 - b1.powf(t + 1.0);
        let bc2 = 1.0 - b2.powf(t);

        let update = |p: &mut f64, &g: &f64, m: &mut f64, v: &mut f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = if nesterov {
                b1 * *m / bc1_next + (1.0 - b1) * g / bc1
            } else {
                *m / bc1
            };
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        };

        for (k, layer) in net.layers_mut().iter_mut().enumerate() {
            let g = &grads.layers[k];
            let (m, v) = (&mut self.first[k], &mut self.second[k]);
            Zip::from(&mut layer.weights)
                .and(&g.weights)
                .and(&mut m.weights)
                .and(&mut v.weights)
                .for_each(update);
            Zip::from(&mut layer.bias)
                .and(&g.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .for_each(update);
        }
        self.step_count += 1;
        if !net.all_finite() {
            return Err(FirError::Numeric {
                layer: 0,
                message: "optimizer step produced non-finite parameters".into(),
            });
        }
        Ok(())
    }
}
