use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::network::{Activation, Layer, Network};
use crate::error::{FirError, Result};

pub const CHECKPOINT_FORMAT: &str = "fir-network";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Versioned JSON form of a [`Network`]. Weights are flattened row-major
/// (`output_dim` rows of `input_dim` values).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkCheckpoint {
    pub format: String,
    pub version: u32,
    pub input_dim: usize,
    pub output_dim: usize,
    pub layers: Vec<LayerRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub input_dim: usize,
    pub output_dim: usize,
    pub activation: String,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl From<&Network> for NetworkCheckpoint {
    fn from(net: &Network) -> Self {
        NetworkCheckpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            input_dim: net.input_dim(),
            output_dim: net.output_dim(),
            layers: net
                .layers()
                .iter()
                .map(|l| LayerRecord {
                    input_dim: l.input_dim(),
                    output_dim: l.output_dim(),
                    activation: l.activation.name().to_string(),
                    weights: l.weights.iter().copied().collect(),
                    bias: l.bias.to_vec(),
                })
                .collect(),
        }
    }
}

impl TryFrom<NetworkCheckpoint> for Network {
    type Error = FirError;

    fn try_from(ckpt: NetworkCheckpoint) -> Result<Self> {
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(FirError::Config(format!(
                "unexpected checkpoint format {:?}",
                ckpt.format
            )));
        }
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(FirError::Config(format!(
                "unsupported checkpoint version {}",
                ckpt.version
            )));
        }
        let layers = ckpt
            .layers
            .into_iter()
            .enumerate()
            .map(|(k, rec)| {
                let activation = Activation::from_name(&rec.activation).ok_or_else(|| {
                    FirError::Config(format!("layer {k}: unknown activation {:?}", rec.activation))
                })?;
                let weights = Array2::from_shape_vec((rec.output_dim, rec.input_dim), rec.weights)
                    .map_err(|e| FirError::Config(format!("layer {k}: {e}")))?;
                Ok(Layer {
                    weights,
                    bias: Array1::from(rec.bias),
                    activation,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let net = Network::new(layers)?;
        if net.input_dim() != ckpt.input_dim || net.output_dim() != ckpt.output_dim {
            return Err(FirError::Config(
                "checkpoint dimensions disagree with its layers".into(),
            ));
        }
        Ok(net)
    }
}

impl Network {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&NetworkCheckpoint::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: NetworkCheckpoint = serde_json::from_str(text)?;
        Network::try_from(ckpt)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| FirError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| FirError::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn json_round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let net = Network::mlp(&[6, 5, 3], Activation::Sigmoid, Activation::Softmax, &mut rng).unwrap();
        let back = Network::from_json(&net.to_json().unwrap()).unwrap();
        assert_eq!(net, back);
    }

    #[test]
    fn row_major_layout() {
        let net = Network::new(vec![Layer {
            weights: ndarray::array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]],
            bias: ndarray::array![0.5, -0.5],
            activation: Activation::Relu,
        }])
        .unwrap();
        let ckpt = NetworkCheckpoint::from(&net);
        assert_eq!(ckpt.layers[0].weights, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(ckpt.layers[0].activation, "relu");
    }

    #[test]
    fn rejects_wrong_version() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Network::mlp(&[2, 1], Activation::Linear, Activation::Linear, &mut rng).unwrap();
        let mut ckpt = NetworkCheckpoint::from(&net);
        ckpt.version = 99;
        assert!(Network::try_from(ckpt).is_err());
    }
}
