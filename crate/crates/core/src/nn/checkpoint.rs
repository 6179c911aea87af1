//! Network checkpoints: a JSON manifest describing the layer stack plus the
//! parameter blocks as `f32`, in manifest order.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{Activation, Dense, GruLayer, Network, NnError, Params, Readout};
use crate::io::{self, IoError};

pub const FORMAT: &str = "eegvad-network/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Gru { input: usize, hidden: usize },
    Dense { role: DenseRole, input: usize, output: usize, activation: Activation },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenseRole {
    Hidden,
    Head,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkManifest {
    pub format: String,
    pub layers: Vec<LayerSpec>,
    pub dropout_rate: f64,
    pub readout: Readout,
    pub seed: u64,
    pub epoch: usize,
    pub block_sizes: Vec<usize>,
}

impl NetworkManifest {
    pub fn describe(net: &Network, seed: u64, epoch: usize) -> Self {
        let mut layers: Vec<LayerSpec> = net
            .gru
            .iter()
            .map(|g| LayerSpec::Gru { input: g.input_dim(), hidden: g.hidden_size() })
            .collect();
        let dense = |role, d: &Dense| LayerSpec::Dense {
            role,
            input: d.input_dim(),
            output: d.output_dim(),
            activation: d.activation,
        };
        if let Some(d) = &net.hidden_dense {
            layers.push(dense(DenseRole::Hidden, d));
        }
        layers.push(dense(DenseRole::Head, &net.head));
        Self {
            format: FORMAT.to_string(),
            layers,
            dropout_rate: net.dropout_rate,
            readout: net.readout,
            seed,
            epoch,
            block_sizes: net.block_sizes(),
        }
    }

    /// A zero-valued network with the described shapes.
    pub fn skeleton(&self) -> Result<Network, NnError> {
        if self.format != FORMAT {
            return Err(NnError::Checkpoint(format!("unknown format {:?}", self.format)));
        }
        let mut gru = Vec::new();
        let mut hidden_dense = None;
        let mut head = None;
        for layer in &self.layers {
            match *layer {
                LayerSpec::Gru { input, hidden } => gru.push(GruLayer::zeros(input, hidden)),
                LayerSpec::Dense { role, input, output, activation } => {
                    let d = Dense {
                        w: Array2::zeros((input, output)),
                        b: Array1::zeros(output),
                        activation,
                    };
                    match role {
                        DenseRole::Hidden => hidden_dense = Some(d),
                        DenseRole::Head => head = Some(d),
                    }
                }
            }
        }
        let head = head.ok_or_else(|| NnError::Checkpoint("manifest has no head layer".into()))?;
        let net = Network { gru, dropout_rate: self.dropout_rate, hidden_dense, head, readout: self.readout };
        net.validate()?;
        if net.block_sizes() != self.block_sizes {
            return Err(NnError::Checkpoint("block sizes disagree with layer shapes".into()));
        }
        Ok(net)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Nn(#[from] NnError),
}

pub fn save_network(net: &Network, seed: u64, epoch: usize, stem: &Path) -> Result<(), CheckpointError> {
    let manifest = NetworkManifest::describe(net, seed, epoch);
    io::write_json(&io::header_path(stem), &manifest)?;
    io::write_f32(&io::data_path(stem), net.blocks().into_iter().flatten())?;
    Ok(())
}

pub fn load_network(stem: &Path) -> Result<(Network, NetworkManifest), CheckpointError> {
    let manifest: NetworkManifest = io::read_json(&io::header_path(stem))?;
    let mut net = manifest.skeleton()?;
    let total = manifest.block_sizes.iter().sum();
    let values = io::read_f32(&io::data_path(stem), total)?;
    let mut offset = 0;
    for block in net.blocks_mut() {
        block.copy_from_slice(&values[offset..offset + block.len()]);
        offset += block.len();
    }
    Ok((net, manifest))
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn round_trip_predictions_are_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut net = Network {
            gru: vec![GruLayer::init(4, 6, &mut rng)],
            dropout_rate: 0.2,
            hidden_dense: Some(Dense::init(6, 3, Activation::Relu, &mut rng)),
            head: Dense::init(3, 2, Activation::Identity, &mut rng),
            readout: Readout::EveryStep,
        };
        net.round_to_f32();
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("net");
        save_network(&net, 9, 12, &stem).unwrap();
        let (back, manifest) = load_network(&stem).unwrap();
        assert_eq!(back, net);
        assert_eq!((manifest.seed, manifest.epoch), (9, 12));
        let x = Array2::from_shape_fn((5, 4), |(t, j)| (t + j) as f64 * 0.1);
        assert_eq!(back.predict_proba(x.view()).unwrap(), net.predict_proba(x.view()).unwrap());
    }

    #[test]
    fn corrupt_manifest_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Network {
            gru: vec![GruLayer::init(2, 3, &mut rng)],
            dropout_rate: 0.0,
            hidden_dense: None,
            head: Dense::init(3, 4, Activation::Identity, &mut rng),
            readout: Readout::LastStep,
        };
        let mut m = NetworkManifest::describe(&net, 0, 0);
        m.block_sizes[0] += 1;
        assert!(m.skeleton().is_err());
        m = NetworkManifest::describe(&net, 0, 0);
        m.format = "other".into();
        assert!(m.skeleton().is_err());
    }
}
