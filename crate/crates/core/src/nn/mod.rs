//! Recurrent classifier building blocks with hand-written reverse mode.
//!
//! Everything runs in `f64`. Matrices follow the row-vector convention:
//! a layer maps `x (1×in)` to `x·W (1×out)`, so a whole sequence `X (T×in)`
//! goes through one matrix product.

pub mod adam;
pub mod checkpoint;
pub mod dense;
pub mod dropout;
pub mod gru;
pub mod init;
pub mod loss;
pub mod network;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{load_network, save_network, CheckpointError, NetworkManifest};
pub use dense::Dense;
pub use dropout::{dropout, DropoutMode};
pub use gru::GruLayer;
pub use loss::{cross_entropy, softmax, softmax_rows};
pub use network::{ForwardTrace, Network, Readout};

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("dropout rate must lie in [0, 1), got {0}")]
    InvalidRate(f64),
    #[error("non-finite input")]
    NonFiniteInput,
    #[error("target row {0} is not one-hot")]
    NonOneHot(usize),
    #[error("class index {class} out of range for {classes} classes")]
    BadTarget { class: usize, classes: usize },
    #[error("backward called without a recorded forward pass")]
    NoForwardState,
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

pub(crate) fn shape_err(what: impl Into<String>) -> NnError {
    NnError::ShapeMismatch(what.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    Relu,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(x),
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the pre-activation and the output.
    pub fn derivative(self, pre: f64, out: f64) -> f64 {
        match self {
            Activation::Sigmoid => out * (1.0 - out),
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Uniform access to a layer's parameter blocks in a fixed order.
pub trait Params {
    fn blocks(&self) -> Vec<&[f64]>;
    fn blocks_mut(&mut self) -> Vec<&mut [f64]>;

    fn param_count(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }
}
