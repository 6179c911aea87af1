//! Stacked GRU classifier: GRU layers with dropout between them, an optional
//! time-distributed hidden dense layer, and an affine head feeding softmax.

use ndarray::{s, Array2, ArrayView2};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dense::DenseCache;
use super::dropout::dropout_mask;
use super::gru::GruCache;
use super::loss::{cross_entropy_indices, softmax_rows};
use super::{shape_err, Dense, GruLayer, NnError, Params};

/// Which recurrent outputs reach the dense layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Readout {
    /// One prediction per time step.
    EveryStep,
    /// A single prediction from the final time step.
    LastStep,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub gru: Vec<GruLayer>,
    /// Applied after every GRU layer during training.
    pub dropout_rate: f64,
    pub hidden_dense: Option<Dense>,
    /// Produces logits; its activation is expected to be identity.
    pub head: Dense,
    pub readout: Readout,
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    gru: Vec<GruCache>,
    masks: Vec<Option<Array2<f64>>>,
    dense: Option<DenseCache>,
    head: DenseCache,
    steps: usize,
    /// `T × classes` for [`Readout::EveryStep`], `1 × classes` otherwise.
    pub probs: Array2<f64>,
}

impl Network {
    pub fn input_dim(&self) -> usize {
        self.gru.first().map(|g| g.input_dim()).unwrap_or(0)
    }

    pub fn n_classes(&self) -> usize {
        self.head.output_dim()
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.gru.is_empty() {
            return Err(shape_err("network has no recurrent layers"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(NnError::InvalidRate(self.dropout_rate));
        }
        let mut width = self.input_dim();
        for g in &self.gru {
            g.check_shapes()?;
            if g.input_dim() != width {
                return Err(shape_err("recurrent layer input width"));
            }
            width = g.hidden_size();
        }
        for d in self.hidden_dense.iter().chain(std::iter::once(&self.head)) {
            if d.input_dim() != width || d.b.len() != d.output_dim() {
                return Err(shape_err("dense layer input width"));
            }
            width = d.output_dim();
        }
        Ok(())
    }

    pub fn zeros_like(&self) -> Network {
        Network {
            gru: self.gru.iter().map(|g| GruLayer::zeros(g.input_dim(), g.hidden_size())).collect(),
            dropout_rate: self.dropout_rate,
            hidden_dense: self
                .hidden_dense
                .as_ref()
                .map(|d| Dense::zeros(d.input_dim(), d.output_dim(), d.activation)),
            head: Dense::zeros(self.head.input_dim(), self.head.output_dim(), self.head.activation),
            readout: self.readout,
        }
    }

    /// Forward pass over one sequence `x (T × input)`. Dropout masks are drawn
    /// from `rng` when given; `None` means inference.
    pub fn forward(
        &self,
        x: ArrayView2<f64>,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<ForwardTrace, NnError> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(NnError::NonFiniteInput);
        }
        let mut caches = Vec::with_capacity(self.gru.len());
        let mut masks = Vec::with_capacity(self.gru.len());
        let mut current = x.to_owned();
        for layer in &self.gru {
            let cache = layer.forward_cached(current.view(), None)?;
            let mut out = cache.output.clone();
            let mask = match rng.as_deref_mut() {
                Some(r) if self.dropout_rate > 0.0 => {
                    let m = dropout_mask(out.dim(), self.dropout_rate, r)?;
                    out *= &m;
                    Some(m)
                }
                _ => None,
            };
            caches.push(cache);
            masks.push(mask);
            current = out;
        }
        let steps = current.nrows();
        if self.readout == Readout::LastStep {
            current = current.slice(s![steps - 1.., ..]).to_owned();
        }
        let dense = match &self.hidden_dense {
            Some(d) => {
                let c = d.forward_cached(current.view())?;
                current = c.output.clone();
                Some(c)
            }
            None => None,
        };
        let head = self.head.forward_cached(current.view())?;
        let probs = softmax_rows(head.output.view())?;
        Ok(ForwardTrace { gru: caches, masks, dense, head, steps, probs })
    }

    /// Class probabilities without dropout.
    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, NnError> {
        Ok(self.forward(x, None)?.probs)
    }

    pub fn loss(&self, trace: &ForwardTrace, targets: &[usize]) -> Result<f64, NnError> {
        self.check_targets(trace, targets)?;
        Ok(cross_entropy_indices(trace.probs.view(), targets))
    }

    fn check_targets(&self, trace: &ForwardTrace, targets: &[usize]) -> Result<(), NnError> {
        if trace.gru.len() != self.gru.len() {
            return Err(NnError::NoForwardState);
        }
        if targets.len() != trace.probs.nrows() {
            return Err(shape_err(format!(
                "{} targets for {} predictions",
                targets.len(),
                trace.probs.nrows()
            )));
        }
        let classes = self.n_classes();
        if let Some(&class) = targets.iter().find(|&&c| c >= classes) {
            return Err(NnError::BadTarget { class, classes });
        }
        Ok(())
    }

    /// Reverse-mode pass for the mean cross-entropy of `trace` against
    /// `targets`. Gradients scaled by `scale` are added into `grads`; the
    /// unscaled loss is returned.
    pub fn backward(
        &self,
        trace: &ForwardTrace,
        targets: &[usize],
        scale: f64,
        grads: &mut Network,
    ) -> Result<f64, NnError> {
        self.check_targets(trace, targets)?;
        let loss = cross_entropy_indices(trace.probs.view(), targets);
        let n = targets.len() as f64;
        let mut d = trace.probs.clone();
        for (t, &c) in targets.iter().enumerate() {
            d[[t, c]] -= 1.0;
        }
        d *= scale / n;

        d = self.head.backward(&trace.head, d.view(), &mut grads.head)?;
        if let (Some(layer), Some(cache)) = (&self.hidden_dense, &trace.dense) {
            let g = grads.hidden_dense.as_mut().ok_or(NnError::NoForwardState)?;
            d = layer.backward(cache, d.view(), g)?;
        }
        if self.readout == Readout::LastStep {
            let width = d.ncols();
            let mut full = Array2::zeros((trace.steps, width));
            full.row_mut(trace.steps - 1).assign(&d.row(0));
            d = full;
        }
        for (i, layer) in self.gru.iter().enumerate().rev() {
            if let Some(mask) = &trace.masks[i] {
                d *= mask;
            }
            d = layer.backward(&trace.gru[i], d.view(), &mut grads.gru[i])?;
        }
        Ok(loss)
    }

    /// Rounds every parameter to the nearest `f32`.
    pub fn round_to_f32(&mut self) {
        for block in self.blocks_mut() {
            for v in block.iter_mut() {
                *v = *v as f32 as f64;
            }
        }
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        self.blocks().iter().map(|b| b.len()).collect()
    }
}

impl Params for Network {
    fn blocks(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = self.gru.iter().flat_map(|g| g.blocks()).collect();
        if let Some(d) = &self.hidden_dense {
            out.extend(d.blocks());
        }
        out.extend(self.head.blocks());
        out
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let Network { gru, hidden_dense, head, .. } = self;
        let mut out: Vec<&mut [f64]> = gru.iter_mut().flat_map(|g| g.blocks_mut()).collect();
        if let Some(d) = hidden_dense {
            out.extend(d.blocks_mut());
        }
        out.extend(head.blocks_mut());
        out
    }
}
