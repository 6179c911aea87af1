//! The two classifier families, corpus splitting, training and evaluation.
//!
//! * VAD: three stacked GRUs, dropout 0.2 after each, a 4-unit
//!   time-distributed dense layer and a 2-way softmax at every frame.
//!   Dataset 1 uses GRU sizes 128/32/8 with a sigmoid dense layer, dataset 2
//!   uses 128/64/32 with ReLU.
//! * Continuation: GRU(64), GRU(32), dropout 0.2 after each, last time step
//!   into a 4-way softmax over utterance types.

use std::str::FromStr;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{Activation, AdamConfig, AdamState, Dense, GruLayer, Network, NnError, Params, Readout};

pub const DROPOUT_RATE: f64 = 0.2;
pub const TD_DENSE_UNITS: usize = 4;
pub const CONTINUATION_CLASSES: usize = 4;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("unknown architecture variant {0:?}")]
    UnknownVariant(String),
    #[error("input dimension must be positive")]
    InvalidInputDim,
    #[error("need at least {needed} sequences to split, got {got}")]
    TooFewSequences { needed: usize, got: usize },
    #[error("split fractions must be nonnegative and sum to 1")]
    InvalidSplit,
    #[error("{0} set is empty")]
    EmptySet(&'static str),
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Divergence { epoch: usize, loss: f64 },
    #[error("prediction/truth length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("cannot score an empty prediction list")]
    Empty,
    #[error("feature dimension mismatch: network expects {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VadVariant {
    Dataset1,
    Dataset2,
}

impl VadVariant {
    pub fn gru_sizes(self) -> [usize; 3] {
        match self {
            VadVariant::Dataset1 => [128, 32, 8],
            VadVariant::Dataset2 => [128, 64, 32],
        }
    }

    pub fn td_activation(self) -> Activation {
        match self {
            VadVariant::Dataset1 => Activation::Sigmoid,
            VadVariant::Dataset2 => Activation::Relu,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            VadVariant::Dataset1 => "dataset1",
            VadVariant::Dataset2 => "dataset2",
        }
    }
}

impl FromStr for VadVariant {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dataset1" => Ok(VadVariant::Dataset1),
            "dataset2" => Ok(VadVariant::Dataset2),
            other => Err(ModelError::UnknownVariant(other.to_string())),
        }
    }
}

fn stack(
    input_dim: usize,
    sizes: &[usize],
    hidden_dense: Option<(usize, Activation)>,
    classes: usize,
    readout: Readout,
    seed: u64,
) -> Result<Network, ModelError> {
    if input_dim == 0 {
        return Err(ModelError::InvalidInputDim);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut width = input_dim;
    let mut gru = Vec::with_capacity(sizes.len());
    for &h in sizes {
        gru.push(GruLayer::init(width, h, &mut rng));
        width = h;
    }
    let hidden_dense = hidden_dense.map(|(units, act)| {
        let d = Dense::init(width, units, act, &mut rng);
        width = units;
        d
    });
    let head = Dense::init(width, classes, Activation::Identity, &mut rng);
    let mut net = Network { gru, dropout_rate: DROPOUT_RATE, hidden_dense, head, readout };
    // Checkpoints hold f32; starting from f32-representable weights makes an
    // untrained network survive a save/load unchanged.
    net.round_to_f32();
    Ok(net)
}

pub fn build_vad(variant: VadVariant, input_dim: usize, seed: u64) -> Result<Network, ModelError> {
    stack(
        input_dim,
        &variant.gru_sizes(),
        Some((TD_DENSE_UNITS, variant.td_activation())),
        2,
        Readout::EveryStep,
        seed,
    )
}

pub fn build_continuation(input_dim: usize, seed: u64) -> Result<Network, ModelError> {
    stack(input_dim, &[64, 32], None, CONTINUATION_CLASSES, Readout::LastStep, seed)
}

/// The four utterance types of the continuation task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Utterance {
    /// "what's the weather ... tomorrow", with a pause before the last word.
    Tomorrow,
    /// "what's the weather"
    Weather,
    /// "what's the weather ... today", with a pause before the last word.
    Today,
    /// "what's the weather macroni"
    Macroni,
}

impl Utterance {
    pub const ALL: [Utterance; 4] = [Utterance::Tomorrow, Utterance::Weather, Utterance::Today, Utterance::Macroni];

    pub fn class(self) -> usize {
        self as usize
    }

    pub fn from_class(c: usize) -> Option<Self> {
        Self::ALL.get(c).copied()
    }

    /// Whether the speaker pauses intending to finish the sentence.
    pub fn continues(self) -> bool {
        matches!(self, Utterance::Tomorrow | Utterance::Today)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Target {
    /// One class per frame (0 silence, 1 speech).
    Frames(Vec<usize>),
    /// One class for the whole sequence.
    Sequence(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSequence {
    /// `T × dim`
    pub features: Array2<f64>,
    pub target: Target,
}

impl LabeledSequence {
    pub fn targets(&self) -> Vec<usize> {
        match &self.target {
            Target::Frames(l) => l.clone(),
            Target::Sequence(c) => vec![*c],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitFractions {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self { train: 0.8, validation: 0.1, test: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded shuffle of `0..n`, cut into train/validation/test at whole-sequence
/// granularity.
pub fn split_indices(n: usize, fractions: SplitFractions, seed: u64) -> Result<SplitIndices, ModelError> {
    let SplitFractions { train, validation, test } = fractions;
    if [train, validation, test].iter().any(|f| !(*f >= 0.0)) || (train + validation + test - 1.0).abs() > 1e-9 {
        return Err(ModelError::InvalidSplit);
    }
    if n < 10 {
        return Err(ModelError::TooFewSequences { needed: 10, got: n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (train * n as f64).round() as usize;
    let n_val = ((validation * n as f64).round() as usize).min(n - n_train);
    Ok(SplitIndices {
        train: order[..n_train].to_vec(),
        validation: order[n_train..n_train + n_val].to_vec(),
        test: order[n_train + n_val..].to_vec(),
    })
}

pub struct Split<T> {
    pub train: Vec<T>,
    pub validation: Vec<T>,
    pub test: Vec<T>,
}

pub fn split_corpus<T: Clone>(items: &[T], fractions: SplitFractions, seed: u64) -> Result<Split<T>, ModelError> {
    let idx = split_indices(items.len(), fractions, seed)?;
    let pick = |ids: &[usize]| ids.iter().map(|&i| items[i].clone()).collect();
    Ok(Split { train: pick(&idx.train), validation: pick(&idx.validation), test: pick(&idx.test) })
}

/// Per-dimension standardisation with statistics from one set of sequences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit<'a>(matrices: impl IntoIterator<Item = ArrayView2<'a, f64>>) -> Self {
        let mut count = 0usize;
        let mut sum: Vec<f64> = Vec::new();
        let mut sq: Vec<f64> = Vec::new();
        for m in matrices {
            if sum.is_empty() {
                sum = vec![0.0; m.ncols()];
                sq = vec![0.0; m.ncols()];
            }
            for row in m.rows() {
                for (j, &v) in row.iter().enumerate() {
                    sum[j] += v;
                    sq[j] += v * v;
                }
            }
            count += m.nrows();
        }
        let n = count.max(1) as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| {
                let var = (q / n - m * m).max(0.0);
                if var.sqrt() > 1e-12 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = x.clone();
        for mut row in out.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[j]) / self.std[j];
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Patience in epochs on validation loss; `None` trains every epoch.
    pub early_stopping: Option<usize>,
    /// Global gradient-norm clip; off by default.
    pub clip_norm: Option<f64>,
    pub split: SplitFractions,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 1,
            adam: AdamConfig::default(),
            seed: 0,
            early_stopping: None,
            clip_norm: None,
            split: SplitFractions::default(),
        }
    }
}

impl TrainConfig {
    pub fn vad() -> Self {
        Self::default()
    }

    pub fn continuation() -> Self {
        Self { batch_size: 100, early_stopping: Some(20), ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Best-validation parameters, rounded to `f32`.
    pub network: Network,
    /// 0 when no epoch ran.
    pub best_epoch: usize,
    pub log: Vec<EpochRecord>,
    pub stopped_early: bool,
}

impl TrainOutcome {
    pub fn log_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss,val_accuracy\n");
        for r in &self.log {
            s.push_str(&format!("{},{},{},{}\n", r.epoch, r.train_loss, r.val_loss, r.val_accuracy));
        }
        s
    }
}

/// Mean loss over sequences and pooled accuracy over predictions.
pub fn evaluate(network: &Network, set: &[LabeledSequence]) -> Result<(f64, f64), ModelError> {
    let mut loss = 0.0;
    let (mut correct, mut total) = (0usize, 0usize);
    for seq in set {
        let trace = network.forward(seq.features.view(), None)?;
        let targets = seq.targets();
        loss += network.loss(&trace, &targets)?;
        for (row, &t) in trace.probs.rows().into_iter().zip(&targets) {
            correct += usize::from(argmax(row.as_slice().expect("contiguous")) == t);
            total += 1;
        }
    }
    if total == 0 {
        return Err(ModelError::EmptySet("evaluation"));
    }
    Ok((loss / set.len() as f64, correct as f64 / total as f64))
}

/// Adam training with best-validation selection.
pub fn train(
    network: &Network,
    train_set: &[LabeledSequence],
    validation: &[LabeledSequence],
    config: &TrainConfig,
) -> Result<TrainOutcome, ModelError> {
    if train_set.is_empty() {
        return Err(ModelError::EmptySet("training"));
    }
    if validation.is_empty() {
        return Err(ModelError::EmptySet("validation"));
    }
    network.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut net = network.clone();
    let mut adam = AdamState::new(config.adam, &net.block_sizes());
    let batch = config.batch_size.max(1);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, Network)> = None;
    let mut stopped_early = false;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch) {
            let mut grads = net.zeros_like();
            let scale = 1.0 / chunk.len() as f64;
            for &i in chunk {
                let seq = &train_set[i];
                let trace = net.forward(seq.features.view(), Some(&mut rng))?;
                let loss = net.backward(&trace, &seq.targets(), scale, &mut grads)?;
                if !loss.is_finite() {
                    return Err(ModelError::Divergence { epoch, loss });
                }
                epoch_loss += loss;
            }
            if let Some(max_norm) = config.clip_norm {
                clip_global_norm(&mut grads, max_norm);
            }
            adam.update(net.blocks_mut(), grads.blocks())?;
        }
        let train_loss = epoch_loss / train_set.len() as f64;
        let (val_loss, val_accuracy) = evaluate(&net, validation)?;
        if !val_loss.is_finite() {
            return Err(ModelError::Divergence { epoch, loss: val_loss });
        }
        log::debug!("epoch {epoch}: train {train_loss:.5} val {val_loss:.5} acc {val_accuracy:.4}");
        log.push(EpochRecord { epoch, train_loss, val_loss, val_accuracy });
        let improved = best.as_ref().map_or(true, |(b, _, _)| val_loss < *b);
        if improved {
            best = Some((val_loss, epoch, net.clone()));
        }
        if let (Some(patience), Some((_, best_epoch, _))) = (config.early_stopping, &best) {
            if epoch - best_epoch >= patience {
                stopped_early = true;
                break;
            }
        }
    }
    let (best_epoch, mut network) = match best {
        Some((_, e, n)) => (e, n),
        None => (0, network.clone()),
    };
    network.round_to_f32();
    Ok(TrainOutcome { network, best_epoch, log, stopped_early })
}

fn clip_global_norm(grads: &mut Network, max_norm: f64) {
    let norm = grads.blocks().iter().flat_map(|b| b.iter()).map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let k = max_norm / norm;
        for b in grads.blocks_mut() {
            b.iter_mut().for_each(|g| *g *= k);
        }
    }
}

/// First index of the maximum; ties resolve to the lower class.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct FramePrediction {
    pub class: usize,
    pub probs: Vec<f64>,
}

pub fn predict_frames(network: &Network, features: ArrayView2<f64>) -> Result<Vec<FramePrediction>, ModelError> {
    if features.ncols() != network.input_dim() {
        return Err(ModelError::DimMismatch { expected: network.input_dim(), got: features.ncols() });
    }
    let probs = network.predict_proba(features)?;
    Ok(probs
        .axis_iter(Axis(0))
        .map(|row| {
            let p = row.to_vec();
            FramePrediction { class: argmax(&p), probs: p }
        })
        .collect())
}

/// Predicted class of a last-step network for one sequence.
pub fn predict_sequence(network: &Network, features: ArrayView2<f64>) -> Result<FramePrediction, ModelError> {
    predict_frames(network, features)?.pop().ok_or(ModelError::Empty)
}

pub fn accuracy(predictions: &[usize], truth: &[usize]) -> Result<f64, ModelError> {
    if predictions.len() != truth.len() {
        return Err(ModelError::LengthMismatch(predictions.len(), truth.len()));
    }
    if predictions.is_empty() {
        return Err(ModelError::Empty);
    }
    let hits = predictions.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / truth.len() as f64)
}
