//! End-to-end experiments: corpus, preprocessing, features, train-split-only
//! normalisation and KPCA, training, scoring, and the artifacts each run
//! leaves behind.
//!
//! Every random choice derives from one master seed, and nothing here reads
//! the clock, so equal configs give byte-equal outputs.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::{concatenate, Array2, Axis};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eeg_features::extract_eeg_features;
use crate::frames::FrameSequence;
use crate::io;
use crate::kpca::{KpcaConfig, KpcaModel, PolyKernel};
use crate::models::{
    build_continuation, build_vad, predict_frames, split_indices, train, LabeledSequence, SplitIndices,
    Standardizer, Target, TrainConfig, TrainOutcome, Utterance, VadVariant,
};
use crate::nn::{load_network, save_network, Network};
use crate::signal::{design_bandpass, design_notch, filter_series, BiquadCascade, TimeSeries};
use crate::speech::{MfccConfig, MfccExtractor};
use crate::synth::{self, ContinuationSpec, CorpusSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Config,
    Corpus,
    Preprocess,
    Features,
    Split,
    Kpca,
    Train,
    Evaluate,
    Output,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Config => "config",
            Stage::Corpus => "corpus",
            Stage::Preprocess => "preprocess",
            Stage::Features => "features",
            Stage::Split => "split",
            Stage::Kpca => "kpca",
            Stage::Train => "train",
            Stage::Evaluate => "evaluate",
            Stage::Output => "output",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
#[error("{stage} stage: {message}")]
pub struct HarnessError {
    pub stage: Stage,
    pub message: String,
}

impl HarnessError {
    pub fn new(stage: Stage, message: impl fmt::Display) -> Self {
        Self { stage, message: message.to_string() }
    }

    pub fn is_config(&self) -> bool {
        self.stage == Stage::Config
    }
}

fn at<E: fmt::Display>(stage: Stage) -> impl FnOnce(E) -> HarnessError {
    move |e| HarnessError::new(stage, e)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FeatureMode {
    #[serde(rename = "mfcc")]
    Mfcc,
    #[serde(rename = "eeg")]
    Eeg,
    #[serde(rename = "mfcc+eeg")]
    MfccEeg,
}

impl FeatureMode {
    pub const ALL: [FeatureMode; 3] = [FeatureMode::Mfcc, FeatureMode::Eeg, FeatureMode::MfccEeg];

    pub fn name(self) -> &'static str {
        match self {
            FeatureMode::Mfcc => "mfcc",
            FeatureMode::Eeg => "eeg",
            FeatureMode::MfccEeg => "mfcc+eeg",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            FeatureMode::Mfcc => "MFCC",
            FeatureMode::Eeg => "EEG",
            FeatureMode::MfccEeg => "MFCC + EEG",
        }
    }

    pub fn uses_mfcc(self) -> bool {
        self != FeatureMode::Eeg
    }

    pub fn uses_eeg(self) -> bool {
        self != FeatureMode::Mfcc
    }
}

impl FromStr for FeatureMode {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| HarnessError::new(Stage::Config, format!("unknown feature mode {s:?}")))
    }
}

impl fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub bandpass_low_hz: f64,
    pub bandpass_high_hz: f64,
    pub notch_hz: f64,
    pub notch_quality: f64,
    pub eeg_window_s: f64,
    pub frame_rate_hz: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            bandpass_low_hz: 0.1,
            bandpass_high_hz: 70.0,
            notch_hz: 60.0,
            notch_quality: 30.0,
            eeg_window_s: 0.1,
            frame_rate_hz: 100.0,
        }
    }
}

impl PreprocessConfig {
    /// Band-pass followed by the mains notch.
    pub fn eeg_cascade(&self, sample_rate_hz: f64) -> Result<BiquadCascade, HarnessError> {
        let bp = design_bandpass(self.bandpass_low_hz, self.bandpass_high_hz, sample_rate_hz)
            .map_err(at(Stage::Preprocess))?;
        let notch =
            design_notch(self.notch_hz, sample_rate_hz, self.notch_quality).map_err(at(Stage::Preprocess))?;
        let sections = bp.sections().iter().chain(notch.sections()).copied().collect();
        BiquadCascade::new(sections, format!("{}; {}", bp.description(), notch.description()))
            .map_err(at(Stage::Preprocess))
    }
}

/// Unnormalised per-frame features of one recording, truncated to a common
/// frame count.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceFeatures {
    /// `T × 13`
    pub mfcc: Array2<f64>,
    /// `T × channels·5`
    pub eeg: Array2<f64>,
    /// Per-frame speech labels.
    pub labels: Vec<usize>,
}

/// Reusable filter and MFCC state for one corpus.
pub struct FeaturePipeline {
    preprocess: PreprocessConfig,
    mfcc: MfccExtractor,
    cascade: Option<(f64, BiquadCascade)>,
}

impl FeaturePipeline {
    pub fn new(preprocess: &PreprocessConfig, mfcc: &MfccConfig) -> Result<Self, HarnessError> {
        Ok(Self {
            preprocess: preprocess.clone(),
            mfcc: MfccExtractor::new(mfcc.clone()).map_err(at(Stage::Config))?,
            cascade: None,
        })
    }

    pub fn extract(
        &mut self,
        audio: &TimeSeries,
        eeg: &TimeSeries,
        activity: &[bool],
    ) -> Result<SequenceFeatures, HarnessError> {
        let fs = eeg.sample_rate_hz();
        if self.cascade.as_ref().map(|(r, _)| *r) != Some(fs) {
            self.cascade = Some((fs, self.preprocess.eeg_cascade(fs)?));
        }
        let cascade = &self.cascade.as_ref().expect("set above").1;
        let filtered = filter_series(cascade, eeg).map_err(at(Stage::Preprocess))?;
        let eeg = extract_eeg_features(&filtered, self.preprocess.frame_rate_hz, self.preprocess.eeg_window_s)
            .map_err(at(Stage::Features))?
            .frames;
        let mfcc = self.mfcc.extract(audio).map_err(at(Stage::Features))?;
        if mfcc.frame_rate_hz != eeg.frame_rate_hz {
            return Err(HarnessError::new(Stage::Features, "MFCC and EEG frame rates differ"));
        }
        let n = mfcc.count().min(eeg.count()).min(activity.len());
        if n == 0 {
            return Err(HarnessError::new(Stage::Features, "recording shorter than one analysis window"));
        }
        Ok(SequenceFeatures {
            mfcc: mfcc.data.slice(ndarray::s![..n, ..]).to_owned(),
            eeg: eeg.data.slice(ndarray::s![..n, ..]).to_owned(),
            labels: activity[..n].iter().map(|&a| usize::from(a)).collect(),
        })
    }
}

/// Sub-seeds derived from the master seed, one ChaCha stream each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub master: u64,
    pub split: u64,
    pub kpca: u64,
    pub init: u64,
    pub train: u64,
}

impl Seeds {
    pub fn derive(master: u64) -> Self {
        let sub = |stream: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(master);
            rng.set_stream(stream);
            rng.next_u64()
        };
        Self { master, split: sub(1), kpca: sub(2), init: sub(3), train: sub(4) }
    }
}

/// Statistics and projections fitted on the training split only.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedTransforms {
    pub mode: FeatureMode,
    pub eeg_standardizer: Option<Standardizer>,
    pub kpca: Option<KpcaModel>,
    pub input_standardizer: Standardizer,
}

impl FittedTransforms {
    pub fn input_dim(&self) -> usize {
        self.input_standardizer.mean.len()
    }

    fn assemble(
        mode: FeatureMode,
        eeg_std: Option<&Standardizer>,
        kpca: Option<&KpcaModel>,
        f: &SequenceFeatures,
    ) -> Result<Array2<f64>, HarnessError> {
        let eeg = match (eeg_std, kpca) {
            (Some(s), Some(k)) => Some(k.transform_matrix(s.apply(&f.eeg).view()).map_err(at(Stage::Kpca))?),
            _ => None,
        };
        Ok(match (mode, eeg) {
            (FeatureMode::Mfcc, _) => f.mfcc.clone(),
            (FeatureMode::Eeg, Some(e)) => e,
            (FeatureMode::MfccEeg, Some(e)) => {
                concatenate(Axis(1), &[f.mfcc.view(), e.view()]).map_err(at(Stage::Features))?
            }
            _ => return Err(HarnessError::new(Stage::Kpca, "EEG mode without fitted KPCA")),
        })
    }

    /// Network input for one recording.
    pub fn apply(&self, f: &SequenceFeatures) -> Result<Array2<f64>, HarnessError> {
        let raw = Self::assemble(self.mode, self.eeg_standardizer.as_ref(), self.kpca.as_ref(), f)?;
        Ok(self.input_standardizer.apply(&raw))
    }
}

/// Fits the transforms on `train` and returns them with the network inputs
/// for every recording.
pub fn prepare_inputs(
    features: &[SequenceFeatures],
    train: &[usize],
    mode: FeatureMode,
    kpca: &KpcaConfig,
    kpca_seed: u64,
) -> Result<(FittedTransforms, Vec<Array2<f64>>), HarnessError> {
    if train.is_empty() {
        return Err(HarnessError::new(Stage::Split, "empty training split"));
    }
    let (eeg_std, model) = if mode.uses_eeg() {
        let std = Standardizer::fit(train.iter().map(|&i| features[i].eeg.view()));
        let views: Vec<Array2<f64>> = train.iter().map(|&i| std.apply(&features[i].eeg)).collect();
        let stacked = concatenate(Axis(0), &views.iter().map(|v| v.view()).collect::<Vec<_>>())
            .map_err(at(Stage::Kpca))?;
        let seq = FrameSequence::new(stacked, 100.0, "eeg standardised");
        let model = KpcaModel::fit_subsampled(&seq, kpca, kpca_seed).map_err(at(Stage::Kpca))?;
        (Some(std), Some(model))
    } else {
        (None, None)
    };
    let raw = features
        .iter()
        .map(|f| FittedTransforms::assemble(mode, eeg_std.as_ref(), model.as_ref(), f))
        .collect::<Result<Vec<_>, _>>()?;
    let input_standardizer = Standardizer::fit(train.iter().map(|&i| raw[i].view()));
    let inputs = raw.iter().map(|r| input_standardizer.apply(r)).collect();
    Ok((FittedTransforms { mode, eeg_standardizer: eeg_std, kpca: model, input_standardizer }, inputs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub snrs_db: Vec<f64>,
    pub seeds: Vec<u64>,
    pub modes: Vec<FeatureMode>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { snrs_db: vec![20.0, 0.0, -10.0], seeds: vec![0, 1, 2], modes: FeatureMode::ALL.to_vec() }
    }
}

/// One experiment; also the schema of the JSON config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Row key in results tables.
    pub name: String,
    /// Master seed; overrides `corpus.seed` and `continuation.seed`.
    pub seed: u64,
    pub corpus: CorpusSpec,
    /// Read the corpus from here instead of generating it.
    pub corpus_dir: Option<PathBuf>,
    pub feature_mode: FeatureMode,
    pub variant: VadVariant,
    pub train: TrainConfig,
    pub kpca: KpcaConfig,
    pub mfcc: MfccConfig,
    pub preprocess: PreprocessConfig,
    pub out_dir: Option<PathBuf>,
    pub sweep: SweepConfig,
    pub continuation: ContinuationSpec,
    pub continuation_train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "synthetic".into(),
            seed: 0,
            corpus: CorpusSpec::default(),
            corpus_dir: None,
            feature_mode: FeatureMode::MfccEeg,
            variant: VadVariant::Dataset1,
            train: TrainConfig::vad(),
            kpca: KpcaConfig::default(),
            mfcc: MfccConfig::default(),
            preprocess: PreprocessConfig::default(),
            out_dir: None,
            sweep: SweepConfig::default(),
            continuation: ContinuationSpec::default(),
            continuation_train: TrainConfig::continuation(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        io::read_json(path).map_err(at(Stage::Config))
    }

    pub fn seeds(&self) -> Seeds {
        Seeds::derive(self.seed)
    }

    pub fn corpus_spec(&self) -> CorpusSpec {
        CorpusSpec { seed: self.seed, ..self.corpus.clone() }
    }

    pub fn continuation_spec(&self) -> ContinuationSpec {
        ContinuationSpec { seed: self.seed, ..self.continuation.clone() }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.corpus_spec().validate().map_err(at(Stage::Config))?;
        self.mfcc.validate().map_err(at(Stage::Config))?;
        if let Some(dir) = &self.corpus_dir {
            if !dir.join(synth::MANIFEST_FILE).is_file() {
                return Err(HarnessError::new(Stage::Config, format!("{} holds no corpus", dir.display())));
            }
        }
        if self.kpca.out_dim == 0 {
            return Err(HarnessError::new(Stage::Config, "kpca.out_dim must be positive"));
        }
        Ok(())
    }
}

/// Generates or loads the VAD corpus and extracts its features.
pub fn vad_features(config: &ExperimentConfig) -> Result<Vec<SequenceFeatures>, HarnessError> {
    let corpus = match &config.corpus_dir {
        Some(dir) => synth::load_corpus(dir).map_err(at(Stage::Corpus))?,
        None => synth::generate_corpus(&config.corpus_spec()).map_err(at(Stage::Corpus))?,
    };
    let mut pipeline = FeaturePipeline::new(&config.preprocess, &config.mfcc)?;
    corpus.iter().map(|s| pipeline.extract(&s.audio, &s.eeg, &s.activity)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct VadRun {
    pub mode: FeatureMode,
    pub variant: VadVariant,
    /// Pooled test-frame accuracy in percent.
    pub accuracy_pct: f64,
    pub test_frames: usize,
    pub split: SplitIndices,
    pub transforms: FittedTransforms,
    pub outcome: TrainOutcome,
    pub seeds: Seeds,
}

/// Pooled frame accuracy of `network` over `sequences`.
pub fn frame_accuracy(network: &Network, sequences: &[LabeledSequence]) -> Result<(f64, usize), HarnessError> {
    let (mut hits, mut total) = (0usize, 0usize);
    for s in sequences {
        let pred = predict_frames(network, s.features.view()).map_err(at(Stage::Evaluate))?;
        let truth = s.targets();
        hits += pred.iter().zip(&truth).filter(|(p, t)| p.class == **t).count();
        total += truth.len();
    }
    if total == 0 {
        return Err(HarnessError::new(Stage::Evaluate, "empty test split"));
    }
    Ok((hits as f64 / total as f64, total))
}

/// Split, normalise, train and score one feature mode on prepared features.
pub fn run_vad_on_features(features: &[SequenceFeatures], config: &ExperimentConfig) -> Result<VadRun, HarnessError> {
    let seeds = config.seeds();
    let split = split_indices(features.len(), config.train.split, seeds.split).map_err(at(Stage::Split))?;
    let (transforms, inputs) =
        prepare_inputs(features, &split.train, config.feature_mode, &config.kpca, seeds.kpca)?;
    let labeled = |ids: &[usize]| -> Vec<LabeledSequence> {
        ids.iter()
            .map(|&i| LabeledSequence {
                features: inputs[i].clone(),
                target: Target::Frames(features[i].labels.clone()),
            })
            .collect()
    };
    let (train_set, val_set, test_set) = (labeled(&split.train), labeled(&split.validation), labeled(&split.test));
    let net = build_vad(config.variant, transforms.input_dim(), seeds.init).map_err(at(Stage::Train))?;
    let train_cfg = TrainConfig { seed: seeds.train, ..config.train.clone() };
    let outcome = train(&net, &train_set, &val_set, &train_cfg).map_err(at(Stage::Train))?;
    let (acc, test_frames) = frame_accuracy(&outcome.network, &test_set)?;
    Ok(VadRun {
        mode: config.feature_mode,
        variant: config.variant,
        accuracy_pct: 100.0 * acc,
        test_frames,
        split,
        transforms,
        outcome,
        seeds,
    })
}

/// Corpus to results row; artifacts go to `config.out_dir` when set.
pub fn run_vad_experiment(config: &ExperimentConfig) -> Result<VadRun, HarnessError> {
    config.validate()?;
    let features = vad_features(config)?;
    let run = run_vad_on_features(&features, config)?;
    if let Some(dir) = &config.out_dir {
        write_vad_artifacts(dir, config, &run)?;
    }
    Ok(run)
}

/// Everything needed to reapply a trained model to new recordings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub task: String,
    pub feature_mode: FeatureMode,
    pub variant: Option<VadVariant>,
    pub input_dim: usize,
    pub seeds: Seeds,
    pub best_epoch: usize,
    pub split: SplitIndices,
    pub eeg_standardizer: Option<Standardizer>,
    pub input_standardizer: Standardizer,
    pub has_kpca: bool,
    pub preprocess: PreprocessConfig,
    pub mfcc: MfccConfig,
}

pub const CHECKPOINT_STEM: &str = "model";
pub const KPCA_STEM: &str = "kpca";
pub const MODEL_MANIFEST: &str = "model_manifest.json";

fn write_text(path: &Path, text: &str) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(at(Stage::Output))?;
    }
    std::fs::write(path, text).map_err(|e| HarnessError::new(Stage::Output, format!("{}: {e}", path.display())))
}

pub fn write_vad_artifacts(dir: &Path, config: &ExperimentConfig, run: &VadRun) -> Result<(), HarnessError> {
    save_network(&run.outcome.network, config.seed, run.outcome.best_epoch, &dir.join(CHECKPOINT_STEM))
        .map_err(at(Stage::Output))?;
    write_text(&dir.join("train_log.csv"), &run.outcome.log_csv())?;
    if let Some(k) = &run.transforms.kpca {
        save_kpca(k, &dir.join(KPCA_STEM))?;
        emit_variance_curve(k, &dir.join("variance_curve.csv"))?;
    }
    let manifest = ModelManifest {
        task: "vad".into(),
        feature_mode: run.mode,
        variant: Some(run.variant),
        input_dim: run.transforms.input_dim(),
        seeds: run.seeds,
        best_epoch: run.outcome.best_epoch,
        split: run.split.clone(),
        eeg_standardizer: run.transforms.eeg_standardizer.clone(),
        input_standardizer: run.transforms.input_standardizer.clone(),
        has_kpca: run.transforms.kpca.is_some(),
        preprocess: config.preprocess.clone(),
        mfcc: config.mfcc.clone(),
    };
    io::write_json(&dir.join(MODEL_MANIFEST), &manifest).map_err(at(Stage::Output))?;
    io::write_json(&dir.join("config.json"), config).map_err(at(Stage::Output))?;
    let mut table = ResultsTable::new(config);
    table.insert(&config.name, run.mode, run.accuracy_pct)?;
    table.save(dir)
}

/// A trained model reloaded from an artifact directory.
pub struct SavedModel {
    pub manifest: ModelManifest,
    pub network: Network,
    pub transforms: FittedTransforms,
}

impl SavedModel {
    pub fn load(dir: &Path) -> Result<Self, HarnessError> {
        let manifest: ModelManifest = io::read_json(&dir.join(MODEL_MANIFEST)).map_err(at(Stage::Config))?;
        let (network, _) = load_network(&dir.join(CHECKPOINT_STEM)).map_err(at(Stage::Config))?;
        let kpca = if manifest.has_kpca { Some(load_kpca(&dir.join(KPCA_STEM))?) } else { None };
        let transforms = FittedTransforms {
            mode: manifest.feature_mode,
            eeg_standardizer: manifest.eeg_standardizer.clone(),
            kpca,
            input_standardizer: manifest.input_standardizer.clone(),
        };
        Ok(Self { manifest, network, transforms })
    }

    /// Pooled frame accuracy on the selected recordings.
    pub fn evaluate(&self, features: &[SequenceFeatures], ids: &[usize]) -> Result<(f64, usize), HarnessError> {
        let seqs = ids
            .iter()
            .map(|&i| {
                let f = features.get(i).ok_or_else(|| HarnessError::new(Stage::Evaluate, "split index out of range"))?;
                Ok(LabeledSequence { features: self.transforms.apply(f)?, target: Target::Frames(f.labels.clone()) })
            })
            .collect::<Result<Vec<_>, HarnessError>>()?;
        frame_accuracy(&self.network, &seqs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct KpcaHeader {
    kernel: PolyKernel,
    input_dim: usize,
    out_dim: usize,
    n_training: usize,
    grand_mean: f64,
}

/// JSON header plus a little-endian `f64` blob holding training vectors,
/// row means, eigenvalues and scaled eigenvectors in that order.
pub fn save_kpca(model: &KpcaModel, stem: &Path) -> Result<(), HarnessError> {
    let header = KpcaHeader {
        kernel: model.kernel,
        input_dim: model.input_dim(),
        out_dim: model.out_dim(),
        n_training: model.n_training(),
        grand_mean: model.grand_mean,
    };
    io::write_json(&io::header_path(stem), &header).map_err(at(Stage::Output))?;
    let values = model
        .training_vectors
        .iter()
        .chain(model.row_means.iter())
        .chain(model.eigenvalues.iter())
        .chain(model.scaled_eigenvectors.iter());
    io::write_f64(&stem.with_extension("f64"), values).map_err(at(Stage::Output))
}

pub fn load_kpca(stem: &Path) -> Result<KpcaModel, HarnessError> {
    let h: KpcaHeader = io::read_json(&io::header_path(stem)).map_err(at(Stage::Config))?;
    let n = h.n_training;
    let total = n * h.input_dim + n + n + n * h.out_dim;
    let v = io::read_f64(&stem.with_extension("f64"), total).map_err(at(Stage::Config))?;
    let (tv, rest) = v.split_at(n * h.input_dim);
    let (rm, rest) = rest.split_at(n);
    let (eig, sv) = rest.split_at(n);
    let shape = |rows, cols, data: &[f64]| {
        Array2::from_shape_vec((rows, cols), data.to_vec()).map_err(at(Stage::Config))
    };
    Ok(KpcaModel {
        kernel: h.kernel,
        training_vectors: shape(n, h.input_dim, tv)?,
        row_means: rm.to_vec().into(),
        grand_mean: h.grand_mean,
        eigenvalues: eig.to_vec(),
        scaled_eigenvectors: shape(n, h.out_dim, sv)?,
    })
}

pub fn variance_curve_csv(curve: &[f64]) -> String {
    let mut s = String::from("component_index,cumulative_ratio\n");
    for (i, r) in curve.iter().enumerate() {
        s.push_str(&format!("{},{}\n", i + 1, r));
    }
    s
}

pub fn emit_variance_curve(model: &KpcaModel, path: &Path) -> Result<(), HarnessError> {
    let curve = model.explained_variance_curve().map_err(at(Stage::Kpca))?;
    write_text(path, &variance_curve_csv(&curve))
}

pub fn parse_variance_curve(text: &str) -> Result<Vec<(usize, f64)>, HarnessError> {
    let bad = |l: &str| HarnessError::new(Stage::Config, format!("bad variance-curve row {l:?}"));
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let (i, r) = l.split_once(',').ok_or_else(|| bad(l))?;
            Ok((i.trim().parse().map_err(|_| bad(l))?, r.trim().parse().map_err(|_| bad(l))?))
        })
        .collect()
}

/// Test accuracies keyed by (corpus, feature mode), with run metadata.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultsTable {
    pub rows: BTreeMap<(String, FeatureMode), f64>,
    pub meta: BTreeMap<String, String>,
}

pub const RESULTS_CSV: &str = "results.csv";
pub const RESULTS_TXT: &str = "results.txt";

impl ResultsTable {
    pub fn new(config: &ExperimentConfig) -> Self {
        let mut meta = BTreeMap::new();
        meta.insert("seed".into(), config.seed.to_string());
        meta.insert("epochs".into(), config.train.epochs.to_string());
        meta.insert("variant".into(), config.variant.name().into());
        Self { rows: BTreeMap::new(), meta }
    }

    pub fn insert(&mut self, corpus: &str, mode: FeatureMode, accuracy_pct: f64) -> Result<(), HarnessError> {
        if !(0.0..=100.0).contains(&accuracy_pct) {
            return Err(HarnessError::new(Stage::Evaluate, format!("accuracy {accuracy_pct} outside [0, 100]")));
        }
        self.rows.insert((corpus.to_string(), mode), accuracy_pct);
        Ok(())
    }

    /// Keyed merge; `other` wins on collisions, metadata values that differ
    /// are joined.
    pub fn merge(&mut self, other: &ResultsTable) {
        for (k, v) in &other.rows {
            self.rows.insert(k.clone(), *v);
        }
        for (k, v) in &other.meta {
            match self.meta.get_mut(k) {
                Some(existing) if existing.split(';').any(|p| p == v) => {}
                Some(existing) => {
                    existing.push(';');
                    existing.push_str(v);
                }
                None => {
                    self.meta.insert(k.clone(), v.clone());
                }
            }
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.meta {
            s.push_str(&format!("# {k}={v}\n"));
        }
        s.push_str("corpus,feature_mode,accuracy_pct\n");
        for ((corpus, mode), acc) in &self.rows {
            s.push_str(&format!("{corpus},{mode},{acc:.4}\n"));
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self, HarnessError> {
        let mut t = ResultsTable::default();
        let bad = |l: &str| HarnessError::new(Stage::Config, format!("bad results row {l:?}"));
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            if let Some(m) = line.strip_prefix('#') {
                let (k, v) = m.trim().split_once('=').ok_or_else(|| bad(line))?;
                t.meta.insert(k.to_string(), v.to_string());
            } else if line != "corpus,feature_mode,accuracy_pct" {
                let mut parts = line.rsplitn(3, ',');
                let acc: f64 = parts.next().and_then(|v| v.parse().ok()).ok_or_else(|| bad(line))?;
                let mode: FeatureMode = parts.next().ok_or_else(|| bad(line))?.parse()?;
                let corpus = parts.next().ok_or_else(|| bad(line))?;
                t.insert(corpus, mode, acc)?;
            }
        }
        Ok(t)
    }

    /// One row per corpus, one column per feature mode.
    pub fn to_pretty(&self) -> String {
        let corpora: Vec<&String> = {
            let mut c: Vec<&String> = self.rows.keys().map(|(c, _)| c).collect();
            c.dedup();
            c
        };
        let width = corpora.iter().map(|c| c.len()).max().unwrap_or(6).max(6);
        let mut s = format!("{:<width$}", "corpus");
        for m in FeatureMode::ALL {
            s.push_str(&format!(" | {:>12}", format!("{} (%)", m.title())));
        }
        s.push('\n');
        s.push_str(&"-".repeat(width + 3 * 15));
        s.push('\n');
        for c in corpora {
            s.push_str(&format!("{c:<width$}"));
            for m in FeatureMode::ALL {
                match self.rows.get(&(c.clone(), m)) {
                    Some(v) => s.push_str(&format!(" | {v:>12.2}")),
                    None => s.push_str(&format!(" | {:>12}", "-")),
                }
            }
            s.push('\n');
        }
        s
    }

    pub fn save(&self, dir: &Path) -> Result<(), HarnessError> {
        write_text(&dir.join(RESULTS_CSV), &self.to_csv())?;
        write_text(&dir.join(RESULTS_TXT), &self.to_pretty())
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::new(Stage::Config, format!("{}: {e}", path.display())))?;
        Self::from_csv(&text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub snr_db: f64,
    pub seed: u64,
    pub mode: FeatureMode,
    pub accuracy_pct: f64,
}

pub fn snr_label(snr_db: f64) -> String {
    format!("snr{snr_db:+}dB")
}

/// Every (SNR, seed) corpus, each scored under every feature mode.
pub fn run_sweep(config: &ExperimentConfig) -> Result<Vec<SweepCell>, HarnessError> {
    let mut cells = Vec::new();
    for &seed in &config.sweep.seeds {
        for &snr in &config.sweep.snrs_db {
            let mut cfg = config.clone();
            cfg.seed = seed;
            cfg.corpus.acoustic_snr_db = snr;
            cfg.corpus_dir = None;
            cfg.validate()?;
            let features = vad_features(&cfg)?;
            for &mode in &config.sweep.modes {
                cfg.feature_mode = mode;
                let run = run_vad_on_features(&features, &cfg)?;
                log::info!("sweep snr {snr:+} dB seed {seed} {mode}: {:.2}%", run.accuracy_pct);
                cells.push(SweepCell { snr_db: snr, seed, mode, accuracy_pct: run.accuracy_pct });
            }
        }
    }
    Ok(cells)
}

/// Median over seeds per (SNR, mode) as a results table keyed by SNR.
pub fn sweep_table(config: &ExperimentConfig, cells: &[SweepCell]) -> Result<ResultsTable, HarnessError> {
    let mut groups: BTreeMap<(String, FeatureMode), Vec<f64>> = BTreeMap::new();
    for c in cells {
        groups.entry((snr_label(c.snr_db), c.mode)).or_default().push(c.accuracy_pct);
    }
    let mut table = ResultsTable::new(config);
    table.meta.insert(
        "seeds".into(),
        config.sweep.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(" "),
    );
    table.meta.insert("statistic".into(), "median over seeds".into());
    for ((label, mode), mut v) in groups {
        table.insert(&label, mode, median(&mut v))?;
    }
    Ok(table)
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationReport {
    pub feature_mode: FeatureMode,
    /// Percent correct over the four utterance types.
    pub four_class_pct: f64,
    /// Percent correct after mapping to continue/stop.
    pub binary_pct: f64,
    pub test_sequences: usize,
    pub best_epoch: usize,
}

pub fn continuation_csv(reports: &[ContinuationReport]) -> String {
    let mut s = String::from("feature_mode,four_class_pct,binary_pct,test_sequences,best_epoch\n");
    for r in reports {
        s.push_str(&format!(
            "{},{:.4},{:.4},{},{}\n",
            r.feature_mode, r.four_class_pct, r.binary_pct, r.test_sequences, r.best_epoch
        ));
    }
    s
}

/// Features and utterance classes of the continuation corpus.
pub fn continuation_features(
    config: &ExperimentConfig,
) -> Result<(Vec<SequenceFeatures>, Vec<usize>), HarnessError> {
    let corpus = match &config.corpus_dir {
        Some(dir) => synth::load_continuation(dir).map_err(at(Stage::Corpus))?,
        None => synth::generate_continuation(&config.continuation_spec()).map_err(at(Stage::Corpus))?,
    };
    let mut pipeline = FeaturePipeline::new(&config.preprocess, &config.mfcc)?;
    let features = corpus
        .iter()
        .map(|s| pipeline.extract(&s.audio, &s.eeg, &s.activity))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((features, corpus.iter().map(|s| s.utterance.class()).collect()))
}

pub fn run_continuation_on_features(
    features: &[SequenceFeatures],
    classes: &[usize],
    mode: FeatureMode,
    config: &ExperimentConfig,
) -> Result<(ContinuationReport, TrainOutcome), HarnessError> {
    let seeds = config.seeds();
    let tc = &config.continuation_train;
    let split = split_indices(features.len(), tc.split, seeds.split).map_err(at(Stage::Split))?;
    let (transforms, inputs) = prepare_inputs(features, &split.train, mode, &config.kpca, seeds.kpca)?;
    let labeled = |ids: &[usize]| -> Vec<LabeledSequence> {
        ids.iter()
            .map(|&i| LabeledSequence { features: inputs[i].clone(), target: Target::Sequence(classes[i]) })
            .collect()
    };
    let net = build_continuation(transforms.input_dim(), seeds.init).map_err(at(Stage::Train))?;
    let train_cfg = TrainConfig { seed: seeds.train, ..tc.clone() };
    let outcome =
        train(&net, &labeled(&split.train), &labeled(&split.validation), &train_cfg).map_err(at(Stage::Train))?;
    let (mut four, mut binary) = (0usize, 0usize);
    for &i in &split.test {
        let pred = predict_frames(&outcome.network, inputs[i].view()).map_err(at(Stage::Evaluate))?;
        let class = pred.last().ok_or_else(|| HarnessError::new(Stage::Evaluate, "empty prediction"))?.class;
        four += usize::from(class == classes[i]);
        let continues = |c: usize| Utterance::from_class(c).is_some_and(Utterance::continues);
        binary += usize::from(continues(class) == continues(classes[i]));
    }
    let n = split.test.len();
    if n == 0 {
        return Err(HarnessError::new(Stage::Evaluate, "empty test split"));
    }
    let report = ContinuationReport {
        feature_mode: mode,
        four_class_pct: 100.0 * four as f64 / n as f64,
        binary_pct: 100.0 * binary as f64 / n as f64,
        test_sequences: n,
        best_epoch: outcome.best_epoch,
    };
    Ok((report, outcome))
}

/// Trains one continuation model per feature mode.
pub fn run_continuation_experiment(
    config: &ExperimentConfig,
    modes: &[FeatureMode],
) -> Result<Vec<ContinuationReport>, HarnessError> {
    let (features, classes) = continuation_features(config)?;
    let mut reports = Vec::new();
    for &mode in modes {
        let (report, outcome) = run_continuation_on_features(&features, &classes, mode, config)?;
        if let Some(dir) = &config.out_dir {
            let sub = dir.join(format!("continuation_{}", mode.name().replace('+', "_")));
            save_network(&outcome.network, config.seed, outcome.best_epoch, &sub.join(CHECKPOINT_STEM))
                .map_err(at(Stage::Output))?;
            write_text(&sub.join("train_log.csv"), &outcome.log_csv())?;
        }
        reports.push(report);
    }
    if let Some(dir) = &config.out_dir {
        write_text(&dir.join("continuation.csv"), &continuation_csv(&reports))?;
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feature_modes_parse() {
        for m in FeatureMode::ALL {
            assert_eq!(m.name().parse::<FeatureMode>().unwrap(), m);
        }
        assert!("audio".parse::<FeatureMode>().unwrap_err().is_config());
        assert_eq!(serde_json::to_string(&FeatureMode::MfccEeg).unwrap(), "\"mfcc+eeg\"");
    }

    #[test]
    fn variance_curve_rows() {
        let csv = variance_curve_csv(&[0.75, 1.0]);
        assert_eq!(csv, "component_index,cumulative_ratio\n1,0.75\n2,1\n");
        assert_eq!(parse_variance_curve(&csv).unwrap(), vec![(1, 0.75), (2, 1.0)]);
    }

    #[test]
    fn results_table_round_trip_and_merge() {
        let cfg = ExperimentConfig::default();
        let mut a = ResultsTable::new(&cfg);
        a.insert("set1", FeatureMode::Mfcc, 60.3).unwrap();
        a.insert("set1", FeatureMode::Eeg, 83.1).unwrap();
        let mut b = ResultsTable::default();
        b.insert("set1", FeatureMode::MfccEeg, 85.7).unwrap();
        b.insert("set2", FeatureMode::Mfcc, 58.07).unwrap();
        let mut ab = a.clone();
        ab.merge(&b);
        let mut ba = b.clone();
        ba.merge(&a);
        assert_eq!(ab.rows, ba.rows);
        let back = ResultsTable::from_csv(&ab.to_csv()).unwrap();
        assert_eq!(back.to_csv(), ab.to_csv());
        assert!(ab.to_pretty().lines().nth(2).unwrap().contains("85.70"));
        assert!(a.insert("x", FeatureMode::Mfcc, 101.0).is_err());
    }

    #[test]
    fn median_of_three_and_four() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn seeds_differ_by_stream() {
        let s = Seeds::derive(7);
        assert_eq!(s, Seeds::derive(7));
        let all = [s.split, s.kpca, s.init, s.train];
        for i in 0..4 {
            for j in i + 1..4 {
                assert_ne!(all[i], all[j]);
            }
        }
    }
}
