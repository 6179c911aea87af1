use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use eegvad::frames::FrameSequence;
use eegvad::harness::{
    self, continuation_csv, emit_variance_curve, load_kpca, prepare_inputs, run_continuation_experiment,
    run_sweep, run_vad_experiment, save_kpca, snr_label, sweep_table, vad_features, ExperimentConfig,
    FeatureMode, HarnessError, ResultsTable, SavedModel, SequenceFeatures, Stage,
};
use eegvad::io;
use eegvad::models::{split_indices, VadVariant};
use eegvad::synth;
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(name = "eegvad", version, about = "EEG and MFCC voice activity detection experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON experiment config; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed for every random choice.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_parser = parse_mode)]
    feature_mode: Option<FeatureMode>,
    #[arg(long, global = true, value_parser = parse_variant)]
    variant: Option<VadVariant>,
    /// Acoustic SNR of the generated corpus, in dB.
    #[arg(long, global = true, allow_hyphen_values = true)]
    snr_db: Option<f64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Task {
    Vad,
    Continuation,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic paired corpus.
    Synth {
        #[arg(long, value_enum, default_value = "vad")]
        task: Task,
    },
    /// Extract MFCC and EEG frame features from a corpus directory.
    Features {
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Fit KPCA on the training split of extracted EEG features.
    KpcaFit {
        #[arg(long)]
        features: PathBuf,
    },
    /// Run one experiment end to end and save its artifacts.
    Train {
        #[arg(long, value_enum, default_value = "vad")]
        task: Task,
        /// Use this corpus instead of generating one.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Epoch budget override.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Score a saved model on the test split of its corpus.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Merge results files into one table.
    Table {
        #[arg(required = true)]
        results: Vec<PathBuf>,
    },
    /// Write the cumulative explained-variance curve of a saved KPCA model.
    VarianceCurve {
        /// KPCA stem, e.g. `run/kpca`.
        #[arg(long)]
        kpca: PathBuf,
    },
    /// Acoustic-SNR sweep over seeds and feature modes.
    Sweep {
        #[arg(long)]
        epochs: Option<usize>,
    },
}

fn parse_mode(s: &str) -> Result<FeatureMode, String> {
    s.parse().map_err(|e: HarnessError| e.message)
}

fn parse_variant(s: &str) -> Result<VadVariant, String> {
    s.parse().map_err(|e: eegvad::models::ModelError| e.to_string())
}

fn config_err(msg: impl std::fmt::Display) -> HarnessError {
    HarnessError::new(Stage::Config, msg)
}

fn output_err(msg: impl std::fmt::Display) -> HarnessError {
    HarnessError::new(Stage::Output, msg)
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, HarnessError> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(m) = self.feature_mode {
            cfg.feature_mode = m;
        }
        if let Some(v) = self.variant {
            cfg.variant = v;
        }
        if let Some(snr) = self.snr_db {
            cfg.corpus.acoustic_snr_db = snr;
            cfg.continuation.acoustic_snr_db = snr;
        }
        if let Some(o) = &self.out {
            cfg.out_dir = Some(o.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn out(&self) -> Result<&Path, HarnessError> {
        self.out.as_deref().ok_or_else(|| config_err("--out is required"))
    }
}

#[derive(Serialize, Deserialize)]
struct FeatureIndex {
    seed: u64,
    sequences: Vec<String>,
}

const FEATURE_INDEX: &str = "features.json";

fn frames(data: &ndarray::Array2<f64>, layout: &str, labels: &[usize]) -> Result<FrameSequence, HarnessError> {
    FrameSequence::new(data.clone(), 100.0, layout).with_labels(labels.to_vec()).map_err(output_err)
}

fn cmd_synth(common: &Common, task: Task) -> Result<(), HarnessError> {
    let cfg = common.load()?;
    let out = common.out()?;
    match task {
        Task::Vad => {
            let spec = cfg.corpus_spec();
            let corpus = synth::generate_corpus(&spec).map_err(|e| HarnessError::new(Stage::Corpus, e))?;
            synth::save_corpus(out, &spec, &corpus).map_err(output_err)?;
            println!("wrote {} sequences to {}", corpus.len(), out.display());
        }
        Task::Continuation => {
            let spec = cfg.continuation_spec();
            spec.validate().map_err(config_err)?;
            let corpus = synth::generate_continuation(&spec).map_err(|e| HarnessError::new(Stage::Corpus, e))?;
            synth::save_continuation(out, &spec, &corpus).map_err(output_err)?;
            println!("wrote {} sequences to {}", corpus.len(), out.display());
        }
    }
    Ok(())
}

fn cmd_features(common: &Common, corpus: &Path) -> Result<(), HarnessError> {
    let mut cfg = common.load()?;
    cfg.corpus_dir = Some(corpus.to_path_buf());
    cfg.validate()?;
    let out = common.out()?;
    let features = vad_features(&cfg)?;
    let mut names = Vec::new();
    for (i, f) in features.iter().enumerate() {
        let name = format!("seq{i:04}");
        io::save_frames(&frames(&f.mfcc, "mfcc[0..13]", &f.labels)?, &out.join(format!("{name}_mfcc")))
            .map_err(output_err)?;
        io::save_frames(&frames(&f.eeg, "eeg x 5", &f.labels)?, &out.join(format!("{name}_eeg")))
            .map_err(output_err)?;
        names.push(name);
    }
    io::write_json(&out.join(FEATURE_INDEX), &FeatureIndex { seed: cfg.seed, sequences: names })
        .map_err(output_err)?;
    println!("wrote features of {} sequences to {}", features.len(), out.display());
    Ok(())
}

fn load_features(dir: &Path) -> Result<Vec<SequenceFeatures>, HarnessError> {
    let index: FeatureIndex = io::read_json(&dir.join(FEATURE_INDEX)).map_err(config_err)?;
    index
        .sequences
        .iter()
        .map(|name| {
            let mfcc = io::load_frames(&dir.join(format!("{name}_mfcc"))).map_err(config_err)?;
            let eeg = io::load_frames(&dir.join(format!("{name}_eeg"))).map_err(config_err)?;
            let labels = eeg.labels.clone().unwrap_or_default();
            Ok(SequenceFeatures { mfcc: mfcc.data, eeg: eeg.data, labels })
        })
        .collect()
}

fn cmd_kpca_fit(common: &Common, dir: &Path) -> Result<(), HarnessError> {
    let cfg = common.load()?;
    let out = common.out()?;
    let features = load_features(dir)?;
    let seeds = cfg.seeds();
    let split = split_indices(features.len(), cfg.train.split, seeds.split).map_err(config_err)?;
    let (fitted, _) = prepare_inputs(&features, &split.train, FeatureMode::Eeg, &cfg.kpca, seeds.kpca)?;
    let model = fitted.kpca.ok_or_else(|| HarnessError::new(Stage::Kpca, "no model fitted"))?;
    save_kpca(&model, &out.join(harness::KPCA_STEM))?;
    emit_variance_curve(&model, &out.join("variance_curve.csv"))?;
    println!(
        "kpca {} -> {} fitted on {} frames; wrote {}",
        model.input_dim(),
        model.out_dim(),
        model.n_training(),
        out.display()
    );
    Ok(())
}

fn cmd_train(common: &Common, task: Task, corpus: Option<&Path>, epochs: Option<usize>) -> Result<(), HarnessError> {
    let mut cfg = common.load()?;
    common.out()?;
    if let Some(c) = corpus {
        cfg.corpus_dir = Some(c.to_path_buf());
    }
    match task {
        Task::Vad => {
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            let run = run_vad_experiment(&cfg)?;
            println!(
                "{} {} {}: test accuracy {:.2}% over {} frames (best epoch {})",
                cfg.name,
                cfg.variant.name(),
                run.mode,
                run.accuracy_pct,
                run.test_frames,
                run.outcome.best_epoch
            );
        }
        Task::Continuation => {
            if let Some(e) = epochs {
                cfg.continuation_train.epochs = e;
            }
            let modes = match common.feature_mode {
                Some(m) => vec![m],
                None => vec![FeatureMode::Eeg, FeatureMode::Mfcc],
            };
            let reports = run_continuation_experiment(&cfg, &modes)?;
            print!("{}", continuation_csv(&reports));
        }
    }
    Ok(())
}

fn cmd_eval(common: &Common, model_dir: &Path, corpus: Option<&Path>) -> Result<(), HarnessError> {
    let saved = SavedModel::load(model_dir)?;
    let mut cfg: ExperimentConfig = match &common.config {
        Some(_) => common.load()?,
        None => io::read_json(&model_dir.join("config.json")).map_err(config_err)?,
    };
    cfg.preprocess = saved.manifest.preprocess.clone();
    cfg.mfcc = saved.manifest.mfcc.clone();
    if let Some(c) = corpus {
        cfg.corpus_dir = Some(c.to_path_buf());
    }
    cfg.validate()?;
    let features = vad_features(&cfg)?;
    let (acc, frames) = saved.evaluate(&features, &saved.manifest.split.test)?;
    println!("test accuracy {:.2}% over {frames} frames", 100.0 * acc);
    Ok(())
}

fn cmd_table(common: &Common, paths: &[PathBuf]) -> Result<(), HarnessError> {
    let mut table = ResultsTable::default();
    for p in paths {
        let p = if p.is_dir() { p.join(harness::RESULTS_CSV) } else { p.clone() };
        table.merge(&ResultsTable::load(&p)?);
    }
    if let Some(out) = &common.out {
        table.save(out)?;
    }
    print!("{}", table.to_pretty());
    Ok(())
}

fn cmd_variance_curve(common: &Common, stem: &Path) -> Result<(), HarnessError> {
    let model = load_kpca(stem)?;
    let path = match &common.out {
        Some(o) if o.extension().is_some() => o.clone(),
        Some(o) => o.join("variance_curve.csv"),
        None => PathBuf::from("variance_curve.csv"),
    };
    emit_variance_curve(&model, &path)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_sweep(common: &Common, epochs: Option<usize>) -> Result<(), HarnessError> {
    let mut cfg = common.load()?;
    let out = common.out()?.to_path_buf();
    if let Some(e) = epochs {
        cfg.train.epochs = e;
    }
    if let Some(snr) = common.snr_db {
        cfg.sweep.snrs_db = vec![snr];
    }
    if let Some(m) = common.feature_mode {
        cfg.sweep.modes = vec![m];
    }
    if let Some(s) = common.seed {
        cfg.sweep.seeds = vec![s];
    }
    let cells = run_sweep(&cfg)?;
    let mut csv = String::from("snr_db,seed,feature_mode,accuracy_pct\n");
    for c in &cells {
        csv.push_str(&format!("{},{},{},{:.4}\n", snr_label(c.snr_db), c.seed, c.mode, c.accuracy_pct));
    }
    std::fs::create_dir_all(&out).map_err(output_err)?;
    std::fs::write(out.join("sweep_cells.csv"), csv).map_err(output_err)?;
    let table = sweep_table(&cfg, &cells)?;
    table.save(&out)?;
    print!("{}", table.to_pretty());
    Ok(())
}

fn run(cli: &Cli) -> Result<(), HarnessError> {
    let c = &cli.common;
    match &cli.command {
        Command::Synth { task } => cmd_synth(c, *task),
        Command::Features { corpus } => cmd_features(c, corpus),
        Command::KpcaFit { features } => cmd_kpca_fit(c, features),
        Command::Train { task, corpus, epochs } => cmd_train(c, *task, corpus.as_deref(), *epochs),
        Command::Eval { model, corpus } => cmd_eval(c, model, corpus.as_deref()),
        Command::Table { results } => cmd_table(c, results),
        Command::VarianceCurve { kpca } => cmd_variance_curve(c, kpca),
        Command::Sweep { epochs } => cmd_sweep(c, *epochs),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}
