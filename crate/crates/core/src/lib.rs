//! Voice activity detection from EEG and audio.
//!
//! The pipeline runs at a shared 100 Hz frame rate:
//!
//! * [`signal`] filters and frames raw multichannel recordings,
//! * [`eeg_features`] computes five statistics per EEG channel and window,
//! * [`speech`] computes 13 MFCCs from 16 kHz audio,
//! * [`kpca`] reduces the EEG frames with a cubic polynomial kernel PCA,
//! * [`nn`] and [`models`] build and train the stacked-GRU classifiers,
//! * [`synth`] generates paired audio/EEG corpora with known labels,
//! * [`harness`] wires it all into reproducible experiments.

pub mod eeg_features;
pub mod frames;
pub mod harness;
pub mod io;
pub mod kpca;
pub mod models;
pub mod nn;
pub mod signal;
pub mod speech;
pub mod synth;

pub use frames::FrameSequence;
pub use signal::TimeSeries;
