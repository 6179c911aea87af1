//! Per-frame feature matrices shared by every stage after feature extraction.

use ndarray::{concatenate, Array2, ArrayView1, Axis};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FrameError {
    #[error("frame rate mismatch: {0} Hz vs {1} Hz")]
    RateMismatch(f64, f64),
    #[error("{labels} labels for {frames} frames")]
    LabelCount { labels: usize, frames: usize },
    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
}

/// Frame-major feature matrix (`count × dim`) at a fixed frame rate.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    pub data: Array2<f64>,
    pub frame_rate_hz: f64,
    /// Human-readable description of what each column holds.
    pub layout: String,
    pub labels: Option<Vec<usize>>,
}

impl FrameSequence {
    pub fn new(data: Array2<f64>, frame_rate_hz: f64, layout: impl Into<String>) -> Self {
        Self { data, frame_rate_hz, layout: layout.into(), labels: None }
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self, FrameError> {
        if labels.len() != self.count() {
            return Err(FrameError::LabelCount { labels: labels.len(), frames: self.count() });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn count(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn frame(&self, k: usize) -> ArrayView1<'_, f64> {
        self.data.row(k)
    }

    /// Window start time of frame `k`.
    pub fn timestamp_s(&self, k: usize) -> f64 {
        k as f64 / self.frame_rate_hz
    }

    /// Keeps the first `count` frames (and labels).
    pub fn truncate(&mut self, count: usize) {
        if count < self.count() {
            self.data = self.data.slice(ndarray::s![..count, ..]).to_owned();
            if let Some(l) = self.labels.as_mut() {
                l.truncate(count);
            }
        }
    }

    /// Column-wise concatenation `[self | other]`, aligned by frame index.
    /// The longer sequence is cut to the shorter one; labels come from `self`.
    pub fn concat(&self, other: &FrameSequence) -> Result<FrameSequence, FrameError> {
        if (self.frame_rate_hz - other.frame_rate_hz).abs() > 1e-9 {
            return Err(FrameError::RateMismatch(self.frame_rate_hz, other.frame_rate_hz));
        }
        let n = self.count().min(other.count());
        let data = concatenate(
            Axis(1),
            &[self.data.slice(ndarray::s![..n, ..]), other.data.slice(ndarray::s![..n, ..])],
        )
        .expect("row counts agree");
        let labels = self.labels.as_ref().map(|l| l[..n].to_vec());
        Ok(FrameSequence {
            data,
            frame_rate_hz: self.frame_rate_hz,
            layout: format!("{} | {}", self.layout, other.layout),
            labels,
        })
    }
}
