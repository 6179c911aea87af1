//! MFCC extraction at the shared 100 Hz frame rate.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::Array2;
use rustfft::{num_complex::Complex64, Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frames::FrameSequence;
use crate::signal::{FrameLayout, SignalError, TimeSeries};

pub const LOG_FLOOR: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum SpeechError {
    #[error("invalid MFCC config: {0}")]
    InvalidConfig(String),
    #[error("expected mono audio, got {0} channels")]
    MultichannelAudio(usize),
    #[error("audio sample rate {got} Hz does not match expected {expected} Hz")]
    RateMismatch { expected: f64, got: f64 },
    #[error(transparent)]
    Framing(#[from] SignalError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MfccConfig {
    pub n_coeffs: usize,
    pub n_mel_filters: usize,
    pub window_s: f64,
    pub hop_s: f64,
    pub fft_size: usize,
    pub preemphasis: f64,
    pub fmin_hz: f64,
    pub fmax_hz: f64,
    pub sample_rate_hz: f64,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self {
            n_coeffs: 13,
            n_mel_filters: 26,
            window_s: 0.025,
            hop_s: 0.01,
            fft_size: 512,
            preemphasis: 0.97,
            fmin_hz: 0.0,
            fmax_hz: 8000.0,
            sample_rate_hz: 16000.0,
        }
    }
}

impl MfccConfig {
    pub fn window_samples(&self) -> usize {
        (self.window_s * self.sample_rate_hz).round() as usize
    }

    pub fn frame_rate_hz(&self) -> f64 {
        1.0 / self.hop_s
    }

    pub fn validate(&self) -> Result<(), SpeechError> {
        let bad = |m: &str| Err(SpeechError::InvalidConfig(m.to_string()));
        if self.n_coeffs == 0 || self.n_coeffs > self.n_mel_filters {
            return bad("need 0 < n_coeffs <= n_mel_filters");
        }
        if !(self.sample_rate_hz > 0.0) {
            return bad("sample rate must be positive");
        }
        if !(self.window_s > 0.0 && self.hop_s > 0.0) {
            return bad("window and hop must be positive");
        }
        if self.fft_size < self.window_samples() {
            return bad("fft_size shorter than the analysis window");
        }
        if !(0.0..1.0).contains(&self.preemphasis) {
            return bad("pre-emphasis must lie in [0, 1)");
        }
        if !(self.fmin_hz >= 0.0 && self.fmin_hz < self.fmax_hz && self.fmax_hz <= self.sample_rate_hz / 2.0) {
            return bad("need 0 <= fmin < fmax <= nyquist");
        }
        Ok(())
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters, `n_mel_filters × (fft_size/2 + 1)`. Edges are evenly
/// spaced on the mel scale and snapped to FFT bins; each filter peaks at 1
/// on its centre bin.
pub fn mel_filterbank(config: &MfccConfig) -> Result<Array2<f64>, SpeechError> {
    config.validate()?;
    let bins = config.fft_size / 2 + 1;
    let m = config.n_mel_filters;
    let (lo, hi) = (hz_to_mel(config.fmin_hz), hz_to_mel(config.fmax_hz));
    let edges: Vec<usize> = (0..m + 2)
        .map(|i| {
            let hz = mel_to_hz(lo + (hi - lo) * i as f64 / (m + 1) as f64);
            ((config.fft_size as f64 * hz / config.sample_rate_hz).round() as usize).min(bins - 1)
        })
        .collect();
    let mut bank = Array2::zeros((m, bins));
    for f in 0..m {
        let (l, c, u) = (edges[f], edges[f + 1], edges[f + 2]);
        for k in l..c {
            bank[[f, k]] = (k - l) as f64 / (c - l) as f64;
        }
        for k in c + 1..=u {
            bank[[f, k]] = (u - k) as f64 / (u - c) as f64;
        }
        bank[[f, c]] = 1.0;
    }
    Ok(bank)
}

/// Orthonormal DCT-II basis, `n × n`; row `k` is basis vector `k`.
pub fn dct_matrix(n: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, n), |(k, i)| {
        let scale = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
        scale * (PI * k as f64 * (2 * i + 1) as f64 / (2 * n) as f64).cos()
    })
}

/// Reusable MFCC pipeline for one configuration.
pub struct MfccExtractor {
    config: MfccConfig,
    filterbank: Array2<f64>,
    dct: Array2<f64>,
    hann: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl MfccExtractor {
    pub fn new(config: MfccConfig) -> Result<Self, SpeechError> {
        let filterbank = mel_filterbank(&config)?;
        let dct = dct_matrix(config.n_mel_filters);
        let n = config.window_samples();
        let hann = (0..n)
            .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / (n - 1) as f64).cos())
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(config.fft_size);
        Ok(Self { config, filterbank, dct, hann, fft })
    }

    pub fn config(&self) -> &MfccConfig {
        &self.config
    }

    fn frame_coefficients(&self, frame: &[f64], out: &mut [f64]) {
        let mut buf = vec![Complex64::new(0.0, 0.0); self.config.fft_size];
        for ((b, &x), &w) in buf.iter_mut().zip(frame).zip(&self.hann) {
            b.re = x * w;
        }
        self.fft.process(&mut buf);
        let power: Vec<f64> = buf[..self.filterbank.ncols()].iter().map(|c| c.norm_sqr()).collect();
        let log_mel: Vec<f64> = self
            .filterbank
            .rows()
            .into_iter()
            .map(|row| {
                let e: f64 = row.iter().zip(&power).map(|(w, p)| w * p).sum();
                e.max(LOG_FLOOR).ln()
            })
            .collect();
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.dct.row(k).iter().zip(&log_mel).map(|(d, l)| d * l).sum();
        }
    }

    pub fn extract(&self, x: &TimeSeries) -> Result<FrameSequence, SpeechError> {
        if x.channels() != 1 {
            return Err(SpeechError::MultichannelAudio(x.channels()));
        }
        if (x.sample_rate_hz() - self.config.sample_rate_hz).abs() > 1e-9 {
            return Err(SpeechError::RateMismatch {
                expected: self.config.sample_rate_hz,
                got: x.sample_rate_hz(),
            });
        }
        let layout = FrameLayout::new(
            x.samples(),
            x.sample_rate_hz(),
            self.config.frame_rate_hz(),
            self.config.window_s,
        )?;
        let raw = x.channel(0);
        let a = self.config.preemphasis;
        let emphasized: Vec<f64> = raw
            .iter()
            .enumerate()
            .map(|(i, &v)| if i == 0 { v } else { v - a * raw[i - 1] })
            .collect();
        let mut out = Array2::zeros((layout.count, self.config.n_coeffs));
        for k in 0..layout.count {
            let row = out.row_mut(k).into_slice().expect("standard layout");
            self.frame_coefficients(&emphasized[layout.range(k)], row);
        }
        Ok(FrameSequence::new(
            out,
            self.config.frame_rate_hz(),
            format!("mfcc[0..{}]", self.config.n_coeffs),
        ))
    }
}

pub fn extract_mfcc(x: &TimeSeries, config: &MfccConfig) -> Result<FrameSequence, SpeechError> {
    MfccExtractor::new(config.clone())?.extract(x)
}
