//! Windowed statistical EEG features.
//!
//! Each channel contributes a contiguous block of five values per frame,
//! in the order rms, zero-crossing rate, moving-window average, kurtosis,
//! power spectral entropy. 31 channels give 155-wide frames.

use std::sync::Arc;

use ndarray::Array2;
use rustfft::{num_complex::Complex64, Fft, FftPlanner};
use thiserror::Error;

use crate::frames::FrameSequence;
use crate::signal::{FrameLayout, SignalError, TimeSeries};

pub const FEATURES_PER_CHANNEL: usize = 5;
pub const FEATURE_NAMES: [&str; FEATURES_PER_CHANNEL] = ["rms", "zcr", "mwa", "kurtosis", "pse"];

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("window is empty or shorter than {0} samples")]
    EmptyWindow(usize),
    #[error("window has zero variance")]
    ZeroVariance,
    #[error(transparent)]
    Framing(#[from] SignalError),
}

pub fn rms(window: &[f64]) -> Result<f64, FeatureError> {
    if window.is_empty() {
        return Err(FeatureError::EmptyWindow(1));
    }
    Ok((window.iter().map(|v| v * v).sum::<f64>() / window.len() as f64).sqrt())
}

/// Fraction of adjacent sample pairs whose sign differs. Zeros carry the
/// sign of the last nonzero sample; leading zeros carry no sign.
pub fn zero_crossing_rate(window: &[f64]) -> Result<f64, FeatureError> {
    if window.len() < 2 {
        return Err(FeatureError::EmptyWindow(2));
    }
    let mut last_sign = 0i8;
    let mut crossings = 0usize;
    for &v in window {
        let sign = if v > 0.0 {
            1
        } else if v < 0.0 {
            -1
        } else {
            last_sign
        };
        if sign != 0 && last_sign != 0 && sign != last_sign {
            crossings += 1;
        }
        if sign != 0 {
            last_sign = sign;
        }
    }
    Ok(crossings as f64 / (window.len() - 1) as f64)
}

/// Arithmetic mean of the window; the sliding framing supplies the "moving" part.
pub fn moving_window_average(window: &[f64]) -> Result<f64, FeatureError> {
    if window.is_empty() {
        return Err(FeatureError::EmptyWindow(1));
    }
    Ok(window.iter().sum::<f64>() / window.len() as f64)
}

/// Non-excess kurtosis `m4 / m2²` from biased central moments.
pub fn kurtosis(window: &[f64]) -> Result<f64, FeatureError> {
    if window.len() < 4 {
        return Err(FeatureError::EmptyWindow(4));
    }
    let first = window[0];
    if window.iter().all(|&v| v == first) {
        return Err(FeatureError::ZeroVariance);
    }
    let n = window.len() as f64;
    let mean = window.iter().sum::<f64>() / n;
    let (m2, m4) = window.iter().fold((0.0, 0.0), |(m2, m4), &v| {
        let d = v - mean;
        let d2 = d * d;
        (m2 + d2, m4 + d2 * d2)
    });
    let (m2, m4) = (m2 / n, m4 / n);
    let scale = window.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if m2 <= (f64::EPSILON * scale).powi(2) {
        return Err(FeatureError::ZeroVariance);
    }
    Ok(m4 / (m2 * m2))
}

/// Shannon entropy (nats) of the normalised periodogram over bins
/// `1..=n/2`, rectangular window. All-zero input gives 0.
#[derive(Clone)]
pub struct SpectralEntropy {
    len: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl SpectralEntropy {
    pub fn new(len: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(len.max(1));
        Self { len, fft }
    }

    pub fn compute(&self, window: &[f64]) -> Result<f64, FeatureError> {
        if window.len() < 2 {
            return Err(FeatureError::EmptyWindow(2));
        }
        assert_eq!(window.len(), self.len, "planned length differs from window length");
        let mut buf: Vec<Complex64> = window.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft.process(&mut buf);
        let power: Vec<f64> = buf[1..=self.len / 2].iter().map(|c| c.norm_sqr()).collect();
        let total: f64 = power.iter().sum();
        // Parseval: all bins together hold n·Σx². Anything this far below it
        // is FFT round-off from a constant window.
        let energy = self.len as f64 * window.iter().map(|v| v * v).sum::<f64>();
        if !(total > 1e-20 * energy) {
            return Ok(0.0);
        }
        let h = power
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| {
                let q = p / total;
                -q * q.ln()
            })
            .sum::<f64>();
        Ok(h.max(0.0))
    }
}

pub fn power_spectral_entropy(window: &[f64]) -> Result<f64, FeatureError> {
    SpectralEntropy::new(window.len()).compute(window)
}

/// Five features of one window, with a flag for the zero-variance kurtosis case.
pub fn window_features(
    window: &[f64],
    entropy: &SpectralEntropy,
) -> Result<([f64; FEATURES_PER_CHANNEL], bool), FeatureError> {
    let (k, degenerate) = match kurtosis(window) {
        Ok(k) => (k, false),
        Err(FeatureError::ZeroVariance) => (0.0, true),
        Err(e) => return Err(e),
    };
    Ok((
        [
            rms(window)?,
            zero_crossing_rate(window)?,
            moving_window_average(window)?,
            k,
            entropy.compute(window)?,
        ],
        degenerate,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EegExtraction {
    pub frames: FrameSequence,
    /// Number of (channel, frame) windows whose kurtosis fell back to 0.
    pub zero_variance_windows: usize,
}

pub fn layout_description(channels: &[String]) -> String {
    format!(
        "eeg[{}] x ({})",
        channels.join(","),
        FEATURE_NAMES.join(",")
    )
}

/// Extracts `channels × 5` features per frame. Frame `k` starts at sample
/// `k · hop`.
pub fn extract_eeg_features(
    x: &TimeSeries,
    frame_rate_hz: f64,
    window_s: f64,
) -> Result<EegExtraction, FeatureError> {
    let layout = FrameLayout::new(x.samples(), x.sample_rate_hz(), frame_rate_hz, window_s)?;
    let width = x.channels() * FEATURES_PER_CHANNEL;
    let mut out = Array2::zeros((layout.count, width));
    let entropy = SpectralEntropy::new(layout.window);
    let mut zero_variance_windows = 0;
    for c in 0..x.channels() {
        let data = x.channel(c);
        for k in 0..layout.count {
            let (feats, degenerate) = window_features(&data[layout.range(k)], &entropy)?;
            zero_variance_windows += usize::from(degenerate);
            for (j, v) in feats.into_iter().enumerate() {
                out[[k, c * FEATURES_PER_CHANNEL + j]] = v;
            }
        }
    }
    Ok(EegExtraction {
        frames: FrameSequence::new(out, frame_rate_hz, layout_description(x.channel_names())),
        zero_variance_windows,
    })
}
