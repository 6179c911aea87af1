//! Raw signal containers, IIR filter design and framing.
//!
//! EEG arrives at 1 kHz and audio at 16 kHz; both are held in [`TimeSeries`]
//! as a `channels × samples` matrix. Filters are realised as cascades of
//! second-order sections and applied causally, one channel at a time.

use std::f64::consts::PI;

use ndarray::{Array2, ArrayView1};
use rustfft::num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SignalError {
    #[error("invalid cutoffs: need 0 < low ({low}) < high ({high}) < nyquist ({nyquist})")]
    InvalidCutoffs { low: f64, high: f64, nyquist: f64 },
    #[error("invalid notch center {center} Hz for nyquist {nyquist} Hz")]
    InvalidCenter { center: f64, nyquist: f64 },
    #[error("invalid notch quality factor {0}")]
    InvalidQuality(f64),
    #[error("filter produced a non-finite sample on channel {channel} at index {index}")]
    NonFiniteOutput { channel: usize, index: usize },
    #[error("sample rate {sample_rate} Hz is not an integer multiple of frame rate {frame_rate} Hz")]
    IncompatibleRates { sample_rate: f64, frame_rate: f64 },
    #[error("window of {0} samples is too short (need at least 2)")]
    WindowTooShort(usize),
    #[error("invalid time series: {0}")]
    InvalidSeries(String),
    #[error("empty cascade")]
    EmptyCascade,
}

/// Uniformly sampled multichannel signal.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    data: Array2<f64>,
    sample_rate_hz: f64,
    channel_names: Vec<String>,
}

impl TimeSeries {
    /// `data` is `channels × samples`.
    pub fn new(
        data: Array2<f64>,
        sample_rate_hz: f64,
        channel_names: Vec<String>,
    ) -> Result<Self, SignalError> {
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return Err(SignalError::InvalidSeries(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if channel_names.len() != data.nrows() {
            return Err(SignalError::InvalidSeries(format!(
                "{} channel names for {} channels",
                channel_names.len(),
                data.nrows()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(SignalError::InvalidSeries(format!(
                "non-finite value at flat index {pos}"
            )));
        }
        let data = data.as_standard_layout().into_owned();
        Ok(Self { data, sample_rate_hz, channel_names })
    }

    /// Builds a series with generated channel names `ch0`, `ch1`, ...
    pub fn from_channels(data: Array2<f64>, sample_rate_hz: f64) -> Result<Self, SignalError> {
        let names = (0..data.nrows()).map(|c| format!("ch{c}")).collect();
        Self::new(data, sample_rate_hz, names)
    }

    pub fn mono(samples: Vec<f64>, sample_rate_hz: f64) -> Result<Self, SignalError> {
        let n = samples.len();
        let data = Array2::from_shape_vec((1, n), samples)
            .map_err(|e| SignalError::InvalidSeries(e.to_string()))?;
        Self::new(data, sample_rate_hz, vec!["audio".to_string()])
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_data(self) -> Array2<f64> {
        self.data
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    pub fn channels(&self) -> usize {
        self.data.nrows()
    }

    pub fn samples(&self) -> usize {
        self.data.ncols()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples() as f64 / self.sample_rate_hz
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        self.data
            .row(c)
            .to_slice()
            .expect("time series is kept in standard layout")
    }
}

/// One second-order section, `a0` normalised to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Biquad {
    pub const IDENTITY: Biquad = Biquad { b0: 1.0, b1: 0.0, b2: 0.0, a1: 0.0, a2: 0.0 };

    /// Complex response at normalised angular frequency `omega` (rad/sample).
    pub fn response(&self, omega: f64) -> Complex64 {
        let z1 = Complex64::from_polar(1.0, -omega);
        let z2 = z1 * z1;
        let num = self.b0 + z1 * self.b1 + z2 * self.b2;
        let den = 1.0 + z1 * self.a1 + z2 * self.a2;
        num / den
    }

    /// Roots of `z² + a1 z + a2`.
    pub fn poles(&self) -> [Complex64; 2] {
        let disc = self.a1 * self.a1 - 4.0 * self.a2;
        if disc < 0.0 {
            let re = -self.a1 / 2.0;
            let im = (-disc).sqrt() / 2.0;
            [Complex64::new(re, im), Complex64::new(re, -im)]
        } else {
            let s = disc.sqrt();
            [
                Complex64::new((-self.a1 + s) / 2.0, 0.0),
                Complex64::new((-self.a1 - s) / 2.0, 0.0),
            ]
        }
    }

    pub fn is_stable(&self) -> bool {
        self.poles().iter().all(|p| p.norm() < 1.0)
    }
}

/// Ordered cascade of second-order sections.
#[derive(Debug, Clone, PartialEq)]
pub struct BiquadCascade {
    sections: Vec<Biquad>,
    description: String,
}

impl BiquadCascade {
    pub fn new(sections: Vec<Biquad>, description: impl Into<String>) -> Result<Self, SignalError> {
        if sections.is_empty() {
            return Err(SignalError::EmptyCascade);
        }
        Ok(Self { sections, description: description.into() })
    }

    pub fn identity() -> Self {
        Self { sections: vec![Biquad::IDENTITY], description: "identity".into() }
    }

    pub fn sections(&self) -> &[Biquad] {
        &self.sections
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    pub fn is_stable(&self) -> bool {
        self.sections.iter().all(Biquad::is_stable)
    }

    pub fn response(&self, freq_hz: f64, sample_rate_hz: f64) -> Complex64 {
        let omega = 2.0 * PI * freq_hz / sample_rate_hz;
        self.sections
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(omega))
    }

    pub fn gain_db(&self, freq_hz: f64, sample_rate_hz: f64) -> f64 {
        20.0 * self.response(freq_hz, sample_rate_hz).norm().log10()
    }

    /// Runs the cascade over one channel with zero initial state.
    pub fn filter_slice(&self, input: &[f64]) -> Vec<f64> {
        let mut out = input.to_vec();
        for s in &self.sections {
            let (mut w1, mut w2) = (0.0, 0.0);
            for v in out.iter_mut() {
                let x = *v;
                let y = s.b0 * x + w1;
                w1 = s.b1 * x - s.a1 * y + w2;
                w2 = s.b2 * x - s.a2 * y;
                *v = y;
            }
        }
        out
    }
}

fn prewarp(freq_hz: f64, sample_rate_hz: f64) -> f64 {
    2.0 * sample_rate_hz * (PI * freq_hz / sample_rate_hz).tan()
}

fn bilinear(s: Complex64, sample_rate_hz: f64) -> Complex64 {
    let k = Complex64::new(2.0 * sample_rate_hz, 0.0);
    (k + s) / (k - s)
}

/// Fourth-order Butterworth band-pass as two biquads.
///
/// A second-order analog low-pass prototype is shifted to a band-pass
/// around the pre-warped geometric centre and mapped through the bilinear
/// transform. Each section gets one conjugate pole pair and zeros at
/// z = ±1, and is scaled to unit gain at the digital centre frequency.
pub fn design_bandpass(
    low_hz: f64,
    high_hz: f64,
    sample_rate_hz: f64,
) -> Result<BiquadCascade, SignalError> {
    let nyquist = sample_rate_hz / 2.0;
    if !(low_hz > 0.0 && low_hz < high_hz && high_hz < nyquist) {
        return Err(SignalError::InvalidCutoffs { low: low_hz, high: high_hz, nyquist });
    }
    let w_lo = prewarp(low_hz, sample_rate_hz);
    let w_hi = prewarp(high_hz, sample_rate_hz);
    let bandwidth = w_hi - w_lo;
    let w0_sq = w_lo * w_hi;
    let center_omega = 2.0 * (w0_sq.sqrt() / (2.0 * sample_rate_hz)).atan();

    // Upper-half-plane pole of the order-2 Butterworth prototype.
    let proto = Complex64::from_polar(1.0, 3.0 * PI / 4.0);
    let half = proto * bandwidth / 2.0;
    let root = (half * half - w0_sq).sqrt();
    let sections = [half + root, half - root]
        .into_iter()
        .map(|s| {
            let z = bilinear(s, sample_rate_hz);
            let mut section = Biquad {
                b0: 1.0,
                b1: 0.0,
                b2: -1.0,
                a1: -2.0 * z.re,
                a2: z.norm_sqr(),
            };
            let g = 1.0 / section.response(center_omega).norm();
            section.b0 *= g;
            section.b2 *= g;
            section
        })
        .collect();
    BiquadCascade::new(
        sections,
        format!("butterworth band-pass order 4, {low_hz}-{high_hz} Hz @ {sample_rate_hz} Hz"),
    )
}

/// Second-order notch with unit DC gain and a zero pair on the unit circle.
pub fn design_notch(
    center_hz: f64,
    sample_rate_hz: f64,
    quality: f64,
) -> Result<BiquadCascade, SignalError> {
    let nyquist = sample_rate_hz / 2.0;
    if !(center_hz > 0.0 && center_hz < nyquist) {
        return Err(SignalError::InvalidCenter { center: center_hz, nyquist });
    }
    if !(quality > 0.0 && quality.is_finite()) {
        return Err(SignalError::InvalidQuality(quality));
    }
    let w0 = 2.0 * PI * center_hz / sample_rate_hz;
    let alpha = w0.sin() / (2.0 * quality);
    let cos = w0.cos();
    let a0 = 1.0 + alpha;
    let section = Biquad {
        b0: 1.0 / a0,
        b1: -2.0 * cos / a0,
        b2: 1.0 / a0,
        a1: -2.0 * cos / a0,
        a2: (1.0 - alpha) / a0,
    };
    BiquadCascade::new(
        vec![section],
        format!("notch {center_hz} Hz Q={quality} @ {sample_rate_hz} Hz"),
    )
}

/// Filters every channel independently, causally, from zero state.
pub fn filter_series(cascade: &BiquadCascade, x: &TimeSeries) -> Result<TimeSeries, SignalError> {
    if x.samples() == 0 || x.channels() == 0 {
        return Err(SignalError::InvalidSeries("empty series".into()));
    }
    let mut out = Array2::zeros(x.data.raw_dim());
    for c in 0..x.channels() {
        let y = cascade.filter_slice(x.channel(c));
        if let Some(index) = y.iter().position(|v| !v.is_finite()) {
            return Err(SignalError::NonFiniteOutput { channel: c, index });
        }
        out.row_mut(c).assign(&ArrayView1::from(&y));
    }
    Ok(TimeSeries {
        data: out,
        sample_rate_hz: x.sample_rate_hz,
        channel_names: x.channel_names.clone(),
    })
}

/// Sliding-window geometry in samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameLayout {
    pub window: usize,
    pub hop: usize,
    pub count: usize,
}

impl FrameLayout {
    pub fn new(
        samples: usize,
        sample_rate_hz: f64,
        frame_rate_hz: f64,
        window_s: f64,
    ) -> Result<Self, SignalError> {
        let hop_f = sample_rate_hz / frame_rate_hz;
        let hop = hop_f.round();
        if !(frame_rate_hz > 0.0) || hop < 1.0 || (hop_f - hop).abs() > 1e-9 * hop_f.max(1.0) {
            return Err(SignalError::IncompatibleRates {
                sample_rate: sample_rate_hz,
                frame_rate: frame_rate_hz,
            });
        }
        let window = (window_s * sample_rate_hz).round();
        if !(window >= 2.0) {
            return Err(SignalError::WindowTooShort(window.max(0.0) as usize));
        }
        let (hop, window) = (hop as usize, window as usize);
        let count = if samples < window { 0 } else { (samples - window) / hop + 1 };
        Ok(Self { window, hop, count })
    }

    pub fn start(&self, frame: usize) -> usize {
        frame * self.hop
    }

    pub fn range(&self, frame: usize) -> std::ops::Range<usize> {
        let s = self.start(frame);
        s..s + self.window
    }
}

/// A borrowed window of one channel.
#[derive(Debug, Clone, Copy)]
pub struct FrameView<'a> {
    pub channel: usize,
    pub frame: usize,
    pub start: usize,
    pub samples: &'a [f64],
}

/// Every (channel, frame) window, channel-major.
pub fn frame_signal(
    x: &TimeSeries,
    frame_rate_hz: f64,
    window_s: f64,
) -> Result<Vec<FrameView<'_>>, SignalError> {
    let layout = FrameLayout::new(x.samples(), x.sample_rate_hz, frame_rate_hz, window_s)?;
    let mut views = Vec::with_capacity(layout.count * x.channels());
    for c in 0..x.channels() {
        let data = x.channel(c);
        for k in 0..layout.count {
            views.push(FrameView {
                channel: c,
                frame: k,
                start: layout.start(k),
                samples: &data[layout.range(k)],
            });
        }
    }
    Ok(views)
}
