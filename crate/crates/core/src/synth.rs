//! Paired audio and surrogate-EEG corpora with known frame labels.
//!
//! Activity is a two-state Markov chain at 100 Hz. Speech segments are
//! rendered as amplitude-modulated harmonic complexes buried in white noise
//! at a chosen SNR. Every EEG channel is 1/f-like background plus an
//! activity-locked 4-30 Hz component whose level sets the EEG SNR.
//!
//! Each sequence draws from its own ChaCha stream keyed by `(seed, index,
//! component)`, so audio noise never perturbs the EEG and any sequence can
//! be regenerated alone.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::{self, IoError};
use crate::models::Utterance;
use crate::signal::{SignalError, TimeSeries};

pub const FRAME_RATE_HZ: f64 = 100.0;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid corpus spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Io(#[from] IoError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSpec {
    pub n_sequences: usize,
    pub duration_s: f64,
    pub eeg_channels: usize,
    pub eeg_rate_hz: f64,
    pub audio_rate_hz: f64,
    /// Stationary probability of speech.
    pub speech_duty: f64,
    /// Mean length of a speech or silence segment.
    pub mean_segment_s: f64,
    /// Relative to mean speech-segment power; `inf` disables the noise.
    pub acoustic_snr_db: f64,
    /// Activity-locked component power over unit-variance background.
    pub eeg_snr_db: f64,
    /// Speech segments get a uniform random level in `±level_jitter_db`.
    pub level_jitter_db: f64,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            n_sequences: 20,
            duration_s: 10.0,
            eeg_channels: 31,
            eeg_rate_hz: 1000.0,
            audio_rate_hz: 16000.0,
            speech_duty: 0.5,
            mean_segment_s: 1.0,
            acoustic_snr_db: 20.0,
            eeg_snr_db: 10.0,
            level_jitter_db: 12.0,
            seed: 0,
        }
    }
}

fn samples_per_frame(rate: f64) -> Result<usize, SynthError> {
    let hop = rate / FRAME_RATE_HZ;
    if !(hop >= 1.0) || hop.fract() != 0.0 {
        return Err(SynthError::InvalidSpec(format!("rate {rate} Hz is not a multiple of 100 Hz")));
    }
    Ok(hop as usize)
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidSpec(m.to_string()));
        if !(self.speech_duty > 0.0 && self.speech_duty < 1.0) {
            return bad("speech_duty must lie in (0, 1)");
        }
        if !(self.duration_s * FRAME_RATE_HZ >= 2.0) {
            return bad("duration must cover at least two frames");
        }
        if !(self.mean_segment_s > 0.0) {
            return bad("mean_segment_s must be positive");
        }
        if self.eeg_channels == 0 || self.n_sequences == 0 {
            return bad("need at least one channel and one sequence");
        }
        if self.acoustic_snr_db.is_nan() || !self.eeg_snr_db.is_finite() || !(self.level_jitter_db >= 0.0) {
            return bad("snr and level jitter must be numbers");
        }
        samples_per_frame(self.eeg_rate_hz)?;
        samples_per_frame(self.audio_rate_hz)?;
        Ok(())
    }

    pub fn frames(&self) -> usize {
        (self.duration_s * FRAME_RATE_HZ).floor() as usize
    }
}

#[derive(Debug, Clone, Copy)]
#[repr(u64)]
enum Stream {
    Activity = 0,
    Audio = 1,
    Eeg = 2,
    Layout = 3,
}

fn stream_rng(seed: u64, index: usize, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 * 4 + stream as u64);
    rng
}

/// Shared by every sequence of a corpus.
fn corpus_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    rng
}

/// Two-state Markov chain with `speech_duty` stationary speech probability
/// and mean segment length `mean_segment_s` over both states. Sequences
/// lacking either state are redrawn.
pub fn generate_activity(spec: &CorpusSpec, rng: &mut impl Rng) -> Vec<bool> {
    let n = spec.frames();
    let m = spec.mean_segment_s * FRAME_RATE_HZ;
    let leave_speech = (1.0 / (2.0 * m * spec.speech_duty)).min(1.0);
    let leave_silence = (1.0 / (2.0 * m * (1.0 - spec.speech_duty))).min(1.0);
    for _ in 0..1000 {
        let mut state = rng.random::<f64>() < spec.speech_duty;
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            out.push(state);
            let p = if state { leave_speech } else { leave_silence };
            if rng.random::<f64>() < p {
                state = !state;
            }
        }
        if out.iter().any(|&s| s) && out.iter().any(|&s| !s) {
            return out;
        }
    }
    let mut out = vec![false; n];
    out[n / 2] = true;
    out
}

/// Maximal runs of speech frames as `[start, end)` frame ranges.
pub fn speech_segments(activity: &[bool]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (k, &a) in activity.iter().chain(std::iter::once(&false)).enumerate() {
        match (a, start) {
            (true, None) => start = Some(k),
            (false, Some(s)) => {
                out.push((s, k));
                start = None;
            }
            _ => {}
        }
    }
    out
}

fn gaussian(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Harmonic speech stand-in: zero outside speech frames.
fn render_voice(activity: &[bool], spec: &CorpusSpec, rng: &mut impl Rng) -> Result<Vec<f64>, SynthError> {
    let fs = spec.audio_rate_hz;
    let hop = samples_per_frame(fs)?;
    let mut x = vec![0.0; activity.len() * hop];
    for (a, b) in speech_segments(activity) {
        let f0 = rng.random_range(100.0..250.0);
        let syllable_hz = rng.random_range(3.0..6.0);
        let syllable_phase = rng.random_range(0.0..2.0 * PI);
        let jitter = spec.level_jitter_db;
        let level_db = if jitter > 0.0 { rng.random_range(-jitter..jitter) } else { 0.0 };
        let level = 10f64.powf(level_db / 20.0);
        let phases: Vec<f64> = (0..5).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
        let (s0, s1) = (a * hop, b * hop);
        let ramp = (0.005 * fs) as usize;
        for i in s0..s1 {
            let t = i as f64 / fs;
            let tone: f64 = phases
                .iter()
                .enumerate()
                .map(|(k, ph)| (2.0 * PI * f0 * (k + 1) as f64 * t + ph).sin())
                .sum();
            let syllable = 0.1 + 0.9 * (0.5 - 0.5 * (2.0 * PI * syllable_hz * t + syllable_phase).cos());
            let edge = ((i - s0).min(s1 - 1 - i) as f64 / ramp as f64).min(1.0);
            x[i] = level * syllable * edge * tone;
        }
    }
    Ok(x)
}

/// White noise scaled to `snr_db` below the mean power of the speech samples.
fn add_noise(x: &mut [f64], activity: &[bool], hop: usize, snr_db: f64, rng: &mut impl Rng) {
    if snr_db == f64::INFINITY {
        return;
    }
    let speech: Vec<f64> = activity
        .iter()
        .enumerate()
        .filter(|(_, &a)| a)
        .flat_map(|(k, _)| x[k * hop..(k + 1) * hop].iter().copied())
        .collect();
    let power = if speech.is_empty() { 1.0 } else { speech.iter().map(|v| v * v).sum::<f64>() / speech.len() as f64 };
    let sigma = (power / 10f64.powf(snr_db / 10.0)).sqrt();
    for v in x.iter_mut() {
        *v += sigma * gaussian(rng);
    }
}

pub fn render_audio(activity: &[bool], spec: &CorpusSpec, rng: &mut impl Rng) -> Result<TimeSeries, SynthError> {
    if activity.is_empty() {
        return Err(SynthError::InvalidSpec("empty activity".into()));
    }
    let hop = samples_per_frame(spec.audio_rate_hz)?;
    let mut x = render_voice(activity, spec, rng)?;
    // The noise stream is drawn after the voice so that changing the SNR only
    // rescales the same noise realisation.
    let mut noise_rng = ChaCha8Rng::seed_from_u64(rng.next_u64());
    add_noise(&mut x, activity, hop, spec.acoustic_snr_db, &mut noise_rng);
    Ok(TimeSeries::mono(x, spec.audio_rate_hz)?)
}

/// Staggered pole/zero first-order sections: roughly 1/f over 1-300 Hz.
fn pink_noise(n: usize, fs: f64, rng: &mut impl Rng) -> Vec<f64> {
    let mut x: Vec<f64> = (0..n).map(|_| gaussian(rng)).collect();
    for corner in [1.0, 10.0, 100.0] {
        let p = (-2.0 * PI * corner / fs).exp();
        let z = (-2.0 * PI * corner * 3.162 / fs).exp();
        let (mut x1, mut y1) = (0.0, 0.0);
        for v in x.iter_mut() {
            let y = *v - z * x1 + p * y1;
            x1 = *v;
            y1 = y;
            *v = y;
        }
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    x.iter().map(|v| (v - mean) / sd).collect()
}

/// Indicator of `activity` at `hop` samples per frame, smoothed by a
/// forward-backward one-pole filter with time constant `tau_s`.
fn envelope(activity: &[bool], hop: usize, fs: f64, tau_s: f64) -> Vec<f64> {
    let mut e: Vec<f64> = activity.iter().flat_map(|&a| std::iter::repeat_n(f64::from(u8::from(a)), hop)).collect();
    let a = (-1.0 / (tau_s * fs)).exp();
    for pass in 0..2 {
        let mut y = if pass == 0 { e[0] } else { e[e.len() - 1] };
        let mut step = |v: &mut f64| {
            y = a * y + (1.0 - a) * *v;
            *v = y;
        };
        if pass == 0 {
            e.iter_mut().for_each(&mut step);
        } else {
            e.iter_mut().rev().for_each(&mut step);
        }
    }
    e
}

/// Sum of three unit-RMS sinusoids with frequencies drawn from `band`.
fn band_component(n: usize, fs: f64, band: (f64, f64), rng: &mut impl Rng) -> Vec<f64> {
    let tones: Vec<(f64, f64)> =
        (0..3).map(|_| (rng.random_range(band.0..band.1), rng.random_range(0.0..2.0 * PI))).collect();
    let k = (2.0f64 / 3.0).sqrt();
    (0..n)
        .map(|i| {
            let t = i as f64 / fs;
            k * tones.iter().map(|(f, ph)| (2.0 * PI * f * t + ph).sin()).sum::<f64>()
        })
        .collect()
}

fn channel_names(n: usize) -> Vec<String> {
    (0..n).map(|c| format!("eeg{c:02}")).collect()
}

pub fn render_eeg(activity: &[bool], spec: &CorpusSpec, rng: &mut impl Rng) -> Result<TimeSeries, SynthError> {
    if activity.is_empty() {
        return Err(SynthError::InvalidSpec("empty activity".into()));
    }
    let fs = spec.eeg_rate_hz;
    let hop = samples_per_frame(fs)?;
    let n = activity.len() * hop;
    let env = envelope(activity, hop, fs, 0.02);
    let amplitude = 10f64.powf(spec.eeg_snr_db / 20.0);
    let mut data = ndarray::Array2::zeros((spec.eeg_channels, n));
    for mut row in data.rows_mut() {
        let background = pink_noise(n, fs, rng);
        let gain = amplitude * rng.random_range(0.5..1.5);
        let band = band_component(n, fs, (4.0, 30.0), rng);
        for (i, v) in row.iter_mut().enumerate() {
            *v = background[i] + gain * env[i] * band[i];
        }
    }
    Ok(TimeSeries::new(data, fs, channel_names(spec.eeg_channels))?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairedSequence {
    pub index: usize,
    pub audio: TimeSeries,
    pub eeg: TimeSeries,
    /// One entry per 10 ms frame.
    pub activity: Vec<bool>,
}

impl PairedSequence {
    pub fn labels(&self) -> Vec<usize> {
        self.activity.iter().map(|&a| usize::from(a)).collect()
    }
}

pub fn generate_sequence(spec: &CorpusSpec, index: usize) -> Result<PairedSequence, SynthError> {
    spec.validate()?;
    let activity = generate_activity(spec, &mut stream_rng(spec.seed, index, Stream::Activity));
    let audio = render_audio(&activity, spec, &mut stream_rng(spec.seed, index, Stream::Audio))?;
    let eeg = render_eeg(&activity, spec, &mut stream_rng(spec.seed, index, Stream::Eeg))?;
    Ok(PairedSequence { index, audio, eeg, activity })
}

pub fn generate_corpus(spec: &CorpusSpec) -> Result<Vec<PairedSequence>, SynthError> {
    (0..spec.n_sequences).map(|i| generate_sequence(spec, i)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContinuationSpec {
    pub per_class: usize,
    pub duration_s: f64,
    /// Pause before the final word of the continuing utterances.
    pub gap_s: f64,
    pub eeg_channels: usize,
    pub eeg_rate_hz: f64,
    pub audio_rate_hz: f64,
    pub acoustic_snr_db: f64,
    pub eeg_snr_db: f64,
    /// Level of each class signature relative to the background.
    pub signature_snr_db: f64,
    pub seed: u64,
}

impl Default for ContinuationSpec {
    fn default() -> Self {
        Self {
            per_class: 50,
            duration_s: 3.7,
            gap_s: 2.0,
            eeg_channels: 31,
            eeg_rate_hz: 1000.0,
            audio_rate_hz: 16000.0,
            acoustic_snr_db: 20.0,
            eeg_snr_db: 10.0,
            signature_snr_db: 6.0,
            seed: 0,
        }
    }
}

impl ContinuationSpec {
    fn as_corpus(&self) -> CorpusSpec {
        CorpusSpec {
            n_sequences: self.per_class * 4,
            duration_s: self.duration_s,
            eeg_channels: self.eeg_channels,
            eeg_rate_hz: self.eeg_rate_hz,
            audio_rate_hz: self.audio_rate_hz,
            acoustic_snr_db: self.acoustic_snr_db,
            eeg_snr_db: self.eeg_snr_db,
            level_jitter_db: 3.0,
            seed: self.seed,
            ..CorpusSpec::default()
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        self.as_corpus().validate()?;
        let needed = PREFIX_START_MAX_S + PREFIX_S + 0.05 + self.gap_s + SUFFIX_S;
        if self.duration_s < needed {
            return Err(SynthError::InvalidSpec(format!("duration must be at least {needed} s")));
        }
        Ok(())
    }
}

const PREFIX_START_MAX_S: f64 = 0.3;
const PREFIX_S: f64 = 0.8;
const SUFFIX_S: f64 = 0.45;

/// Markers whose EEG signatures identify the utterance type.
#[derive(Debug, Clone, Copy)]
enum Marker {
    Stop,
    Macroni,
    Hold,
    Today,
    Tomorrow,
}

const MARKER_HZ: [f64; 5] = [6.0, 10.0, 14.0, 20.0, 26.0];

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuationSequence {
    pub index: usize,
    pub utterance: Utterance,
    pub audio: TimeSeries,
    pub eeg: TimeSeries,
    pub activity: Vec<bool>,
}

fn frames_of(s: f64) -> usize {
    (s * FRAME_RATE_HZ).round() as usize
}

/// Four balanced utterance classes. All share a spoken prefix; "macroni"
/// follows it at once, "today" and "tomorrow" follow a pause and sound alike.
/// The EEG carries one class-specific signature from the decisive moment to
/// the end of the trial, plus a "hold" signature during the pause.
pub fn generate_continuation(spec: &ContinuationSpec) -> Result<Vec<ContinuationSequence>, SynthError> {
    spec.validate()?;
    let corpus = spec.as_corpus();
    let n_frames = corpus.frames();
    let fs = spec.eeg_rate_hz;
    let hop = samples_per_frame(fs)?;

    let mut layout = corpus_rng(spec.seed);
    let patterns: Vec<Vec<f64>> = (0..MARKER_HZ.len())
        .map(|_| (0..spec.eeg_channels).map(|_| gaussian(&mut layout)).collect())
        .collect();
    let amplitude = 10f64.powf(spec.signature_snr_db / 20.0);

    let mut out = Vec::with_capacity(spec.per_class * 4);
    for index in 0..spec.per_class * 4 {
        let utterance = Utterance::ALL[index % 4];
        let mut rng = stream_rng(spec.seed, index, Stream::Layout);
        let start = frames_of(rng.random_range(0.1..PREFIX_START_MAX_S));
        let prefix_end = start + frames_of(PREFIX_S + rng.random_range(-0.05..0.05));
        let suffix_len = frames_of(SUFFIX_S + rng.random_range(-0.1..0.0));
        let mut activity = vec![false; n_frames];
        activity[start..prefix_end].iter_mut().for_each(|a| *a = true);
        let mut markers: Vec<(Marker, usize, usize)> = Vec::new();
        match utterance {
            Utterance::Weather => markers.push((Marker::Stop, prefix_end, n_frames)),
            Utterance::Macroni => {
                let end = prefix_end + suffix_len;
                activity[prefix_end..end].iter_mut().for_each(|a| *a = true);
                markers.push((Marker::Macroni, prefix_end, n_frames));
            }
            Utterance::Today | Utterance::Tomorrow => {
                let s = prefix_end + frames_of(spec.gap_s);
                let e = (s + suffix_len).min(n_frames);
                activity[s..e].iter_mut().for_each(|a| *a = true);
                markers.push((Marker::Hold, prefix_end, s));
                let m = if utterance == Utterance::Today { Marker::Today } else { Marker::Tomorrow };
                markers.push((m, s, n_frames));
            }
        }

        let audio = render_audio(&activity, &corpus, &mut stream_rng(spec.seed, index, Stream::Audio))?;
        let mut eeg_rng = stream_rng(spec.seed, index, Stream::Eeg);
        let eeg = render_eeg(&activity, &corpus, &mut eeg_rng)?;
        let mut data = eeg.into_data();
        for (marker, a, b) in markers {
            let mut span = vec![false; n_frames];
            span[a..b].iter_mut().for_each(|v| *v = true);
            let env = envelope(&span, hop, fs, 0.05);
            let freq = MARKER_HZ[marker as usize] * rng.random_range(0.95..1.05);
            let phase = rng.random_range(0.0..2.0 * PI);
            let pattern = &patterns[marker as usize];
            for (c, mut row) in data.rows_mut().into_iter().enumerate() {
                let g = amplitude * pattern[c];
                for (i, v) in row.iter_mut().enumerate() {
                    *v += g * env[i] * (2.0 * PI * freq * i as f64 / fs + phase).sin();
                }
            }
        }
        let eeg = TimeSeries::new(data, fs, channel_names(spec.eeg_channels))?;
        out.push(ContinuationSequence { index, utterance, audio, eeg, activity });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub audio: String,
    pub eeg: String,
    pub labels: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utterance: Option<Utterance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub kind: String,
    pub spec: serde_json::Value,
    pub sequences: Vec<ManifestEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

fn write_pair(dir: &Path, name: &str, audio: &TimeSeries, eeg: &TimeSeries) -> Result<(String, String), SynthError> {
    let (a, e) = (format!("{name}_audio"), format!("{name}_eeg"));
    io::save_series(audio, &dir.join(&a))?;
    io::save_series(eeg, &dir.join(&e))?;
    Ok((a, e))
}

fn to_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("spec serialises")
}

pub fn save_corpus(dir: &Path, spec: &CorpusSpec, corpus: &[PairedSequence]) -> Result<(), SynthError> {
    let mut sequences = Vec::with_capacity(corpus.len());
    for s in corpus {
        let name = format!("seq{:04}", s.index);
        let (audio, eeg) = write_pair(dir, &name, &s.audio, &s.eeg)?;
        sequences.push(ManifestEntry { name, audio, eeg, labels: s.labels(), utterance: None });
    }
    let manifest = CorpusManifest { kind: "vad".into(), spec: to_value(spec), sequences };
    Ok(io::write_json(&dir.join(MANIFEST_FILE), &manifest)?)
}

pub fn save_continuation(
    dir: &Path,
    spec: &ContinuationSpec,
    corpus: &[ContinuationSequence],
) -> Result<(), SynthError> {
    let mut sequences = Vec::with_capacity(corpus.len());
    for s in corpus {
        let name = format!("seq{:04}", s.index);
        let (audio, eeg) = write_pair(dir, &name, &s.audio, &s.eeg)?;
        let labels = s.activity.iter().map(|&a| usize::from(a)).collect();
        sequences.push(ManifestEntry { name, audio, eeg, labels, utterance: Some(s.utterance) });
    }
    let manifest = CorpusManifest { kind: "continuation".into(), spec: to_value(spec), sequences };
    Ok(io::write_json(&dir.join(MANIFEST_FILE), &manifest)?)
}

pub fn read_manifest(dir: &Path) -> Result<CorpusManifest, SynthError> {
    Ok(io::read_json(&dir.join(MANIFEST_FILE))?)
}

pub fn load_corpus(dir: &Path) -> Result<Vec<PairedSequence>, SynthError> {
    let manifest = read_manifest(dir)?;
    manifest
        .sequences
        .iter()
        .enumerate()
        .map(|(index, e)| {
            Ok(PairedSequence {
                index,
                audio: io::load_series(&dir.join(&e.audio))?,
                eeg: io::load_series(&dir.join(&e.eeg))?,
                activity: e.labels.iter().map(|&l| l == 1).collect(),
            })
        })
        .collect()
}

pub fn load_continuation(dir: &Path) -> Result<Vec<ContinuationSequence>, SynthError> {
    let manifest = read_manifest(dir)?;
    manifest
        .sequences
        .iter()
        .enumerate()
        .map(|(index, e)| {
            let utterance = e
                .utterance
                .ok_or_else(|| SynthError::InvalidSpec(format!("{} has no utterance label", e.name)))?;
            Ok(ContinuationSequence {
                index,
                utterance,
                audio: io::load_series(&dir.join(&e.audio))?,
                eeg: io::load_series(&dir.join(&e.eeg))?,
                activity: e.labels.iter().map(|&l| l == 1).collect(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short(seed: u64) -> CorpusSpec {
        CorpusSpec { n_sequences: 2, duration_s: 3.0, eeg_channels: 4, seed, ..CorpusSpec::default() }
    }

    #[test]
    fn activity_duty_monte_carlo() {
        let spec = CorpusSpec { duration_s: 2000.0, ..CorpusSpec::default() };
        let a = generate_activity(&spec, &mut ChaCha8Rng::seed_from_u64(3));
        let duty = a.iter().filter(|&&s| s).count() as f64 / a.len() as f64;
        assert!((duty - 0.5).abs() < 0.05, "duty {duty}");
        let segs = speech_segments(&a);
        let mean = segs.iter().map(|(s, e)| e - s).sum::<usize>() as f64 / segs.len() as f64;
        assert!((mean / FRAME_RATE_HZ - 1.0).abs() < 0.15, "mean speech segment {mean}");
    }

    #[test]
    fn tiny_duty_still_speaks() {
        let spec = CorpusSpec { speech_duty: 1e-6, duration_s: 1.0, ..CorpusSpec::default() };
        let a = generate_activity(&spec, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(a.iter().any(|&s| s) && a.iter().any(|&s| !s));
    }

    #[test]
    fn noiseless_silence_is_exactly_zero() {
        let spec = CorpusSpec { acoustic_snr_db: f64::INFINITY, ..short(1) };
        let s = generate_sequence(&spec, 0).unwrap();
        for (k, &a) in s.activity.iter().enumerate() {
            if !a {
                assert!(s.audio.channel(0)[k * 160..(k + 1) * 160].iter().all(|&v| v == 0.0));
            }
        }
        assert_eq!(s.audio.samples(), s.activity.len() * 160);
        assert_eq!(s.eeg.samples(), s.activity.len() * 10);
    }

    #[test]
    fn eeg_ignores_acoustic_snr() {
        let a = generate_sequence(&short(5), 1).unwrap();
        let b = generate_sequence(&CorpusSpec { acoustic_snr_db: -10.0, ..short(5) }, 1).unwrap();
        assert_eq!(a.eeg, b.eeg);
        assert_eq!(a.activity, b.activity);
        assert_ne!(a.audio, b.audio);
    }

    #[test]
    fn invalid_specs() {
        assert!(CorpusSpec { speech_duty: 1.0, ..CorpusSpec::default() }.validate().is_err());
        assert!(CorpusSpec { eeg_rate_hz: 1050.0, ..CorpusSpec::default() }.validate().is_err());
        assert!(ContinuationSpec { duration_s: 2.0, ..ContinuationSpec::default() }.validate().is_err());
    }

    #[test]
    fn continuation_classes_balanced() {
        let spec = ContinuationSpec { per_class: 2, eeg_channels: 3, ..ContinuationSpec::default() };
        let c = generate_continuation(&spec).unwrap();
        assert_eq!(c.len(), 8);
        for u in Utterance::ALL {
            assert_eq!(c.iter().filter(|s| s.utterance == u).count(), 2);
        }
        let tomorrow = c.iter().find(|s| s.utterance == Utterance::Tomorrow).unwrap();
        assert_eq!(speech_segments(&tomorrow.activity).len(), 2);
        let weather = c.iter().find(|s| s.utterance == Utterance::Weather).unwrap();
        assert_eq!(speech_segments(&weather.activity).len(), 1);
    }
}
