//! On-disk formats.
//!
//! Every binary artifact is a pair of files sharing a stem: `<stem>.json`
//! holds the header, `<stem>.f32` holds little-endian `f32` values. Signals
//! are stored channel by channel, frame sequences frame by frame.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use thiserror::Error;

use crate::frames::FrameSequence;
use crate::signal::{SignalError, TimeSeries};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error("{path}: {source}")]
    Wav { path: PathBuf, source: hound::Error },
    #[error(transparent)]
    Signal(#[from] SignalError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io { path: path.to_path_buf(), source }
}

pub fn header_path(stem: &Path) -> PathBuf {
    stem.with_extension("json")
}

pub fn data_path(stem: &Path) -> PathBuf {
    stem.with_extension("f32")
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let text = serde_json::to_string_pretty(value)
        .map_err(|source| IoError::Json { path: path.to_path_buf(), source })?;
    fs::write(path, text + "\n").map_err(io_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| IoError::Json { path: path.to_path_buf(), source })
}

pub fn write_f32<'a>(path: &Path, values: impl IntoIterator<Item = &'a f64>) -> Result<(), IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let bytes: Vec<u8> = values.into_iter().flat_map(|&v| (v as f32).to_le_bytes()).collect();
    fs::write(path, bytes).map_err(io_err(path))
}

pub fn read_f32(path: &Path, expected: usize) -> Result<Vec<f64>, IoError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    if bytes.len() != expected * 4 {
        return Err(IoError::Format {
            path: path.to_path_buf(),
            msg: format!("expected {} bytes, found {}", expected * 4, bytes.len()),
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

/// Full-precision companion to [`write_f32`] for fitted transforms.
pub fn write_f64<'a>(path: &Path, values: impl IntoIterator<Item = &'a f64>) -> Result<(), IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let bytes: Vec<u8> = values.into_iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(path, bytes).map_err(io_err(path))
}

pub fn read_f64(path: &Path, expected: usize) -> Result<Vec<f64>, IoError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    if bytes.len() != expected * 8 {
        return Err(IoError::Format {
            path: path.to_path_buf(),
            msg: format!("expected {} bytes, found {}", expected * 8, bytes.len()),
        });
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalHeader {
    pub channels: usize,
    pub samples: usize,
    pub sample_rate_hz: f64,
    pub channel_names: Vec<String>,
}

pub fn save_series(series: &TimeSeries, stem: &Path) -> Result<(), IoError> {
    let header = SignalHeader {
        channels: series.channels(),
        samples: series.samples(),
        sample_rate_hz: series.sample_rate_hz(),
        channel_names: series.channel_names().to_vec(),
    };
    write_json(&header_path(stem), &header)?;
    write_f32(&data_path(stem), series.data().iter())
}

pub fn load_series(stem: &Path) -> Result<TimeSeries, IoError> {
    let header: SignalHeader = read_json(&header_path(stem))?;
    let values = read_f32(&data_path(stem), header.channels * header.samples)?;
    let data = Array2::from_shape_vec((header.channels, header.samples), values).map_err(|e| {
        IoError::Format { path: data_path(stem), msg: e.to_string() }
    })?;
    Ok(TimeSeries::new(data, header.sample_rate_hz, header.channel_names)?)
}

/// 16-bit PCM mono WAV, scaled to [-1, 1).
pub fn load_wav(path: &Path) -> Result<TimeSeries, IoError> {
    let wav_err = |source| IoError::Wav { path: path.to_path_buf(), source };
    let mut reader = hound::WavReader::open(path).map_err(wav_err)?;
    let spec = reader.spec();
    if spec.channels != 1 || spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
        return Err(IoError::Format {
            path: path.to_path_buf(),
            msg: format!(
                "need 16-bit PCM mono, got {} channels, {} bits",
                spec.channels, spec.bits_per_sample
            ),
        });
    }
    let samples = reader
        .samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|source| IoError::Wav { path: path.to_path_buf(), source })?;
    Ok(TimeSeries::mono(samples, spec.sample_rate as f64)?)
}

pub fn write_wav(series: &TimeSeries, path: &Path) -> Result<(), IoError> {
    let wav_err = |source| IoError::Wav { path: path.to_path_buf(), source };
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: series.sample_rate_hz().round() as u32,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(wav_err)?;
    for &v in series.channel(0) {
        let q = (v * 32768.0).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16;
        w.write_sample(q).map_err(wav_err)?;
    }
    w.finalize().map_err(wav_err)
}

/// Loads audio from either a `.wav` file or a signal-format stem.
pub fn load_audio(path: &Path) -> Result<TimeSeries, IoError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("wav") => load_wav(path),
        _ => load_series(path),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameHeader {
    pub frame_rate_hz: f64,
    pub dim: usize,
    pub count: usize,
    pub layout: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<usize>>,
}

pub fn save_frames(frames: &FrameSequence, stem: &Path) -> Result<(), IoError> {
    let header = FrameHeader {
        frame_rate_hz: frames.frame_rate_hz,
        dim: frames.dim(),
        count: frames.count(),
        layout: frames.layout.clone(),
        labels: frames.labels.clone(),
    };
    write_json(&header_path(stem), &header)?;
    write_f32(&data_path(stem), frames.data.iter())
}

pub fn load_frames(stem: &Path) -> Result<FrameSequence, IoError> {
    let header: FrameHeader = read_json(&header_path(stem))?;
    let values = read_f32(&data_path(stem), header.count * header.dim)?;
    let data = Array2::from_shape_vec((header.count, header.dim), values)
        .map_err(|e| IoError::Format { path: data_path(stem), msg: e.to_string() })?;
    let mut frames = FrameSequence::new(data, header.frame_rate_hz, header.layout);
    if let Some(labels) = header.labels {
        frames = frames
            .with_labels(labels)
            .map_err(|e| IoError::Format { path: header_path(stem), msg: e.to_string() })?;
    }
    Ok(frames)
}
