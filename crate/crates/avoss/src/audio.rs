//! Waveform container, dB values, frame-time arithmetic and WAV I/O.

use std::path::Path;

use crate::error::{Error, Result};

pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

/// Metric outputs are clamped into this range to keep perfect or degenerate
/// estimates finite.
pub const DB_CLAMP: f64 = 60.0;

/// A decibel value, clamped to [-60, +60] when produced by a metric.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Decibels(pub f64);

impl Decibels {
    pub fn value(self) -> f64 {
        self.0
    }

    pub fn clamped(value: f64) -> Self {
        Decibels(value.clamp(-DB_CLAMP, DB_CLAMP))
    }
}

impl std::fmt::Display for Decibels {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.2} dB", self.0)
    }
}

/// Mono audio samples at a fixed rate. Amplitudes are nominally in [-1, 1]
/// but are not clipped; mixing math stays exact.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        Waveform { samples, sample_rate }
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Self {
        Waveform { samples: vec![0.0; len], sample_rate }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Mean power over the full window.
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|x| x * x).sum::<f64>() / self.samples.len() as f64
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|x| x * x).sum::<f64>()
    }

    pub fn is_finite(&self) -> bool {
        self.samples.iter().all(|x| x.is_finite())
    }

    pub fn scaled(&self, gain: f64) -> Waveform {
        Waveform {
            samples: self.samples.iter().map(|x| x * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }

    /// Sample-wise sum. Both inputs must share length and rate.
    pub fn add(&self, other: &Waveform) -> Result<Waveform> {
        if self.len() != other.len() {
            return Err(Error::LengthMismatch(self.len(), other.len()));
        }
        let samples = self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Waveform { samples, sample_rate: self.sample_rate })
    }

    pub fn sub(&self, other: &Waveform) -> Result<Waveform> {
        if self.len() != other.len() {
            return Err(Error::LengthMismatch(self.len(), other.len()));
        }
        let samples = self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Waveform { samples, sample_rate: self.sample_rate })
    }
}

/// Maps latent frame indices to time spans for a strided analysis window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameGrid {
    pub window_len: usize,
    pub hop: usize,
    pub sample_rate: u32,
}

impl FrameGrid {
    pub fn new(window_len: usize, hop: usize, sample_rate: u32) -> Self {
        FrameGrid { window_len, hop, sample_rate }
    }

    /// Number of full analysis windows in a signal of `n` samples:
    /// T = floor((N - L) / hop) + 1. Errors when the signal is shorter
    /// than one window.
    pub fn num_frames(&self, n: usize) -> Result<usize> {
        if n < self.window_len {
            return Err(Error::TooShort { len: n, min: self.window_len });
        }
        Ok((n - self.window_len) / self.hop + 1)
    }

    /// Time span [start_s, end_s) covered by frame `t`.
    pub fn span(&self, t: usize) -> (f64, f64) {
        let sr = self.sample_rate as f64;
        let start = (t * self.hop) as f64 / sr;
        let end = (t * self.hop + self.window_len) as f64 / sr;
        (start, end)
    }

    pub fn frame_rate(&self) -> f64 {
        self.sample_rate as f64 / self.hop as f64
    }
}

/// Reads a mono WAV file (PCM16 or 32-bit float). Multi-channel input is
/// averaged down to mono.
pub fn read_wav(path: &Path) -> Result<Waveform> {
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(Error::Data(format!("{}: zero channels", path.display())));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()?,
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()?,
        (fmt, bits) => {
            return Err(Error::Data(format!(
                "{}: unsupported wav format {:?}/{} (need PCM16 or float32)",
                path.display(),
                fmt,
                bits
            )))
        }
    };
    let frames = interleaved.len() / channels;
    let mut samples = Vec::with_capacity(frames);
    for f in 0..frames {
        let mut acc = 0.0;
        for c in 0..channels {
            acc += interleaved[f * channels + c];
        }
        samples.push(acc / channels as f64);
    }
    if samples.is_empty() {
        return Err(Error::Data(format!("{}: empty wav", path.display())));
    }
    let wave = Waveform::new(samples, spec.sample_rate);
    if !wave.is_finite() {
        return Err(Error::Data(format!("{}: non-finite samples", path.display())));
    }
    Ok(wave)
}

/// Writes a mono 32-bit float WAV file.
pub fn write_wav(path: &Path, wave: &Waveform) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: wave.sample_rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut writer = hound::WavWriter::create(path, spec)?;
    for &s in &wave.samples {
        writer.write_sample(s as f32)?;
    }
    writer.finalize()?;
    Ok(())
}

/// Linear-interpolation resampler. Good enough for corpus ingestion; the
/// synthesizer always emits the target rate directly.
pub fn resample(wave: &Waveform, target_rate: u32) -> Result<Waveform> {
    if target_rate == 0 {
        return Err(Error::Config("target sample rate must be > 0".into()));
    }
    if wave.sample_rate == target_rate {
        return Ok(wave.clone());
    }
    let ratio = target_rate as f64 / wave.sample_rate as f64;
    let out_len = ((wave.len() as f64) * ratio).round() as usize;
    let out_len = out_len.max(1);
    let mut samples = Vec::with_capacity(out_len);
    let n = wave.len();
    for i in 0..out_len {
        let pos = i as f64 / ratio;
        let i0 = pos.floor() as usize;
        let frac = pos - i0 as f64;
        let a = wave.samples[i0.min(n - 1)];
        let b = wave.samples[(i0 + 1).min(n - 1)];
        samples.push(a + frac * (b - a));
    }
    Ok(Waveform::new(samples, target_rate))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_count_formula() {
        let grid = FrameGrid::new(32, 16, 16_000);
        assert_eq!(grid.num_frames(64_000).unwrap(), 3999);
        assert_eq!(grid.num_frames(32).unwrap(), 1);
        assert!(matches!(
            grid.num_frames(31),
            Err(Error::TooShort { len: 31, min: 32 })
        ));
    }

    #[test]
    fn frame_spans() {
        let grid = FrameGrid::new(32, 16, 16_000);
        let (s, e) = grid.span(0);
        assert_eq!(s, 0.0);
        assert!((e - 0.002).abs() < 1e-12);
        let (s, _) = grid.span(1000);
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn resample_scales_length() {
        let wave = Waveform::new(vec![0.1; 44_100], 44_100);
        let out = resample(&wave, 16_000).unwrap();
        assert_eq!(out.len(), 16_000);
        assert!(out.samples.iter().all(|&x| (x - 0.1).abs() < 1e-9));
    }

    #[test]
    fn wav_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.wav");
        let wave = Waveform::new(vec![0.0, 0.25, -0.5, 1.0], 16_000);
        write_wav(&path, &wave).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.sample_rate, 16_000);
        assert_eq!(back.len(), 4);
        for (a, b) in back.samples.iter().zip(&wave.samples) {
            assert!((a - b).abs() < 1e-7);
        }
    }
}
