//! Waveform to per-video-frame feature rows.
//!
//! Every extractor returns exactly `floor(fps * n / sample_rate)` rows for an
//! `n`-sample waveform. The built-in [`LogMelExtractor`] centres one analysis window
//! on each video frame and zero-pads windows that run past either end.

use std::path::Path;
use std::sync::Arc;

use ndarray::Array2;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{self, FeatureManifest};

#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Data("sample rate must be positive".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::Data("waveform contains non-finite samples".into()));
        }
        Ok(Waveform { samples, sample_rate })
    }

    pub fn from_wav(path: &Path) -> Result<Self> {
        let pcm = io::read_wav(path)?;
        Waveform::new(pcm.samples, pcm.sample_rate)
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// `T x d` feature matrix at `fps` rows per second.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioFeatureSequence {
    pub features: Array2<f64>,
    pub fps: f64,
}

impl AudioFeatureSequence {
    pub fn frames(&self) -> usize {
        self.features.nrows()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    /// Rows `start..end` as a new sequence.
    pub fn slice(&self, start: usize, end: usize) -> AudioFeatureSequence {
        AudioFeatureSequence { features: self.features.slice(ndarray::s![start..end, ..]).to_owned(), fps: self.fps }
    }

    pub fn save(&self, bin: &Path) -> Result<()> {
        let flat: Vec<f32> = self.features.iter().map(|&v| v as f32).collect();
        io::write_f32_array(bin, &flat, &FeatureManifest { frames: self.frames(), dim: self.dim(), fps: self.fps })
    }

    pub fn load(bin: &Path) -> Result<Self> {
        let (values, m) = io::read_f32_array::<FeatureManifest>(bin, |m| m.frames * m.dim)?;
        let features = Array2::from_shape_vec((m.frames, m.dim), values.into_iter().map(f64::from).collect())
            .map_err(|e| Error::Data(e.to_string()))?;
        Ok(AudioFeatureSequence { features, fps: m.fps })
    }
}

/// Number of video frames covered by `samples` audio samples: `floor(fps * n / r)`.
pub fn frame_count(samples: usize, sample_rate: u32, fps: f64) -> usize {
    if fps.fract() == 0.0 && fps > 0.0 && fps < u32::MAX as f64 {
        // exact integer path
        ((fps as u128 * samples as u128) / sample_rate as u128) as usize
    } else {
        (fps * samples as f64 / sample_rate as f64).floor() as usize
    }
}

pub trait FeatureExtractor: Send + Sync {
    /// Feature width `d_a`.
    fn dim(&self) -> usize;
    /// One row per video frame; callers go through [`extract_features`].
    fn extract(&self, wave: &Waveform, fps: f64) -> Result<AudioFeatureSequence>;
}

/// Runs `extractor` and enforces the frame-count law.
pub fn extract_features(wave: &Waveform, fps: f64, extractor: &dyn FeatureExtractor) -> Result<AudioFeatureSequence> {
    if !(fps > 0.0 && fps.is_finite()) {
        return Err(Error::Config(format!("fps must be positive, got {fps}")));
    }
    let k = frame_count(wave.samples.len(), wave.sample_rate, fps);
    if k == 0 {
        return Err(Error::EmptyAudio { samples: wave.samples.len(), sample_rate: wave.sample_rate, fps });
    }
    let seq = extractor.extract(wave, fps)?;
    if seq.frames() != k {
        return Err(Error::CountMismatch(format!("extractor produced {} rows, audio covers {k} frames", seq.frames())));
    }
    if seq.dim() != extractor.dim() {
        return Err(Error::shape(extractor.dim(), seq.dim()));
    }
    Ok(seq)
}

/// Log mel filterbank energies, one Hann window centred per video frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogMelExtractor {
    pub n_mels: usize,
    pub window_secs: f64,
    pub f_min: f64,
    /// Upper band edge; Nyquist when `None`.
    pub f_max: Option<f64>,
    pub log_floor: f64,
}

impl Default for LogMelExtractor {
    fn default() -> Self {
        LogMelExtractor { n_mels: 80, window_secs: 0.025, f_min: 0.0, f_max: None, log_floor: 1e-10 }
    }
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

impl LogMelExtractor {
    pub fn with_mels(n_mels: usize) -> Self {
        LogMelExtractor { n_mels, ..Default::default() }
    }

    pub fn window_len(&self, sample_rate: u32) -> usize {
        ((self.window_secs * sample_rate as f64).round() as usize).max(1)
    }

    pub fn fft_len(&self, sample_rate: u32) -> usize {
        self.window_len(sample_rate).next_power_of_two()
    }

    /// Triangular filters over the `fft_len / 2 + 1` power-spectrum bins.
    pub fn filters(&self, sample_rate: u32) -> Array2<f64> {
        let n_fft = self.fft_len(sample_rate);
        let n_bins = n_fft / 2 + 1;
        let nyquist = sample_rate as f64 / 2.0;
        let f_max = self.f_max.unwrap_or(nyquist).min(nyquist);
        let (m_lo, m_hi) = (hz_to_mel(self.f_min), hz_to_mel(f_max));
        let edges: Vec<f64> = (0..self.n_mels + 2)
            .map(|i| mel_to_hz(m_lo + (m_hi - m_lo) * i as f64 / (self.n_mels + 1) as f64))
            .collect();
        let mut fb = Array2::zeros((self.n_mels, n_bins));
        for m in 0..self.n_mels {
            let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            for k in 0..n_bins {
                let f = k as f64 * sample_rate as f64 / n_fft as f64;
                let w = if f > lo && f <= mid {
                    (f - lo) / (mid - lo)
                } else if f > mid && f < hi {
                    (hi - f) / (hi - mid)
                } else {
                    0.0
                };
                fb[[m, k]] = w;
            }
        }
        fb
    }

    /// Windowed, zero-padded samples for the frame centred on video frame `k`.
    pub fn frame_window(&self, wave: &Waveform, fps: f64, k: usize) -> Vec<f64> {
        let win = self.window_len(wave.sample_rate);
        let n_fft = self.fft_len(wave.sample_rate);
        let hop = wave.sample_rate as f64 / fps;
        let centre = (k as f64 + 0.5) * hop;
        let start = (centre - win as f64 / 2.0).floor() as isize;
        let mut buf = vec![0.0; n_fft];
        for (i, b) in buf.iter_mut().take(win).enumerate() {
            let idx = start + i as isize;
            if idx >= 0 && (idx as usize) < wave.samples.len() {
                let hann = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / win as f64).cos();
                *b = wave.samples[idx as usize] * hann;
            }
        }
        buf
    }

    fn power_spectrum(fft: &Arc<dyn Fft<f64>>, frame: &[f64]) -> Vec<f64> {
        let mut buf: Vec<Complex<f64>> = frame.iter().map(|&v| Complex::new(v, 0.0)).collect();
        fft.process(&mut buf);
        buf[..frame.len() / 2 + 1].iter().map(|c| c.norm_sqr()).collect()
    }

    /// Power spectrum of frame `k` (exposed for verification against a direct DFT).
    pub fn frame_power(&self, wave: &Waveform, fps: f64, k: usize) -> Vec<f64> {
        let frame = self.frame_window(wave, fps, k);
        let fft = FftPlanner::new().plan_fft_forward(frame.len());
        Self::power_spectrum(&fft, &frame)
    }
}

impl FeatureExtractor for LogMelExtractor {
    fn dim(&self) -> usize {
        self.n_mels
    }

    fn extract(&self, wave: &Waveform, fps: f64) -> Result<AudioFeatureSequence> {
        if self.n_mels == 0 {
            return Err(Error::Config("n_mels must be at least 1".into()));
        }
        let k_frames = frame_count(wave.samples.len(), wave.sample_rate, fps);
        if k_frames == 0 {
            return Err(Error::EmptyAudio { samples: wave.samples.len(), sample_rate: wave.sample_rate, fps });
        }
        let fb = self.filters(wave.sample_rate);
        let fft = FftPlanner::new().plan_fft_forward(self.fft_len(wave.sample_rate));
        let mut out = Array2::zeros((k_frames, self.n_mels));
        for k in 0..k_frames {
            let power = Self::power_spectrum(&fft, &self.frame_window(wave, fps, k));
            for m in 0..self.n_mels {
                let e: f64 = fb.row(m).iter().zip(&power).map(|(w, p)| w * p).sum();
                out[[k, m]] = e.max(self.log_floor).ln();
            }
        }
        Ok(AudioFeatureSequence { features: out, fps })
    }
}

/// Log-mel features with the default window and `n_mels` bands.
pub fn fallback_filterbank(wave: &Waveform, fps: f64, n_mels: usize) -> Result<AudioFeatureSequence> {
    if n_mels == 0 {
        return Err(Error::Config("n_mels must be at least 1".into()));
    }
    extract_features(wave, fps, &LogMelExtractor::with_mels(n_mels))
}

/// Features produced offline by an external model and stored as float32 + manifest.
#[derive(Debug, Clone)]
pub struct PrecomputedFeatures {
    seq: AudioFeatureSequence,
}

impl PrecomputedFeatures {
    pub fn load(bin: &Path) -> Result<Self> {
        Ok(PrecomputedFeatures { seq: AudioFeatureSequence::load(bin)? })
    }

    pub fn from_sequence(seq: AudioFeatureSequence) -> Self {
        PrecomputedFeatures { seq }
    }
}

impl FeatureExtractor for PrecomputedFeatures {
    fn dim(&self) -> usize {
        self.seq.dim()
    }

    fn extract(&self, wave: &Waveform, fps: f64) -> Result<AudioFeatureSequence> {
        if (self.seq.fps - fps).abs() > 1e-9 {
            return Err(Error::Config(format!("precomputed features are at {} fps, requested {fps}", self.seq.fps)));
        }
        let k = frame_count(wave.samples.len(), wave.sample_rate, fps);
        if self.seq.frames() != k {
            return Err(Error::CountMismatch(format!("precomputed features have {} rows, audio covers {k} frames", self.seq.frames())));
        }
        Ok(self.seq.clone())
    }
}

/// Which extractor a pipeline run uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureSource {
    LogMel { n_mels: usize },
    Precomputed { path: std::path::PathBuf },
}

impl Default for FeatureSource {
    fn default() -> Self {
        FeatureSource::LogMel { n_mels: 80 }
    }
}

impl FeatureSource {
    pub fn build(&self) -> Result<Box<dyn FeatureExtractor>> {
        Ok(match self {
            FeatureSource::LogMel { n_mels } => Box::new(LogMelExtractor::with_mels(*n_mels)),
            FeatureSource::Precomputed { path } => Box::new(PrecomputedFeatures::load(path)?),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn tone(freq: f64, secs: f64, rate: u32) -> Waveform {
        let n = (secs * rate as f64).round() as usize;
        Waveform::new((0..n).map(|i| (2.0 * PI * freq * i as f64 / rate as f64).sin() * 0.5).collect(), rate).unwrap()
    }

    #[test]
    fn frame_counts() {
        let ex = LogMelExtractor::default();
        assert_eq!(extract_features(&tone(100.0, 1.0, 16000), 25.0, &ex).unwrap().frames(), 25);
        assert_eq!(extract_features(&tone(100.0, 1.9, 16000), 25.0, &ex).unwrap().frames(), 47);
        let short = Waveform::new(vec![0.0; 639], 16000).unwrap();
        assert!(matches!(extract_features(&short, 25.0, &ex), Err(Error::EmptyAudio { .. })));
        assert!(fallback_filterbank(&tone(100.0, 1.0, 16000), 25.0, 0).is_err());
    }

    #[test]
    fn silence_gives_constant_floor_rows() {
        let w = Waveform::new(vec![0.0; 16000], 16000).unwrap();
        let f = fallback_filterbank(&w, 25.0, 80).unwrap();
        let floor = 1e-10f64.ln();
        assert!(f.features.iter().all(|&v| v == floor));
    }

    /// Direct O(N^2) DFT power spectrum.
    fn dft_power(x: &[f64]) -> Vec<f64> {
        let n = x.len();
        (0..n / 2 + 1)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (t, &v) in x.iter().enumerate() {
                    let a = -2.0 * PI * (k * t) as f64 / n as f64;
                    re += v * a.cos();
                    im += v * a.sin();
                }
                re * re + im * im
            })
            .collect()
    }

    #[test]
    fn tone_energy_lands_in_the_440hz_band() {
        let w = tone(440.0, 1.0, 16000);
        let ex = LogMelExtractor::default();
        let frame = ex.frame_window(&w, 25.0, 12);
        let fast = ex.frame_power(&w, 25.0, 12);
        let slow = dft_power(&frame);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
        }
        let fb = ex.filters(16000);
        let mel: Vec<f64> = (0..80).map(|m| fb.row(m).iter().zip(&slow).map(|(a, b)| a * b).sum()).collect();
        let best = (0..80).max_by(|&a, &b| mel[a].total_cmp(&mel[b])).unwrap();
        let lo = mel_to_hz(hz_to_mel(8000.0) * best as f64 / 81.0);
        let hi = mel_to_hz(hz_to_mel(8000.0) * (best + 2) as f64 / 81.0);
        assert!(lo < 440.0 && 440.0 < hi, "band {best} covers {lo}..{hi}");
        let feats = fallback_filterbank(&w, 25.0, 80).unwrap();
        let row = feats.features.row(12);
        let argmax = (0..80).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
        assert_eq!(argmax, best);
    }

    #[test]
    fn precomputed_features_must_match_frame_count() {
        let seq = AudioFeatureSequence { features: Array2::zeros((25, 4)), fps: 25.0 };
        let ex = PrecomputedFeatures::from_sequence(seq);
        assert_eq!(extract_features(&tone(1.0, 1.0, 16000), 25.0, &ex).unwrap().dim(), 4);
        assert!(extract_features(&tone(1.0, 2.0, 16000), 25.0, &ex).is_err());
        assert!(extract_features(&tone(1.0, 1.0, 16000), 30.0, &ex).is_err());
    }

    proptest! {
        #[test]
        fn frame_count_law(n in 0usize..200_000, rate in prop::sample::select(vec![8000u32, 16000, 22050, 44100]), fps in prop::sample::select(vec![24.0, 25.0, 30.0, 29.97])) {
            let k = frame_count(n, rate, fps);
            prop_assert!(k as f64 <= fps * n as f64 / rate as f64 + 1e-9);
            prop_assert!((k + 1) as f64 > fps * n as f64 / rate as f64 - 1e-9);
        }

        #[test]
        fn delaying_by_whole_frames_shifts_rows(seed in 0u64..1000, shift in 1usize..4) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let samples: Vec<f64> = (0..16000).map(|_| rng.random_range(-0.5..0.5)).collect();
            let hop = 640;
            let mut delayed = vec![0.0; shift * hop];
            delayed.extend_from_slice(&samples);
            let a = fallback_filterbank(&Waveform::new(samples, 16000).unwrap(), 25.0, 40).unwrap();
            let b = fallback_filterbank(&Waveform::new(delayed, 16000).unwrap(), 25.0, 40).unwrap();
            for k in 1..a.frames() - 1 {
                for m in 0..40 {
                    prop_assert!((a.features[[k, m]] - b.features[[k + shift, m]]).abs() < 1e-5);
                }
            }
        }
    }
}
