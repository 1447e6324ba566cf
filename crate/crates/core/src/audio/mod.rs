//! Raw audio to normalized, zero-padded, frame-split log-mel spectrograms.
//!
//! The pipeline is resample to 16 kHz, Hann-windowed centered STFT
//! (2048/512), HTK mel projection to 128 area-normalized bands,
//! `ln(x + 1e-10)`, per-utterance standardization, right zero-padding to a
//! per-prompt column budget, and a split into 128-column frames.

mod wav;

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

use crate::tensor::{Tensor, TensorError};

pub use wav::{read_wav, write_wav};

pub const LOG_FLOOR: f64 = 1e-10;
pub const STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("degenerate input to {op}: {reason}")]
    Degenerate { op: &'static str, reason: String },
    #[error("invalid parameter for {op}: {reason}")]
    Parameter { op: &'static str, reason: String },
    #[error("contract violated in {op}: {reason}")]
    Contract { op: &'static str, reason: String },
    #[error("numeric error in {op}: {reason}")]
    Numeric { op: &'static str, reason: String },
    #[error("{path}: {source}")]
    Wav {
        path: String,
        #[source]
        source: hound::Error,
    },
    #[error("{path}: unsupported WAV encoding {detail}")]
    UnsupportedFormat { path: String, detail: String },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

impl AudioError {
    fn wav(path: &Path, source: hound::Error) -> Self {
        Self::Wav {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Mono samples in [-1, 1] at a fixed rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self, AudioError> {
        if sample_rate == 0 {
            return Err(AudioError::Parameter {
                op: "audio_clip",
                reason: "sample rate must be positive".into(),
            });
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(AudioError::Numeric {
                op: "audio_clip",
                reason: format!("non-finite sample at index {i}"),
            });
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }
}

/// Sequence of `[n_mels x frame_width]` frames for one response.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrogramFrames {
    pub frames: Vec<Tensor>,
    /// Non-padded time columns across all frames.
    pub num_valid_columns: usize,
}

impl SpectrogramFrames {
    pub fn frame_width(&self) -> usize {
        self.frames.first().map_or(0, |f| f.shape()[1])
    }

    /// Frames holding at least one non-padded column.
    pub fn valid_frames(&self) -> &[Tensor] {
        let w = self.frame_width().max(1);
        let n = self.num_valid_columns.div_ceil(w).clamp(1, self.frames.len());
        &self.frames[..n]
    }
}

const SINC_ZERO_CROSSINGS: f64 = 16.0;

/// Band-limited windowed-sinc resampling.
pub fn resample(clip: &AudioClip, target_rate: u32) -> Result<AudioClip, AudioError> {
    if target_rate == 0 {
        return Err(AudioError::Parameter {
            op: "resample",
            reason: "target rate must be positive".into(),
        });
    }
    if clip.is_empty() {
        return Err(AudioError::Degenerate {
            op: "resample",
            reason: "empty clip".into(),
        });
    }
    if target_rate == clip.sample_rate {
        return Ok(clip.clone());
    }
    let src = u64::from(clip.sample_rate);
    let dst = u64::from(target_rate);
    let out_len = ((clip.len() as u64 * dst + src / 2) / src).max(1) as usize;
    let ratio = dst as f64 / src as f64;
    // Cutoff as a fraction of the input Nyquist, a little under the output Nyquist.
    let cutoff = ratio.min(1.0) * 0.95;
    let half_width = SINC_ZERO_CROSSINGS / cutoff;
    let s = clip.samples();
    let last = s.len() as isize - 1;
    let samples = (0..out_len)
        .map(|n| {
            let x = n as f64 / ratio;
            let lo = ((x - half_width).ceil() as isize).max(0);
            let hi = ((x + half_width).floor() as isize).min(last);
            let mut acc = 0.0;
            for k in lo..=hi {
                let u = x - k as f64;
                let arg = cutoff * u;
                let sinc = if arg.abs() < 1e-12 { 1.0 } else { (PI * arg).sin() / (PI * arg) };
                let window = 0.5 * (1.0 + (PI * u / half_width).cos());
                acc += s[k as usize] * cutoff * sinc * window;
            }
            acc
        })
        .collect();
    AudioClip::new(samples, target_rate)
}

fn hann_periodic(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

fn stft_with(samples: &[f64], fft: &dyn Fft<f64>, window: &[f64], hop: usize) -> Result<Tensor, AudioError> {
    if samples.is_empty() {
        return Err(AudioError::Degenerate {
            op: "stft",
            reason: "empty clip".into(),
        });
    }
    let n_fft = window.len();
    let pad = n_fft / 2;
    let cols = 1 + samples.len() / hop;
    let bins = n_fft / 2 + 1;
    let mut out = vec![0.0; bins * cols];
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for t in 0..cols {
        let start = (t * hop) as isize - pad as isize;
        for (i, slot) in buf.iter_mut().enumerate() {
            let idx = start + i as isize;
            let v = if idx >= 0 && (idx as usize) < samples.len() {
                samples[idx as usize]
            } else {
                0.0
            };
            *slot = Complex::new(v * window[i], 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (k, c) in buf.iter().take(bins).enumerate() {
            out[k * cols + t] = c.norm();
        }
    }
    Ok(Tensor::new(vec![bins, cols], out)?)
}

/// Magnitude STFT, `[fft_window / 2 + 1 x (1 + len / hop)]`, with periodic
/// Hann windows centered on each hop (zero padding at the edges).
pub fn stft(clip: &AudioClip, fft_window: usize, hop: usize) -> Result<Tensor, AudioError> {
    if fft_window < 2 || hop == 0 {
        return Err(AudioError::Parameter {
            op: "stft",
            reason: format!("window {fft_window}, hop {hop}"),
        });
    }
    let fft = FftPlanner::new().plan_fft_forward(fft_window);
    stft_with(clip.samples(), fft.as_ref(), &hann_periodic(fft_window), hop)
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Center frequencies (Hz) of the `n_mels` triangular filters.
pub fn mel_band_centers(n_mels: usize, f_min: f64, f_max: f64) -> Vec<f64> {
    mel_edges(n_mels, f_min, f_max)[1..=n_mels].to_vec()
}

fn mel_edges(n_mels: usize, f_min: f64, f_max: f64) -> Vec<f64> {
    let (lo, hi) = (hz_to_mel(f_min), hz_to_mel(f_max));
    (0..n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
        .collect()
}

/// `[n_mels x (n_fft / 2 + 1)]` HTK-scale triangular filters, each scaled
/// to unit area over frequency.
pub fn mel_filterbank(n_mels: usize, n_fft: usize, sample_rate: u32, f_min: f64, f_max: f64) -> Result<Tensor, AudioError> {
    if n_mels < 1 {
        return Err(AudioError::Parameter {
            op: "mel_project",
            reason: "n_mels must be at least 1".into(),
        });
    }
    if !(f_min >= 0.0 && f_max > f_min) {
        return Err(AudioError::Parameter {
            op: "mel_project",
            reason: format!("frequency range {f_min}..{f_max}"),
        });
    }
    let bins = n_fft / 2 + 1;
    let edges = mel_edges(n_mels, f_min, f_max);
    let bin_hz = f64::from(sample_rate) / n_fft as f64;
    let mut weights = vec![0.0; n_mels * bins];
    for m in 0..n_mels {
        let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
        let norm = 2.0 / (right - left);
        for k in 0..bins {
            let f = k as f64 * bin_hz;
            let rise = (f - left) / (center - left);
            let fall = (right - f) / (right - center);
            weights[m * bins + k] = rise.min(fall).max(0.0) * norm;
        }
    }
    Ok(Tensor::new(vec![n_mels, bins], weights)?)
}

/// Projects a magnitude spectrogram through a filterbank.
pub fn mel_project(filterbank: &Tensor, magnitudes: &Tensor) -> Result<Tensor, AudioError> {
    let (m, k) = (filterbank.shape()[0], filterbank.shape()[1]);
    if magnitudes.shape().len() != 2 || magnitudes.shape()[0] != k {
        return Err(TensorError::Dimension {
            op: "mel_project",
            left: filterbank.shape().to_vec(),
            right: magnitudes.shape().to_vec(),
        }
        .into());
    }
    let cols = magnitudes.shape()[1];
    let data = crate::tensor::matmul_raw(filterbank.data(), magnitudes.data(), m, k, cols);
    Ok(Tensor::new(vec![m, cols], data)?)
}

/// Elementwise `ln(x + 1e-10)`.
pub fn log_scale(mel: &Tensor) -> Result<Tensor, AudioError> {
    if let Some(bad) = mel.data().iter().find(|&&v| v.is_nan() || v < 0.0 || v.is_infinite()) {
        return Err(AudioError::Numeric {
            op: "log_scale",
            reason: format!("negative or non-finite input {bad}"),
        });
    }
    Ok(Tensor::new(
        mel.shape().to_vec(),
        mel.data().iter().map(|&v| (v + LOG_FLOOR).ln()).collect(),
    )?)
}

/// Standardizes `[bands x T]` to mean 0 / std 1 over the whole matrix, then
/// right-pads with zeros to `max_columns`.
pub fn normalize_and_pad(logmel: &Tensor, max_columns: usize) -> Result<Tensor, AudioError> {
    let (bands, cols) = (logmel.shape()[0], logmel.shape()[1]);
    if cols > max_columns {
        return Err(AudioError::Contract {
            op: "normalize_and_pad",
            reason: format!("{cols} columns exceed the budget of {max_columns}"),
        });
    }
    let n = logmel.numel() as f64;
    // Shifted by the first value so constant input yields an exact mean.
    let pivot = logmel.data()[0];
    let mean = pivot + logmel.data().iter().map(|v| v - pivot).sum::<f64>() / n;
    let var = logmel.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt().max(STD_FLOOR);
    let mut out = vec![0.0; bands * max_columns];
    for b in 0..bands {
        for (t, &v) in logmel.row(b).iter().enumerate() {
            out[b * max_columns + t] = (v - mean) / std;
        }
    }
    Ok(Tensor::new(vec![bands, max_columns], out)?)
}

/// Cuts `[bands x W]` into contiguous `[bands x frame_width]` frames.
pub fn split_frames(padded: &Tensor, frame_width: usize, num_valid_columns: usize) -> Result<SpectrogramFrames, AudioError> {
    let (bands, cols) = (padded.shape()[0], padded.shape()[1]);
    if frame_width == 0 || cols % frame_width != 0 {
        return Err(AudioError::Contract {
            op: "split_frames",
            reason: format!("{cols} columns is not a multiple of {frame_width}"),
        });
    }
    if num_valid_columns > cols {
        return Err(AudioError::Contract {
            op: "split_frames",
            reason: format!("{num_valid_columns} valid columns in a {cols}-column matrix"),
        });
    }
    let frames = (0..cols / frame_width)
        .map(|f| {
            let data = (0..bands)
                .flat_map(|b| padded.row(b)[f * frame_width..(f + 1) * frame_width].iter().copied())
                .collect();
            Tensor::new(vec![bands, frame_width], data)
        })
        .collect::<Result<_, _>>()?;
    Ok(SpectrogramFrames {
        frames,
        num_valid_columns,
    })
}

/// Uniform noise in [-1, 1] with the clip's length and rate.
pub fn white_noise_like<R: Rng + ?Sized>(clip: &AudioClip, rng: &mut R) -> AudioClip {
    AudioClip {
        samples: (0..clip.len()).map(|_| rng.gen_range(-1.0..=1.0)).collect(),
        sample_rate: clip.sample_rate,
    }
}

/// Smallest multiple of `frame_width` holding `columns`.
pub fn round_up_columns(columns: usize, frame_width: usize) -> usize {
    columns.div_ceil(frame_width).max(1) * frame_width
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrontendConfig {
    pub sample_rate: u32,
    pub fft_window: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub f_min: f64,
    pub f_max: f64,
    pub frame_width: usize,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            fft_window: 2048,
            hop: 512,
            n_mels: 128,
            f_min: 0.0,
            f_max: 8000.0,
            frame_width: 128,
        }
    }
}

/// The full audio pipeline with its FFT plan and filterbank cached.
#[derive(Clone)]
pub struct Frontend {
    config: FrontendConfig,
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    filterbank: Tensor,
}

impl std::fmt::Debug for Frontend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Frontend").field("config", &self.config).finish()
    }
}

impl Frontend {
    pub fn new(config: FrontendConfig) -> Result<Self, AudioError> {
        if config.hop == 0 || config.fft_window < 2 || config.frame_width == 0 {
            return Err(AudioError::Parameter {
                op: "frontend",
                reason: format!("{config:?}"),
            });
        }
        let filterbank = mel_filterbank(
            config.n_mels,
            config.fft_window,
            config.sample_rate,
            config.f_min,
            config.f_max,
        )?;
        Ok(Self {
            config,
            fft: FftPlanner::new().plan_fft_forward(config.fft_window),
            window: hann_periodic(config.fft_window),
            filterbank,
        })
    }

    pub fn config(&self) -> &FrontendConfig {
        &self.config
    }

    pub fn filterbank(&self) -> &Tensor {
        &self.filterbank
    }

    /// Unpadded log-mel spectrogram `[n_mels x T]`.
    pub fn log_mel(&self, clip: &AudioClip) -> Result<Tensor, AudioError> {
        let clip = resample(clip, self.config.sample_rate)?;
        let mag = stft_with(clip.samples(), self.fft.as_ref(), &self.window, self.config.hop)?;
        let mel = mel_project(&self.filterbank, &mag)?;
        log_scale(&mel)
    }

    /// STFT column count the clip will produce after resampling.
    pub fn column_count(&self, clip: &AudioClip) -> usize {
        let ratio = f64::from(self.config.sample_rate) / f64::from(clip.sample_rate());
        let len = if clip.sample_rate() == self.config.sample_rate {
            clip.len()
        } else {
            ((clip.len() as f64 * ratio).round() as usize).max(1)
        };
        1 + len / self.config.hop
    }

    /// Frames for the model, padded to `max_columns` (rounded up to a whole
    /// frame). Longer responses are right-truncated with a warning.
    pub fn frames(&self, clip: &AudioClip, max_columns: usize) -> Result<SpectrogramFrames, AudioError> {
        let budget = round_up_columns(max_columns, self.config.frame_width);
        let mut logmel = self.log_mel(clip)?;
        let cols = logmel.shape()[1];
        if cols > budget {
            log::warn!("response has {cols} spectrogram columns, truncating to {budget}");
            let bands = logmel.shape()[0];
            let data = (0..bands).flat_map(|b| logmel.row(b)[..budget].to_vec()).collect();
            logmel = Tensor::new(vec![bands, budget], data)?;
        }
        let valid = logmel.shape()[1];
        let padded = normalize_and_pad(&logmel, budget)?;
        split_frames(&padded, self.config.frame_width, valid)
    }
}
