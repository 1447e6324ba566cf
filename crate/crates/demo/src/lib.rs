//! Browser bindings for three views of the scoring pipeline: the log-mel
//! spectrogram of a tone, fusion attention over seeded hidden states, and
//! threshold calibration against QWK.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use speechgrade::audio::{mel_band_centers, AudioClip, Frontend, FrontendConfig};
use speechgrade::metrics::{optimize_thresholds, qwk, round_default, ThresholdSearch, ThresholdSet};
use speechgrade::model::{fuse_and_score, modality_split, HeadVars};
use speechgrade::tensor::{Graph, Tensor};
use std::f64::consts::PI;
use wasm_bindgen::prelude::*;

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

/// Log-mel matrix stored band-major.
#[wasm_bindgen]
pub struct Spectrogram {
    bands: usize,
    columns: usize,
    values: Vec<f64>,
    centers: Vec<f64>,
}

#[wasm_bindgen]
impl Spectrogram {
    #[wasm_bindgen(getter)]
    pub fn bands(&self) -> usize {
        self.bands
    }

    #[wasm_bindgen(getter)]
    pub fn columns(&self) -> usize {
        self.columns
    }

    pub fn values(&self) -> Vec<f64> {
        self.values.clone()
    }

    /// Band with the most energy in the middle column.
    #[wasm_bindgen(getter)]
    pub fn peak_band(&self) -> usize {
        let t = self.columns / 2;
        (0..self.bands)
            .max_by(|&a, &b| self.get(a, t).total_cmp(&self.get(b, t)))
            .unwrap_or(0)
    }

    #[wasm_bindgen(getter)]
    pub fn peak_hz(&self) -> f64 {
        self.centers[self.peak_band()]
    }

    pub fn get(&self, band: usize, column: usize) -> f64 {
        self.values[band * self.columns + column]
    }
}

/// Log-mel spectrogram of a sine at `freq_hz` lasting `secs`, optionally
/// mixed with a second tone at `second_hz` (0 disables it).
#[wasm_bindgen]
pub fn tone_spectrogram(freq_hz: f64, second_hz: f64, secs: f64) -> Result<Spectrogram, JsError> {
    let config = FrontendConfig::default();
    let rate = f64::from(config.sample_rate);
    let n = (secs.clamp(0.1, 5.0) * rate) as usize;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / rate;
            let second = if second_hz > 0.0 { 0.25 * (2.0 * PI * second_hz * t).sin() } else { 0.0 };
            0.5 * (2.0 * PI * freq_hz * t).sin() + second
        })
        .collect();
    let clip = AudioClip::new(samples, config.sample_rate).map_err(js_err)?;
    let frontend = Frontend::new(config).map_err(js_err)?;
    let logmel = frontend.log_mel(&clip).map_err(js_err)?;
    Ok(Spectrogram {
        bands: logmel.shape()[0],
        columns: logmel.shape()[1],
        values: logmel.data().to_vec(),
        centers: mel_band_centers(config.n_mels, config.f_min, config.f_max),
    })
}

/// Attention weights over the joint audio-then-text sequence.
#[wasm_bindgen]
pub struct Fusion {
    audio_steps: usize,
    weights: Vec<f64>,
    score: f64,
    text_pct: f64,
    audio_pct: f64,
}

#[wasm_bindgen]
impl Fusion {
    #[wasm_bindgen(getter)]
    pub fn audio_steps(&self) -> usize {
        self.audio_steps
    }

    pub fn weights(&self) -> Vec<f64> {
        self.weights.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn score(&self) -> f64 {
        self.score
    }

    #[wasm_bindgen(getter)]
    pub fn text_pct(&self) -> f64 {
        self.text_pct
    }

    #[wasm_bindgen(getter)]
    pub fn audio_pct(&self) -> f64 {
        self.audio_pct
    }
}

/// Fuses seeded random states of width 8. `salience` shifts every audio
/// state along the attention vector, pulling attention toward audio when
/// positive and away from it when negative.
#[wasm_bindgen]
pub fn fusion_attention(audio_steps: usize, text_steps: usize, salience: f64, seed: u64) -> Result<Fusion, JsError> {
    const WIDTH: usize = 8;
    let (audio_steps, text_steps) = (audio_steps.max(1), text_steps.max(1));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |shape: &[usize]| Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0));
    let attention = draw(&[WIDTH]);
    let dense_w = draw(&[WIDTH]);
    let dense_b = draw(&[1]);
    let mut audio = draw(&[audio_steps, WIDTH]);
    let text = draw(&[text_steps, WIDTH]);
    let norm = attention.data().iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    let direction: Vec<f64> = attention.data().iter().map(|x| x / norm).collect();
    for row in audio.data_mut().chunks_mut(WIDTH) {
        for (x, d) in row.iter_mut().zip(&direction) {
            *x += salience * d;
        }
    }

    let mut g = Graph::new();
    let (a, t) = (g.constant(audio), g.constant(text));
    let head = HeadVars {
        attention: g.constant(attention),
        dense_w: g.constant(dense_w),
        dense_b: g.constant(dense_b),
    };
    let (score, trace) = fuse_and_score(&mut g, a, t, &head, 0.0, false, &mut rng).map_err(js_err)?;
    let (text_pct, audio_pct) = modality_split(&trace);
    Ok(Fusion {
        audio_steps,
        score: g.value(score).item(),
        weights: trace.weights,
        text_pct,
        audio_pct,
    })
}

/// QWK of one set of raw scores under rounding, user cuts and fitted cuts.
#[wasm_bindgen]
pub struct Calibration {
    raw: Vec<f64>,
    human: Vec<usize>,
    rounded_qwk: f64,
    manual_qwk: f64,
    fitted_qwk: f64,
    fitted_cuts: Vec<f64>,
}

#[wasm_bindgen]
impl Calibration {
    pub fn raw(&self) -> Vec<f64> {
        self.raw.clone()
    }

    pub fn human(&self) -> Vec<u32> {
        self.human.iter().map(|&h| h as u32).collect()
    }

    #[wasm_bindgen(getter)]
    pub fn rounded_qwk(&self) -> f64 {
        self.rounded_qwk
    }

    /// NaN when the cuts are invalid or kappa is undefined.
    #[wasm_bindgen(getter)]
    pub fn manual_qwk(&self) -> f64 {
        self.manual_qwk
    }

    #[wasm_bindgen(getter)]
    pub fn fitted_qwk(&self) -> f64 {
        self.fitted_qwk
    }

    pub fn fitted_cuts(&self) -> Vec<f64> {
        self.fitted_cuts.clone()
    }
}

/// Three-grade raw scores that drift toward the centre by `shrink`
/// (0 keeps them on their grade) plus uniform noise of half-width `noise`.
/// Compares rounding, the cuts `(cut1, cut2)` and the fitted cuts.
#[wasm_bindgen]
pub fn threshold_explorer(count: usize, shrink: f64, noise: f64, cut1: f64, cut2: f64, seed: u64) -> Result<Calibration, JsError> {
    const LEVELS: usize = 3;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = count.max(LEVELS);
    let human: Vec<usize> = (0..count).map(|i| i % LEVELS).collect();
    let shrink = shrink.clamp(0.0, 1.0);
    let raw: Vec<f64> = human
        .iter()
        .map(|&h| {
            let centred = 1.0 + (h as f64 - 1.0) * (1.0 - shrink);
            let jitter = if noise > 0.0 { rng.gen_range(-noise..noise) } else { 0.0 };
            (centred + jitter).clamp(0.0, (LEVELS - 1) as f64)
        })
        .collect();
    let score = |predicted: &[usize]| qwk(&human, predicted, LEVELS).unwrap_or(f64::NAN);
    let rounded: Vec<usize> = raw.iter().map(|&r| round_default(r, LEVELS)).collect();
    let manual_qwk = match ThresholdSet::new(vec![cut1, cut2]) {
        Ok(cuts) => score(&raw.iter().map(|&r| cuts.apply(r)).collect::<Vec<_>>()),
        Err(_) => f64::NAN,
    };
    let (fitted, fitted_qwk) = optimize_thresholds(&raw, &human, LEVELS, ThresholdSearch::default()).map_err(js_err)?;
    Ok(Calibration {
        rounded_qwk: score(&rounded),
        manual_qwk,
        fitted_qwk,
        fitted_cuts: fitted.cuts().to_vec(),
        raw,
        human,
    })
}
