//! Seeded synthetic spoken-response corpora with controllable modality signal.
//!
//! Each response draws a latent proficiency per modality, `x = g + noise`,
//! where `g` is the grade (or an independent random pseudo-grade when that
//! modality is switched off). The audio latent sets the pitch of a harmonic
//! tone (`200 + 150 x` Hz), its SNR and its rate of silent gaps; the text
//! latent picks which band of marker words appears in the transcript.
//! Transcript length rises with the grade and is tuned to a target
//! length-grade correlation.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use super::{CorpusError, GradeScale, Manifest, ResponseRecord, MANIFEST_FILE};
use crate::audio::{write_wav, AudioClip};

const FILLERS: &[&str] = &[
    "the", "a", "and", "i", "think", "that", "is", "it", "to", "of", "in", "we", "you", "people", "because", "so",
    "very", "really", "my", "they", "have", "do", "like", "about", "when", "but", "also", "this", "was", "can",
    "there", "some", "more", "time", "good", "work", "home", "friends", "city", "often",
];
const SYLLABLES: &[&str] = &[
    "ba", "de", "ko", "mu", "ri", "sa", "tu", "ve", "zo", "pa", "ne", "gi", "lu", "fo", "ha", "ji",
];
/// Marker-word bands per grade unit.
const BANDS_PER_GRADE: f64 = 2.0;
const WORDS_PER_BAND: usize = 2;
const BASE_LENGTH: f64 = 20.0;
const LENGTH_SLOPE: f64 = 4.0;
const MAX_GAP_RATE: f64 = 1.5;
const GAP_SECS: f64 = 0.2;
const MAX_SNR_DB: f64 = 20.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub per_class: usize,
    pub seed: u64,
    pub prompt: String,
    pub audio_informative: bool,
    pub text_informative: bool,
    /// Standard deviation of the audio latent around the grade, in grade units.
    pub audio_noise: f64,
    pub text_noise: f64,
    /// Target Pearson correlation between transcript length and grade.
    pub length_correlation: f64,
    /// Fraction of transcript words drawn from the marker band.
    pub marker_rate: f64,
    pub min_secs: f64,
    pub max_secs: f64,
    pub sample_rate: u32,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            classes: 3,
            per_class: 40,
            seed: 0,
            prompt: "P1".into(),
            audio_informative: true,
            text_informative: true,
            audio_noise: 0.4,
            text_noise: 0.3,
            length_correlation: 0.35,
            marker_rate: 0.25,
            min_secs: 4.0,
            max_secs: 7.0,
            sample_rate: 16_000,
        }
    }
}

impl SyntheticSpec {
    fn validate(&self) -> Result<(), CorpusError> {
        if self.classes < 2 {
            return Err(CorpusError::Degenerate(format!("need at least 2 classes, got {}", self.classes)));
        }
        if self.per_class == 0 {
            return Err(CorpusError::Degenerate("per-class count must be positive".into()));
        }
        if !(self.length_correlation > 0.0 && self.length_correlation < 1.0) {
            return Err(CorpusError::Degenerate(format!(
                "length correlation {} outside (0, 1)",
                self.length_correlation
            )));
        }
        if !(0.0..=1.0).contains(&self.marker_rate) || self.audio_noise < 0.0 || self.text_noise < 0.0 {
            return Err(CorpusError::Degenerate("noise and marker rates must be non-negative".into()));
        }
        if !(self.min_secs > 0.0 && self.max_secs >= self.min_secs) || self.sample_rate == 0 {
            return Err(CorpusError::Degenerate("invalid duration range or sample rate".into()));
        }
        Ok(())
    }

    /// Length noise giving the target correlation for balanced grades:
    /// `sigma = b sd(g) sqrt(1 / rho^2 - 1)`.
    pub fn length_noise(&self) -> f64 {
        let n = self.classes as f64;
        let sd_g = ((n * n - 1.0) / 12.0).sqrt();
        LENGTH_SLOPE * sd_g * (1.0 / (self.length_correlation * self.length_correlation) - 1.0).sqrt()
    }
}

/// One planned response; audio is rendered on demand.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticResponse {
    pub id: String,
    pub grade: usize,
    pub transcript: String,
    pub audio_latent: f64,
    pub text_latent: f64,
    pub duration_secs: f64,
    audio_seed: u64,
}

fn marker_word(band: usize, j: usize) -> String {
    let k = band * WORDS_PER_BAND + j;
    let n = SYLLABLES.len();
    format!("{}{}{}", SYLLABLES[(k / n) % n], SYLLABLES[k % n], SYLLABLES[(k * 7 + 3) % n])
}

fn record_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

/// Draws every response's latents and transcript; no audio is produced.
pub fn plan_synthetic_corpus(spec: &SyntheticSpec) -> Result<Vec<SyntheticResponse>, CorpusError> {
    spec.validate()?;
    let top = (spec.classes - 1) as f64;
    let bands = (BANDS_PER_GRADE * (top + 2.0)) as usize;
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let len_sigma = spec.length_noise();
    let mut out = Vec::with_capacity(spec.classes * spec.per_class);
    for i in 0..spec.classes * spec.per_class {
        let grade = i % spec.classes;
        let mut rng = record_rng(spec.seed, i);
        let g = grade as f64;
        let audio_grade = if spec.audio_informative { g } else { rng.gen_range(0..spec.classes) as f64 };
        let text_grade = if spec.text_informative { g } else { rng.gen_range(0..spec.classes) as f64 };
        let audio_latent = audio_grade + spec.audio_noise * std.sample(&mut rng);
        let text_latent = text_grade + spec.text_noise * std.sample(&mut rng);

        let length = (BASE_LENGTH + LENGTH_SLOPE * text_grade + len_sigma * std.sample(&mut rng))
            .round()
            .max(5.0) as usize;
        let band = ((text_latent + 1.0) * BANDS_PER_GRADE).floor().clamp(0.0, (bands - 1) as f64) as usize;
        let markers = ((spec.marker_rate * length as f64).round() as usize).clamp(1, length);
        let mut words: Vec<String> = (0..length)
            .map(|k| {
                if k < markers {
                    marker_word(band, rng.gen_range(0..WORDS_PER_BAND))
                } else {
                    FILLERS.choose(&mut rng).expect("non-empty").to_string()
                }
            })
            .collect();
        words.shuffle(&mut rng);
        let mut transcript = words.join(" ");
        transcript.push('.');

        out.push(SyntheticResponse {
            id: format!("R{:04}", i + 1),
            grade,
            transcript,
            audio_latent,
            text_latent,
            duration_secs: rng.gen_range(spec.min_secs..=spec.max_secs),
            audio_seed: rng.gen(),
        });
    }
    Ok(out)
}

impl SyntheticResponse {
    /// Harmonic tone with vibrato, silent gaps and additive white noise.
    pub fn render_audio(&self, spec: &SyntheticSpec) -> Result<AudioClip, CorpusError> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.audio_seed);
        let rate = f64::from(spec.sample_rate);
        let n = (self.duration_secs * rate).round() as usize;
        let level = (self.audio_latent / (spec.classes - 1) as f64).clamp(0.0, 1.0);
        let f0 = (200.0 + 150.0 * self.audio_latent).max(80.0);

        let mut phase = 0.0;
        let mut tone: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / rate;
                phase += 2.0 * PI * f0 * (1.0 + 0.01 * (2.0 * PI * 5.0 * t).sin()) / rate;
                (1..=4).map(|k| (k as f64 * phase).sin() / k as f64).sum()
            })
            .collect();

        let expected_gaps = MAX_GAP_RATE * (1.0 - level) * self.duration_secs;
        let gaps = if expected_gaps > 0.0 {
            Poisson::new(expected_gaps).expect("positive mean").sample(&mut rng) as usize
        } else {
            0
        };
        let gap_len = (GAP_SECS * rate) as usize;
        for _ in 0..gaps {
            let start = rng.gen_range(0..n.saturating_sub(gap_len).max(1));
            let end = (start + gap_len).min(n);
            tone[start..end].fill(0.0);
        }

        let power = tone.iter().map(|v| v * v).sum::<f64>() / n as f64;
        let snr_db = MAX_SNR_DB * level;
        let noise_std = (power.max(1e-6) / 10f64.powf(snr_db / 10.0)).sqrt();
        let noise = Normal::new(0.0, noise_std).expect("finite std");
        let mut samples: Vec<f64> = tone.iter().map(|v| v + noise.sample(&mut rng)).collect();
        let peak = samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if peak > 0.0 {
            samples.iter_mut().for_each(|v| *v *= 0.6 / peak);
        }
        Ok(AudioClip::new(samples, spec.sample_rate)?)
    }
}

/// Writes `manifest.jsonl` and `audio/<id>.wav` under `out_dir` and returns
/// the manifest path.
pub fn generate_synthetic_corpus(spec: &SyntheticSpec, out_dir: &Path) -> Result<PathBuf, CorpusError> {
    let plan = plan_synthetic_corpus(spec)?;
    let scale = GradeScale::synthetic(spec.classes)?;
    let audio_dir = out_dir.join("audio");
    fs::create_dir_all(&audio_dir).map_err(|e| CorpusError::io(&audio_dir, e))?;
    let mut manifest = Manifest::default();
    manifest.scales.insert(spec.prompt.clone(), scale.clone());
    for r in &plan {
        let path = audio_dir.join(format!("{}.wav", r.id));
        write_wav(&path, &r.render_audio(spec)?)?;
        manifest.records.push(ResponseRecord {
            id: r.id.clone(),
            prompt: spec.prompt.clone(),
            audio: path,
            transcript: r.transcript.clone(),
            grade: scale.label(r.grade).expect("grade in range").to_string(),
            split: None,
        });
    }
    let manifest_path = out_dir.join(MANIFEST_FILE);
    manifest.write(&manifest_path)?;
    Ok(manifest_path)
}
