//! Modality attention splits, audio-replacement ablations, and per-position
//! attention traces for trained fusion models.

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::audio::{read_wav, white_noise_like, AudioClip};
use crate::corpus::Checkpoint;
use crate::metrics::{self, MetricsError, ThresholdSearch};
use crate::model::{modality_split, Modality, ModelKind};
use crate::training::{check_scale, evaluate_features, Dataset, Featurizer, Features, LoadedResponse, TrainError};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("contract violated: {0}")]
    Contract(String),
}

fn require_fusion(ck: &Checkpoint, op: &str) -> Result<(), AnalysisError> {
    if ck.kind() != ModelKind::Fusion {
        return Err(AnalysisError::Contract(format!("{op} needs an MMAF checkpoint, got {}", ck.kind())));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupBy {
    Prompt,
    /// Human grade.
    Grade,
    PredictedGrade,
}

impl std::str::FromStr for GroupBy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "prompt" => Ok(GroupBy::Prompt),
            "grade" => Ok(GroupBy::Grade),
            "predicted-grade" => Ok(GroupBy::PredictedGrade),
            other => Err(format!("unknown grouping {other:?}; use prompt, grade or predicted-grade")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitRow {
    pub group: String,
    pub responses: usize,
    pub text_pct: f64,
    pub audio_pct: f64,
}

/// Mean of per-response modality splits within each group. Grade groups
/// follow scale order and omit grades with no responses.
pub fn attention_split_report(ck: &Checkpoint, data: &Dataset, by: GroupBy) -> Result<Vec<SplitRow>, AnalysisError> {
    require_fusion(ck, "attention split")?;
    let eval = crate::training::evaluate(ck, data, None)?;
    let mut groups: BTreeMap<usize, (String, Vec<(f64, f64)>)> = BTreeMap::new();
    for p in &eval.predictions {
        let (key, label) = match by {
            GroupBy::Prompt => (0, data.prompt.clone()),
            GroupBy::Grade => (p.human, ck.scale.label(p.human).unwrap_or_default().to_string()),
            GroupBy::PredictedGrade => (
                p.prediction.grade,
                ck.scale.label(p.prediction.grade).unwrap_or_default().to_string(),
            ),
        };
        groups
            .entry(key)
            .or_insert_with(|| (label, Vec::new()))
            .1
            .push(modality_split(&p.trace));
    }
    Ok(groups
        .into_values()
        .map(|(group, splits)| {
            let n = splits.len() as f64;
            SplitRow {
                group,
                responses: splits.len(),
                text_pct: splits.iter().map(|s| s.0).sum::<f64>() / n,
                audio_pct: splits.iter().map(|s| s.1).sum::<f64>() / n,
            }
        })
        .collect())
}

/// Test QWK with default rounding and with thresholds fitted on the
/// calibration set under the same audio condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QwkPair {
    pub without_to: Option<f64>,
    pub with_to: Option<f64>,
}

impl QwkPair {
    pub fn drop_from(&self, baseline: &QwkPair) -> QwkPair {
        let d = |a: Option<f64>, b: Option<f64>| a.zip(b).map(|(a, b)| a - b);
        QwkPair {
            without_to: d(baseline.without_to, self.without_to),
            with_to: d(baseline.with_to, self.with_to),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationReport {
    pub original: QwkPair,
    pub ablated: QwkPair,
    /// Responses left out because no replacement audio was found.
    pub skipped: Vec<String>,
}

impl AblationReport {
    pub fn drop(&self) -> QwkPair {
        self.ablated.drop_from(&self.original)
    }
}

struct Prepared {
    ids: Vec<String>,
    grades: Vec<usize>,
    features: Vec<Features>,
}

fn prepare(
    featurizer: &Featurizer,
    data: &Dataset,
    mut audio: impl FnMut(usize, &LoadedResponse) -> Result<Option<AudioClip>, AnalysisError>,
    skipped: &mut Vec<String>,
) -> Result<Prepared, AnalysisError> {
    let mut out = Prepared {
        ids: Vec::new(),
        grades: Vec::new(),
        features: Vec::new(),
    };
    for (i, r) in data.responses.iter().enumerate() {
        let Some(clip) = audio(i, r)? else {
            skipped.push(r.id.clone());
            continue;
        };
        out.ids.push(r.id.clone());
        out.grades.push(r.grade);
        out.features.push(featurizer.featurize_with(&clip, &r.transcript).map_err(AnalysisError::from)?);
    }
    Ok(out)
}

fn qwk_pair(ck: &Checkpoint, test: &Prepared, calib: &Prepared) -> Result<QwkPair, AnalysisError> {
    let eval = evaluate_features(ck, &test.ids, &test.grades, &test.features, None)?;
    let with_to = if calib.ids.is_empty() {
        None
    } else {
        let cal = evaluate_features(ck, &calib.ids, &calib.grades, &calib.features, None)?;
        match metrics::optimize_thresholds(&cal.raw_scores(), &cal.human_grades(), ck.scale.len(), ThresholdSearch::default()) {
            Ok((cuts, _)) => evaluate_features(ck, &test.ids, &test.grades, &test.features, Some(&cuts))?.qwk,
            Err(MetricsError::UndefinedKappa) => None,
            Err(e) => return Err(e.into()),
        }
    };
    Ok(QwkPair {
        without_to: eval.qwk,
        with_to,
    })
}

fn ablate(
    ck: &Checkpoint,
    test: &Dataset,
    calib: &Dataset,
    mut replace: impl FnMut(bool, usize, &LoadedResponse) -> Result<Option<AudioClip>, AnalysisError>,
) -> Result<AblationReport, AnalysisError> {
    require_fusion(ck, "audio ablation")?;
    check_scale(ck, test)?;
    check_scale(ck, calib)?;
    let featurizer = Featurizer::for_checkpoint(ck)?;
    let mut skipped = Vec::new();
    let mut calib_skipped = Vec::new();
    let test_ablated = prepare(&featurizer, test, |i, r| replace(true, i, r), &mut skipped)?;
    let calib_ablated = prepare(&featurizer, calib, |i, r| replace(false, i, r), &mut calib_skipped)?;
    if test_ablated.ids.is_empty() {
        return Err(AnalysisError::Contract("no responses left after replacement".into()));
    }
    let keep = |data: &Dataset, left_out: &[String]| -> Result<Prepared, AnalysisError> {
        let mut none = Vec::new();
        prepare(
            &featurizer,
            data,
            |_, r| Ok((!left_out.contains(&r.id)).then(|| r.clip.clone())),
            &mut none,
        )
    };
    let test_original = keep(test, &skipped)?;
    let calib_original = keep(calib, &calib_skipped)?;
    Ok(AblationReport {
        original: qwk_pair(ck, &test_original, &calib_original)?,
        ablated: qwk_pair(ck, &test_ablated, &calib_ablated)?,
        skipped,
    })
}

/// Replaces every response's audio with uniform white noise of the same
/// length. Noise for response `i` comes from a stream keyed by `(seed, i)`.
pub fn ablate_white_noise(ck: &Checkpoint, test: &Dataset, calib: &Dataset, seed: u64) -> Result<AblationReport, AnalysisError> {
    ablate(ck, test, calib, |is_test, i, r| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(2 * i as u64 + u64::from(is_test));
        Ok(Some(white_noise_like(&r.clip, &mut rng)))
    })
}

/// Replaces each response's audio with `<dir>/<id>.wav`. Responses without a
/// replacement are skipped in both conditions and listed in the report.
pub fn ablate_swapped_audio(ck: &Checkpoint, test: &Dataset, calib: &Dataset, dir: &Path) -> Result<AblationReport, AnalysisError> {
    ablate(ck, test, calib, |_, _, r| {
        let path = dir.join(format!("{}.wav", r.id));
        if !path.is_file() {
            log::warn!("no replacement audio for {} at {}", r.id, path.display());
            return Ok(None);
        }
        Ok(Some(read_wav(&path).map_err(TrainError::from)?))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub modality: String,
    pub index: usize,
    pub weight: f64,
    /// Min-max scaled within the row's modality; all zeros when constant.
    pub minmax: f64,
    /// Token text, or the frame's time span in seconds.
    pub label: String,
}

fn minmax(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        values.iter().map(|v| (v - lo) / (hi - lo)).collect()
    } else {
        vec![0.0; values.len()]
    }
}

/// One row per attended position of a single response.
pub fn export_attention_trace(ck: &Checkpoint, response: &LoadedResponse) -> Result<Vec<TraceRow>, AnalysisError> {
    let featurizer = Featurizer::for_checkpoint(ck)?;
    let features = featurizer.featurize(response)?;
    let (_, trace) = ck.model.predict(&features.input()).map_err(TrainError::from)?;
    let fc = featurizer.frontend().config();
    let secs_per_column = fc.hop as f64 / f64::from(fc.sample_rate);
    let valid_columns = features.frames.as_ref().map_or(0, |f| f.num_valid_columns);

    let mut scaled = vec![0.0; trace.len()];
    for modality in [Modality::Audio, Modality::Text] {
        let idx: Vec<usize> = (0..trace.len()).filter(|&i| trace.positions[i].modality == modality).collect();
        let vals: Vec<f64> = idx.iter().map(|&i| trace.weights[i]).collect();
        for (&i, m) in idx.iter().zip(minmax(&vals)) {
            scaled[i] = m;
        }
    }
    Ok(trace
        .positions
        .iter()
        .zip(&trace.weights)
        .zip(scaled)
        .map(|((pos, &weight), minmax)| {
            let label = match pos.modality {
                Modality::Text => features.token_text[pos.index].clone(),
                Modality::Audio => {
                    let start = pos.index * fc.frame_width;
                    let end = ((pos.index + 1) * fc.frame_width).min(valid_columns);
                    format!("{:.3}-{:.3}", start as f64 * secs_per_column, end as f64 * secs_per_column)
                }
            };
            TraceRow {
                modality: pos.modality.to_string(),
                index: pos.index,
                weight,
                minmax,
                label,
            }
        })
        .collect())
}
