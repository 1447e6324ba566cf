//! Mini-batch MSE training with Adam, early stopping on validation loss,
//! selection by validation QWK, and evaluation of checkpoints.

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::audio::{read_wav, AudioClip, AudioError, Frontend, FrontendConfig, SpectrogramFrames};
use crate::corpus::{Checkpoint, CorpusError, GradeScale, Manifest, ResponseRecord};
use crate::metrics::{self, MetricsError, ThresholdSet};
use crate::model::{AttentionTrace, ModelConfig, ModelError, ModelInput, ModelKind, ScorePrediction, ScoringModel};
use crate::tensor::{AdamConfig, AdamState, Graph, Tensor, TensorError};
use crate::text::{encode, load_pretrained_embeddings, tokenize, EmbeddingTable, TextError, TokenSequence, Vocabulary};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("non-finite {0}")]
    NonFinite(String),
}

/// One response with its audio decoded and its grade resolved to an index.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedResponse {
    pub id: String,
    pub grade: usize,
    pub clip: AudioClip,
    pub transcript: String,
}

/// Responses to one prompt, graded on one scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub prompt: String,
    pub scale: GradeScale,
    pub responses: Vec<LoadedResponse>,
}

impl Dataset {
    /// Reads the audio of `records`, which must all answer `prompt`.
    pub fn load(manifest: &Manifest, prompt: &str, records: &[ResponseRecord]) -> Result<Self, TrainError> {
        let scale = manifest
            .scale(prompt)
            .ok_or_else(|| TrainError::Degenerate(format!("prompt {prompt:?} is not declared")))?
            .clone();
        let mut responses = Vec::with_capacity(records.len());
        for r in records {
            if r.prompt != prompt {
                return Err(TrainError::Contract(format!("response {} answers prompt {:?}, not {prompt:?}", r.id, r.prompt)));
            }
            responses.push(LoadedResponse {
                id: r.id.clone(),
                grade: manifest.grade_index(r),
                clip: read_wav(&r.audio)?,
                transcript: r.transcript.clone(),
            });
        }
        Ok(Self {
            prompt: prompt.to_string(),
            scale,
            responses,
        })
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    pub fn grades(&self) -> Vec<usize> {
        self.responses.iter().map(|r| r.grade).collect()
    }
}

/// Model-ready inputs for one response.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    pub frames: Option<SpectrogramFrames>,
    pub tokens: Option<TokenSequence>,
    /// Transcript tokens after truncation, aligned with `tokens`.
    pub token_text: Vec<String>,
}

impl Features {
    pub fn input(&self) -> ModelInput<'_> {
        ModelInput {
            audio: self.frames.as_ref(),
            text: self.tokens.as_ref(),
        }
    }
}

/// Turns raw audio and transcripts into model inputs with fixed budgets.
#[derive(Debug, Clone)]
pub struct Featurizer {
    kind: ModelKind,
    frontend: Frontend,
    vocabulary: Option<Vocabulary>,
    max_columns: usize,
    max_tokens: usize,
}

impl Featurizer {
    pub fn new(
        kind: ModelKind,
        frontend: FrontendConfig,
        vocabulary: Option<Vocabulary>,
        max_columns: usize,
        max_tokens: usize,
    ) -> Result<Self, TrainError> {
        if kind.uses_text() && vocabulary.is_none() {
            return Err(TrainError::Contract(format!("{kind} featurizer needs a vocabulary")));
        }
        Ok(Self {
            kind,
            frontend: Frontend::new(frontend)?,
            vocabulary,
            max_columns,
            max_tokens,
        })
    }

    pub fn for_checkpoint(ck: &Checkpoint) -> Result<Self, TrainError> {
        Self::new(ck.kind(), ck.frontend, ck.vocabulary.clone(), ck.max_columns, ck.max_tokens)
    }

    pub fn frontend(&self) -> &Frontend {
        &self.frontend
    }

    /// Features with `clip` standing in for the response's own audio.
    pub fn featurize_with(&self, clip: &AudioClip, transcript: &str) -> Result<Features, TrainError> {
        let frames = if self.kind.uses_audio() {
            Some(self.frontend.frames(clip, self.max_columns)?)
        } else {
            None
        };
        let (tokens, token_text) = match &self.vocabulary {
            Some(vocab) if self.kind.uses_text() => {
                let toks = tokenize(transcript);
                let seq = encode(&toks, vocab, self.max_tokens);
                let text = toks.into_iter().take(seq.valid_length).collect();
                (Some(seq), text)
            }
            _ => (None, Vec::new()),
        };
        Ok(Features {
            frames,
            tokens,
            token_text,
        })
    }

    pub fn featurize(&self, response: &LoadedResponse) -> Result<Features, TrainError> {
        self.featurize_with(&response.clip, &response.transcript)
    }

    pub fn featurize_all(&self, data: &Dataset) -> Result<Vec<Features>, TrainError> {
        data.responses.iter().map(|r| self.featurize(r)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation-loss improvement before stopping.
    pub patience: usize,
    pub dropout: f64,
    pub seed: u64,
    /// Recorded in the checkpoint so evaluation can rebuild the same split.
    pub split_seed: u64,
    pub model: ModelConfig,
    pub frontend: FrontendConfig,
    /// Token budget; `None` uses the longest training transcript.
    pub max_tokens: Option<usize>,
    pub embeddings: Option<PathBuf>,
    pub freeze_embeddings: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 16,
            max_epochs: 50,
            patience: 5,
            dropout: 0.3,
            seed: 0,
            split_seed: 0,
            model: ModelConfig::default(),
            frontend: FrontendConfig::default(),
            max_tokens: None,
            embeddings: None,
            freeze_embeddings: false,
        }
    }
}

impl TrainConfig {
    /// Desk-scale layer widths with the default optimizer settings.
    pub fn desk() -> Self {
        Self {
            model: ModelConfig::desk(),
            ..Self::default()
        }
    }

    pub fn validate(&self, kind: ModelKind) -> Result<(), TrainError> {
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch size must be at least 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(TrainError::Config("max epochs must be at least 1".into()));
        }
        if self.patience > self.max_epochs {
            return Err(TrainError::Config(format!(
                "patience {} exceeds max epochs {}",
                self.patience, self.max_epochs
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(TrainError::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::Config(format!("learning rate {}", self.learning_rate)));
        }
        if kind.uses_audio() {
            let a = &self.model.acoustic;
            if a.input_channels != self.frontend.n_mels || a.frame_width != self.frontend.frame_width {
                return Err(TrainError::Config(format!(
                    "acoustic encoder expects {}x{} frames but the frontend makes {}x{}",
                    a.input_channels, a.frame_width, self.frontend.n_mels, self.frontend.frame_width
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// `None` when kappa is undefined for this epoch's predictions.
    pub val_qwk: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub kind: ModelKind,
    pub epochs: Vec<EpochRecord>,
    pub selected_epoch: usize,
    pub stopped_early: bool,
    pub wall_time_secs: f64,
}

/// Wall time is measurement, not outcome, so it is excluded.
impl PartialEq for TrainReport {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
            && self.epochs == other.epochs
            && self.selected_epoch == other.selected_epoch
            && self.stopped_early == other.stopped_early
    }
}

impl TrainReport {
    pub fn selected(&self) -> &EpochRecord {
        &self.epochs[self.selected_epoch - 1]
    }

    /// One JSON object per epoch, then a summary object.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for e in &self.epochs {
            out.push_str(&serde_json::to_string(e).expect("serializable"));
            out.push('\n');
        }
        let summary = serde_json::json!({
            "model": self.kind.to_string(),
            "selected_epoch": self.selected_epoch,
            "stopped_early": self.stopped_early,
            "wall_time_secs": self.wall_time_secs,
        });
        out.push_str(&summary.to_string());
        out.push('\n');
        out
    }
}

fn check_finite(what: &str, v: f64) -> Result<f64, TrainError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(TrainError::NonFinite(what.into()))
    }
}

static EVAL_THREADS: AtomicUsize = AtomicUsize::new(1);

/// Worker threads used when scoring many responses at evaluation time.
/// Results do not depend on the count.
pub fn set_eval_threads(n: usize) {
    EVAL_THREADS.store(n.max(1), Ordering::Relaxed);
}

/// Eval-mode normalized scores for every example, in input order.
pub fn predict_all(model: &ScoringModel, features: &[Features]) -> Result<Vec<(f64, AttentionTrace)>, TrainError> {
    let threads = EVAL_THREADS.load(Ordering::Relaxed).min(features.len()).max(1);
    let score = |chunk: &[Features]| -> Result<Vec<(f64, AttentionTrace)>, TrainError> {
        chunk.iter().map(|f| model.predict(&f.input()).map_err(TrainError::from)).collect()
    };
    if threads == 1 {
        return score(features);
    }
    let per = features.len().div_ceil(threads);
    std::thread::scope(|s| {
        let handles: Vec<_> = features.chunks(per).map(|c| s.spawn(move || score(c))).collect();
        let mut out = Vec::with_capacity(features.len());
        for h in handles {
            out.extend(h.join().expect("scoring thread panicked")?);
        }
        Ok(out)
    })
}

fn eval_loss_and_qwk(
    model: &ScoringModel,
    features: &[Features],
    targets: &[f64],
    grades: &[usize],
    levels: usize,
) -> Result<(f64, Option<f64>), TrainError> {
    let scores: Vec<f64> = predict_all(model, features)?.into_iter().map(|(s, _)| s).collect();
    let loss = metrics::mse(targets, &scores)?;
    let predicted: Vec<usize> = scores
        .iter()
        .map(|s| metrics::round_default(s * (levels - 1) as f64, levels))
        .collect();
    let qwk = match metrics::qwk(grades, &predicted, levels) {
        Ok(k) => Some(k),
        Err(MetricsError::UndefinedKappa) => None,
        Err(e) => return Err(e.into()),
    };
    Ok((loss, qwk))
}

/// Mean squared error of one mini-batch and its parameter gradients.
pub fn batch_gradients(
    model: &ScoringModel,
    features: &[&Features],
    targets: &[f64],
    training: bool,
    dropout_rng: &mut dyn FnMut(usize) -> ChaCha8Rng,
) -> Result<(f64, Vec<Tensor>), TrainError> {
    let mut grads: Vec<Tensor> = model.parameters().iter().map(|p| Tensor::zeros(p.value.shape())).collect();
    let mut loss_sum = 0.0;
    for (i, (f, &y)) in features.iter().zip(targets).enumerate() {
        let mut g = Graph::new();
        let mut rng = dropout_rng(i);
        let out = model.forward(&mut g, &f.input(), training, &mut rng)?;
        let target = g.constant(Tensor::vector(vec![y]));
        let diff = g.sub(out.score, target)?;
        let sq = g.mul(diff, diff)?;
        let loss = g.sum(sq);
        loss_sum += g.value(loss).item();
        g.backward(loss)?;
        for (acc, &v) in grads.iter_mut().zip(&out.bound.params) {
            if let Some(gr) = g.grad(v) {
                acc.data_mut().iter_mut().zip(gr.data()).for_each(|(a, b)| *a += b);
            }
        }
    }
    let n = features.len() as f64;
    for gr in &mut grads {
        gr.data_mut().iter_mut().for_each(|v| *v /= n);
    }
    Ok((loss_sum / n, grads))
}

fn derived_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Trains one model kind and returns the checkpoint of the epoch with the
/// best validation QWK (earliest on ties).
pub fn train(
    kind: ModelKind,
    train_set: &Dataset,
    val_set: &Dataset,
    config: &TrainConfig,
) -> Result<(Checkpoint, TrainReport), TrainError> {
    let started = Instant::now();
    config.validate(kind)?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(TrainError::Degenerate(format!(
            "training needs non-empty splits, got {} train and {} val",
            train_set.len(),
            val_set.len()
        )));
    }
    if train_set.scale != val_set.scale {
        return Err(TrainError::Contract("train and val grade scales differ".into()));
    }
    let scale = &train_set.scale;
    let levels = scale.len();
    let mut model_config = config.model;
    model_config.dropout = config.dropout;

    let mut init_rng = derived_rng(config.seed, 0);
    let (vocabulary, embeddings) = if kind.uses_text() {
        let transcripts: Vec<&str> = train_set.responses.iter().map(|r| r.transcript.as_str()).collect();
        let vocab = Vocabulary::build(&transcripts)?;
        let dim = model_config.lexical.embedding_dim;
        let mut table = match &config.embeddings {
            Some(path) => {
                let (table, coverage) = load_pretrained_embeddings(path, &vocab, dim, &mut init_rng)?;
                log::info!("pretrained embeddings cover {:.1}% of the vocabulary", 100.0 * coverage);
                table
            }
            None => EmbeddingTable::random(&vocab, dim, &mut init_rng),
        };
        table.trainable = !config.freeze_embeddings;
        (Some(vocab), Some(table))
    } else {
        (None, None)
    };
    let frontend = Frontend::new(config.frontend)?;
    let max_columns = train_set
        .responses
        .iter()
        .map(|r| frontend.column_count(&r.clip))
        .max()
        .expect("non-empty");
    let max_tokens = config.max_tokens.unwrap_or_else(|| {
        train_set
            .responses
            .iter()
            .map(|r| tokenize(&r.transcript).len())
            .max()
            .unwrap_or(1)
            .max(1)
    });
    let featurizer = Featurizer::new(kind, config.frontend, vocabulary.clone(), max_columns, max_tokens)?;
    let train_x = featurizer.featurize_all(train_set)?;
    let val_x = featurizer.featurize_all(val_set)?;
    let train_y: Vec<f64> = train_set.responses.iter().map(|r| scale.normalize_index(r.grade)).collect();
    let val_y: Vec<f64> = val_set.responses.iter().map(|r| scale.normalize_index(r.grade)).collect();
    let val_grades = val_set.grades();

    let mut model = ScoringModel::new(kind, model_config, embeddings, &mut init_rng)?;
    let frozen: Vec<bool> = model
        .parameters()
        .iter()
        .map(|p| config.freeze_embeddings && p.name == "text.embedding")
        .collect();
    let mut params = model.parameter_values();
    let mut adam = AdamState::new(
        AdamConfig {
            learning_rate: config.learning_rate,
            ..AdamConfig::default()
        },
        &params,
    );

    let mut epochs = Vec::new();
    let mut best_qwk: Option<(f64, usize, Vec<Tensor>)> = None;
    let mut best_loss: Option<(f64, usize, Vec<Tensor>)> = None;
    let mut stale = 0;
    let mut stopped_early = false;
    let mut order: Vec<usize> = (0..train_x.len()).collect();
    for epoch in 1..=config.max_epochs {
        let mut shuffle_rng = derived_rng(config.seed, 1 + 2 * epoch as u64);
        order.shuffle(&mut shuffle_rng);
        for batch in order.chunks(config.batch_size) {
            let feats: Vec<&Features> = batch.iter().map(|&i| &train_x[i]).collect();
            let ys: Vec<f64> = batch.iter().map(|&i| train_y[i]).collect();
            let dropout_seed = config.seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            let mut rng_for = |k: usize| derived_rng(dropout_seed, 2 + batch[k] as u64);
            let (_, mut grads) = batch_gradients(&model, &feats, &ys, true, &mut rng_for)?;
            for (g, &f) in grads.iter_mut().zip(&frozen) {
                if f {
                    g.data_mut().fill(0.0);
                }
            }
            adam.apply(&mut params, &grads)?;
            model.set_parameter_values(params.clone())?;
        }
        let (train_loss, _) = eval_loss_and_qwk(&model, &train_x, &train_y, &train_set.grades(), levels)?;
        let (val_loss, val_qwk) = eval_loss_and_qwk(&model, &val_x, &val_y, &val_grades, levels)?;
        check_finite("training loss", train_loss)?;
        check_finite("validation loss", val_loss)?;
        log::info!(
            "{kind} epoch {epoch}: train loss {train_loss:.5}, val loss {val_loss:.5}, val qwk {}",
            val_qwk.map_or("undefined".to_string(), |q| format!("{q:.4}"))
        );
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_qwk,
        });
        if let Some(q) = val_qwk {
            if best_qwk.as_ref().is_none_or(|(b, _, _)| q > *b) {
                best_qwk = Some((q, epoch, params.clone()));
            }
        }
        if best_loss.as_ref().is_none_or(|(b, _, _)| val_loss < *b) {
            best_loss = Some((val_loss, epoch, params.clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                stopped_early = epoch < config.max_epochs;
                break;
            }
        }
    }
    let (selected_epoch, best_val_qwk, best_params) = match best_qwk {
        Some((q, e, p)) => (e, q, p),
        None => {
            log::warn!("validation QWK undefined in every epoch; selecting by validation loss");
            let (_, e, p) = best_loss.expect("at least one epoch");
            (e, f64::NAN, p)
        }
    };
    model.set_parameter_values(best_params)?;
    let checkpoint = Checkpoint::new(
        model,
        config.frontend,
        vocabulary,
        train_set.prompt.clone(),
        scale.clone(),
        max_columns,
        max_tokens,
        config.split_seed,
        selected_epoch,
        best_val_qwk,
    );
    let report = TrainReport {
        kind,
        epochs,
        selected_epoch,
        stopped_early,
        wall_time_secs: started.elapsed().as_secs_f64(),
    };
    Ok((checkpoint, report))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResponsePrediction {
    pub id: String,
    pub human: usize,
    pub prediction: ScorePrediction,
    pub trace: AttentionTrace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// `None` when kappa is undefined on this data.
    pub qwk: Option<f64>,
    /// Squared error of the rescaled continuous score against the human grade.
    pub mse: f64,
    /// Squared error of the discretized grade against the human grade.
    pub mse_rounded: f64,
    pub predictions: Vec<ResponsePrediction>,
}

impl Evaluation {
    pub fn raw_scores(&self) -> Vec<f64> {
        self.predictions.iter().map(|p| p.prediction.rescaled).collect()
    }

    pub fn human_grades(&self) -> Vec<usize> {
        self.predictions.iter().map(|p| p.human).collect()
    }
}

pub fn check_scale(ck: &Checkpoint, data: &Dataset) -> Result<(), TrainError> {
    if ck.scale != data.scale {
        return Err(TrainError::Contract(format!(
            "dataset grades {:?} do not match checkpoint scale {:?}",
            data.scale.labels(),
            ck.scale.labels()
        )));
    }
    Ok(())
}

/// Scores pre-computed features and summarizes agreement with `grades`.
pub fn evaluate_features(
    ck: &Checkpoint,
    ids: &[String],
    grades: &[usize],
    features: &[Features],
    thresholds: Option<&ThresholdSet>,
) -> Result<Evaluation, TrainError> {
    let levels = ck.scale.len();
    if let Some(t) = thresholds {
        if t.levels() != levels {
            return Err(TrainError::Contract(format!(
                "{} thresholds for a {levels}-level scale",
                t.cuts().len()
            )));
        }
    }
    let scored = predict_all(&ck.model, features)?;
    let mut predictions = Vec::with_capacity(features.len());
    for ((id, &human), (score, trace)) in ids.iter().zip(grades).zip(scored) {
        let prediction = ScorePrediction::new(score, levels, |r| match thresholds {
            Some(t) => t.apply(r),
            None => metrics::round_default(r, levels),
        });
        predictions.push(ResponsePrediction {
            id: id.clone(),
            human,
            prediction,
            trace,
        });
    }
    if predictions.is_empty() {
        return Err(TrainError::Degenerate("nothing to evaluate".into()));
    }
    let human: Vec<usize> = predictions.iter().map(|p| p.human).collect();
    let graded: Vec<usize> = predictions.iter().map(|p| p.prediction.grade).collect();
    let qwk = match metrics::qwk(&human, &graded, levels) {
        Ok(k) => Some(k),
        Err(MetricsError::UndefinedKappa) => None,
        Err(e) => return Err(e.into()),
    };
    let human_f: Vec<f64> = human.iter().map(|&h| h as f64).collect();
    let rescaled: Vec<f64> = predictions.iter().map(|p| p.prediction.rescaled).collect();
    let graded_f: Vec<f64> = graded.iter().map(|&g| g as f64).collect();
    Ok(Evaluation {
        qwk,
        mse: metrics::mse(&human_f, &rescaled)?,
        mse_rounded: metrics::mse(&human_f, &graded_f)?,
        predictions,
    })
}

/// Scores every response in `data` with the checkpoint.
pub fn evaluate(ck: &Checkpoint, data: &Dataset, thresholds: Option<&ThresholdSet>) -> Result<Evaluation, TrainError> {
    check_scale(ck, data)?;
    let featurizer = Featurizer::for_checkpoint(ck)?;
    let features = featurizer.featurize_all(data)?;
    let ids: Vec<String> = data.responses.iter().map(|r| r.id.clone()).collect();
    evaluate_features(ck, &ids, &data.grades(), &features, thresholds)
}
