//! The three scoring networks: audio-only (`A`), text-only (`T`), and
//! multimodal attention fusion (`MMAF`).
//!
//! Acoustic branch: each `[mels x columns]` frame runs through sets of
//! `conv -> relu -> conv -> relu -> maxpool` with the filter count doubling
//! per set, then a global max over time; the per-frame vectors feed a
//! bidirectional LSTM. Lexical branch: embedding lookup then a bidirectional
//! LSTM over the unpadded tokens. Fusion concatenates both state sequences
//! along time and attends over all of them with a single softmax, so the
//! attention mass splits between modalities.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

use crate::audio::SpectrogramFrames;
use crate::tensor::{bidirectional_scan, Graph, LstmWeights, Tensor, TensorError, Var};
use crate::text::{EmbeddingTable, TokenSequence};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("{0} model needs {1} input")]
    MissingInput(ModelKind, &'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    /// BDRCNN with attention over audio frames.
    Audio,
    /// BDLSTM with attention over transcript tokens.
    Text,
    /// Attention fusion over both.
    Fusion,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Audio, ModelKind::Text, ModelKind::Fusion];

    pub fn code(self) -> u8 {
        match self {
            ModelKind::Audio => 0,
            ModelKind::Text => 1,
            ModelKind::Fusion => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.code() == code)
    }

    pub fn uses_audio(self) -> bool {
        self != ModelKind::Text
    }

    pub fn uses_text(self) -> bool {
        self != ModelKind::Audio
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Audio => "A",
            ModelKind::Text => "T",
            ModelKind::Fusion => "MMAF",
        })
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "A" | "a" => Ok(ModelKind::Audio),
            "T" | "t" => Ok(ModelKind::Text),
            "MMAF" | "mmaf" => Ok(ModelKind::Fusion),
            other => Err(format!("unknown model kind {other:?}; valid kinds are A, T, MMAF")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcousticEncoderConfig {
    /// Mel bands, used as convolution input channels.
    pub input_channels: usize,
    /// Time columns per frame.
    pub frame_width: usize,
    pub conv_sets: usize,
    pub convs_per_set: usize,
    pub base_filters: usize,
    pub kernel_width: usize,
    pub pool_window: usize,
    pub lstm_hidden: usize,
}

impl Default for AcousticEncoderConfig {
    fn default() -> Self {
        Self {
            input_channels: 128,
            frame_width: 128,
            conv_sets: 5,
            convs_per_set: 2,
            base_filters: 32,
            kernel_width: 3,
            pool_window: 2,
            lstm_hidden: 128,
        }
    }
}

impl AcousticEncoderConfig {
    /// Filters in set `s` (0-based): `base_filters * 2^s`.
    pub fn filters(&self, set: usize) -> usize {
        self.base_filters << set
    }

    pub fn frame_vector_width(&self) -> usize {
        self.filters(self.conv_sets - 1)
    }

    pub fn output_width(&self) -> usize {
        2 * self.lstm_hidden
    }

    fn padding(&self) -> usize {
        (self.kernel_width - 1) / 2
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LexicalEncoderConfig {
    pub embedding_dim: usize,
    pub lstm_hidden: usize,
}

impl Default for LexicalEncoderConfig {
    fn default() -> Self {
        Self {
            embedding_dim: 300,
            lstm_hidden: 128,
        }
    }
}

impl LexicalEncoderConfig {
    pub fn output_width(&self) -> usize {
        2 * self.lstm_hidden
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub acoustic: AcousticEncoderConfig,
    pub lexical: LexicalEncoderConfig,
    /// Applied to the context vector before the output layer while training.
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            acoustic: AcousticEncoderConfig::default(),
            lexical: LexicalEncoderConfig::default(),
            dropout: 0.3,
        }
    }
}

impl ModelConfig {
    /// Narrow layers that train on a laptop CPU in minutes; frame geometry
    /// and layer structure are unchanged.
    pub fn desk() -> Self {
        Self {
            acoustic: AcousticEncoderConfig {
                base_filters: 4,
                lstm_hidden: 16,
                ..AcousticEncoderConfig::default()
            },
            lexical: LexicalEncoderConfig {
                embedding_dim: 32,
                lstm_hidden: 16,
            },
            dropout: 0.3,
        }
    }

    pub fn validate(&self, kind: ModelKind) -> Result<(), ModelError> {
        let a = &self.acoustic;
        let t = &self.lexical;
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if kind.uses_audio() {
            if a.conv_sets == 0 || a.convs_per_set == 0 || a.base_filters == 0 || a.kernel_width == 0 {
                return Err(ModelError::Config(format!("empty acoustic stack {a:?}")));
            }
            if a.pool_window == 0 || a.lstm_hidden == 0 || a.input_channels == 0 {
                return Err(ModelError::Config(format!("acoustic config {a:?}")));
            }
            let mut steps = a.frame_width;
            for _ in 0..a.conv_sets {
                for _ in 0..a.convs_per_set {
                    if a.kernel_width > steps + 2 * a.padding() {
                        return Err(ModelError::Config(format!("frame width {} too small for the stack", a.frame_width)));
                    }
                    steps = steps + 2 * a.padding() - a.kernel_width + 1;
                }
                steps /= a.pool_window;
                if steps == 0 {
                    return Err(ModelError::Config(format!("frame width {} pooled away", a.frame_width)));
                }
            }
        }
        if kind.uses_text() && (t.embedding_dim == 0 || t.lstm_hidden == 0) {
            return Err(ModelError::Config(format!("lexical config {t:?}")));
        }
        if kind == ModelKind::Fusion && a.output_width() != t.output_width() {
            return Err(ModelError::Config(format!(
                "fusion needs equal encoder widths, got {} and {}",
                a.output_width(),
                t.output_width()
            )));
        }
        Ok(())
    }

    pub fn state_width(&self, kind: ModelKind) -> usize {
        match kind {
            ModelKind::Text => self.lexical.output_width(),
            _ => self.acoustic.output_width(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Modality {
    Audio,
    Text,
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modality::Audio => "audio",
            Modality::Text => "text",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TracePosition {
    pub modality: Modality,
    /// Frame index for audio, token index for text.
    pub index: usize,
}

/// Attention weights over the pooled time steps, tagged by modality.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionTrace {
    pub weights: Vec<f64>,
    pub positions: Vec<TracePosition>,
}

impl AttentionTrace {
    fn tagged(weights: Vec<f64>, audio: usize, text: usize) -> Self {
        let positions = (0..audio)
            .map(|index| TracePosition {
                modality: Modality::Audio,
                index,
            })
            .chain((0..text).map(|index| TracePosition {
                modality: Modality::Text,
                index,
            }))
            .collect();
        Self { weights, positions }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn count(&self, modality: Modality) -> usize {
        self.positions.iter().filter(|p| p.modality == modality).count()
    }

    pub fn mass(&self, modality: Modality) -> f64 {
        self.weights
            .iter()
            .zip(&self.positions)
            .filter(|(_, p)| p.modality == modality)
            .map(|(w, _)| w)
            .sum()
    }
}

/// Share of attention on each modality as `(text_pct, audio_pct)`.
pub fn modality_split(trace: &AttentionTrace) -> (f64, f64) {
    let text = trace.mass(Modality::Text);
    let audio = trace.mass(Modality::Audio);
    let total = text + audio;
    (100.0 * text / total, 100.0 * audio / total)
}

/// A model output on the normalized and original grade scales.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScorePrediction {
    pub normalized: f64,
    pub rescaled: f64,
    pub grade: usize,
}

impl ScorePrediction {
    /// Rescales to `[0, levels - 1]` and discretizes with `to_grade`.
    pub fn new(normalized: f64, levels: usize, to_grade: impl Fn(f64) -> usize) -> Self {
        let rescaled = normalized * (levels - 1) as f64;
        Self {
            normalized,
            rescaled,
            grade: to_grade(rescaled),
        }
    }
}

/// Inputs for one response; which fields are required depends on the model kind.
#[derive(Debug, Clone, Copy, Default)]
pub struct ModelInput<'a> {
    pub audio: Option<&'a SpectrogramFrames>,
    pub text: Option<&'a TokenSequence>,
}

/// Graph handles for the acoustic encoder's parameters.
#[derive(Debug, Clone)]
pub struct AcousticVars {
    /// `(kernels, bias)` per convolution, set-major.
    pub convs: Vec<(Var, Var)>,
    pub forward: LstmWeights,
    pub backward: LstmWeights,
}

#[derive(Debug, Clone)]
pub struct LexicalVars {
    pub embedding: Var,
    pub forward: LstmWeights,
    pub backward: LstmWeights,
}

/// Per-frame CNN followed by a bidirectional LSTM over the valid frames.
pub fn encode_audio(
    g: &mut Graph,
    frames: &SpectrogramFrames,
    vars: &AcousticVars,
    config: &AcousticEncoderConfig,
) -> Result<Var, ModelError> {
    let valid = frames.valid_frames();
    if valid.is_empty() {
        return Err(ModelError::Degenerate("no audio frames".into()));
    }
    let mut vectors = Vec::with_capacity(valid.len());
    for frame in valid {
        if frame.shape() != [config.input_channels, config.frame_width] {
            return Err(TensorError::Dimension {
                op: "encode_audio",
                left: frame.shape().to_vec(),
                right: vec![config.input_channels, config.frame_width],
            }
            .into());
        }
        let mut x = g.constant(frame.clone());
        let mut conv = vars.convs.iter();
        for _ in 0..config.conv_sets {
            for _ in 0..config.convs_per_set {
                let &(k, b) = conv.next().ok_or_else(|| ModelError::Config("missing conv weights".into()))?;
                let y = g.conv1d(x, k, b, config.padding())?;
                x = g.relu(y);
            }
            x = g.maxpool1d(x, config.pool_window)?;
        }
        vectors.push(g.global_maxpool(x)?);
    }
    let seq = g.stack(&vectors)?;
    Ok(bidirectional_scan(g, seq, &vars.forward, &vars.backward)?)
}

/// Embedding lookup and bidirectional LSTM over the unpadded tokens.
pub fn encode_text(g: &mut Graph, tokens: &TokenSequence, vars: &LexicalVars) -> Result<Var, ModelError> {
    let ids = tokens.valid_ids();
    if ids.is_empty() {
        return Err(ModelError::Degenerate("transcript has no tokens".into()));
    }
    let embedded = g.gather_rows(vars.embedding, ids)?;
    Ok(bidirectional_scan(g, embedded, &vars.forward, &vars.backward)?)
}

/// `e = states . w`, `a = softmax(e)`, `c = sum_t a_t states_t`.
pub fn attention_pool(g: &mut Graph, states: Var, w: Var) -> Result<(Var, Var), ModelError> {
    let shape = g.value(states).shape().to_vec();
    if shape.len() != 2 || g.value(w).shape() != [shape[1]] {
        return Err(TensorError::Dimension {
            op: "attention_pool",
            left: shape,
            right: g.value(w).shape().to_vec(),
        }
        .into());
    }
    let (steps, width) = (shape[0], shape[1]);
    let w_col = g.reshape(w, &[width, 1])?;
    let scores = g.matmul(states, w_col)?;
    let scores = g.reshape(scores, &[steps])?;
    let weights = g.softmax(scores)?;
    let a_row = g.reshape(weights, &[1, steps])?;
    let context = g.matmul(a_row, states)?;
    let context = g.reshape(context, &[width])?;
    Ok((context, weights))
}

/// Output head shared by all model kinds.
#[derive(Debug, Clone, Copy)]
pub struct HeadVars {
    pub attention: Var,
    pub dense_w: Var,
    pub dense_b: Var,
}

fn score_head<R: Rng + ?Sized>(
    g: &mut Graph,
    states: Var,
    head: &HeadVars,
    dropout: f64,
    training: bool,
    rng: &mut R,
) -> Result<(Var, Var), ModelError> {
    let (context, weights) = attention_pool(g, states, head.attention)?;
    let context = g.dropout(context, dropout, training, rng)?;
    let logit = g.dot(context, head.dense_w)?;
    let logit = g.reshape(logit, &[1])?;
    let logit = g.add(logit, head.dense_b)?;
    let score = g.sigmoid(logit);
    Ok((score, weights))
}

/// Concatenates audio and text states along time, attends over the joint
/// sequence, and scores. Returns the `[1]` score and the tagged trace.
#[allow(clippy::too_many_arguments)]
pub fn fuse_and_score<R: Rng + ?Sized>(
    g: &mut Graph,
    audio_states: Var,
    text_states: Var,
    head: &HeadVars,
    dropout: f64,
    training: bool,
    rng: &mut R,
) -> Result<(Var, AttentionTrace), ModelError> {
    let (sa, st) = (g.value(audio_states).shape().to_vec(), g.value(text_states).shape().to_vec());
    if sa.len() != 2 || st.len() != 2 || sa[1] != st[1] {
        return Err(TensorError::Dimension {
            op: "fuse_and_score",
            left: sa,
            right: st,
        }
        .into());
    }
    let joint = g.concat(&[audio_states, text_states])?;
    let (score, weights) = score_head(g, joint, head, dropout, training, rng)?;
    let trace = AttentionTrace::tagged(g.value(weights).data().to_vec(), sa[0], st[0]);
    Ok((score, trace))
}

/// Attention and scoring over a single modality's states.
pub fn unimodal_score<R: Rng + ?Sized>(
    g: &mut Graph,
    states: Var,
    modality: Modality,
    head: &HeadVars,
    dropout: f64,
    training: bool,
    rng: &mut R,
) -> Result<(Var, AttentionTrace), ModelError> {
    let (score, weights) = score_head(g, states, head, dropout, training, rng)?;
    let w = g.value(weights).data().to_vec();
    let n = w.len();
    let trace = match modality {
        Modality::Audio => AttentionTrace::tagged(w, n, 0),
        Modality::Text => AttentionTrace::tagged(w, 0, n),
    };
    Ok((score, trace))
}

/// Named parameter, in checkpoint order.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
}

/// Graph nodes for every parameter plus the structured views over them.
#[derive(Debug)]
pub struct Bound {
    pub params: Vec<Var>,
    pub acoustic: Option<AcousticVars>,
    pub lexical: Option<LexicalVars>,
    pub head: HeadVars,
}

/// Result of one forward pass.
#[derive(Debug)]
pub struct Forward {
    /// `[1]` score in (0, 1).
    pub score: Var,
    pub trace: AttentionTrace,
    pub bound: Bound,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoringModel {
    kind: ModelKind,
    config: ModelConfig,
    params: Vec<Parameter>,
}

fn glorot<R: Rng + ?Sized>(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_fn(shape, |_| rng.gen_range(-limit..limit))
}

fn lstm_init<R: Rng + ?Sized>(prefix: &str, d_in: usize, h: usize, rng: &mut R) -> Vec<Parameter> {
    let mut bias = vec![0.0; 4 * h];
    bias[h..2 * h].fill(1.0);
    vec![
        Parameter {
            name: format!("{prefix}.input"),
            value: glorot(&[d_in, 4 * h], d_in, 4 * h, rng),
        },
        Parameter {
            name: format!("{prefix}.hidden"),
            value: glorot(&[h, 4 * h], h, 4 * h, rng),
        },
        Parameter {
            name: format!("{prefix}.bias"),
            value: Tensor::vector(bias),
        },
    ]
}

impl ScoringModel {
    /// Fresh parameters. Text-using kinds take an embedding table whose row
    /// count fixes the vocabulary size and whose width must match the config.
    pub fn new<R: Rng + ?Sized>(
        kind: ModelKind,
        config: ModelConfig,
        embeddings: Option<EmbeddingTable>,
        rng: &mut R,
    ) -> Result<Self, ModelError> {
        config.validate(kind)?;
        let mut params = Vec::new();
        if kind.uses_audio() {
            let a = &config.acoustic;
            let mut c_in = a.input_channels;
            for s in 0..a.conv_sets {
                let c_out = a.filters(s);
                for l in 0..a.convs_per_set {
                    params.push(Parameter {
                        name: format!("audio.conv{s}.{l}.kernels"),
                        value: glorot(&[c_out, c_in, a.kernel_width], c_in * a.kernel_width, c_out * a.kernel_width, rng),
                    });
                    params.push(Parameter {
                        name: format!("audio.conv{s}.{l}.bias"),
                        value: Tensor::zeros(&[c_out]),
                    });
                    c_in = c_out;
                }
            }
            params.extend(lstm_init("audio.lstm.fwd", c_in, a.lstm_hidden, rng));
            params.extend(lstm_init("audio.lstm.bwd", c_in, a.lstm_hidden, rng));
        }
        if kind.uses_text() {
            let t = &config.lexical;
            let table = embeddings.ok_or(ModelError::MissingInput(kind, "an embedding table"))?;
            if table.dim() != t.embedding_dim {
                return Err(ModelError::Config(format!(
                    "embedding table width {} but config says {}",
                    table.dim(),
                    t.embedding_dim
                )));
            }
            params.push(Parameter {
                name: "text.embedding".into(),
                value: table.matrix,
            });
            params.extend(lstm_init("text.lstm.fwd", t.embedding_dim, t.lstm_hidden, rng));
            params.extend(lstm_init("text.lstm.bwd", t.embedding_dim, t.lstm_hidden, rng));
        }
        let width = config.state_width(kind);
        params.push(Parameter {
            name: "attention.w".into(),
            value: Tensor::from_fn(&[width], |_| rng.gen_range(-0.1..0.1)),
        });
        params.push(Parameter {
            name: "dense.w".into(),
            value: glorot(&[width], width, 1, rng),
        });
        params.push(Parameter {
            name: "dense.b".into(),
            value: Tensor::zeros(&[1]),
        });
        Ok(Self { kind, config, params })
    }

    /// Reassembles a model from stored parameters, checking names and shapes
    /// against what the config implies.
    pub fn from_parameters(kind: ModelKind, config: ModelConfig, params: Vec<Parameter>) -> Result<Self, ModelError> {
        let vocab = params
            .iter()
            .find(|p| p.name == "text.embedding")
            .map(|p| p.value.shape()[0]);
        let dim = config.lexical.embedding_dim;
        let template = Self::new(
            kind,
            config,
            vocab.map(|v| EmbeddingTable {
                matrix: Tensor::zeros(&[v, dim]),
                trainable: true,
            }),
            &mut rand::rngs::mock::StepRng::new(0, 0),
        )?;
        if template.params.len() != params.len() {
            return Err(ModelError::Config(format!(
                "expected {} parameter blocks, found {}",
                template.params.len(),
                params.len()
            )));
        }
        for (want, got) in template.params.iter().zip(&params) {
            if want.name != got.name || want.value.shape() != got.value.shape() {
                return Err(ModelError::Config(format!(
                    "parameter {} {:?} does not match expected {} {:?}",
                    got.name,
                    got.value.shape(),
                    want.name,
                    want.value.shape()
                )));
            }
        }
        Ok(Self { kind, config, params })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn parameters(&self) -> &[Parameter] {
        &self.params
    }

    pub fn parameter_values(&self) -> Vec<Tensor> {
        self.params.iter().map(|p| p.value.clone()).collect()
    }

    /// Overwrites parameter values in order; shapes must match.
    pub fn set_parameter_values(&mut self, values: Vec<Tensor>) -> Result<(), ModelError> {
        if values.len() != self.params.len() {
            return Err(ModelError::Config("parameter count mismatch".into()));
        }
        for (p, v) in self.params.iter_mut().zip(values) {
            if p.value.shape() != v.shape() {
                return Err(TensorError::Dimension {
                    op: "set_parameters",
                    left: p.value.shape().to_vec(),
                    right: v.shape().to_vec(),
                }
                .into());
            }
            p.value = v;
        }
        Ok(())
    }

    pub fn parameters_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.params.iter_mut().map(|p| &mut p.value)
    }

    pub fn vocab_size(&self) -> Option<usize> {
        self.params
            .iter()
            .find(|p| p.name == "text.embedding")
            .map(|p| p.value.shape()[0])
    }

    /// Places every parameter on the graph as a gradient-receiving leaf.
    pub fn bind(&self, g: &mut Graph) -> Bound {
        let params: Vec<Var> = self.params.iter().map(|p| g.param(p.value.clone())).collect();
        let mut it = params.iter().copied();
        let lstm = |it: &mut dyn Iterator<Item = Var>| LstmWeights {
            input: it.next().unwrap(),
            hidden: it.next().unwrap(),
            bias: it.next().unwrap(),
        };
        let acoustic = self.kind.uses_audio().then(|| {
            let a = &self.config.acoustic;
            let convs = (0..a.conv_sets * a.convs_per_set)
                .map(|_| (it.next().unwrap(), it.next().unwrap()))
                .collect();
            AcousticVars {
                convs,
                forward: lstm(&mut it),
                backward: lstm(&mut it),
            }
        });
        let lexical = self.kind.uses_text().then(|| LexicalVars {
            embedding: it.next().unwrap(),
            forward: lstm(&mut it),
            backward: lstm(&mut it),
        });
        let head = HeadVars {
            attention: it.next().unwrap(),
            dense_w: it.next().unwrap(),
            dense_b: it.next().unwrap(),
        };
        Bound {
            params,
            acoustic,
            lexical,
            head,
        }
    }

    pub fn forward<R: Rng + ?Sized>(
        &self,
        g: &mut Graph,
        input: &ModelInput<'_>,
        training: bool,
        rng: &mut R,
    ) -> Result<Forward, ModelError> {
        let bound = self.bind(g);
        let audio_states = match (&bound.acoustic, input.audio) {
            (Some(vars), Some(frames)) => Some(encode_audio(g, frames, vars, &self.config.acoustic)?),
            (Some(_), None) => return Err(ModelError::MissingInput(self.kind, "audio")),
            _ => None,
        };
        let text_states = match (&bound.lexical, input.text) {
            (Some(vars), Some(tokens)) => Some(encode_text(g, tokens, vars)?),
            (Some(_), None) => return Err(ModelError::MissingInput(self.kind, "transcript")),
            _ => None,
        };
        let dropout = self.config.dropout;
        let (score, trace) = match (audio_states, text_states) {
            (Some(a), Some(t)) => fuse_and_score(g, a, t, &bound.head, dropout, training, rng)?,
            (Some(a), None) => unimodal_score(g, a, Modality::Audio, &bound.head, dropout, training, rng)?,
            (None, Some(t)) => unimodal_score(g, t, Modality::Text, &bound.head, dropout, training, rng)?,
            (None, None) => unreachable!("every kind uses at least one modality"),
        };
        Ok(Forward { score, trace, bound })
    }

    /// Eval-mode score in (0, 1) with its attention trace.
    pub fn predict(&self, input: &ModelInput<'_>) -> Result<(f64, AttentionTrace), ModelError> {
        let mut g = Graph::new();
        let mut no_rng = rand::rngs::mock::StepRng::new(0, 0);
        let out = self.forward(&mut g, input, false, &mut no_rng)?;
        Ok((g.value(out.score).item(), out.trace))
    }
}
