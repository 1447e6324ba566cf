//! Binary checkpoint format.
//!
//! ```text
//! "SGC1" | version u16 | kind u8 | blocks...
//! block  = name_len u16 | name | payload_len u32 | payload
//! ```
//! All integers little-endian. Blocks appear in a fixed order: `config`,
//! `vocab` (text-using kinds), `scale`, `meta`, then one `param:<name>` per
//! parameter. A parameter payload is `ndim u8 | dims u32... | f32 data`.

use std::fs;
use std::path::Path;

use super::{CorpusError, GradeScale};
use crate::audio::FrontendConfig;
use crate::config::{self, KeyValues};
use crate::model::{ModelConfig, ModelKind, Parameter, ScoringModel};
use crate::tensor::Tensor;
use crate::text::Vocabulary;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SGC1";
pub const CHECKPOINT_VERSION: u16 = 1;

const META_KEYS: &[&str] = &[
    "prompt",
    "max_columns",
    "max_tokens",
    "split_seed",
    "selected_epoch",
    "best_val_qwk",
];

/// A trained model with everything needed to score new responses.
/// Parameters are held at 32-bit precision so that saving is lossless.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ScoringModel,
    pub frontend: FrontendConfig,
    pub vocabulary: Option<Vocabulary>,
    pub prompt: String,
    pub scale: GradeScale,
    /// Spectrogram column budget fixed at training time.
    pub max_columns: usize,
    pub max_tokens: usize,
    pub split_seed: u64,
    /// 1-based epoch whose parameters were kept.
    pub selected_epoch: usize,
    /// NaN when validation kappa was undefined.
    pub best_val_qwk: f64,
}

fn quantize(mut model: ScoringModel) -> ScoringModel {
    for t in model.parameters_mut() {
        t.data_mut().iter_mut().for_each(|v| *v = f64::from(*v as f32));
    }
    model
}

impl Checkpoint {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        model: ScoringModel,
        frontend: FrontendConfig,
        vocabulary: Option<Vocabulary>,
        prompt: String,
        scale: GradeScale,
        max_columns: usize,
        max_tokens: usize,
        split_seed: u64,
        selected_epoch: usize,
        best_val_qwk: f64,
    ) -> Self {
        Self {
            model: quantize(model),
            frontend,
            vocabulary,
            prompt,
            scale,
            max_columns,
            max_tokens,
            split_seed,
            selected_epoch,
            best_val_qwk,
        }
    }

    pub fn kind(&self) -> ModelKind {
        self.model.kind()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.push(self.kind().code());

        let mut cfg = KeyValues::default();
        config::write_model_config(&mut cfg, self.model.config());
        config::write_frontend_config(&mut cfg, &self.frontend);
        push_block(&mut out, "config", cfg.to_text().as_bytes());

        if let Some(v) = &self.vocabulary {
            let text: String = v.learned_tokens().iter().map(|t| format!("{t}\n")).collect();
            push_block(&mut out, "vocab", text.as_bytes());
        }

        let labels: String = self.scale.labels().iter().map(|l| format!("{l}\n")).collect();
        push_block(&mut out, "scale", labels.as_bytes());

        let mut meta = KeyValues::default();
        meta.set("prompt", &self.prompt);
        meta.set("max_columns", self.max_columns);
        meta.set("max_tokens", self.max_tokens);
        meta.set("split_seed", self.split_seed);
        meta.set("selected_epoch", self.selected_epoch);
        meta.set("best_val_qwk", self.best_val_qwk);
        push_block(&mut out, "meta", meta.to_text().as_bytes());

        for p in self.model.parameters() {
            let shape = p.value.shape();
            let mut payload = vec![shape.len() as u8];
            for &d in shape {
                payload.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in p.value.data() {
                payload.extend_from_slice(&(v as f32).to_le_bytes());
            }
            push_block(&mut out, &format!("param:{}", p.name), &payload);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CorpusError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(CorpusError::Format("bad magic; not a checkpoint file".into()));
        }
        let version = r.u16()?;
        if version != CHECKPOINT_VERSION {
            return Err(CorpusError::Format(format!(
                "unsupported version {version}, expected {CHECKPOINT_VERSION}"
            )));
        }
        let code = r.u8()?;
        let kind = ModelKind::from_code(code).ok_or_else(|| CorpusError::Format(format!("unknown model kind {code}")))?;

        let mut blocks = Vec::new();
        while r.pos < bytes.len() {
            let name_len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| CorpusError::Format("block name is not UTF-8".into()))?
                .to_string();
            let len = r.u32()? as usize;
            blocks.push((name, r.take(len)?));
        }
        let mut it = blocks.into_iter().peekable();
        let mut expect = |want: &str| -> Result<&[u8], CorpusError> {
            match it.next() {
                Some((name, payload)) if name == want => Ok(payload),
                Some((name, _)) => Err(CorpusError::Format(format!("expected block {want}, found {name}"))),
                None => Err(CorpusError::Format(format!("missing block {want}"))),
            }
        };

        let cfg = KeyValues::parse(utf8(expect("config")?)?)?;
        let all: Vec<&str> = config::MODEL_KEYS.iter().chain(config::FRONTEND_KEYS).copied().collect();
        cfg.reject_unknown(&all)?;
        let mut model_config = ModelConfig::default();
        config::read_model_config(&cfg, &mut model_config)?;
        let mut frontend = FrontendConfig::default();
        config::read_frontend_config(&cfg, &mut frontend)?;

        let vocabulary = if kind.uses_text() {
            let text = utf8(expect("vocab")?)?;
            Some(Vocabulary::from_tokens(text.lines().map(str::to_string)))
        } else {
            None
        };
        let scale = GradeScale::new(utf8(expect("scale")?)?.lines().map(str::to_string).collect())?;

        let meta = KeyValues::parse(utf8(expect("meta")?)?)?;
        meta.reject_unknown(META_KEYS)?;
        let need = |key: &str| CorpusError::Format(format!("meta block lacks {key}"));
        let prompt = meta.raw("prompt").ok_or_else(|| need("prompt"))?.to_string();
        let max_columns = meta.get("max_columns")?.ok_or_else(|| need("max_columns"))?;
        let max_tokens = meta.get("max_tokens")?.ok_or_else(|| need("max_tokens"))?;
        let split_seed = meta.get("split_seed")?.ok_or_else(|| need("split_seed"))?;
        let selected_epoch = meta.get("selected_epoch")?.ok_or_else(|| need("selected_epoch"))?;
        let best_val_qwk = meta.get("best_val_qwk")?.ok_or_else(|| need("best_val_qwk"))?;

        let mut params = Vec::new();
        for (name, payload) in it {
            let Some(pname) = name.strip_prefix("param:") else {
                return Err(CorpusError::Format(format!("unexpected block {name}")));
            };
            params.push(Parameter {
                name: pname.to_string(),
                value: decode_tensor(pname, payload)?,
            });
        }
        if let (Some(v), Some(p)) = (&vocabulary, params.iter().find(|p| p.name == "text.embedding")) {
            if p.value.shape()[0] != v.len() {
                return Err(CorpusError::Format(format!(
                    "embedding has {} rows but vocabulary has {} entries",
                    p.value.shape()[0],
                    v.len()
                )));
            }
        }
        let model = ScoringModel::from_parameters(kind, model_config, params)
            .map_err(|e| CorpusError::Format(format!("shape table inconsistent with config: {e}")))?;
        Ok(Self {
            model,
            frontend,
            vocabulary,
            prompt,
            scale,
            max_columns,
            max_tokens,
            split_seed,
            selected_epoch,
            best_val_qwk,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        fs::write(path, self.to_bytes()).map_err(|e| CorpusError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let bytes = fs::read(path).map_err(|e| CorpusError::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn push_block(out: &mut Vec<u8>, name: &str, payload: &[u8]) {
    out.extend_from_slice(&(name.len() as u16).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(payload);
}

fn utf8(bytes: &[u8]) -> Result<&str, CorpusError> {
    std::str::from_utf8(bytes).map_err(|_| CorpusError::Format("text block is not UTF-8".into()))
}

fn decode_tensor(name: &str, payload: &[u8]) -> Result<Tensor, CorpusError> {
    let mut r = Reader { bytes: payload, pos: 0 };
    let ndim = r.u8()? as usize;
    let shape = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
    let numel: usize = shape.iter().product();
    if payload.len() - r.pos != 4 * numel {
        return Err(CorpusError::Format(format!(
            "parameter {name}: shape {shape:?} needs {} data bytes, block has {}",
            4 * numel,
            payload.len() - r.pos
        )));
    }
    let data = r.bytes[r.pos..]
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect();
    Tensor::new(shape, data).map_err(|e| CorpusError::Format(format!("parameter {name}: {e}")))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CorpusError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(CorpusError::Format(format!("truncated file at byte {}", self.pos)));
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, CorpusError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, CorpusError> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, CorpusError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}
