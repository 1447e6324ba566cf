//! Grade scales, response manifests, stratified splits, synthetic corpora,
//! and model checkpoints.

mod checkpoint;
mod synth;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use synth::{generate_synthetic_corpus, plan_synthetic_corpus, SyntheticResponse, SyntheticSpec};

use crate::audio::AudioError;
use crate::config::ConfigError;
use crate::model::ModelError;

pub const MANIFEST_FILE: &str = "manifest.jsonl";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("line {line}: grade {label:?} is not on the scale of prompt {prompt:?}")]
    UnknownGrade { line: usize, label: String, prompt: String },
    #[error("line {line}: prompt {prompt:?} has no grade declaration")]
    UnknownPrompt { line: usize, prompt: String },
    #[error("line {line}: audio file {path} not found")]
    MissingAudio { line: usize, path: String },
    #[error("line {line}: duplicate response id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("invalid grade scale: {0}")]
    Scale(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("checkpoint format: {0}")]
    Format(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Audio(#[from] AudioError),
}

impl CorpusError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Ordered grade labels, lowest proficiency first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GradeScale {
    labels: Vec<String>,
}

impl GradeScale {
    pub fn new(labels: Vec<String>) -> Result<Self, CorpusError> {
        if labels.len() < 2 {
            return Err(CorpusError::Scale(format!("need at least 2 labels, got {}", labels.len())));
        }
        let mut seen = HashSet::new();
        for l in &labels {
            if l.is_empty() || l.contains('\n') {
                return Err(CorpusError::Scale(format!("invalid label {l:?}")));
            }
            if !seen.insert(l) {
                return Err(CorpusError::Scale(format!("duplicate label {l:?}")));
            }
        }
        Ok(Self { labels })
    }

    /// Labels for synthetic corpora: CEFR-style up to five levels, then `L0..`.
    pub fn synthetic(levels: usize) -> Result<Self, CorpusError> {
        const CEFR: [&str; 5] = ["A2", "Low B1", "High B1", "Low B2", "High B2"];
        let labels = if levels <= CEFR.len() {
            CEFR[..levels].iter().map(|s| s.to_string()).collect()
        } else {
            (0..levels).map(|i| format!("L{i}")).collect()
        };
        Self::new(labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, index: usize) -> Option<&str> {
        self.labels.get(index).map(String::as_str)
    }

    pub fn to_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// `index / (N - 1)`.
    pub fn normalize_index(&self, index: usize) -> f64 {
        index as f64 / (self.len() - 1) as f64
    }

    pub fn normalize(&self, label: &str) -> Option<f64> {
        self.to_index(label).map(|i| self.normalize_index(i))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" | "valid" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}; valid splits are train, val, test")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResponseRecord {
    pub id: String,
    pub prompt: String,
    /// Resolved against the manifest directory.
    pub audio: PathBuf,
    pub transcript: String,
    pub grade: String,
    pub split: Option<Split>,
}

/// Records plus the grade scale declared for each prompt.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    pub scales: BTreeMap<String, GradeScale>,
    pub records: Vec<ResponseRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PromptLine {
    prompt: String,
    grades: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordLine {
    id: String,
    prompt: String,
    audio: String,
    transcript: String,
    grade: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    split: Option<String>,
}

impl Manifest {
    pub fn scale(&self, prompt: &str) -> Option<&GradeScale> {
        self.scales.get(prompt)
    }

    /// The prompt to use when none is named: the only one declared.
    pub fn sole_prompt(&self) -> Result<&str, CorpusError> {
        let mut it = self.scales.keys();
        match (it.next(), it.next()) {
            (Some(p), None) => Ok(p),
            (None, _) => Err(CorpusError::Degenerate("manifest declares no prompts".into())),
            _ => Err(CorpusError::Degenerate(format!(
                "manifest declares {} prompts; choose one",
                self.scales.len()
            ))),
        }
    }

    pub fn records_for(&self, prompt: &str) -> Vec<ResponseRecord> {
        self.records.iter().filter(|r| r.prompt == prompt).cloned().collect()
    }

    pub fn grade_index(&self, record: &ResponseRecord) -> usize {
        self.scales[&record.prompt]
            .to_index(&record.grade)
            .expect("validated at load")
    }

    /// Writes the manifest with audio paths relative to `dir` where possible.
    pub fn write(&self, path: &Path) -> Result<(), CorpusError> {
        let dir = path.parent().unwrap_or(Path::new(""));
        let mut out = String::new();
        for (prompt, scale) in &self.scales {
            let line = PromptLine {
                prompt: prompt.clone(),
                grades: scale.labels().to_vec(),
            };
            out.push_str(&serde_json::to_string(&line).expect("serializable"));
            out.push('\n');
        }
        for r in &self.records {
            let audio = r.audio.strip_prefix(dir).unwrap_or(&r.audio);
            let line = RecordLine {
                id: r.id.clone(),
                prompt: r.prompt.clone(),
                audio: audio.to_string_lossy().into_owned(),
                transcript: r.transcript.clone(),
                grade: r.grade.clone(),
                split: r.split.map(|s| s.to_string()),
            };
            out.push_str(&serde_json::to_string(&line).expect("serializable"));
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| CorpusError::io(path, e))
    }
}

/// Reads a JSON-lines manifest. Lines with a `grades` field declare a
/// prompt's scale; every other non-blank line is a response record.
pub fn load_manifest(path: &Path) -> Result<Manifest, CorpusError> {
    let text = fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
    let dir = path.parent().unwrap_or(Path::new(""));
    let mut manifest = Manifest::default();
    let mut pending = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(line).map_err(|e| CorpusError::Parse {
            line: lineno,
            reason: e.to_string(),
        })?;
        let parse_err = |e: serde_json::Error| CorpusError::Parse {
            line: lineno,
            reason: e.to_string(),
        };
        if value.get("grades").is_some() {
            let decl: PromptLine = serde_json::from_value(value).map_err(parse_err)?;
            let scale = GradeScale::new(decl.grades).map_err(|e| CorpusError::Parse {
                line: lineno,
                reason: e.to_string(),
            })?;
            if let Some(prev) = manifest.scales.get(&decl.prompt) {
                if prev != &scale {
                    return Err(CorpusError::Parse {
                        line: lineno,
                        reason: format!("conflicting grade declaration for prompt {:?}", decl.prompt),
                    });
                }
            }
            manifest.scales.insert(decl.prompt, scale);
        } else {
            let rec: RecordLine = serde_json::from_value(value).map_err(parse_err)?;
            pending.push((lineno, rec));
        }
    }
    let mut ids = HashSet::new();
    for (line, rec) in pending {
        let Some(scale) = manifest.scales.get(&rec.prompt) else {
            return Err(CorpusError::UnknownPrompt { line, prompt: rec.prompt });
        };
        if scale.to_index(&rec.grade).is_none() {
            return Err(CorpusError::UnknownGrade {
                line,
                label: rec.grade,
                prompt: rec.prompt,
            });
        }
        if !ids.insert(rec.id.clone()) {
            return Err(CorpusError::DuplicateId { line, id: rec.id });
        }
        let audio = dir.join(&rec.audio);
        if !audio.is_file() {
            return Err(CorpusError::MissingAudio {
                line,
                path: audio.display().to_string(),
            });
        }
        let split = rec
            .split
            .map(|s| s.parse::<Split>())
            .transpose()
            .map_err(|reason| CorpusError::Parse { line, reason })?;
        manifest.records.push(ResponseRecord {
            id: rec.id,
            prompt: rec.prompt,
            audio,
            transcript: rec.transcript,
            grade: rec.grade,
            split,
        });
    }
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Splits {
    pub train: Vec<ResponseRecord>,
    pub val: Vec<ResponseRecord>,
    pub test: Vec<ResponseRecord>,
}

impl Splits {
    pub fn get(&self, split: Split) -> &[ResponseRecord] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

pub const SPLIT_RATIOS: [f64; 3] = [0.7, 0.1, 0.2];

/// 70:10:20 split stratified by `(prompt, grade)`. Each class is shuffled
/// with the seeded generator and cut at `round(0.7 n)` and
/// `round(0.7 n) + round(0.1 n)`; every split keeps manifest order.
pub fn stratified_split(records: &[ResponseRecord], seed: u64) -> Result<Splits, CorpusError> {
    if records.is_empty() {
        return Err(CorpusError::Degenerate("cannot split an empty record list".into()));
    }
    let mut classes: BTreeMap<(&str, &str), Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        classes.entry((&r.prompt, &r.grade)).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![Split::Test; records.len()];
    for ((prompt, grade), mut members) in classes {
        let n = members.len();
        if n < 3 {
            log::warn!("prompt {prompt:?} grade {grade:?} has only {n} records; split is best effort");
        }
        members.shuffle(&mut rng);
        let n_train = ((n as f64 * SPLIT_RATIOS[0]).round() as usize).min(n);
        let n_val = ((n as f64 * SPLIT_RATIOS[1]).round() as usize).min(n - n_train);
        for &i in &members[..n_train] {
            assignment[i] = Split::Train;
        }
        for &i in &members[n_train..n_train + n_val] {
            assignment[i] = Split::Val;
        }
    }
    let mut out = Splits::default();
    for (r, s) in records.iter().zip(assignment) {
        match s {
            Split::Train => out.train.push(r.clone()),
            Split::Val => out.val.push(r.clone()),
            Split::Test => out.test.push(r.clone()),
        }
    }
    Ok(out)
}

/// Uses the manifest's split tags when every record has one, otherwise a
/// seeded stratified split.
pub fn resolve_splits(records: &[ResponseRecord], seed: u64) -> Result<Splits, CorpusError> {
    if !records.is_empty() && records.iter().all(|r| r.split.is_some()) {
        let mut out = Splits::default();
        for r in records {
            match r.split.expect("checked") {
                Split::Train => out.train.push(r.clone()),
                Split::Val => out.val.push(r.clone()),
                Split::Test => out.test.push(r.clone()),
            }
        }
        return Ok(out);
    }
    stratified_split(records, seed)
}
