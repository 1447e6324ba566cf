//! Transcript tokenization, training-split vocabularies, and embedding tables.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::Rng;
use thiserror::Error;

use crate::tensor::Tensor;

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Half-width of the uniform init for in-vocabulary rows missing from a pretrained file.
pub const RANDOM_INIT_RANGE: f64 = 0.05;

#[derive(Debug, Error)]
pub enum TextError {
    #[error("degenerate input to {op}: {reason}")]
    Degenerate { op: &'static str, reason: String },
    #[error("{path}:{line}: {reason}")]
    Parse { path: String, line: usize, reason: String },
    #[error("{path}:{line}: expected {expected} values after the token, found {found}")]
    Format {
        path: String,
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Lowercases, splits on whitespace, and peels leading and trailing
/// non-alphanumeric characters off each word as one-character tokens.
pub fn tokenize(transcript: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for word in transcript.split_whitespace() {
        let word = word.to_lowercase();
        let chars: Vec<char> = word.chars().collect();
        let start = chars.iter().position(|c| c.is_alphanumeric());
        let Some(start) = start else {
            tokens.extend(chars.iter().map(|c| c.to_string()));
            continue;
        };
        let end = chars.iter().rposition(|c| c.is_alphanumeric()).unwrap() + 1;
        tokens.extend(chars[..start].iter().map(|c| c.to_string()));
        tokens.push(chars[start..end].iter().collect());
        tokens.extend(chars[end..].iter().map(|c| c.to_string()));
    }
    tokens
}

/// Token to id mapping. Ids 0 and 1 are padding and unknown.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds from training transcripts, ordering tokens by frequency
    /// (descending) and then lexicographically.
    pub fn build<S: AsRef<str>>(transcripts: &[S]) -> Result<Self, TextError> {
        if transcripts.is_empty() {
            return Err(TextError::Degenerate {
                op: "build_vocabulary",
                reason: "no training transcripts".into(),
            });
        }
        let mut counts: HashMap<String, usize> = HashMap::new();
        for t in transcripts {
            for tok in tokenize(t.as_ref()) {
                *counts.entry(tok).or_default() += 1;
            }
        }
        let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Ok(Self::from_tokens(ranked.into_iter().map(|(t, _)| t)))
    }

    /// Rebuilds from an ordered token list (reserved tokens excluded).
    pub fn from_tokens(tokens: impl IntoIterator<Item = String>) -> Self {
        let mut all = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
        all.extend(tokens);
        let index = all.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { tokens: all, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    /// Learned tokens in id order, without the reserved entries.
    pub fn learned_tokens(&self) -> &[String] {
        &self.tokens[2..]
    }
}

/// Token ids right-padded with [`PAD_ID`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub ids: Vec<usize>,
    pub valid_length: usize,
}

impl TokenSequence {
    pub fn valid_ids(&self) -> &[usize] {
        &self.ids[..self.valid_length]
    }
}

pub fn encode(tokens: &[String], vocab: &Vocabulary, max_len: usize) -> TokenSequence {
    let max_len = max_len.max(1);
    if tokens.len() > max_len {
        log::warn!("transcript has {} tokens, truncating to {max_len}", tokens.len());
    }
    let mut ids: Vec<usize> = tokens.iter().take(max_len).map(|t| vocab.id(t)).collect();
    let valid_length = ids.len();
    ids.resize(max_len, PAD_ID);
    TokenSequence { ids, valid_length }
}

/// `[vocab x dim]` embedding matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub matrix: Tensor,
    pub trainable: bool,
}

impl EmbeddingTable {
    /// Uniform init in `[-0.05, 0.05]` with the padding and unknown rows zeroed.
    pub fn random<R: Rng + ?Sized>(vocab: &Vocabulary, dim: usize, rng: &mut R) -> Self {
        let mut matrix = Tensor::from_fn(&[vocab.len(), dim], |_| {
            rng.gen_range(-RANDOM_INIT_RANGE..=RANDOM_INIT_RANGE)
        });
        matrix.data_mut()[..2 * dim].fill(0.0);
        Self {
            matrix,
            trainable: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.shape()[1]
    }

    pub fn rows(&self) -> usize {
        self.matrix.shape()[0]
    }
}

/// Loads a whitespace-separated `token v1 .. v_dim` file. Vocabulary rows
/// found in the file are copied verbatim; the rest keep the random init.
/// Returns the table and the fraction of learned vocabulary rows found.
pub fn load_pretrained_embeddings<R: Rng + ?Sized>(
    path: &Path,
    vocab: &Vocabulary,
    dim: usize,
    rng: &mut R,
) -> Result<(EmbeddingTable, f64), TextError> {
    let display = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| TextError::Io {
        path: display.clone(),
        source,
    })?;
    let mut table = EmbeddingTable::random(vocab, dim, rng);
    let mut found = vec![false; vocab.len()];
    for (lineno, line) in text.lines().enumerate() {
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else { continue };
        let values: Vec<&str> = fields.collect();
        if values.len() != dim {
            return Err(TextError::Format {
                path: display,
                line: lineno + 1,
                expected: dim,
                found: values.len(),
            });
        }
        let parsed = values
            .iter()
            .map(|v| v.parse::<f64>())
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|e| TextError::Parse {
                path: display.clone(),
                line: lineno + 1,
                reason: e.to_string(),
            })?;
        let id = vocab.id(token);
        if id > UNK_ID {
            table.matrix.data_mut()[id * dim..(id + 1) * dim].copy_from_slice(&parsed);
            found[id] = true;
        }
    }
    let learned = vocab.len() - 2;
    let hits = found.iter().filter(|&&f| f).count();
    let coverage = if learned == 0 { 0.0 } else { hits as f64 / learned as f64 };
    Ok((table, coverage))
}
