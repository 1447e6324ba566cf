//! Flat `key=value` configuration text, shared by config files and the
//! checkpoint config block.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use thiserror::Error;

use crate::audio::FrontendConfig;
use crate::model::ModelConfig;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: expected key=value, found {text:?}")]
    Syntax { line: usize, text: String },
    #[error("line {line}: duplicate key {key}")]
    Duplicate { line: usize, key: String },
    #[error("key {key}: cannot parse {value:?}: {reason}")]
    Value { key: String, value: String, reason: String },
    #[error("unknown configuration keys: {0}")]
    Unknown(String),
}

/// Ordered key/value pairs. Blank lines and `#` comments are ignored.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line: i + 1,
                    text: raw.to_string(),
                });
            };
            let key = k.trim().to_string();
            if key.is_empty() {
                return Err(ConfigError::Syntax {
                    line: i + 1,
                    text: raw.to_string(),
                });
            }
            if entries.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(ConfigError::Duplicate { line: i + 1, key });
            }
        }
        Ok(Self { entries })
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get<T>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.entries
            .get(key)
            .map(|v| {
                v.parse().map_err(|e: T::Err| ConfigError::Value {
                    key: key.to_string(),
                    value: v.clone(),
                    reason: e.to_string(),
                })
            })
            .transpose()
    }

    /// Overwrites `target` when `key` is present.
    pub fn read<T>(&self, key: &str, target: &mut T) -> Result<(), ConfigError>
    where
        T: FromStr,
        T::Err: Display,
    {
        if let Some(v) = self.get(key)? {
            *target = v;
        }
        Ok(())
    }

    /// Errors if any key lies outside `known`.
    pub fn reject_unknown(&self, known: &[&str]) -> Result<(), ConfigError> {
        let unknown: Vec<&str> = self
            .entries
            .keys()
            .map(String::as_str)
            .filter(|k| !known.contains(k))
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Unknown(unknown.join(", ")))
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Canonical text: sorted keys, one `key=value` per line.
    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}

pub const MODEL_KEYS: &[&str] = &[
    "acoustic.input_channels",
    "acoustic.frame_width",
    "acoustic.conv_sets",
    "acoustic.convs_per_set",
    "acoustic.base_filters",
    "acoustic.kernel_width",
    "acoustic.pool_window",
    "acoustic.lstm_hidden",
    "lexical.embedding_dim",
    "lexical.lstm_hidden",
    "model.dropout",
];

pub const FRONTEND_KEYS: &[&str] = &[
    "frontend.sample_rate",
    "frontend.fft_window",
    "frontend.hop",
    "frontend.n_mels",
    "frontend.f_min",
    "frontend.f_max",
    "frontend.frame_width",
];

pub fn write_model_config(kv: &mut KeyValues, c: &ModelConfig) {
    let a = &c.acoustic;
    kv.set("acoustic.input_channels", a.input_channels);
    kv.set("acoustic.frame_width", a.frame_width);
    kv.set("acoustic.conv_sets", a.conv_sets);
    kv.set("acoustic.convs_per_set", a.convs_per_set);
    kv.set("acoustic.base_filters", a.base_filters);
    kv.set("acoustic.kernel_width", a.kernel_width);
    kv.set("acoustic.pool_window", a.pool_window);
    kv.set("acoustic.lstm_hidden", a.lstm_hidden);
    kv.set("lexical.embedding_dim", c.lexical.embedding_dim);
    kv.set("lexical.lstm_hidden", c.lexical.lstm_hidden);
    kv.set("model.dropout", c.dropout);
}

pub fn read_model_config(kv: &KeyValues, c: &mut ModelConfig) -> Result<(), ConfigError> {
    let a = &mut c.acoustic;
    kv.read("acoustic.input_channels", &mut a.input_channels)?;
    kv.read("acoustic.frame_width", &mut a.frame_width)?;
    kv.read("acoustic.conv_sets", &mut a.conv_sets)?;
    kv.read("acoustic.convs_per_set", &mut a.convs_per_set)?;
    kv.read("acoustic.base_filters", &mut a.base_filters)?;
    kv.read("acoustic.kernel_width", &mut a.kernel_width)?;
    kv.read("acoustic.pool_window", &mut a.pool_window)?;
    kv.read("acoustic.lstm_hidden", &mut a.lstm_hidden)?;
    kv.read("lexical.embedding_dim", &mut c.lexical.embedding_dim)?;
    kv.read("lexical.lstm_hidden", &mut c.lexical.lstm_hidden)?;
    kv.read("model.dropout", &mut c.dropout)
}

pub fn write_frontend_config(kv: &mut KeyValues, c: &FrontendConfig) {
    kv.set("frontend.sample_rate", c.sample_rate);
    kv.set("frontend.fft_window", c.fft_window);
    kv.set("frontend.hop", c.hop);
    kv.set("frontend.n_mels", c.n_mels);
    kv.set("frontend.f_min", c.f_min);
    kv.set("frontend.f_max", c.f_max);
    kv.set("frontend.frame_width", c.frame_width);
}

pub fn read_frontend_config(kv: &KeyValues, c: &mut FrontendConfig) -> Result<(), ConfigError> {
    kv.read("frontend.sample_rate", &mut c.sample_rate)?;
    kv.read("frontend.fft_window", &mut c.fft_window)?;
    kv.read("frontend.hop", &mut c.hop)?;
    kv.read("frontend.n_mels", &mut c.n_mels)?;
    kv.read("frontend.f_min", &mut c.f_min)?;
    kv.read("frontend.f_max", &mut c.f_max)?;
    kv.read("frontend.frame_width", &mut c.frame_width)
}
