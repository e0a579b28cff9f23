//! Model and training configuration, plus the flat `key = value` file format.

use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Malformed { line: usize, text: String },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value for {key}: {value:?}")]
    BadValue {
        line: usize,
        key: String,
        value: String,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Network hyper-parameters. Defaults are desk-scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Hidden size; encoder outputs are 2d wide, attention flow 8d.
    pub d: usize,
    pub char_embed_dim: usize,
    /// Number of char-CNN filters; also the width of the char feature.
    pub char_filters: usize,
    /// Char-CNN filter width.
    pub char_width: usize,
    pub dropout_rate: f64,
    pub max_doc_len: usize,
    pub max_query_len: usize,
    pub max_answer_len: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d: 16,
            char_embed_dim: 8,
            char_filters: 16,
            char_width: 3,
            dropout_rate: 0.2,
            max_doc_len: 400,
            max_query_len: 16,
            max_answer_len: 16,
            seed: 42,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.d < 2 {
            return Err(ConfigError::Invalid(format!("d must be >= 2, got {}", self.d)));
        }
        if self.char_width < 1 {
            return Err(ConfigError::Invalid("char_width must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(ConfigError::Invalid(format!(
                "dropout_rate must be in [0,1), got {}",
                self.dropout_rate
            )));
        }
        if self.max_answer_len < 1 {
            return Err(ConfigError::Invalid("max_answer_len must be >= 1".into()));
        }
        if self.max_doc_len < 1 || self.max_query_len < 1 {
            return Err(ConfigError::Invalid("max lengths must be >= 1".into()));
        }
        Ok(())
    }

    /// Width of a token embedding: word part (d) plus char-CNN feature.
    pub fn embed_width(&self) -> usize {
        self.d + self.char_filters
    }
}

/// Training-loop knobs. `lr = 2` and 10-epoch early-stop patience follow
/// the AdaDelta schedule the model was tuned with.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub rho: f64,
    pub epsilon: f64,
    /// Stop after this many epochs without dev-EM improvement.
    pub patience: usize,
    /// Optional early exit once dev EM (percent) reaches this value.
    pub stop_at_dev_em: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_epochs: 200,
            batch_size: 20,
            lr: 2.0,
            rho: 0.95,
            epsilon: 1e-6,
            patience: 10,
            stop_at_dev_em: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FileConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl FileConfig {
    /// Parses flat `key = value` text. `#` starts a comment; blank lines are
    /// skipped; unknown keys are rejected.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = FileConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError::Malformed {
                    line,
                    text: raw.to_string(),
                });
            };
            let key = key.trim();
            let value = value.trim();
            cfg.apply(line, key, value)?;
        }
        cfg.model.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, line: usize, key: &str, value: &str) -> Result<(), ConfigError> {
        fn num<T: std::str::FromStr>(
            line: usize,
            key: &str,
            value: &str,
        ) -> Result<T, ConfigError> {
            value.parse().map_err(|_| ConfigError::BadValue {
                line,
                key: key.to_string(),
                value: value.to_string(),
            })
        }
        match key {
            "d" => self.model.d = num(line, key, value)?,
            "char_embed_dim" => self.model.char_embed_dim = num(line, key, value)?,
            "char_filters" => self.model.char_filters = num(line, key, value)?,
            "char_width" => self.model.char_width = num(line, key, value)?,
            "dropout_rate" => self.model.dropout_rate = num(line, key, value)?,
            "max_doc_len" => self.model.max_doc_len = num(line, key, value)?,
            "max_query_len" => self.model.max_query_len = num(line, key, value)?,
            "max_answer_len" => self.model.max_answer_len = num(line, key, value)?,
            "seed" => self.model.seed = num(line, key, value)?,
            "max_epochs" => self.train.max_epochs = num(line, key, value)?,
            "batch_size" => self.train.batch_size = num(line, key, value)?,
            "lr" => self.train.lr = num(line, key, value)?,
            "rho" => self.train.rho = num(line, key, value)?,
            "epsilon" => self.train.epsilon = num(line, key, value)?,
            "patience" => self.train.patience = num(line, key, value)?,
            _ => {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                })
            }
        }
        Ok(())
    }
}

impl fmt::Display for FileConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = &self.model;
        let t = &self.train;
        let pairs: Vec<(&str, String)> = vec![
            ("d", m.d.to_string()),
            ("char_embed_dim", m.char_embed_dim.to_string()),
            ("char_filters", m.char_filters.to_string()),
            ("char_width", m.char_width.to_string()),
            ("dropout_rate", m.dropout_rate.to_string()),
            ("max_doc_len", m.max_doc_len.to_string()),
            ("max_query_len", m.max_query_len.to_string()),
            ("max_answer_len", m.max_answer_len.to_string()),
            ("seed", m.seed.to_string()),
            ("max_epochs", t.max_epochs.to_string()),
            ("batch_size", t.batch_size.to_string()),
            ("lr", t.lr.to_string()),
            ("rho", t.rho.to_string()),
            ("epsilon", t.epsilon.to_string()),
            ("patience", t.patience.to_string()),
        ];
        let map: BTreeMap<&str, String> = pairs.into_iter().collect();
        for (k, v) in map {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_overrides_and_comments() {
        let cfg = FileConfig::parse("d = 8\n# comment\n\nlr = 1.5 # inline\n").unwrap();
        assert_eq!(cfg.model.d, 8);
        assert_eq!(cfg.train.lr, 1.5);
        assert_eq!(cfg.model.char_width, ModelConfig::default().char_width);
    }

    #[test]
    fn rejects_unknown_key() {
        let err = FileConfig::parse("warp_speed = 9\n").unwrap_err();
        assert!(matches!(err, ConfigError::UnknownKey { line: 1, .. }));
    }

    #[test]
    fn rejects_bad_value_and_invalid_ranges() {
        assert!(FileConfig::parse("d = banana\n").is_err());
        assert!(FileConfig::parse("dropout_rate = 1.0\n").is_err());
        assert!(FileConfig::parse("d = 1\n").is_err());
    }

    #[test]
    fn display_round_trips() {
        let mut cfg = FileConfig::default();
        cfg.model.d = 12;
        cfg.train.batch_size = 4;
        let parsed = FileConfig::parse(&cfg.to_string()).unwrap();
        assert_eq!(parsed, cfg);
    }
}
