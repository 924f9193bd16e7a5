//! Flat `key = value` run configuration.
//!
//! Hyperparameter keys follow the pretraining table names (`num_layers`,
//! `hidden_size`, `ffn_inner_hidden_size`, `attention_heads`,
//! `attention_head_size`, `dropout`, `warmup_steps`, `learning_rate`,
//! `batch_size`, `weight_decay`, `max_steps`, `learning_rate_decay`,
//! `adam_epsilon`, `adam_beta1`, `adam_beta2`). Unknown keys are errors.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::corpus::{MaskingScheme, NounPhraseSource};
use crate::encoder::EncoderStackConfig;
use crate::error::{Error, Result};
use crate::numerics::AdamConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChunkingMode {
    /// One input per document, truncated to the maximum length.
    None,
    Sentence,
    SentenceOverlap,
}

impl ChunkingMode {
    pub const ALL: [ChunkingMode; 3] = [ChunkingMode::None, ChunkingMode::Sentence, ChunkingMode::SentenceOverlap];

    pub fn as_str(self) -> &'static str {
        match self {
            ChunkingMode::None => "none",
            ChunkingMode::Sentence => "sentence",
            ChunkingMode::SentenceOverlap => "sentence_overlap",
        }
    }
}

impl FromStr for ChunkingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ChunkingMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown chunking mode `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TokenizerKind {
    WholeForm,
    Wordpiece,
}

impl TokenizerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TokenizerKind::WholeForm => "whole_form",
            TokenizerKind::Wordpiece => "wordpiece",
        }
    }
}

impl FromStr for TokenizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "whole_form" => Ok(TokenizerKind::WholeForm),
            "wordpiece" => Ok(TokenizerKind::Wordpiece),
            _ => Err(Error::Config(format!("unknown tokenizer `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub encoder: EncoderStackConfig,

    pub corpus_path: Option<PathBuf>,
    pub vocab_path: Option<PathBuf>,
    pub pretrain_data_path: Option<PathBuf>,
    pub checkpoint_path: Option<PathBuf>,
    pub qa_train_path: Option<PathBuf>,
    pub qa_dev_path: Option<PathBuf>,
    pub predictions_path: Option<PathBuf>,

    pub vocab_size: usize,
    pub whole_form_fraction: f64,
    pub noun_phrase_source: NounPhraseSource,
    pub lowercase: bool,
    pub tokenizer: TokenizerKind,

    pub clean: bool,
    pub chunking: ChunkingMode,
    pub chunk_max_words: usize,
    pub chunk_overlap_words: usize,
    pub masking_scheme: MaskingScheme,
    pub mask_budget: f64,

    pub warmup_steps: u64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub max_steps: u64,
    pub linear_decay: bool,
    pub adam_epsilon: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    /// Global gradient-norm clip; 0 disables clipping.
    pub grad_clip: f64,
    /// Write an intermediate checkpoint every this many steps; 0 disables.
    pub checkpoint_every: u64,

    pub qa_learning_rate: f64,
    pub qa_epochs: u64,
    pub qa_batch_size: usize,
    pub qa_warmup_fraction: f64,
    pub qa_train_encoder: bool,
    pub max_query_length: usize,
    pub max_answer_length: usize,

    /// Also fine-tune and score QA for every ablation arm.
    pub ablation_qa: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 7,
            encoder: EncoderStackConfig::default(),
            corpus_path: None,
            vocab_path: None,
            pretrain_data_path: None,
            checkpoint_path: None,
            qa_train_path: None,
            qa_dev_path: None,
            predictions_path: None,
            vocab_size: 4000,
            whole_form_fraction: 0.7,
            noun_phrase_source: NounPhraseSource::Heuristic,
            lowercase: false,
            tokenizer: TokenizerKind::WholeForm,
            clean: true,
            chunking: ChunkingMode::Sentence,
            chunk_max_words: 300,
            chunk_overlap_words: 128,
            masking_scheme: MaskingScheme::NounPhrase,
            mask_budget: 0.15,
            warmup_steps: 30,
            learning_rate: 1e-3,
            batch_size: 8,
            weight_decay: 0.01,
            max_steps: 300,
            linear_decay: true,
            adam_epsilon: 1e-6,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            grad_clip: 1.0,
            checkpoint_every: 0,
            qa_learning_rate: 5e-5,
            qa_epochs: 2,
            qa_batch_size: 8,
            qa_warmup_fraction: 0.1,
            qa_train_encoder: true,
            max_query_length: 64,
            max_answer_length: 30,
            ablation_qa: false,
        }
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("bad value `{v}` for {key}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("bad boolean `{v}` for {key}"))),
    }
}

fn opt_path(v: &str, base: &Path) -> Option<PathBuf> {
    match v {
        "" | "none" => None,
        p => Some(base.join(p)),
    }
}

fn path_str(p: &Option<PathBuf>) -> String {
    p.as_ref().map_or_else(|| "none".to_string(), |p| p.display().to_string())
}

impl RunConfig {
    /// Sets one key. Relative paths resolve against `base`.
    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<()> {
        let v = value.trim();
        match key {
            "seed" => self.seed = parse(key, v)?,
            "dropout" => {
                let p: f64 = parse(key, v)?;
                self.encoder.attention_dropout = p;
                self.encoder.hidden_dropout = p;
            }
            "attention_head_size" => {
                let size: usize = parse(key, v)?;
                if size * self.encoder.num_heads != self.encoder.hidden_size {
                    return Err(Error::Config(format!(
                        "attention_head_size {size} × {} heads ≠ hidden_size {} (set heads and hidden size first)",
                        self.encoder.num_heads, self.encoder.hidden_size
                    )));
                }
            }
            "corpus_path" => self.corpus_path = opt_path(v, base),
            "vocab_path" => self.vocab_path = opt_path(v, base),
            "pretrain_data_path" => self.pretrain_data_path = opt_path(v, base),
            "checkpoint_path" => self.checkpoint_path = opt_path(v, base),
            "qa_train_path" => self.qa_train_path = opt_path(v, base),
            "qa_dev_path" => self.qa_dev_path = opt_path(v, base),
            "predictions_path" => self.predictions_path = opt_path(v, base),
            "vocab_size" => self.vocab_size = parse(key, v)?,
            "whole_form_fraction" => self.whole_form_fraction = parse(key, v)?,
            "noun_phrase_source" => self.noun_phrase_source = v.parse()?,
            "lowercase" => self.lowercase = parse_bool(key, v)?,
            "tokenizer" => self.tokenizer = v.parse()?,
            "clean" => self.clean = parse_bool(key, v)?,
            "chunking" => self.chunking = v.parse()?,
            "chunk_max_words" => self.chunk_max_words = parse(key, v)?,
            "chunk_overlap_words" => self.chunk_overlap_words = parse(key, v)?,
            "masking_scheme" => self.masking_scheme = v.parse()?,
            "mask_budget" => self.mask_budget = parse(key, v)?,
            "warmup_steps" => self.warmup_steps = parse(key, v)?,
            "learning_rate" => self.learning_rate = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "weight_decay" => self.weight_decay = parse(key, v)?,
            "max_steps" => self.max_steps = parse(key, v)?,
            "learning_rate_decay" => {
                self.linear_decay = match v.to_lowercase().as_str() {
                    "linear" => true,
                    "none" | "constant" => false,
                    _ => return Err(Error::Config(format!("unknown learning_rate_decay `{v}`"))),
                }
            }
            "adam_epsilon" => self.adam_epsilon = parse(key, v)?,
            "adam_beta1" => self.adam_beta1 = parse(key, v)?,
            "adam_beta2" => self.adam_beta2 = parse(key, v)?,
            "grad_clip" => self.grad_clip = parse(key, v)?,
            "checkpoint_every" => self.checkpoint_every = parse(key, v)?,
            "qa_learning_rate" => self.qa_learning_rate = parse(key, v)?,
            "qa_epochs" => self.qa_epochs = parse(key, v)?,
            "qa_batch_size" => self.qa_batch_size = parse(key, v)?,
            "qa_warmup_fraction" => self.qa_warmup_fraction = parse(key, v)?,
            "qa_train_encoder" => self.qa_train_encoder = parse_bool(key, v)?,
            "max_query_length" => self.max_query_length = parse(key, v)?,
            "max_answer_length" => self.max_answer_length = parse(key, v)?,
            "ablation_qa" => self.ablation_qa = parse_bool(key, v)?,
            _ => {
                if !self.encoder.set(key, v)? {
                    return Err(Error::Config(format!("unknown configuration key `{key}`")));
                }
            }
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment line.
    pub fn parse_str(src: &str, base: &Path) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (n, line) in src.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            cfg.set(k.trim(), v, base)
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingInput(path.to_path_buf()));
        }
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse_str(&std::fs::read_to_string(path)?, base)
    }

    /// Applies `key=value` overrides (paths resolve against the working directory).
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<()> {
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{o}` is not key=value")))?;
            self.set(k.trim(), v, Path::new("."))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        let bad = |m: String| Err(Error::Config(m));
        if !(0.0..=1.0).contains(&self.whole_form_fraction) {
            return bad(format!("whole_form_fraction {} not in [0, 1]", self.whole_form_fraction));
        }
        if self.batch_size == 0 || self.qa_batch_size == 0 {
            return bad("batch sizes must be positive".into());
        }
        if self.chunk_max_words == 0 {
            return bad("chunk_max_words must be positive".into());
        }
        if !(self.mask_budget > 0.0 && self.mask_budget < 1.0) {
            return bad(format!("mask_budget {} not in (0, 1)", self.mask_budget));
        }
        if !(self.learning_rate >= 0.0 && self.qa_learning_rate >= 0.0 && self.weight_decay >= 0.0) {
            return bad("learning rates and weight decay must be non-negative".into());
        }
        if !((0.0..1.0).contains(&self.adam_beta1) && (0.0..1.0).contains(&self.adam_beta2) && self.adam_epsilon > 0.0) {
            return bad("adam betas must lie in [0, 1) and epsilon must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.qa_warmup_fraction) || self.grad_clip < 0.0 {
            return bad("qa_warmup_fraction must lie in [0, 1] and grad_clip must be non-negative".into());
        }
        if self.max_query_length + 3 >= self.encoder.max_sequence_length {
            return bad("max_query_length leaves no room for a passage".into());
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            epsilon: self.adam_epsilon,
            weight_decay: self.weight_decay,
        }
    }

    /// Every key with its effective value, in a fixed order.
    pub fn to_kv(&self) -> Vec<(String, String)> {
        let mut kv: Vec<(String, String)> = vec![("seed".into(), self.seed.to_string())];
        kv.extend(self.encoder.to_kv().into_iter().map(|(k, v)| (k.to_string(), v)));
        let rest: Vec<(&str, String)> = vec![
            ("corpus_path", path_str(&self.corpus_path)),
            ("vocab_path", path_str(&self.vocab_path)),
            ("pretrain_data_path", path_str(&self.pretrain_data_path)),
            ("checkpoint_path", path_str(&self.checkpoint_path)),
            ("qa_train_path", path_str(&self.qa_train_path)),
            ("qa_dev_path", path_str(&self.qa_dev_path)),
            ("predictions_path", path_str(&self.predictions_path)),
            ("vocab_size", self.vocab_size.to_string()),
            ("whole_form_fraction", self.whole_form_fraction.to_string()),
            (
                "noun_phrase_source",
                match self.noun_phrase_source {
                    NounPhraseSource::Annotations => "annotations",
                    NounPhraseSource::Heuristic => "heuristic",
                }
                .into(),
            ),
            ("lowercase", self.lowercase.to_string()),
            ("tokenizer", self.tokenizer.as_str().into()),
            ("clean", self.clean.to_string()),
            ("chunking", self.chunking.as_str().into()),
            ("chunk_max_words", self.chunk_max_words.to_string()),
            ("chunk_overlap_words", self.chunk_overlap_words.to_string()),
            ("masking_scheme", self.masking_scheme.as_str().into()),
            ("mask_budget", self.mask_budget.to_string()),
            ("warmup_steps", self.warmup_steps.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("weight_decay", self.weight_decay.to_string()),
            ("max_steps", self.max_steps.to_string()),
            ("learning_rate_decay", if self.linear_decay { "linear" } else { "none" }.into()),
            ("adam_epsilon", self.adam_epsilon.to_string()),
            ("adam_beta1", self.adam_beta1.to_string()),
            ("adam_beta2", self.adam_beta2.to_string()),
            ("grad_clip", self.grad_clip.to_string()),
            ("checkpoint_every", self.checkpoint_every.to_string()),
            ("qa_learning_rate", self.qa_learning_rate.to_string()),
            ("qa_epochs", self.qa_epochs.to_string()),
            ("qa_batch_size", self.qa_batch_size.to_string()),
            ("qa_warmup_fraction", self.qa_warmup_fraction.to_string()),
            ("qa_train_encoder", self.qa_train_encoder.to_string()),
            ("max_query_length", self.max_query_length.to_string()),
            ("max_answer_length", self.max_answer_length.to_string()),
            ("ablation_qa", self.ablation_qa.to_string()),
        ];
        kv.extend(rest.into_iter().map(|(k, v)| (k.to_string(), v)));
        kv
    }

    /// Hex SHA-256 of the canonical `key = value` listing.
    pub fn fingerprint(&self) -> String {
        let text: String = self.to_kv().iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn require(path: &Option<PathBuf>, key: &str) -> Result<PathBuf> {
        let p = path
            .clone()
            .ok_or_else(|| Error::Config(format!("`{key}` is required for this command")))?;
        if !p.exists() {
            return Err(Error::MissingInput(p));
        }
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_names_parse() {
        let src = "num_layers = 3\nhidden_size = 64\nattention_heads = 4\nattention_head_size = 16\n\
                   ffn_inner_hidden_size = 256\ndropout = 0.2\nwarmup_steps = 5\nlearning_rate = 2e-4\n\
                   batch_size = 4\nweight_decay = 0.0\nmax_steps = 9\nlearning_rate_decay = Linear\n\
                   adam_epsilon = 1e-6\nadam_beta1 = 0.9\nadam_beta2 = 0.98\n# comment\n\nsublayer_order = SA,NAA,FFN\n";
        let c = RunConfig::parse_str(src, Path::new("/base")).unwrap();
        assert_eq!(c.encoder.num_layers, 3);
        assert_eq!(c.encoder.hidden_dropout, 0.2);
        assert_eq!(c.encoder.attention_dropout, 0.2);
        assert_eq!(c.adam_beta2, 0.98);
        c.validate().unwrap();
    }

    #[test]
    fn unknown_and_bad_keys_are_rejected() {
        assert!(RunConfig::parse_str("hiden_size = 3", Path::new(".")).is_err());
        assert!(RunConfig::parse_str("max_steps = -1", Path::new(".")).is_err());
        assert!(RunConfig::parse_str("attention_head_size = 7", Path::new(".")).is_err());
        assert!(RunConfig::parse_str("no equals sign", Path::new(".")).is_err());
    }

    #[test]
    fn paths_resolve_against_config_dir() {
        let c = RunConfig::parse_str("vocab_path = v.txt\ncheckpoint_path = none", Path::new("/cfg")).unwrap();
        assert_eq!(c.vocab_path, Some(PathBuf::from("/cfg/v.txt")));
        assert_eq!(c.checkpoint_path, None);
    }

    #[test]
    fn fingerprint_tracks_values() {
        let a = RunConfig::default();
        let mut b = RunConfig::default();
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.apply_overrides(&["seed=8".into()]).unwrap();
        assert_ne!(a.fingerprint(), b.fingerprint());
    }
}
