use std::fmt;
use std::str::FromStr;

use crate::attention::{AttentionConfig, AttentionVariant};
use crate::error::{Error, Result};

/// One sub-layer of an encoder block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SubLayer {
    Attention(AttentionVariant),
    FeedForward,
}

impl SubLayer {
    pub fn as_str(self) -> &'static str {
        match self {
            SubLayer::Attention(v) => v.as_str(),
            SubLayer::FeedForward => "FFN",
        }
    }
}

impl fmt::Display for SubLayer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SubLayer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("FFN") {
            Ok(SubLayer::FeedForward)
        } else {
            s.parse().map(SubLayer::Attention)
        }
    }
}

/// Parses `SA,NAA,FFN` (also accepts `->` or whitespace as separators).
pub fn parse_sublayer_order(s: &str) -> Result<Vec<SubLayer>> {
    s.replace("->", ",")
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|p| !p.is_empty())
        .map(str::parse)
        .collect()
}

pub fn format_sublayer_order(order: &[SubLayer]) -> String {
    order.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(",")
}

/// The six block layouts compared in the stacking ablation.
pub fn stacking_orders() -> [Vec<SubLayer>; 6] {
    use AttentionVariant::{NeighborAware as Naa, SelfAttention as Sa};
    use SubLayer::{Attention as A, FeedForward as F};
    [
        vec![A(Sa), F],
        vec![A(Naa), F],
        vec![A(Sa), A(Sa), F],
        vec![A(Naa), A(Naa), F],
        vec![A(Naa), A(Sa), F],
        vec![A(Sa), A(Naa), F],
    ]
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderStackConfig {
    pub num_layers: usize,
    pub sublayer_order: Vec<SubLayer>,
    pub hidden_size: usize,
    pub ffn_inner_size: usize,
    pub num_heads: usize,
    pub max_sequence_length: usize,
    /// Dropout on attention probabilities.
    pub attention_dropout: f64,
    /// Dropout on embeddings and sub-layer outputs.
    pub hidden_dropout: f64,
    pub max_relative_distance: usize,
    pub layer_norm_eps: f64,
    pub init_std: f64,
}

impl Default for EncoderStackConfig {
    fn default() -> Self {
        EncoderStackConfig {
            num_layers: 2,
            sublayer_order: vec![
                SubLayer::Attention(AttentionVariant::SelfAttention),
                SubLayer::Attention(AttentionVariant::NeighborAware),
                SubLayer::FeedForward,
            ],
            hidden_size: 128,
            ffn_inner_size: 512,
            num_heads: 4,
            max_sequence_length: 128,
            attention_dropout: 0.1,
            hidden_dropout: 0.1,
            max_relative_distance: 16,
            layer_norm_eps: 1e-12,
            init_std: 0.02,
        }
    }
}

impl EncoderStackConfig {
    pub fn head_size(&self) -> usize {
        self.hidden_size / self.num_heads.max(1)
    }

    pub fn attention(&self, variant: AttentionVariant) -> AttentionConfig {
        AttentionConfig {
            hidden_size: self.hidden_size,
            num_heads: self.num_heads,
            head_size: self.head_size(),
            variant,
            max_relative_distance: self.max_relative_distance,
            dropout: self.attention_dropout,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.num_layers == 0 {
            return bad("num_layers must be positive".into());
        }
        if self.sublayer_order.last() != Some(&SubLayer::FeedForward) {
            return bad(format!(
                "sublayer order `{}` must be non-empty and end with FFN",
                format_sublayer_order(&self.sublayer_order)
            ));
        }
        if self.hidden_size == 0 || self.ffn_inner_size == 0 || self.max_sequence_length == 0 {
            return bad("hidden size, FFN size and max sequence length must be positive".into());
        }
        if self.num_heads == 0 || self.hidden_size % self.num_heads != 0 {
            return bad(format!(
                "hidden size {} is not divisible by {} heads",
                self.hidden_size, self.num_heads
            ));
        }
        for p in [self.attention_dropout, self.hidden_dropout] {
            if !(0.0..1.0).contains(&p) {
                return bad(format!("dropout {p} not in [0, 1)"));
            }
        }
        if !(self.layer_norm_eps > 0.0 && self.init_std > 0.0) {
            return bad("layer_norm_eps and init_std must be positive".into());
        }
        for s in &self.sublayer_order {
            if let SubLayer::Attention(v) = s {
                self.attention(*v).validate()?;
            }
        }
        Ok(())
    }

    /// Canonical `key = value` lines, in a fixed order.
    pub fn to_kv(&self) -> Vec<(&'static str, String)> {
        vec![
            ("num_layers", self.num_layers.to_string()),
            ("sublayer_order", format_sublayer_order(&self.sublayer_order)),
            ("hidden_size", self.hidden_size.to_string()),
            ("ffn_inner_hidden_size", self.ffn_inner_size.to_string()),
            ("attention_heads", self.num_heads.to_string()),
            ("max_sequence_length", self.max_sequence_length.to_string()),
            ("attention_dropout", self.attention_dropout.to_string()),
            ("hidden_dropout", self.hidden_dropout.to_string()),
            ("max_relative_distance", self.max_relative_distance.to_string()),
            ("layer_norm_eps", self.layer_norm_eps.to_string()),
            ("init_std", self.init_std.to_string()),
        ]
    }

    /// Applies one `to_kv` key; returns false for keys this type does not own.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad value `{v}` for {key}")))
        }
        match key {
            "num_layers" => self.num_layers = num(key, value)?,
            "sublayer_order" => self.sublayer_order = parse_sublayer_order(value)?,
            "hidden_size" => self.hidden_size = num(key, value)?,
            "ffn_inner_hidden_size" => self.ffn_inner_size = num(key, value)?,
            "attention_heads" => self.num_heads = num(key, value)?,
            "max_sequence_length" => self.max_sequence_length = num(key, value)?,
            "attention_dropout" => self.attention_dropout = num(key, value)?,
            "hidden_dropout" => self.hidden_dropout = num(key, value)?,
            "max_relative_distance" => self.max_relative_distance = num(key, value)?,
            "layer_norm_eps" => self.layer_norm_eps = num(key, value)?,
            "init_std" => self.init_std = num(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}
