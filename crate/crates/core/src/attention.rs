//! Multi-head scaled dot-product attention and its neighbor-aware and
//! relative-position variants.
//!
//! All four variants share one projection-and-head framework. They differ only
//! in the additive score mask (neighbor-aware hides the diagonal) and in the
//! relative-position terms added to the scores (`REL_QK`) or to the value
//! aggregation (`REL_QV`), following the clipped-distance formulation of
//! Shaw et al. (2018).

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::{Graph, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AttentionVariant {
    SelfAttention,
    NeighborAware,
    RelativeQk,
    RelativeQv,
}

impl AttentionVariant {
    pub const ALL: [AttentionVariant; 4] = [
        AttentionVariant::SelfAttention,
        AttentionVariant::NeighborAware,
        AttentionVariant::RelativeQk,
        AttentionVariant::RelativeQv,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AttentionVariant::SelfAttention => "SA",
            AttentionVariant::NeighborAware => "NAA",
            AttentionVariant::RelativeQk => "REL_QK",
            AttentionVariant::RelativeQv => "REL_QV",
        }
    }

    pub fn is_relative(self) -> bool {
        matches!(self, AttentionVariant::RelativeQk | AttentionVariant::RelativeQv)
    }
}

impl fmt::Display for AttentionVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AttentionVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AttentionVariant::ALL
            .into_iter()
            .find(|v| v.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown attention variant `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AttentionConfig {
    pub hidden_size: usize,
    pub num_heads: usize,
    pub head_size: usize,
    pub variant: AttentionVariant,
    pub max_relative_distance: usize,
    /// Dropout on attention probabilities; only applied when a dropout RNG is supplied.
    pub dropout: f64,
}

impl AttentionConfig {
    pub fn new(hidden_size: usize, num_heads: usize, variant: AttentionVariant) -> Result<Self> {
        if num_heads == 0 || hidden_size % num_heads != 0 {
            return Err(Error::Config(format!(
                "hidden size {hidden_size} is not divisible into {num_heads} heads"
            )));
        }
        let cfg = AttentionConfig {
            hidden_size,
            num_heads,
            head_size: hidden_size / num_heads,
            variant,
            max_relative_distance: 16,
            dropout: 0.0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_variant(mut self, variant: AttentionVariant) -> Self {
        self.variant = variant;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_size == 0 || self.num_heads == 0 || self.head_size == 0 {
            return Err(Error::Config("attention dimensions must be positive".into()));
        }
        if self.num_heads * self.head_size != self.hidden_size {
            return Err(Error::Config(format!(
                "{} heads x {} head size != hidden size {}",
                self.num_heads, self.head_size, self.hidden_size
            )));
        }
        if self.variant.is_relative() && self.max_relative_distance == 0 {
            return Err(Error::Config(
                "relative attention needs max_relative_distance >= 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} not in [0, 1)", self.dropout)));
        }
        Ok(())
    }

    fn relative_rows(&self) -> usize {
        2 * self.max_relative_distance + 1
    }
}

/// Binary mask with zero diagonal and ones elsewhere.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NeighborMask {
    size: usize,
    entries: Vec<u8>,
}

impl NeighborMask {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.entries[i * self.size + j]
    }

    pub fn to_rows(&self) -> Vec<Vec<u8>> {
        self.entries.chunks(self.size).map(<[u8]>::to_vec).collect()
    }
}

pub fn build_neighbor_mask(len: usize) -> Result<NeighborMask> {
    if len == 0 {
        return Err(Error::EmptySequence);
    }
    let entries = (0..len * len)
        .map(|k| u8::from(k / len != k % len))
        .collect();
    Ok(NeighborMask { size: len, entries })
}

/// Additive `L×L` score mask: `0` where key `j` is visible from query `i`,
/// `-inf` otherwise. Padding and the neighbor mask combine by logical AND.
pub fn score_mask(len: usize, variant: AttentionVariant, padding: Option<&[bool]>) -> Result<Tensor> {
    if len == 0 {
        return Err(Error::EmptySequence);
    }
    if let Some(p) = padding {
        if p.len() != len {
            return Err(Error::shape("padding mask", &[len], &[p.len()]));
        }
    }
    let neighbor = (variant == AttentionVariant::NeighborAware).then(|| build_neighbor_mask(len));
    let neighbor = neighbor.transpose()?;
    let mut mask = Tensor::zeros(&[len, len]);
    for i in 0..len {
        for j in 0..len {
            let visible = padding.is_none_or(|p| p[j])
                && neighbor.as_ref().is_none_or(|m| m.get(i, j) == 1);
            if !visible {
                mask.set(i, j, f64::NEG_INFINITY);
            }
        }
    }
    Ok(mask)
}

/// Projection weights for one attention sub-layer. Matrices are `d×d` and act
/// on the right (`Q = H·W_q + b_q`).
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionWeights {
    pub w_q: Tensor,
    pub b_q: Tensor,
    pub w_k: Tensor,
    pub b_k: Tensor,
    pub w_v: Tensor,
    pub b_v: Tensor,
    /// Output projection `(W_o, b_o)`; `None` returns the concatenated heads.
    pub output: Option<(Tensor, Tensor)>,
    /// `(2K+1)×d_k` table of relative-position embeddings, shared by all heads.
    pub relative: Option<Tensor>,
}

impl AttentionWeights {
    /// Identity projections, zero biases, no output projection.
    pub fn identity(d: usize) -> Self {
        AttentionWeights {
            w_q: Tensor::identity(d),
            b_q: Tensor::zeros(&[d]),
            w_k: Tensor::identity(d),
            b_k: Tensor::zeros(&[d]),
            w_v: Tensor::identity(d),
            b_v: Tensor::zeros(&[d]),
            output: None,
            relative: None,
        }
    }

    pub(crate) fn bind(&self, g: &mut Graph) -> AttentionVars {
        AttentionVars {
            w_q: g.param(self.w_q.clone()),
            b_q: g.param(self.b_q.clone()),
            w_k: g.param(self.w_k.clone()),
            b_k: g.param(self.b_k.clone()),
            w_v: g.param(self.w_v.clone()),
            b_v: g.param(self.b_v.clone()),
            output: self
                .output
                .as_ref()
                .map(|(w, b)| (g.param(w.clone()), g.param(b.clone()))),
            relative: self.relative.as_ref().map(|t| g.param(t.clone())),
        }
    }
}

/// Graph handles for an [`AttentionWeights`] set.
#[derive(Clone, Debug)]
pub struct AttentionVars {
    pub w_q: Var,
    pub b_q: Var,
    pub w_k: Var,
    pub b_k: Var,
    pub w_v: Var,
    pub b_v: Var,
    pub output: Option<(Var, Var)>,
    pub relative: Option<Var>,
}

pub struct AttentionOutput {
    pub output: Var,
    /// Per-head `L×L` attention probabilities.
    pub probabilities: Vec<Var>,
    /// Per-head `L×d_k` context before concatenation and output projection.
    pub head_contexts: Vec<Var>,
}

/// Records attention for input `h` on `g`.
pub fn attend(
    g: &mut Graph,
    h: Var,
    w: &AttentionVars,
    cfg: &AttentionConfig,
    padding: Option<&[bool]>,
    mut dropout_rng: Option<&mut ChaCha8Rng>,
) -> Result<AttentionOutput> {
    cfg.validate()?;
    let (len, d) = g.value(h).dims2();
    if d != cfg.hidden_size {
        return Err(Error::shape("attention input", g.value(h).shape(), &[len, cfg.hidden_size]));
    }
    let relative = if cfg.variant.is_relative() {
        let t = w.relative.ok_or_else(|| {
            Error::Config(format!("{} attention needs a relative embedding table", cfg.variant))
        })?;
        let dims = g.value(t).dims2();
        if dims != (cfg.relative_rows(), cfg.head_size) {
            return Err(Error::Config(format!(
                "relative table is {dims:?}, expected ({}, {}) for max distance {}",
                cfg.relative_rows(),
                cfg.head_size,
                cfg.max_relative_distance
            )));
        }
        Some(t)
    } else {
        None
    };

    let mask = score_mask(len, cfg.variant, padding)?;
    let project = |g: &mut Graph, wt: Var, b: Var| -> Result<Var> {
        let x = g.matmul(h, wt)?;
        g.add_bias(x, b)
    };
    let q = project(g, w.w_q, w.b_q)?;
    let k = project(g, w.w_k, w.b_k)?;
    let v = project(g, w.w_v, w.b_v)?;
    let scale = 1.0 / (cfg.head_size as f64).sqrt();

    let mut probabilities = Vec::with_capacity(cfg.num_heads);
    let mut head_contexts = Vec::with_capacity(cfg.num_heads);
    for head in 0..cfg.num_heads {
        let (lo, hi) = (head * cfg.head_size, (head + 1) * cfg.head_size);
        let qh = g.slice_cols(q, lo, hi)?;
        let kh = g.slice_cols(k, lo, hi)?;
        let vh = g.slice_cols(v, lo, hi)?;

        let mut scores = g.matmul_t(qh, false, kh, true)?;
        if let (AttentionVariant::RelativeQk, Some(t)) = (cfg.variant, relative) {
            let rel = g.relative_scores(qh, t, cfg.max_relative_distance)?;
            scores = g.add(scores, rel)?;
        }
        let scores = g.scale(scores, scale);
        let probs = g.softmax_rows(scores, Some(&mask))?;
        probabilities.push(probs);

        let attn = match dropout_rng.as_deref_mut() {
            Some(rng) if cfg.dropout > 0.0 => {
                let keep: Vec<bool> = (0..len * len)
                    .map(|_| rng.random::<f64>() >= cfg.dropout)
                    .collect();
                g.dropout(probs, &keep, cfg.dropout)?
            }
            _ => probs,
        };

        let mut ctx = g.matmul(attn, vh)?;
        if let (AttentionVariant::RelativeQv, Some(t)) = (cfg.variant, relative) {
            let rel = g.relative_values(attn, t, cfg.max_relative_distance)?;
            ctx = g.add(ctx, rel)?;
        }
        head_contexts.push(ctx);
    }

    let concat = if head_contexts.len() == 1 {
        head_contexts[0]
    } else {
        g.concat_cols(&head_contexts)?
    };
    let output = match w.output {
        Some((wo, bo)) => {
            let x = g.matmul(concat, wo)?;
            g.add_bias(x, bo)?
        }
        None => concat,
    };
    Ok(AttentionOutput {
        output,
        probabilities,
        head_contexts,
    })
}

fn run(
    h: &Tensor,
    weights: &AttentionWeights,
    padding: Option<&[bool]>,
    cfg: &AttentionConfig,
) -> Result<(Tensor, Vec<Tensor>)> {
    let mut g = Graph::new();
    let hv = g.constant(h.clone());
    let vars = weights.bind(&mut g);
    let out = attend(&mut g, hv, &vars, cfg, padding, None)?;
    let probs = out
        .probabilities
        .iter()
        .map(|&p| g.value(p).clone())
        .collect();
    Ok((g.value(out.output).clone(), probs))
}

/// Standard multi-head self-attention of `h` (`L×d`).
pub fn self_attention(
    h: &Tensor,
    weights: &AttentionWeights,
    padding: Option<&[bool]>,
    cfg: &AttentionConfig,
) -> Result<Tensor> {
    run(h, weights, padding, &cfg.with_variant(AttentionVariant::SelfAttention)).map(|r| r.0)
}

/// Self-attention in which no position attends to itself.
pub fn neighbor_aware_attention(
    h: &Tensor,
    weights: &AttentionWeights,
    padding: Option<&[bool]>,
    cfg: &AttentionConfig,
) -> Result<Tensor> {
    run(h, weights, padding, &cfg.with_variant(AttentionVariant::NeighborAware)).map(|r| r.0)
}

/// Self-attention with clipped relative-position embeddings added to the
/// scores (`RelativeQk`) or to the aggregated values (`RelativeQv`).
pub fn relative_position_attention(
    h: &Tensor,
    weights: &AttentionWeights,
    relative_embeddings: &Tensor,
    mode: AttentionVariant,
    padding: Option<&[bool]>,
    cfg: &AttentionConfig,
) -> Result<Tensor> {
    if !mode.is_relative() {
        return Err(Error::Config(format!("{mode} is not a relative attention mode")));
    }
    let mut w = weights.clone();
    w.relative = Some(relative_embeddings.clone());
    run(h, &w, padding, &cfg.with_variant(mode)).map(|r| r.0)
}

/// Per-head attention probability matrices for the configured variant.
pub fn attention_probabilities(
    h: &Tensor,
    weights: &AttentionWeights,
    padding: Option<&[bool]>,
    cfg: &AttentionConfig,
) -> Result<Vec<Tensor>> {
    run(h, weights, padding, cfg).map(|r| r.1)
}
