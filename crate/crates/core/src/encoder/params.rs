use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::attention::AttentionVariant;
use crate::encoder::{EncoderStackConfig, SubLayer};
use crate::error::{Error, Result};
use crate::numerics::{truncated_normal, Tensor};

/// Indices into [`ModelParams::tensors`] for one attention sub-layer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AttentionSlots {
    pub variant: AttentionVariant,
    pub w_q: usize,
    pub b_q: usize,
    pub w_k: usize,
    pub b_k: usize,
    pub w_v: usize,
    pub b_v: usize,
    pub w_o: usize,
    pub b_o: usize,
    pub relative: Option<usize>,
    pub gamma: usize,
    pub beta: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeedForwardSlots {
    pub w_in: usize,
    pub b_in: usize,
    pub w_out: usize,
    pub b_out: usize,
    pub gamma: usize,
    pub beta: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SubLayerSlots {
    Attention(AttentionSlots),
    FeedForward(FeedForwardSlots),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamLayout {
    pub token_embeddings: usize,
    pub position_embeddings: usize,
    pub blocks: Vec<Vec<SubLayerSlots>>,
    pub mlm_bias: usize,
    pub qa_start: usize,
    pub qa_end: usize,
}

/// Flat named parameter store; `layout` maps model roles to tensor indices.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub config: EncoderStackConfig,
    pub vocab_size: usize,
    pub names: Vec<String>,
    pub tensors: Vec<Tensor>,
    /// Whether weight decay applies (false for biases and layer-norm parameters).
    pub decay: Vec<bool>,
    pub layout: ParamLayout,
}

enum Init {
    Normal,
    Zeros,
    Ones,
}

struct Builder {
    rng: ChaCha8Rng,
    std: f64,
    names: Vec<String>,
    tensors: Vec<Tensor>,
    decay: Vec<bool>,
}

impl Builder {
    fn add(&mut self, name: String, shape: &[usize], init: Init) -> usize {
        let (t, decay) = match init {
            Init::Normal => (truncated_normal(&mut self.rng, shape, self.std), true),
            Init::Zeros => (Tensor::zeros(shape), false),
            Init::Ones => (Tensor::ones(shape), false),
        };
        self.names.push(name);
        self.tensors.push(t);
        self.decay.push(decay);
        self.tensors.len() - 1
    }
}

/// Deterministic initialization: truncated normal (±2σ) weights and
/// embeddings, zero biases and layer-norm shifts, unit layer-norm scales.
pub fn build_model(config: &EncoderStackConfig, vocab_size: usize, seed: u64) -> Result<ModelParams> {
    config.validate()?;
    if vocab_size == 0 {
        return Err(Error::Config("vocabulary is empty".into()));
    }
    let d = config.hidden_size;
    let f = config.ffn_inner_size;
    let mut b = Builder {
        rng: ChaCha8Rng::seed_from_u64(seed),
        std: config.init_std,
        names: Vec::new(),
        tensors: Vec::new(),
        decay: Vec::new(),
    };
    let token_embeddings = b.add("embeddings.token".into(), &[vocab_size, d], Init::Normal);
    let position_embeddings =
        b.add("embeddings.position".into(), &[config.max_sequence_length, d], Init::Normal);

    let mut blocks = Vec::with_capacity(config.num_layers);
    for layer in 0..config.num_layers {
        let mut subs = Vec::with_capacity(config.sublayer_order.len());
        for (pos, sub) in config.sublayer_order.iter().enumerate() {
            let p = format!("block{layer}.{pos}.{}", sub.as_str().to_lowercase());
            subs.push(match *sub {
                SubLayer::Attention(variant) => {
                    let w_q = b.add(format!("{p}.w_q"), &[d, d], Init::Normal);
                    let b_q = b.add(format!("{p}.b_q"), &[d], Init::Zeros);
                    let w_k = b.add(format!("{p}.w_k"), &[d, d], Init::Normal);
                    let b_k = b.add(format!("{p}.b_k"), &[d], Init::Zeros);
                    let w_v = b.add(format!("{p}.w_v"), &[d, d], Init::Normal);
                    let b_v = b.add(format!("{p}.b_v"), &[d], Init::Zeros);
                    let w_o = b.add(format!("{p}.w_o"), &[d, d], Init::Normal);
                    let b_o = b.add(format!("{p}.b_o"), &[d], Init::Zeros);
                    let relative = variant.is_relative().then(|| {
                        let rows = 2 * config.max_relative_distance + 1;
                        b.add(format!("{p}.relative"), &[rows, config.head_size()], Init::Normal)
                    });
                    let gamma = b.add(format!("{p}.ln.gamma"), &[d], Init::Ones);
                    let beta = b.add(format!("{p}.ln.beta"), &[d], Init::Zeros);
                    SubLayerSlots::Attention(AttentionSlots {
                        variant,
                        w_q,
                        b_q,
                        w_k,
                        b_k,
                        w_v,
                        b_v,
                        w_o,
                        b_o,
                        relative,
                        gamma,
                        beta,
                    })
                }
                SubLayer::FeedForward => {
                    let w_in = b.add(format!("{p}.w_in"), &[d, f], Init::Normal);
                    let b_in = b.add(format!("{p}.b_in"), &[f], Init::Zeros);
                    let w_out = b.add(format!("{p}.w_out"), &[f, d], Init::Normal);
                    let b_out = b.add(format!("{p}.b_out"), &[d], Init::Zeros);
                    let gamma = b.add(format!("{p}.ln.gamma"), &[d], Init::Ones);
                    let beta = b.add(format!("{p}.ln.beta"), &[d], Init::Zeros);
                    SubLayerSlots::FeedForward(FeedForwardSlots { w_in, b_in, w_out, b_out, gamma, beta })
                }
            });
        }
        blocks.push(subs);
    }
    let mlm_bias = b.add("mlm.bias".into(), &[vocab_size], Init::Zeros);
    let qa_start = b.add("qa.start".into(), &[d, 1], Init::Normal);
    let qa_end = b.add("qa.end".into(), &[d, 1], Init::Normal);

    Ok(ModelParams {
        config: config.clone(),
        vocab_size,
        names: b.names,
        tensors: b.tensors,
        decay: b.decay,
        layout: ParamLayout {
            token_embeddings,
            position_embeddings,
            blocks,
            mlm_bias,
            qa_start,
            qa_end,
        },
    })
}

/// Parameter count from the configuration alone.
pub fn parameter_count(config: &EncoderStackConfig, vocab_size: usize) -> usize {
    let d = config.hidden_size;
    let f = config.ffn_inner_size;
    let per_block: usize = config
        .sublayer_order
        .iter()
        .map(|s| match s {
            SubLayer::Attention(v) => {
                let rel = if v.is_relative() {
                    (2 * config.max_relative_distance + 1) * config.head_size()
                } else {
                    0
                };
                4 * d * d + 4 * d + rel + 2 * d
            }
            SubLayer::FeedForward => d * f + f + f * d + d + 2 * d,
        })
        .sum();
    vocab_size * d + config.max_sequence_length * d + config.num_layers * per_block + vocab_size + 2 * d
}

impl ModelParams {
    pub fn num_parameters(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn by_name(&self) -> HashMap<&str, &Tensor> {
        self.names.iter().map(String::as_str).zip(&self.tensors).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }
}
