//! Graph construction for the encoder stack and its MLM and QA heads.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::attention::{attend, AttentionVars};
use crate::encoder::{ModelParams, SubLayerSlots};
use crate::error::{Error, Result};
use crate::numerics::{Gradients, Graph, Tensor, Var};

/// Model parameters registered on one graph.
pub struct BoundModel<'a> {
    pub params: &'a ModelParams,
    pub vars: Vec<Var>,
}

impl<'a> BoundModel<'a> {
    pub fn bind(g: &mut Graph, params: &'a ModelParams) -> Self {
        let vars = params.tensors.iter().map(|t| g.param(t.clone())).collect();
        BoundModel { params, vars }
    }

    /// Gradients for every parameter in store order; unused ones are zero.
    pub fn gradients(&self, grads: &Gradients) -> Vec<Tensor> {
        self.vars
            .iter()
            .zip(&self.params.tensors)
            .map(|(&v, t)| grads.get_or_zeros(v, t))
            .collect()
    }
}

fn hidden_dropout(g: &mut Graph, x: Var, rate: f64, rng: Option<&mut ChaCha8Rng>) -> Result<Var> {
    match rng {
        Some(rng) if rate > 0.0 => {
            let keep: Vec<bool> = (0..g.value(x).numel()).map(|_| rng.random::<f64>() >= rate).collect();
            g.dropout(x, &keep, rate)
        }
        _ => Ok(x),
    }
}

/// Token plus position embeddings, then every block; each sub-layer is
/// wrapped as `LayerNorm(x + Dropout(sublayer(x)))`. Dropout is active only
/// when `rng` is given.
pub fn encode(
    g: &mut Graph,
    model: &BoundModel,
    ids: &[usize],
    padding: Option<&[bool]>,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<Var> {
    let p = model.params;
    let cfg = &p.config;
    let v = &model.vars;
    let len = ids.len();
    if len == 0 {
        return Err(Error::EmptySequence);
    }
    if len > cfg.max_sequence_length {
        return Err(Error::Length { len, max: cfg.max_sequence_length });
    }
    if let Some(&bad) = ids.iter().find(|&&id| id >= p.vocab_size) {
        return Err(Error::Index { what: "token id", index: bad, size: p.vocab_size });
    }
    let tok = g.gather_rows(v[p.layout.token_embeddings], ids)?;
    let positions: Vec<usize> = (0..len).collect();
    let pos = g.gather_rows(v[p.layout.position_embeddings], &positions)?;
    let mut h = g.add(tok, pos)?;
    h = hidden_dropout(g, h, cfg.hidden_dropout, rng.as_deref_mut())?;

    for block in &p.layout.blocks {
        for sub in block {
            let (out, gamma, beta) = match sub {
                SubLayerSlots::Attention(s) => {
                    let vars = AttentionVars {
                        w_q: v[s.w_q],
                        b_q: v[s.b_q],
                        w_k: v[s.w_k],
                        b_k: v[s.b_k],
                        w_v: v[s.w_v],
                        b_v: v[s.b_v],
                        output: Some((v[s.w_o], v[s.b_o])),
                        relative: s.relative.map(|r| v[r]),
                    };
                    let acfg = cfg.attention(s.variant);
                    let out = attend(g, h, &vars, &acfg, padding, rng.as_deref_mut())?.output;
                    (out, s.gamma, s.beta)
                }
                SubLayerSlots::FeedForward(s) => {
                    let x = g.matmul(h, v[s.w_in])?;
                    let x = g.add_bias(x, v[s.b_in])?;
                    let x = g.gelu(x);
                    let x = g.matmul(x, v[s.w_out])?;
                    (g.add_bias(x, v[s.b_out])?, s.gamma, s.beta)
                }
            };
            let out = hidden_dropout(g, out, cfg.hidden_dropout, rng.as_deref_mut())?;
            let sum = g.add(h, out)?;
            h = g.layer_norm(sum, v[gamma], v[beta], cfg.layer_norm_eps)?;
        }
    }
    Ok(h)
}

/// Tied-embedding logits (`P×V`) for the hidden rows at `positions`.
pub fn mlm_logits(g: &mut Graph, model: &BoundModel, hidden: Var, positions: &[usize]) -> Result<Var> {
    let p = model.params;
    let len = g.value(hidden).rows();
    if let Some(&bad) = positions.iter().find(|&&i| i >= len) {
        return Err(Error::Plan(format!("predict position {bad} outside a {len}-token sequence")));
    }
    let rows = g.gather_rows(hidden, positions)?;
    let logits = g.matmul_t(rows, false, model.vars[p.layout.token_embeddings], true)?;
    g.add_bias(logits, model.vars[p.layout.mlm_bias])
}

/// Mean cross-entropy over the predicted positions, or `None` if there are none.
pub fn mlm_loss(
    g: &mut Graph,
    model: &BoundModel,
    hidden: Var,
    positions: &[usize],
    targets: &[usize],
) -> Result<Option<Var>> {
    if positions.len() != targets.len() {
        return Err(Error::Plan(format!(
            "{} predict positions but {} targets",
            positions.len(),
            targets.len()
        )));
    }
    if positions.is_empty() {
        return Ok(None);
    }
    let logits = mlm_logits(g, model, hidden, positions)?;
    let pairs: Vec<(usize, usize)> = targets.iter().copied().enumerate().collect();
    g.nll(logits, &pairs, None).map(Some)
}

/// Start and end logits, each `1×L`.
pub fn qa_logits(g: &mut Graph, model: &BoundModel, hidden: Var) -> Result<(Var, Var)> {
    let p = model.params;
    let len = g.value(hidden).rows();
    let s = g.matmul(hidden, model.vars[p.layout.qa_start])?;
    let e = g.matmul(hidden, model.vars[p.layout.qa_end])?;
    Ok((g.reshape(s, &[1, len])?, g.reshape(e, &[1, len])?))
}

/// Additive mask allowing only `allowed` positions as span boundaries.
pub fn span_mask(allowed: &[bool]) -> Vec<f64> {
    allowed.iter().map(|&a| if a { 0.0 } else { f64::NEG_INFINITY }).collect()
}

/// Mean of the start and end cross-entropies over allowed positions.
pub fn qa_loss(
    g: &mut Graph,
    model: &BoundModel,
    hidden: Var,
    allowed: &[bool],
    start: usize,
    end: usize,
) -> Result<Var> {
    if !(start <= end && allowed.get(start) == Some(&true) && allowed.get(end) == Some(&true)) {
        return Err(Error::Plan(format!("answer span [{start}, {end}] is outside the passage")));
    }
    let (s, e) = qa_logits(g, model, hidden)?;
    let mask = span_mask(allowed);
    let ls = g.nll(s, &[(0, start)], Some(&mask))?;
    let le = g.nll(e, &[(0, end)], Some(&mask))?;
    let sum = g.add(ls, le)?;
    Ok(g.scale(sum, 0.5))
}

/// Evaluation-mode hidden states (`L×d`).
pub fn encode_sequence(ids: &[usize], padding: Option<&[bool]>, params: &ModelParams) -> Result<Tensor> {
    let mut g = Graph::new();
    let model = BoundModel::bind(&mut g, params);
    let h = encode(&mut g, &model, ids, padding, None)?;
    Ok(g.value(h).clone())
}

pub struct MlmOutput {
    pub loss: f64,
    /// `P×V` logits for the predicted positions, in the given order.
    pub logits: Option<Tensor>,
}

/// Evaluation-mode MLM loss over `positions`; an empty position list gives 0.
pub fn mlm_forward(
    masked_ids: &[usize],
    positions: &[usize],
    targets: &[usize],
    params: &ModelParams,
) -> Result<MlmOutput> {
    let mut g = Graph::new();
    let model = BoundModel::bind(&mut g, params);
    let h = encode(&mut g, &model, masked_ids, None, None)?;
    match mlm_loss(&mut g, &model, h, positions, targets)? {
        None => Ok(MlmOutput { loss: 0.0, logits: None }),
        Some(loss) => {
            let logits = mlm_logits(&mut g, &model, h, positions)?;
            Ok(MlmOutput {
                loss: g.value(loss).data()[0],
                logits: Some(g.value(logits).clone()),
            })
        }
    }
}

/// Evaluation-mode start and end logits for `[CLS] question [SEP] passage [SEP]`.
pub fn qa_span_forward(ids: &[usize], params: &ModelParams) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut g = Graph::new();
    let model = BoundModel::bind(&mut g, params);
    let h = encode(&mut g, &model, ids, None, None)?;
    let (s, e) = qa_logits(&mut g, &model, h)?;
    Ok((g.value(s).data().to_vec(), g.value(e).data().to_vec()))
}

/// One MLM training item.
pub struct MlmItem<'a> {
    pub masked_ids: &'a [usize],
    pub positions: &'a [usize],
    pub targets: &'a [usize],
}

/// Loss averaged over all predicted tokens in the batch and its gradients.
/// Items are processed in order, so the reduction is deterministic.
pub fn mlm_batch_gradients(
    params: &ModelParams,
    items: &[MlmItem],
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<(f64, Vec<Tensor>)> {
    let total: usize = items.iter().map(|it| it.positions.len()).sum();
    let mut g = Graph::new();
    let model = BoundModel::bind(&mut g, params);
    let mut acc: Option<Var> = None;
    for it in items {
        let h = encode(&mut g, &model, it.masked_ids, None, rng.as_deref_mut())?;
        if let Some(l) = mlm_loss(&mut g, &model, h, it.positions, it.targets)? {
            let w = g.scale(l, it.positions.len() as f64 / total as f64);
            acc = Some(match acc {
                None => w,
                Some(a) => g.add(a, w)?,
            });
        }
    }
    let Some(loss) = acc else {
        return Ok((0.0, params.tensors.iter().map(|t| Tensor::zeros(t.shape())).collect()));
    };
    let grads = g.backward(loss);
    Ok((g.value(loss).data()[0], model.gradients(&grads)))
}

/// One QA training item; `allowed` marks passage positions.
pub struct QaItem<'a> {
    pub ids: &'a [usize],
    pub allowed: &'a [bool],
    pub start: usize,
    pub end: usize,
}

/// Mean span loss over the batch and its gradients.
pub fn qa_batch_gradients(
    params: &ModelParams,
    items: &[QaItem],
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<(f64, Vec<Tensor>)> {
    if items.is_empty() {
        return Ok((0.0, params.tensors.iter().map(|t| Tensor::zeros(t.shape())).collect()));
    }
    let mut g = Graph::new();
    let model = BoundModel::bind(&mut g, params);
    let mut acc: Option<Var> = None;
    for it in items {
        let h = encode(&mut g, &model, it.ids, None, rng.as_deref_mut())?;
        let l = qa_loss(&mut g, &model, h, it.allowed, it.start, it.end)?;
        let w = g.scale(l, 1.0 / items.len() as f64);
        acc = Some(match acc {
            None => w,
            Some(a) => g.add(a, w)?,
        });
    }
    let loss = acc.expect("non-empty batch");
    let grads = g.backward(loss);
    Ok((g.value(loss).data()[0], model.gradients(&grads)))
}
