//! Pretraining and QA fine-tuning loops.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::derive_seed;
use crate::encoder::{decode_span, mlm_batch_gradients, mlm_forward, qa_batch_gradients, qa_span_forward, MlmItem, ModelParams, QaItem};
use crate::error::{Error, Result};
use crate::harness::config::RunConfig;
use crate::harness::data::PretrainingExample;
use crate::harness::schedule::learning_rate;
use crate::harness::squad::{span_text, QaExample, QaFeature};
use crate::numerics::{adam_step, AdamConfig, OptimizerState, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepLog {
    /// One-based optimizer step.
    pub step: u64,
    pub loss: f64,
    pub lr: f64,
}

pub fn loss_log_csv(log: &[StepLog]) -> String {
    let mut s = String::from("step,loss,lr\n");
    for r in log {
        s.push_str(&format!("{},{},{}\n", r.step, r.loss, r.lr));
    }
    s
}

/// Endless stream of indices: concatenated seeded permutations of `0..n`.
struct EpochStream {
    n: usize,
    seed: u64,
    label: &'static str,
    epoch: u64,
    order: Vec<usize>,
    cursor: usize,
}

impl EpochStream {
    fn new(n: usize, seed: u64, label: &'static str) -> Self {
        EpochStream { n, seed, label, epoch: 0, order: Vec::new(), cursor: 0 }
    }

    fn next(&mut self) -> usize {
        if self.cursor == self.order.len() {
            self.order = (0..self.n).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, &format!("{}:{}", self.label, self.epoch)));
            self.order.shuffle(&mut rng);
            self.epoch += 1;
            self.cursor = 0;
        }
        self.cursor += 1;
        self.order[self.cursor - 1]
    }
}

/// Scales `grads` in place so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let norm = grads.iter().flat_map(|g| g.data()).map(|v| v * v).sum::<f64>().sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let s = max_norm / norm;
        for g in grads {
            g.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }
    norm
}

/// Adam over a subset of tensors; the rest stay frozen.
struct Trainer {
    trainable: Vec<usize>,
    state: OptimizerState,
    names: Vec<String>,
    decay: Vec<bool>,
    adam: AdamConfig,
    clip: f64,
}

impl Trainer {
    fn new(params: &ModelParams, trainable: Vec<usize>, adam: AdamConfig, clip: f64) -> Self {
        let sub: Vec<Tensor> = trainable.iter().map(|&i| params.tensors[i].clone()).collect();
        Trainer {
            state: OptimizerState::new(&sub),
            names: trainable.iter().map(|&i| params.names[i].clone()).collect(),
            decay: trainable.iter().map(|&i| params.decay[i]).collect(),
            trainable,
            adam,
            clip,
        }
    }

    fn step(&mut self, params: &mut ModelParams, grads: Vec<Tensor>, lr: f64) -> Result<()> {
        let mut grads: Vec<Option<Tensor>> = grads.into_iter().map(Some).collect();
        let mut sub_g: Vec<Tensor> = self.trainable.iter().map(|&i| grads[i].take().expect("distinct indices")).collect();
        clip_global_norm(&mut sub_g, self.clip);
        let mut sub_p: Vec<Tensor> = self.trainable.iter().map(|&i| params.tensors[i].clone()).collect();
        let res = adam_step(&mut sub_p, &sub_g, &mut self.state, &self.names, &self.decay, lr, &self.adam);
        for (&i, t) in self.trainable.iter().zip(sub_p) {
            params.tensors[i] = t;
        }
        res
    }
}

/// Runs `cfg.max_steps` MLM updates. `on_step` sees the parameters after each
/// update. On a non-finite loss or gradient the error is returned together with
/// the last finite parameters.
pub fn pretrain(
    params: ModelParams,
    examples: &[PretrainingExample],
    cfg: &RunConfig,
    mut on_step: impl FnMut(&StepLog, &ModelParams) -> Result<()>,
) -> std::result::Result<(ModelParams, Vec<StepLog>), (Error, Box<ModelParams>)> {
    let mut params = params;
    if examples.is_empty() && cfg.max_steps > 0 {
        return Err((Error::Config("no pretraining examples".into()), Box::new(params)));
    }
    let all: Vec<usize> = (0..params.tensors.len()).collect();
    let mut trainer = Trainer::new(&params, all, cfg.adam(), cfg.grad_clip);
    let mut stream = EpochStream::new(examples.len(), cfg.seed, "pretrain-epoch");
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "pretrain-dropout"));
    let mut log = Vec::with_capacity(cfg.max_steps as usize);

    for step in 0..cfg.max_steps {
        let batch: Vec<&PretrainingExample> = (0..cfg.batch_size).map(|_| &examples[stream.next()]).collect();
        let items: Vec<MlmItem> = batch
            .iter()
            .map(|e| MlmItem { masked_ids: &e.masked_ids, positions: &e.predict_positions, targets: &e.target_ids })
            .collect();
        let lr = learning_rate(step, cfg.learning_rate, cfg.warmup_steps, cfg.max_steps, cfg.linear_decay);
        let (loss, grads) = match mlm_batch_gradients(&params, &items, Some(&mut dropout_rng)) {
            Ok(x) => x,
            Err(e) => return Err((e, Box::new(params))),
        };
        if !loss.is_finite() {
            return Err((Error::NonFiniteLoss { step: step as usize + 1 }, Box::new(params)));
        }
        let before = params.clone();
        if let Err(e) = trainer.step(&mut params, grads, lr) {
            return Err((e, Box::new(before)));
        }
        let row = StepLog { step: step + 1, loss, lr };
        log.push(row);
        if let Err(e) = on_step(&row, &params) {
            return Err((e, Box::new(params)));
        }
    }
    Ok((params, log))
}

/// Mean MLM loss over `examples` with dropout off, weighted by predicted count.
pub fn evaluate_mlm(params: &ModelParams, examples: &[PretrainingExample]) -> Result<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for e in examples {
        if e.predict_positions.is_empty() {
            continue;
        }
        let out = mlm_forward(&e.masked_ids, &e.predict_positions, &e.target_ids, params)?;
        sum += out.loss * e.predict_positions.len() as f64;
        n += e.predict_positions.len();
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

/// Fine-tunes span heads (and the encoder when `qa_train_encoder`). Features
/// whose answer did not survive truncation are skipped.
pub fn finetune_qa(params: ModelParams, features: &[QaFeature], cfg: &RunConfig) -> Result<(ModelParams, Vec<StepLog>)> {
    let mut params = params;
    let usable: Vec<&QaFeature> = features.iter().filter(|f| f.answer.is_some()).collect();
    if usable.is_empty() {
        return Err(Error::Config("no QA training example has an answer inside the window".into()));
    }
    let trainable: Vec<usize> = if cfg.qa_train_encoder {
        (0..params.tensors.len()).collect()
    } else {
        vec![params.layout.qa_start, params.layout.qa_end]
    };
    let adam = AdamConfig { weight_decay: cfg.weight_decay, ..cfg.adam() };
    let mut trainer = Trainer::new(&params, trainable, adam, cfg.grad_clip);
    let bs = cfg.qa_batch_size.max(1);
    let per_epoch = usable.len().div_ceil(bs) as u64;
    let total = per_epoch * cfg.qa_epochs;
    let warmup = (cfg.qa_warmup_fraction * total as f64).floor() as u64;
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "qa-dropout"));
    let mut log = Vec::with_capacity(total as usize);

    let mut step = 0u64;
    for epoch in 0..cfg.qa_epochs {
        let mut order: Vec<usize> = (0..usable.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &format!("qa-epoch:{epoch}"))));
        for chunk in order.chunks(bs) {
            let items: Vec<QaItem> = chunk
                .iter()
                .map(|&i| {
                    let f = usable[i];
                    let (start, end) = f.answer.expect("filtered");
                    QaItem { ids: &f.ids, allowed: &f.allowed, start, end }
                })
                .collect();
            let lr = learning_rate(step, cfg.qa_learning_rate, warmup, total, cfg.linear_decay);
            let (loss, grads) = qa_batch_gradients(&params, &items, Some(&mut dropout_rng))?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { step: step as usize + 1 });
            }
            trainer.step(&mut params, grads, lr)?;
            step += 1;
            log.push(StepLog { step, loss, lr });
        }
    }
    Ok((params, log))
}

/// Answer text per example id, decoded from the span heads.
pub fn predict_answers(
    params: &ModelParams,
    examples: &[QaExample],
    features: &[QaFeature],
    max_answer_len: usize,
) -> Result<std::collections::BTreeMap<String, String>> {
    let mut out = std::collections::BTreeMap::new();
    for (ex, f) in examples.iter().zip(features) {
        let (s, e) = qa_span_forward(&f.ids, params)?;
        let span = decode_span(&s, &e, &f.allowed, max_answer_len);
        out.insert(ex.id.clone(), span_text(&ex.context, f, span).to_string());
    }
    Ok(out)
}
