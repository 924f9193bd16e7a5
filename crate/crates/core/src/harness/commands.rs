//! Command implementations. Each validates its inputs before any compute and
//! writes its outputs into `out`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::encoder::{build_model, Checkpoint, ModelParams};
use crate::error::{Error, Result};
use crate::harness::config::RunConfig;
use crate::harness::data::{build_pretraining_examples, load_corpus, read_examples, write_examples};
use crate::harness::metrics::{evaluate_em_f1, EvalReport};
use crate::harness::squad::{build_feature, read_squad, FeatureOptions, QaExample, QaFeature};
use crate::harness::train::{finetune_qa, loss_log_csv, predict_answers, pretrain};
use crate::tokenizer::{build_vocabulary, VocabBuildOptions, Vocabulary};

/// Files written by a command, in write order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CommandOutput {
    pub files: Vec<PathBuf>,
}

impl CommandOutput {
    fn write(&mut self, path: PathBuf, bytes: impl AsRef<[u8]>) -> Result<()> {
        fs::write(&path, bytes)?;
        self.files.push(path);
        Ok(())
    }

    fn save_checkpoint(&mut self, path: PathBuf, ckpt: &Checkpoint) -> Result<()> {
        ckpt.save(&path)?;
        self.files.push(path);
        Ok(())
    }
}

fn start(cfg: &RunConfig, out: &Path, command: &str) -> Result<CommandOutput> {
    cfg.validate()?;
    fs::create_dir_all(out)?;
    let mut o = CommandOutput::default();
    let text: String = cfg.to_kv().iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
    o.write(out.join(format!("{command}_config.txt")), text)?;
    Ok(o)
}

fn load_vocab(cfg: &RunConfig) -> Result<Vocabulary> {
    Vocabulary::load(&RunConfig::require(&cfg.vocab_path, "vocab_path")?)
}

/// Loads a checkpoint and checks it was trained with `vocab`.
pub fn load_checkpoint(path: &Path, vocab: &Vocabulary) -> Result<Checkpoint> {
    let ckpt = Checkpoint::load(path)?;
    if ckpt.vocab_hash != vocab.hash() {
        return Err(Error::Config(format!(
            "checkpoint {} was built for vocabulary {} but the configured vocabulary is {}",
            path.display(),
            ckpt.vocab_hash,
            vocab.hash()
        )));
    }
    Ok(ckpt)
}

pub fn feature_options(cfg: &RunConfig, params: &ModelParams) -> FeatureOptions {
    FeatureOptions {
        max_len: params.config.max_sequence_length,
        max_query_len: cfg.max_query_length,
        tokenizer: cfg.tokenizer,
        lowercase: cfg.lowercase,
    }
}

pub fn qa_features(examples: &[QaExample], vocab: &Vocabulary, opts: &FeatureOptions) -> Vec<QaFeature> {
    examples.iter().map(|e| build_feature(e, vocab, opts)).collect()
}

fn golds(examples: &[QaExample]) -> BTreeMap<String, Vec<String>> {
    examples
        .iter()
        .map(|e| (e.id.clone(), e.answers.iter().map(|(t, _)| t.clone()).collect()))
        .collect()
}

fn finish_report(mut report: EvalReport, cfg: &RunConfig, settings: BTreeMap<String, String>) -> EvalReport {
    report.config_fingerprint = cfg.fingerprint();
    report.seed = cfg.seed;
    report.settings = settings;
    report
}

fn predictions_json(p: &BTreeMap<String, String>) -> String {
    serde_json::to_string_pretty(p).expect("string map serializes") + "\n"
}

pub fn build_vocab(cfg: &RunConfig, out: &Path) -> Result<CommandOutput> {
    let corpus = RunConfig::require(&cfg.corpus_path, "corpus_path")?;
    let mut o = start(cfg, out, "build_vocab")?;
    let (docs, _) = load_corpus(&corpus, cfg)?;
    let vocab = build_vocabulary(
        &docs,
        &VocabBuildOptions {
            target_size: cfg.vocab_size,
            whole_form_fraction: cfg.whole_form_fraction,
            noun_phrase_source: cfg.noun_phrase_source,
        },
    )?;
    log::info!("vocabulary: {} entries from {} documents", vocab.len(), docs.len());
    o.write(out.join("vocab.txt"), vocab.to_canonical_bytes())?;
    Ok(o)
}

pub fn preprocess(cfg: &RunConfig, out: &Path) -> Result<CommandOutput> {
    let corpus = RunConfig::require(&cfg.corpus_path, "corpus_path")?;
    let vocab = load_vocab(cfg)?;
    let mut o = start(cfg, out, "preprocess")?;
    let (docs, mut stats) = load_corpus(&corpus, cfg)?;
    let examples = build_pretraining_examples(&docs, &vocab, cfg, &mut stats)?;
    log::info!("{} pretraining sequences, {} predicted positions", examples.len(), stats.predicted_positions);
    let mut buf = Vec::new();
    write_examples(&mut buf, &examples)?;
    o.write(out.join("pretrain.jsonl"), buf)?;
    o.write(
        out.join("preprocess_stats.json"),
        serde_json::to_string_pretty(&stats)? + "\n",
    )?;
    Ok(o)
}

/// Initial parameters for pretraining: the configured checkpoint if any,
/// otherwise a fresh seeded initialization.
fn initial_params(cfg: &RunConfig, vocab: &Vocabulary) -> Result<ModelParams> {
    match &cfg.checkpoint_path {
        Some(p) => Ok(load_checkpoint(&RunConfig::require(&Some(p.clone()), "checkpoint_path")?, vocab)?.params),
        None => build_model(&cfg.encoder, vocab.len(), cfg.seed),
    }
}

pub fn run_pretrain(cfg: &RunConfig, out: &Path) -> Result<CommandOutput> {
    let data = RunConfig::require(&cfg.pretrain_data_path, "pretrain_data_path")?;
    let vocab = load_vocab(cfg)?;
    let examples = read_examples(&data, vocab.len())?;
    if let Some(e) = examples.iter().find(|e| e.token_ids.len() > cfg.encoder.max_sequence_length) {
        return Err(Error::Length { len: e.token_ids.len(), max: cfg.encoder.max_sequence_length });
    }
    let params = initial_params(cfg, &vocab)?;
    let mut o = start(cfg, out, "pretrain")?;
    let vocab_hash = vocab.hash();

    let mut periodic = Vec::new();
    let result = pretrain(params, &examples, cfg, |row, params| {
        if cfg.checkpoint_every > 0 && row.step % cfg.checkpoint_every == 0 && row.step < cfg.max_steps {
            let path = out.join(format!("checkpoint_step{}.bin", row.step));
            Checkpoint { params: params.clone(), vocab_hash: vocab_hash.clone(), step: row.step }.save(&path)?;
            periodic.push(path);
        }
        if row.step % 50 == 0 {
            log::info!("step {} loss {:.4} lr {:.3e}", row.step, row.loss, row.lr);
        }
        Ok(())
    });
    o.files.extend(periodic);
    match result {
        Ok((params, log)) => {
            o.write(out.join("loss_log.csv"), loss_log_csv(&log))?;
            let ckpt = Checkpoint { params, vocab_hash, step: cfg.max_steps };
            o.save_checkpoint(out.join("checkpoint.bin"), &ckpt)?;
            Ok(o)
        }
        Err((err, last_good)) => {
            let ckpt = Checkpoint { params: *last_good, vocab_hash, step: 0 };
            o.save_checkpoint(out.join("checkpoint_last_good.bin"), &ckpt)?;
            log::error!("pretraining aborted: {err}; last good parameters kept");
            Err(err)
        }
    }
}

fn qa_settings(cfg: &RunConfig, steps: usize) -> BTreeMap<String, String> {
    [
        ("qa_learning_rate", cfg.qa_learning_rate.to_string()),
        ("qa_epochs", cfg.qa_epochs.to_string()),
        ("qa_batch_size", cfg.qa_batch_size.to_string()),
        ("qa_warmup_fraction", cfg.qa_warmup_fraction.to_string()),
        ("qa_train_encoder", cfg.qa_train_encoder.to_string()),
        ("max_query_length", cfg.max_query_length.to_string()),
        ("max_answer_length", cfg.max_answer_length.to_string()),
        ("steps", steps.to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

/// Fine-tuned parameters plus the report on `dev`, without touching the disk.
pub fn finetune_and_score(
    params: ModelParams,
    train: &[QaExample],
    dev: &[QaExample],
    vocab: &Vocabulary,
    cfg: &RunConfig,
) -> Result<(ModelParams, Vec<crate::harness::train::StepLog>, EvalReport, BTreeMap<String, String>)> {
    let opts = feature_options(cfg, &params);
    let train_f = qa_features(train, vocab, &opts);
    let skipped = train_f.iter().filter(|f| f.answer.is_none()).count();
    if skipped > 0 {
        log::warn!("{skipped} training questions have no answer inside the window and are skipped");
    }
    let (params, log) = finetune_qa(params, &train_f, cfg)?;
    let dev_f = qa_features(dev, vocab, &opts);
    let preds = predict_answers(&params, dev, &dev_f, cfg.max_answer_length)?;
    let report = finish_report(evaluate_em_f1(&preds, &golds(dev))?, cfg, qa_settings(cfg, log.len()));
    Ok((params, log, report, preds))
}

pub fn run_finetune_qa(cfg: &RunConfig, out: &Path) -> Result<CommandOutput> {
    let train_path = RunConfig::require(&cfg.qa_train_path, "qa_train_path")?;
    let dev_path = match &cfg.qa_dev_path {
        Some(_) => RunConfig::require(&cfg.qa_dev_path, "qa_dev_path")?,
        None => train_path.clone(),
    };
    let vocab = load_vocab(cfg)?;
    let params = match &cfg.checkpoint_path {
        Some(_) => load_checkpoint(&RunConfig::require(&cfg.checkpoint_path, "checkpoint_path")?, &vocab)?.params,
        None => {
            log::warn!("no checkpoint_path; fine-tuning from a fresh initialization");
            build_model(&cfg.encoder, vocab.len(), cfg.seed)?
        }
    };
    let (train, stats) = read_squad(&train_path)?;
    if stats.misaligned_answers > 0 {
        log::warn!("{} answers do not match their stated offsets and were skipped", stats.misaligned_answers);
    }
    let (dev, _) = read_squad(&dev_path)?;
    let mut o = start(cfg, out, "finetune_qa")?;

    let (params, log, report, preds) = finetune_and_score(params, &train, &dev, &vocab, cfg)?;
    log::info!("QA: EM {:.2} F1 {:.2} after {} steps", report.exact_match(), report.f1(), log.len());
    o.write(out.join("qa_loss_log.csv"), loss_log_csv(&log))?;
    o.save_checkpoint(
        out.join("qa_checkpoint.bin"),
        &Checkpoint { params, vocab_hash: vocab.hash(), step: log.len() as u64 },
    )?;
    o.write(out.join("predictions.json"), predictions_json(&preds))?;
    o.write(out.join("eval_report.json"), report.to_json())?;
    Ok(o)
}

pub fn read_predictions(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::format(path.display().to_string(), e.to_string()))
}

pub fn run_eval(cfg: &RunConfig, out: &Path) -> Result<CommandOutput> {
    let dev_path = RunConfig::require(&cfg.qa_dev_path, "qa_dev_path")?;
    let (dev, _) = read_squad(&dev_path)?;
    let (preds, settings) = match &cfg.predictions_path {
        Some(_) => {
            let p = RunConfig::require(&cfg.predictions_path, "predictions_path")?;
            let settings = BTreeMap::from([("predictions".to_string(), p.display().to_string())]);
            (read_predictions(&p)?, settings)
        }
        None => {
            let vocab = load_vocab(cfg)?;
            let ckpt = load_checkpoint(&RunConfig::require(&cfg.checkpoint_path, "checkpoint_path")?, &vocab)?;
            let f = qa_features(&dev, &vocab, &feature_options(cfg, &ckpt.params));
            let mut settings = qa_settings(cfg, 0);
            settings.remove("steps");
            (predict_answers(&ckpt.params, &dev, &f, cfg.max_answer_length)?, settings)
        }
    };
    let mut o = start(cfg, out, "eval")?;
    let report = finish_report(evaluate_em_f1(&preds, &golds(&dev))?, cfg, settings);
    log::info!("EM {:.2} F1 {:.2} over {} questions", report.exact_match(), report.f1(), dev.len());
    o.write(out.join("predictions.json"), predictions_json(&preds))?;
    o.write(out.join("eval_report.json"), report.to_json())?;
    Ok(o)
}
