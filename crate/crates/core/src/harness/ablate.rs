//! Desk-scale ablation arms. Every arm shares the seed and step budget; only
//! the axis under study changes.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::attention::AttentionVariant;
use crate::corpus::MaskingScheme;
use crate::encoder::{build_model, format_sublayer_order, stacking_orders, SubLayer};
use crate::error::{Error, Result};
use crate::harness::commands::{finetune_and_score, CommandOutput};
use crate::harness::config::{ChunkingMode, RunConfig};
use crate::harness::data::{build_pretraining_examples, load_corpus, PretrainingExample};
use crate::harness::squad::read_squad;
use crate::harness::train::{evaluate_mlm, pretrain};
use crate::tokenizer::Vocabulary;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Masking,
    Attention,
    Stacking,
    Chunking,
}

impl Axis {
    pub const ALL: [Axis; 4] = [Axis::Masking, Axis::Attention, Axis::Stacking, Axis::Chunking];

    pub fn as_str(self) -> &'static str {
        match self {
            Axis::Masking => "masking",
            Axis::Attention => "attention",
            Axis::Stacking => "stacking",
            Axis::Chunking => "chunking",
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Axis::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown ablation axis `{s}`")))
    }
}

/// One arm: a name and either a config edit or a reason it is not run.
pub struct Arm {
    pub name: String,
    pub plan: std::result::Result<RunConfig, String>,
}

fn with(cfg: &RunConfig, edit: impl FnOnce(&mut RunConfig)) -> std::result::Result<RunConfig, String> {
    let mut c = cfg.clone();
    edit(&mut c);
    Ok(c)
}

pub fn arms(axis: Axis, base: &RunConfig) -> Vec<Arm> {
    use AttentionVariant::{NeighborAware as Naa, RelativeQk as RelQk, RelativeQv as RelQv, SelfAttention as Sa};
    let arm = |name: &str, plan| Arm { name: name.to_string(), plan };
    match axis {
        Axis::Masking => {
            let mut v: Vec<Arm> = MaskingScheme::ALL
                .into_iter()
                .map(|s| arm(s.as_str(), with(base, |c| c.masking_scheme = s)))
                .collect();
            v.push(arm("noun_phrase_pos", Err("skipped: needs an external part-of-speech tagger".into())));
            v
        }
        Axis::Attention => {
            let order = |first: Vec<SubLayer>| {
                with(base, move |c| c.encoder.sublayer_order = first)
            };
            vec![
                arm("SA", order(vec![SubLayer::Attention(Sa), SubLayer::FeedForward])),
                arm("NAA", order(vec![SubLayer::Attention(Sa), SubLayer::Attention(Naa), SubLayer::FeedForward])),
                arm("REL_QK", order(vec![SubLayer::Attention(RelQk), SubLayer::FeedForward])),
                arm("REL_QV", order(vec![SubLayer::Attention(RelQv), SubLayer::FeedForward])),
                arm("Entity-Self-Att", Err("skipped: mechanism not specified precisely enough to implement".into())),
            ]
        }
        Axis::Stacking => stacking_orders()
            .into_iter()
            .map(|o| arm(&format_sublayer_order(&o).replace(',', "->"), with(base, |c| c.encoder.sublayer_order = o)))
            .collect(),
        Axis::Chunking => [ChunkingMode::None, ChunkingMode::Sentence, ChunkingMode::SentenceOverlap]
            .into_iter()
            .map(|m| arm(m.as_str(), with(base, |c| c.chunking = m)))
            .collect(),
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ArmResult {
    pub axis: String,
    pub arm: String,
    /// `ok`, `failed`, or `skipped`.
    pub status: String,
    pub steps: u64,
    /// Mean of the last (up to) ten training losses.
    pub final_train_loss: Option<f64>,
    /// Dropout-free MLM loss over the arm's own examples.
    pub eval_mlm_loss: Option<f64>,
    pub qa_em: Option<f64>,
    pub qa_f1: Option<f64>,
    pub notice: String,
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn results_csv(rows: &[ArmResult]) -> String {
    let num = |x: Option<f64>| x.map_or_else(String::new, |v| format!("{v:.6}"));
    let mut s = String::from("axis,arm,status,steps,final_train_loss,eval_mlm_loss,qa_em,qa_f1,notice\n");
    for r in rows {
        let fields = [
            csv_field(&r.axis),
            csv_field(&r.arm),
            r.status.clone(),
            r.steps.to_string(),
            num(r.final_train_loss),
            num(r.eval_mlm_loss),
            num(r.qa_em),
            num(r.qa_f1),
            csv_field(&r.notice),
        ];
        s.push_str(&fields.join(","));
        s.push('\n');
    }
    s
}

fn run_arm(cfg: &RunConfig, vocab: &Vocabulary, corpus: &Path, result: &mut ArmResult) -> Result<()> {
    cfg.validate()?;
    let (docs, mut stats) = load_corpus(corpus, cfg)?;
    let examples: Vec<PretrainingExample> = build_pretraining_examples(&docs, vocab, cfg, &mut stats)?;
    let params = build_model(&cfg.encoder, vocab.len(), cfg.seed)?;
    let (params, log) = pretrain(params, &examples, cfg, |_, _| Ok(())).map_err(|(e, _)| e)?;
    result.steps = log.len() as u64;
    let tail = &log[log.len().saturating_sub(10)..];
    if !tail.is_empty() {
        result.final_train_loss = Some(tail.iter().map(|r| r.loss).sum::<f64>() / tail.len() as f64);
    }
    result.eval_mlm_loss = Some(evaluate_mlm(&params, &examples)?);
    if cfg.ablation_qa {
        let train_path = RunConfig::require(&cfg.qa_train_path, "qa_train_path")?;
        let (train, _) = read_squad(&train_path)?;
        let dev = match &cfg.qa_dev_path {
            Some(_) => read_squad(&RunConfig::require(&cfg.qa_dev_path, "qa_dev_path")?)?.0,
            None => train.clone(),
        };
        let (_, _, report, _) = finetune_and_score(params, &train, &dev, vocab, cfg)?;
        result.qa_em = Some(report.exact_match());
        result.qa_f1 = Some(report.f1());
    }
    Ok(())
}

/// Runs every arm of `axis`. A failing arm is recorded and the rest continue.
pub fn run_ablation(base: &RunConfig, axis: Axis) -> Result<Vec<ArmResult>> {
    base.validate()?;
    let corpus = RunConfig::require(&base.corpus_path, "corpus_path")?;
    let vocab = Vocabulary::load(&RunConfig::require(&base.vocab_path, "vocab_path")?)?;
    let mut rows = Vec::new();
    for arm in arms(axis, base) {
        let mut r = ArmResult { axis: axis.to_string(), arm: arm.name.clone(), ..Default::default() };
        match arm.plan {
            Err(reason) => {
                r.status = "skipped".into();
                r.notice = reason;
            }
            Ok(cfg) => match run_arm(&cfg, &vocab, &corpus, &mut r) {
                Ok(()) => {
                    r.status = "ok".into();
                    r.notice = "desk-scale toy metric; not comparable to full-scale runs".into();
                }
                Err(e) => {
                    log::warn!("arm {} failed: {e}", arm.name);
                    r.status = "failed".into();
                    r.notice = e.to_string();
                }
            },
        }
        log::info!("{axis} / {}: {}", r.arm, r.status);
        rows.push(r);
    }
    Ok(rows)
}

pub fn run_ablate(cfg: &RunConfig, axis: Axis, out: &Path) -> Result<CommandOutput> {
    let rows = run_ablation(cfg, axis)?;
    std::fs::create_dir_all(out)?;
    let text: String = cfg.to_kv().iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
    let cfg_path = out.join("ablate_config.txt");
    std::fs::write(&cfg_path, text)?;
    let path = out.join(format!("ablation_{axis}.csv"));
    std::fs::write(&path, results_csv(&rows))?;
    Ok(CommandOutput { files: vec![cfg_path, path] })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arm_lists() {
        let base = RunConfig::default();
        let names = |a| arms(a, &base).into_iter().map(|x| x.name).collect::<Vec<_>>();
        assert_eq!(names(Axis::Attention), ["SA", "NAA", "REL_QK", "REL_QV", "Entity-Self-Att"]);
        assert_eq!(names(Axis::Stacking).len(), 6);
        assert_eq!(names(Axis::Masking), ["standard", "entity", "noun_phrase", "noun_phrase_pos"]);
        assert!(arms(Axis::Attention, &base)[4].plan.is_err());
    }

    #[test]
    fn csv_quotes_commas() {
        let r = ArmResult { axis: "a".into(), arm: "b".into(), status: "failed".into(), notice: "x, \"y\"".into(), ..Default::default() };
        assert!(results_csv(&[r]).ends_with("failed,0,,,,,\"x, \"\"y\"\"\"\n"));
    }
}
