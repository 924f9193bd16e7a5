//! Span-extraction fine-tuning on the toy questions, then scoring.
//!
//! `cargo run --release --example qa_finetune`

use std::path::PathBuf;

use anna::encoder::build_model;
use anna::harness::commands::finetune_and_score;
use anna::harness::squad::read_squad;
use anna::harness::RunConfig;
use anna::tokenizer::Vocabulary;

fn main() -> anna::Result<()> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let mut cfg = RunConfig::load(&dir.join("configs/toy.conf"))?;
    cfg.qa_epochs = 20;
    let vocab = Vocabulary::load(cfg.vocab_path.as_ref().expect("toy config names a vocabulary"))?;
    let (examples, _) = read_squad(cfg.qa_train_path.as_ref().expect("toy config names QA data"))?;
    let params = build_model(&cfg.encoder, vocab.len(), cfg.seed)?;
    let (_, log, report, preds) = finetune_and_score(params, &examples, &examples, &vocab, &cfg)?;
    println!(
        "{} questions, {} steps, loss {:.3} -> {:.3}",
        examples.len(),
        log.len(),
        log.first().map_or(f64::NAN, |r| r.loss),
        log.last().map_or(f64::NAN, |r| r.loss)
    );
    println!("EM {:.1}  F1 {:.1}", report.exact_match(), report.f1());
    for ex in examples.iter().take(5) {
        println!("  {}: {:?} (gold {:?})", ex.question, preds[&ex.id], ex.answers[0].0);
    }
    Ok(())
}
