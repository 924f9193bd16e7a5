//! Masked-LM pretraining on the toy sequences with the seconds-scale config.
//!
//! `cargo run --release --example pretrain_toy`

use std::path::PathBuf;

use anna::encoder::build_model;
use anna::harness::data::read_examples;
use anna::harness::train::{evaluate_mlm, pretrain};
use anna::harness::RunConfig;
use anna::tokenizer::Vocabulary;

fn main() -> anna::Result<()> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let cfg = RunConfig::load(&dir.join("configs/toy.conf"))?;
    let vocab = Vocabulary::load(cfg.vocab_path.as_ref().expect("toy config names a vocabulary"))?;
    let examples = read_examples(cfg.pretrain_data_path.as_ref().expect("toy config names the data"), vocab.len())?;
    let params = build_model(&cfg.encoder, vocab.len(), cfg.seed)?;
    println!("{} sequences, {} parameters", examples.len(), params.num_parameters());
    println!("initial held-in loss {:.4}", evaluate_mlm(&params, &examples)?);
    let (params, log) = pretrain(params, &examples, &cfg, |row, _| {
        if row.step % 10 == 0 {
            println!("  step {:>3} loss {:.4} lr {:.2e}", row.step, row.loss, row.lr);
        }
        Ok(())
    })
    .map_err(|(e, _)| e)?;
    println!("{} steps; final held-in loss {:.4}", log.len(), evaluate_mlm(&params, &examples)?);
    Ok(())
}
