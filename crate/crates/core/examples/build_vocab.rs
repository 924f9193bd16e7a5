//! Trains a mixed whole-form and wordpiece vocabulary on the toy corpus.
//!
//! `cargo run --example build_vocab`

use std::path::PathBuf;

use anna::corpus::{read_documents, NounPhraseSource};
use anna::tokenizer::{build_vocabulary, tokenize, EntryKind, TokenizerOptions, VocabBuildOptions};

fn main() -> anna::Result<()> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/toy_corpus.jsonl");
    let (docs, _) = read_documents(std::io::BufReader::new(std::fs::File::open(path)?), "toy_corpus")?;
    for fraction in [0.0, 0.7] {
        let opts = VocabBuildOptions {
            target_size: 600,
            whole_form_fraction: fraction,
            noun_phrase_source: NounPhraseSource::Heuristic,
        };
        let vocab = build_vocabulary(&docs, &opts)?;
        let seq = tokenize(&docs[0].text, &vocab, TokenizerOptions::default());
        println!(
            "whole-form fraction {fraction}: {} entries ({} whole, {} start, {} continuation), hash {}",
            vocab.len(),
            vocab.count(EntryKind::Whole),
            vocab.count(EntryKind::SubwordStart),
            vocab.count(EntryKind::SubwordCont),
            &vocab.hash()[..12]
        );
        println!("  first document: {} tokens; {:?}", seq.len(), &seq.surfaces[..12]);
    }
    Ok(())
}
