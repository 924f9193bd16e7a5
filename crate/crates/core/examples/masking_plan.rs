//! Span-first masking plan for one sentence and the replacements it yields.
//!
//! `cargo run --example masking_plan`

use std::path::PathBuf;

use anna::corpus::{apply_masking, char_spans_to_token_spans, heuristic_noun_phrase_chunker, plan_masking, MaskingConfig};
use anna::tokenizer::{tokenize, TokenizerOptions, Vocabulary};

fn main() -> anna::Result<()> {
    let vocab = Vocabulary::load(&PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/toy_vocab.txt"))?;
    let text = "The old bakery on the corner sold warm bread every morning, and the baker kept a small notebook \
                of recipes behind the counter while the town clock rang over the quiet market square.";
    let seq = tokenize(text, &vocab, TokenizerOptions::default());
    let char_spans = heuristic_noun_phrase_chunker(text);
    let spans = char_spans_to_token_spans(text, &seq, &char_spans);
    println!("{} tokens, noun phrases:", seq.len());
    for &(a, b) in &spans {
        println!("  [{a}, {b}) {}", seq.surfaces[a..b].join(" "));
    }
    let plan = plan_masking(&seq, &spans, &MaskingConfig::default(), 11)?;
    let masked = apply_masking(&seq.ids, &plan, vocab.len(), 12)?;
    println!("\n{} positions selected:", plan.len());
    for s in &plan.selected {
        println!(
            "  {:>3} {:<12} {:?}/{:?} -> {}",
            s.position,
            seq.surfaces[s.position],
            s.tier,
            s.action,
            vocab.surface(masked.masked_ids[s.position])
        );
    }
    Ok(())
}
