//! Cleaning, sentence splitting and chunking with and without overlap.
//!
//! `cargo run --example corpus_pipeline`

use std::path::PathBuf;

use anna::corpus::{chunk_document, clean_corpus, read_documents, split_sentences, ChunkOptions, CleaningRules};

fn main() -> anna::Result<()> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let open = |name: &str| -> anna::Result<_> {
        let f = std::fs::File::open(dir.join(name))?;
        Ok(read_documents(std::io::BufReader::new(f), name)?.0)
    };

    let (kept, stats) = clean_corpus(&open("pipeline_cases.jsonl")?, &CleaningRules::bundled());
    println!(
        "cleaning: {} in, {} kept, {} dropped as short, {} short sentences removed",
        stats.documents_in, stats.documents_kept, stats.documents_dropped_short, stats.sentences_dropped_short
    );
    for d in &kept {
        println!("  kept {} ({} words)", d.id, d.text.split_whitespace().count());
    }

    let doc = &open("toy_corpus.jsonl")?[0];
    println!("\n{}: {} sentences", doc.id, split_sentences(&doc.text).len());
    for overlap in [0, 12] {
        let chunks = chunk_document(&doc.text, ChunkOptions { max_words: 45, overlap_words: overlap });
        println!("overlap {overlap}:");
        for c in &chunks {
            println!(
                "  sentences {:?}, {} words ({} copied): {:.60}...",
                c.sentences,
                c.text.split_whitespace().count(),
                c.overlap_words,
                c.text
            );
        }
    }
    Ok(())
}
