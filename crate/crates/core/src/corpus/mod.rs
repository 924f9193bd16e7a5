//! Corpus cleaning, sentence chunking, noun-phrase spans and masking plans.
//!
//! Offsets on [`Document`] spans are char offsets (end-exclusive) so they are
//! stable across encodings; tokenizer offsets are byte ranges.

mod chunk;
mod clean;
mod document;
mod masking;
mod noun_phrase;

pub use chunk::{chunk_document, Chunk, ChunkOptions};
pub use clean::{clean_corpus, clean_document, split_sentences, CleanStats, CleaningRules};
pub use document::{read_documents, write_documents, Document, ReadStats};
pub use masking::{
    apply_masking, char_spans_to_token_spans, plan_masking, Action, MaskedSequence, MaskingConfig,
    MaskingPlan, MaskingScheme, Selection, Tier,
};
pub use noun_phrase::{heuristic_noun_phrase_chunker, noun_phrase_spans, NounPhraseSource, PosTag};

use sha2::{Digest, Sha256};

/// `table[c]` is the byte offset of char `c`; the final entry is `text.len()`.
pub fn char_to_byte_table(text: &str) -> Vec<usize> {
    text.char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(text.len()))
        .collect()
}

/// Strips surrounding quotes, brackets and clause punctuation from a word.
/// A single trailing period is removed only when it is the word's only period,
/// so abbreviations such as `U.S.` survive intact.
pub fn trim_word(word: &str) -> &str {
    let w = word.trim_start_matches(['"', '\'', '(', '[', '{']);
    let w = w.trim_end_matches([',', ';', ':', '!', '?', '"', '\'', ')', ']', '}']);
    match w.strip_suffix('.') {
        Some(rest) if !rest.contains('.') => rest,
        _ => w,
    }
}

/// Per-item seed that depends only on the run seed and the item id.
pub fn derive_seed(seed: u64, id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(id.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trim_word_keeps_abbreviations() {
        assert_eq!(trim_word("U.S."), "U.S.");
        assert_eq!(trim_word("Mary."), "Mary");
        assert_eq!(trim_word("(COVID-19),"), "COVID-19");
        assert_eq!(trim_word("\"Sant'Egidio\""), "Sant'Egidio");
        assert_eq!(trim_word("..."), "...");
    }

    #[test]
    fn char_table_handles_multibyte() {
        assert_eq!(char_to_byte_table("aé b"), vec![0, 1, 3, 4, 5]);
    }

    #[test]
    fn derived_seeds_differ_by_id() {
        assert_eq!(derive_seed(7, "a"), derive_seed(7, "a"));
        assert_ne!(derive_seed(7, "a"), derive_seed(7, "b"));
        assert_ne!(derive_seed(7, "a"), derive_seed(8, "a"));
    }
}
