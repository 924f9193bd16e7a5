//! Greedy sentence packing into bounded-length pretraining inputs.

use crate::corpus::split_sentences;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChunkOptions {
    /// Word budget for the sentences packed into one chunk.
    pub max_words: usize,
    /// Trailing words of the previous chunk prepended to the next one.
    pub overlap_words: usize,
}

impl Default for ChunkOptions {
    fn default() -> Self {
        ChunkOptions { max_words: 300, overlap_words: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Chunk {
    pub text: String,
    /// Indices into the document's sentence list covered by this chunk.
    pub sentences: std::ops::Range<usize>,
    /// Number of leading words copied from the previous chunk.
    pub overlap_words: usize,
    /// Char offset in the document where the packed sentences begin, and the
    /// char offset in `text` where they begin.
    pub source_char_start: usize,
    pub body_char_start: usize,
}

/// Packs whole sentences greedily so each chunk's own sentences total at most
/// `max_words` words; a longer sentence forms a chunk by itself. Overlap text
/// never counts toward the budget and never changes the packing.
pub fn chunk_document(text: &str, opts: ChunkOptions) -> Vec<Chunk> {
    let sentences = split_sentences(text);
    let mut groups: Vec<std::ops::Range<usize>> = Vec::new();
    let mut start = 0;
    let mut words = 0;
    for (i, s) in sentences.iter().enumerate() {
        let w = s.split_whitespace().count();
        if i > start && words + w > opts.max_words {
            groups.push(start..i);
            start = i;
            words = 0;
        }
        words += w;
    }
    if start < sentences.len() {
        groups.push(start..sentences.len());
    }

    let mut chunks: Vec<Chunk> = Vec::with_capacity(groups.len());
    for range in groups {
        let body = sentences[range.clone()]
            .iter()
            .flat_map(|s| s.split_whitespace())
            .collect::<Vec<_>>()
            .join(" ");
        let first = sentences[range.start];
        let byte_start = first.as_ptr() as usize - text.as_ptr() as usize;
        let source_char_start = text[..byte_start].chars().count();

        let prefix: Vec<&str> = match chunks.last() {
            Some(prev) if opts.overlap_words > 0 => {
                let prev_words: Vec<&str> = prev.text.split_whitespace().collect();
                prev_words[prev_words.len().saturating_sub(opts.overlap_words)..].to_vec()
            }
            _ => Vec::new(),
        };
        let (text, body_char_start) = if prefix.is_empty() {
            (body, 0)
        } else {
            let p = prefix.join(" ");
            let offset = p.chars().count() + 1;
            (format!("{p} {body}"), offset)
        };
        chunks.push(Chunk {
            text,
            sentences: range,
            overlap_words: prefix.len(),
            source_char_start,
            body_char_start,
        });
    }
    chunks
}
