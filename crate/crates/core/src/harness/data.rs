//! Corpus to pretraining examples: clean, chunk, tokenize, plan and apply masks.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{
    apply_masking, char_spans_to_token_spans, chunk_document, clean_corpus, derive_seed, noun_phrase_spans,
    plan_masking, read_documents, Chunk, ChunkOptions, CleanStats, CleaningRules, Document, MaskingConfig,
    MaskingScheme, NounPhraseSource,
};
use crate::error::{Error, Result};
use crate::harness::config::{ChunkingMode, RunConfig, TokenizerKind};
use crate::tokenizer::{tokenize, wordpiece_tokenize, TokenizedSequence, TokenizerOptions, Vocabulary, CLS_ID, SEP_ID};

/// One line of the pretraining-example file. Positions index `token_ids`,
/// which include the leading `[CLS]` and trailing `[SEP]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PretrainingExample {
    pub id: String,
    pub token_ids: Vec<usize>,
    pub masked_ids: Vec<usize>,
    pub predict_positions: Vec<usize>,
    pub target_ids: Vec<usize>,
}

impl PretrainingExample {
    pub fn validate(&self, vocab_size: usize) -> Result<()> {
        let bad = |m: &str| Err(Error::format("pretraining example", format!("{}: {m}", self.id)));
        if self.token_ids.len() != self.masked_ids.len() || self.token_ids.is_empty() {
            return bad("token_ids and masked_ids differ in length or are empty");
        }
        if self.predict_positions.len() != self.target_ids.len() {
            return bad("predict_positions and target_ids differ in length");
        }
        if self.token_ids.iter().chain(&self.masked_ids).chain(&self.target_ids).any(|&i| i >= vocab_size) {
            return bad("id outside the vocabulary");
        }
        for (&p, &t) in self.predict_positions.iter().zip(&self.target_ids) {
            if p >= self.token_ids.len() || self.token_ids[p] != t {
                return bad("predict position out of range or target mismatch");
            }
        }
        Ok(())
    }
}

pub fn write_examples<W: Write>(mut w: W, examples: &[PretrainingExample]) -> Result<()> {
    for e in examples {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_examples(path: &Path, vocab_size: usize) -> Result<Vec<PretrainingExample>> {
    if !path.exists() {
        return Err(Error::MissingInput(path.to_path_buf()));
    }
    let reader = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let e: PretrainingExample = serde_json::from_str(&line)
            .map_err(|err| Error::format(path.display().to_string(), format!("line {}: {err}", n + 1)))?;
        e.validate(vocab_size)?;
        out.push(e);
    }
    Ok(out)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct PreprocessStats {
    pub documents_read: usize,
    pub malformed_lines: usize,
    pub documents_kept: usize,
    pub documents_dropped_short: usize,
    pub sentences_dropped_short: usize,
    pub chunks: usize,
    pub truncated_chunks: usize,
    pub tokens: usize,
    pub predicted_positions: usize,
    pub rule_matches: std::collections::BTreeMap<String, usize>,
}

pub fn load_corpus(path: &Path, cfg: &RunConfig) -> Result<(Vec<Document>, PreprocessStats)> {
    if !path.exists() {
        return Err(Error::MissingInput(path.to_path_buf()));
    }
    let reader = std::io::BufReader::new(std::fs::File::open(path)?);
    let (docs, read) = read_documents(reader, &path.display().to_string())?;
    let mut stats = PreprocessStats {
        documents_read: read.read,
        malformed_lines: read.malformed,
        ..Default::default()
    };
    let docs = if cfg.clean {
        let (cleaned, c): (Vec<Document>, CleanStats) = clean_corpus(&docs, &CleaningRules::bundled());
        stats.documents_dropped_short = c.documents_dropped_short;
        stats.sentences_dropped_short = c.sentences_dropped_short;
        stats.rule_matches = c.rule_matches;
        cleaned
    } else {
        docs
    };
    stats.documents_kept = docs.len();
    Ok((docs, stats))
}

pub fn run_tokenizer(text: &str, vocab: &Vocabulary, cfg: &RunConfig) -> TokenizedSequence {
    let o = TokenizerOptions { lowercase: cfg.lowercase };
    match cfg.tokenizer {
        TokenizerKind::WholeForm => tokenize(text, vocab, o),
        TokenizerKind::Wordpiece => wordpiece_tokenize(text, vocab, o),
    }
}

fn chunks_for(doc: &Document, cfg: &RunConfig) -> Vec<Chunk> {
    let opts = ChunkOptions {
        max_words: cfg.chunk_max_words,
        overlap_words: if cfg.chunking == ChunkingMode::SentenceOverlap { cfg.chunk_overlap_words } else { 0 },
    };
    match cfg.chunking {
        ChunkingMode::None => vec![Chunk {
            text: doc.text.clone(),
            sentences: 0..0,
            overlap_words: 0,
            source_char_start: 0,
            body_char_start: 0,
        }],
        _ => chunk_document(&doc.text, opts),
    }
}

/// Document spans shifted into chunk coordinates; spans outside the chunk's own
/// sentences are dropped. `None` when the chunk body is not a verbatim slice of
/// the document.
fn map_spans(doc: &Document, chunk: &Chunk, spans: &[(usize, usize)]) -> Option<Vec<(usize, usize)>> {
    let body: Vec<char> = chunk.text.chars().skip(chunk.body_char_start).collect();
    let src: Vec<char> = doc.text.chars().skip(chunk.source_char_start).take(body.len()).collect();
    if body != src {
        return None;
    }
    let (lo, hi) = (chunk.source_char_start, chunk.source_char_start + body.len());
    Some(
        spans
            .iter()
            .filter(|&&(s, e)| s >= lo && e <= hi)
            .map(|&(s, e)| (s - lo + chunk.body_char_start, e - lo + chunk.body_char_start))
            .collect(),
    )
}

fn truncate(seq: &mut TokenizedSequence, n: usize) -> bool {
    if seq.len() <= n {
        return false;
    }
    seq.ids.truncate(n);
    seq.surfaces.truncate(n);
    seq.word_start.truncate(n);
    seq.offsets.truncate(n);
    true
}

/// Builds masked examples from cleaned documents. Each chunk's masks depend only
/// on the run seed and the chunk id.
pub fn build_pretraining_examples(
    docs: &[Document],
    vocab: &Vocabulary,
    cfg: &RunConfig,
    stats: &mut PreprocessStats,
) -> Result<Vec<PretrainingExample>> {
    let max_tokens = cfg.encoder.max_sequence_length.saturating_sub(2);
    if max_tokens == 0 {
        return Err(Error::Config("max_sequence_length leaves no room for tokens".into()));
    }
    let mcfg = MaskingConfig {
        budget: cfg.mask_budget,
        whole_words: cfg.masking_scheme.uses_whole_words(),
        ..Default::default()
    };
    let mut out = Vec::new();
    for doc in docs {
        for (k, chunk) in chunks_for(doc, cfg).into_iter().enumerate() {
            let id = format!("{}#{k}", doc.id);
            let mut seq = run_tokenizer(&chunk.text, vocab, cfg);
            if seq.is_empty() {
                continue;
            }
            if truncate(&mut seq, max_tokens) {
                stats.truncated_chunks += 1;
            }
            let char_spans = match cfg.masking_scheme {
                MaskingScheme::Standard => Vec::new(),
                MaskingScheme::NounPhrase => match &doc.noun_phrase_spans {
                    Some(spans) => map_spans(doc, &chunk, spans).unwrap_or_default(),
                    None if cfg.noun_phrase_source == NounPhraseSource::Heuristic => {
                        noun_phrase_spans(&Document::new(id.clone(), chunk.text.clone()), NounPhraseSource::Heuristic)
                    }
                    None => Vec::new(),
                },
                MaskingScheme::Entity => doc
                    .entity_spans
                    .as_ref()
                    .and_then(|spans| map_spans(doc, &chunk, spans))
                    .unwrap_or_default(),
            };
            let token_spans = char_spans_to_token_spans(&chunk.text, &seq, &char_spans);
            let plan = plan_masking(&seq, &token_spans, &mcfg, derive_seed(cfg.seed, &format!("plan:{id}")))?;
            let masked = apply_masking(&seq.ids, &plan, vocab.len(), derive_seed(cfg.seed, &format!("apply:{id}")))?;

            let wrap = |ids: &[usize]| {
                let mut v = Vec::with_capacity(ids.len() + 2);
                v.push(CLS_ID);
                v.extend_from_slice(ids);
                v.push(SEP_ID);
                v
            };
            stats.chunks += 1;
            stats.tokens += seq.len();
            stats.predicted_positions += masked.predict_positions.len();
            out.push(PretrainingExample {
                id,
                token_ids: wrap(&seq.ids),
                masked_ids: wrap(&masked.masked_ids),
                predict_positions: masked.predict_positions.iter().map(|p| p + 1).collect(),
                target_ids: masked.target_ids,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::EntryKind;

    #[test]
    fn annotations_map_into_chunks() {
        let text = "Alpha beta gamma delta epsilon. Zeta eta theta iota kappa.";
        let mut doc = Document::new("d", text);
        doc.noun_phrase_spans = Some(vec![(6, 16), (37, 46)]);
        let cfg = RunConfig { chunk_max_words: 5, ..Default::default() };
        let chunks = chunks_for(&doc, &cfg);
        assert_eq!(chunks.len(), 2);
        assert_eq!(map_spans(&doc, &chunks[0], doc.noun_phrase_spans.as_ref().unwrap()), Some(vec![(6, 16)]));
        assert_eq!(map_spans(&doc, &chunks[1], doc.noun_phrase_spans.as_ref().unwrap()), Some(vec![(5, 14)]));
        assert_eq!(&chunks[1].text[5..14], "eta theta");
    }

    #[test]
    fn examples_are_wrapped_and_valid() {
        let words: Vec<String> = (0..40).map(|i| format!("w{i}")).collect();
        let text = format!("{}.", words.join(" "));
        let vocab = Vocabulary::from_entries(
            words.iter().map(|w| (w.clone(), EntryKind::Whole)).chain([(".".to_string(), EntryKind::SubwordStart), ("##.".to_string(), EntryKind::SubwordCont)]),
            1.0,
        )
        .unwrap();
        let cfg = RunConfig { clean: false, ..Default::default() };
        let mut stats = PreprocessStats::default();
        let ex = build_pretraining_examples(&[Document::new("d", text)], &vocab, &cfg, &mut stats).unwrap();
        assert_eq!(ex.len(), 1);
        let e = &ex[0];
        assert_eq!(e.token_ids[0], CLS_ID);
        assert_eq!(*e.token_ids.last().unwrap(), SEP_ID);
        assert_eq!(e.predict_positions.len(), 6);
        e.validate(vocab.len()).unwrap();
    }
}
