//! Deterministic noun-phrase spans from a bundled POS lexicon.
//!
//! Pattern: `DET? ADJ* NOUN+` over whitespace words, where each word is tagged
//! after trimming surrounding punctuation. A word carrying trailing clause
//! punctuation closes the phrase it ends, and a word with leading punctuation
//! cannot continue one. Spans cover the trimmed words only.

use std::collections::HashMap;
use std::sync::OnceLock;

use crate::corpus::{trim_word, Document};
use crate::tokenizer::whitespace_words;

const BUNDLED_LEXICON: &str = include_str!("../../rules/pos_lexicon_v1.txt");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PosTag {
    Det,
    Adj,
    Noun,
    Verb,
    Adv,
    Prep,
    Pron,
    Conj,
}

/// Where vocabulary building and masking get noun-phrase spans from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum NounPhraseSource {
    /// Document annotations only; unannotated documents contribute no spans.
    Annotations,
    /// Document annotations when present, otherwise the heuristic chunker.
    #[default]
    Heuristic,
}

impl std::str::FromStr for NounPhraseSource {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "annotations" => Ok(NounPhraseSource::Annotations),
            "heuristic" => Ok(NounPhraseSource::Heuristic),
            _ => Err(crate::Error::Config(format!("unknown noun phrase source `{s}`"))),
        }
    }
}

fn lexicon() -> &'static HashMap<&'static str, PosTag> {
    static LEXICON: OnceLock<HashMap<&'static str, PosTag>> = OnceLock::new();
    LEXICON.get_or_init(|| {
        let mut map = HashMap::new();
        for line in BUNDLED_LEXICON.lines() {
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            let (tag, words) = line.split_once('\t').expect("lexicon line has a tab");
            let tag = match tag {
                "DET" => PosTag::Det,
                "ADJ" => PosTag::Adj,
                "VERB" => PosTag::Verb,
                "ADV" => PosTag::Adv,
                "PREP" => PosTag::Prep,
                "PRON" => PosTag::Pron,
                "CONJ" => PosTag::Conj,
                other => panic!("unknown lexicon tag {other}"),
            };
            for w in words.split_whitespace() {
                map.entry(w).or_insert(tag);
            }
        }
        map
    })
}

pub fn tag_word(word: &str) -> PosTag {
    let lower = word.to_lowercase();
    if let Some(&t) = lexicon().get(lower.as_str()) {
        return t;
    }
    if lower.chars().count() > 4 {
        if lower.ends_with("ly") {
            return PosTag::Adv;
        }
        const ADJ_SUFFIXES: [&str; 8] = ["ous", "ful", "ive", "able", "ible", "ical", "less", "ish"];
        if ADJ_SUFFIXES.iter().any(|s| lower.ends_with(s)) {
            return PosTag::Adj;
        }
    }
    PosTag::Noun
}

/// Char spans of `DET? ADJ* NOUN+` phrases, sorted and non-overlapping.
pub fn heuristic_noun_phrase_chunker(text: &str) -> Vec<(usize, usize)> {
    struct Word {
        tag: PosTag,
        span: (usize, usize),
        opens: bool,
        closes: bool,
    }
    let mut char_at = HashMap::new();
    for (c, (b, _)) in text.char_indices().enumerate() {
        char_at.insert(b, c);
    }
    char_at.insert(text.len(), text.chars().count());

    let words: Vec<Word> = whitespace_words(text)
        .into_iter()
        .filter_map(|(s, e)| {
            let raw = &text[s..e];
            let core = trim_word(raw);
            if core.is_empty() || !core.chars().any(char::is_alphanumeric) {
                return None;
            }
            let lead = core.as_ptr() as usize - raw.as_ptr() as usize;
            let (cs, ce) = (s + lead, s + lead + core.len());
            Some(Word {
                tag: tag_word(core),
                span: (char_at[&cs], char_at[&ce]),
                opens: lead > 0,
                closes: ce < e,
            })
        })
        .collect();

    let mut spans = Vec::new();
    let mut i = 0;
    while i < words.len() {
        let start = i;
        let mut j = i;
        if words[j].tag == PosTag::Det && !words[j].closes {
            j += 1;
        }
        while j < words.len() && words[j].tag == PosTag::Adj && !words[j].closes && (j == start || !words[j].opens) {
            j += 1;
        }
        let noun_start = j;
        while j < words.len() && words[j].tag == PosTag::Noun && (j == start || !words[j].opens) {
            j += 1;
            if words[j - 1].closes {
                break;
            }
        }
        if j > noun_start {
            spans.push((words[start].span.0, words[j - 1].span.1));
            i = j;
        } else {
            i = start + 1;
        }
    }
    spans
}

/// Noun-phrase char spans for a document under `source`.
pub fn noun_phrase_spans(doc: &Document, source: NounPhraseSource) -> Vec<(usize, usize)> {
    match (&doc.noun_phrase_spans, source) {
        (Some(spans), _) => spans.clone(),
        (None, NounPhraseSource::Annotations) => Vec::new(),
        (None, NounPhraseSource::Heuristic) => heuristic_noun_phrase_chunker(&doc.text),
    }
}
