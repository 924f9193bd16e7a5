//! Corpus cleaning: regex noise removal, sentence filtering, document filtering.

use std::collections::BTreeMap;

use regex::Regex;

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::tokenizer::whitespace_words;

const BUNDLED_RULES: &str = include_str!("../../rules/noise_rules_v1.txt");

/// Words ending in a period that never close a sentence.
const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "st", "mt", "jr", "sr", "vs", "etc", "inc", "ltd", "co",
    "corp", "no", "fig", "vol", "approx", "dept", "est", "gen", "gov", "sen", "rep", "rev",
];

#[derive(Clone, Debug)]
pub struct CleaningRules {
    pub version: u32,
    pub noise: Vec<(String, Regex)>,
    pub min_sentence_words: usize,
    pub min_document_words: usize,
}

impl CleaningRules {
    /// The rules shipped in `rules/noise_rules_v1.txt` with the 10-word sentence
    /// and 100-word document floors.
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_RULES).expect("bundled rules parse")
    }

    pub fn parse(src: &str) -> Result<Self> {
        let mut version = None;
        let mut noise = Vec::new();
        for (n, line) in src.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |m: String| Error::format("noise rules", format!("line {}: {m}", n + 1));
            let (name, pattern) = line.split_once('\t').ok_or_else(|| err("missing tab".into()))?;
            if name == "version" {
                version = Some(pattern.trim().parse().map_err(|_| err("bad version".into()))?);
                continue;
            }
            let re = Regex::new(pattern).map_err(|e| err(e.to_string()))?;
            noise.push((name.to_string(), re));
        }
        Ok(CleaningRules {
            version: version.ok_or_else(|| Error::format("noise rules", "missing version line"))?,
            noise,
            min_sentence_words: 10,
            min_document_words: 100,
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CleanStats {
    pub documents_in: usize,
    pub documents_kept: usize,
    pub documents_dropped_short: usize,
    pub sentences_kept: usize,
    pub sentences_dropped_short: usize,
    /// Match count per noise rule name.
    pub rule_matches: BTreeMap<String, usize>,
}

fn ends_sentence(word: &str) -> bool {
    let core = word.trim_end_matches(['"', '\'', ')', ']']);
    let Some(last) = core.chars().last() else { return false };
    if last == '!' || last == '?' {
        return true;
    }
    if last != '.' {
        return false;
    }
    let body = &core[..core.len() - 1];
    if body.contains('.') {
        return false;
    }
    let stem = body.trim_start_matches(['"', '\'', '(', '[']).to_lowercase();
    !(ABBREVIATIONS.contains(&stem.as_str()) || (stem.chars().count() == 1 && stem.chars().all(char::is_alphabetic)))
}

fn starts_sentence(word: &str) -> bool {
    word.trim_start_matches(['"', '\'', '(', '['])
        .chars()
        .next()
        .is_some_and(|c| c.is_uppercase() || c.is_ascii_digit())
}

/// Splits at `.`, `!` or `?` (optionally followed by closing quotes) when the
/// next word starts with an uppercase letter or digit. Periods after known
/// abbreviations, single letters, and words with an inner period do not split.
/// Returned slices run from a sentence's first word to its last word.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let words = whitespace_words(text);
    let mut out = Vec::new();
    let mut start = None;
    for (k, &(s, e)) in words.iter().enumerate() {
        let begin = *start.get_or_insert(s);
        let boundary = match words.get(k + 1) {
            None => true,
            Some(&(ns, ne)) => ends_sentence(&text[s..e]) && starts_sentence(&text[ns..ne]),
        };
        if boundary {
            out.push(&text[begin..e]);
            start = None;
        }
    }
    out
}

fn word_count(s: &str) -> usize {
    s.split_whitespace().count()
}

/// Cleans one document; `None` if it falls under the document floor.
pub fn clean_document(doc: &Document, rules: &CleaningRules, stats: &mut CleanStats) -> Option<Document> {
    stats.documents_in += 1;
    let mut text = doc.text.clone();
    // Repeat to a fixpoint so a second cleaning pass finds nothing.
    let mut changed = true;
    while changed {
        changed = false;
        for (name, re) in &rules.noise {
            let hits = re.find_iter(&text).count();
            if hits > 0 {
                *stats.rule_matches.entry(name.clone()).or_default() += hits;
                text = re.replace_all(&text, " ").into_owned();
                changed = true;
            }
        }
    }

    let mut kept = Vec::new();
    for sentence in split_sentences(&text) {
        if word_count(sentence) < rules.min_sentence_words {
            stats.sentences_dropped_short += 1;
        } else {
            kept.push(sentence.split_whitespace().collect::<Vec<_>>().join(" "));
        }
    }
    let cleaned = kept.join(" ");
    if word_count(&cleaned) < rules.min_document_words {
        stats.documents_dropped_short += 1;
        return None;
    }
    stats.sentences_kept += kept.len();
    stats.documents_kept += 1;

    // Annotated offsets survive only if cleaning left the text untouched.
    let unchanged = cleaned == doc.text;
    Some(Document {
        id: doc.id.clone(),
        text: cleaned,
        noun_phrase_spans: doc.noun_phrase_spans.clone().filter(|_| unchanged),
        entity_spans: doc.entity_spans.clone().filter(|_| unchanged),
    })
}

pub fn clean_corpus<'a, I>(docs: I, rules: &CleaningRules) -> (Vec<Document>, CleanStats)
where
    I: IntoIterator<Item = &'a Document>,
{
    let mut stats = CleanStats::default();
    for (name, _) in &rules.noise {
        stats.rule_matches.insert(name.clone(), 0);
    }
    let out = docs
        .into_iter()
        .filter_map(|d| clean_document(d, rules, &mut stats))
        .collect();
    (out, stats)
}
