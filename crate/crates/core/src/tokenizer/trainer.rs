//! Vocabulary construction: reserved specials, whole-form noun-phrase words
//! under a quota, the base character alphabet, then wordpiece merges.

use std::collections::{BTreeSet, HashMap};

use crate::corpus::{noun_phrase_spans, trim_word, Document, NounPhraseSource};
use crate::error::{Error, Result};
use crate::tokenizer::vocab::{EntryKind, Vocabulary, CONTINUATION_PREFIX, NUM_SPECIALS};
use crate::tokenizer::{is_punctuation, whitespace_words};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VocabBuildOptions {
    pub target_size: usize,
    /// Share of non-special slots reserved for whole-form entries.
    pub whole_form_fraction: f64,
    pub noun_phrase_source: NounPhraseSource,
}

impl Default for VocabBuildOptions {
    fn default() -> Self {
        VocabBuildOptions {
            target_size: 4000,
            whole_form_fraction: 0.7,
            noun_phrase_source: NounPhraseSource::Heuristic,
        }
    }
}

/// Builds a vocabulary of at most `target_size` entries.
///
/// Whole-form slots go to the most frequent whitespace-free words found inside
/// noun phrases (ties broken lexicographically), capped by the quota and by the
/// room left after the alphabet. Remaining slots are filled by wordpiece merges
/// scored `count(ab) / (count(a)·count(b))` over whitespace words.
pub fn build_vocabulary<'a, I>(docs: I, opts: &VocabBuildOptions) -> Result<Vocabulary>
where
    I: IntoIterator<Item = &'a Document>,
{
    if !(0.0..=1.0).contains(&opts.whole_form_fraction) {
        return Err(Error::Config(format!(
            "whole_form_fraction {} not in [0, 1]",
            opts.whole_form_fraction
        )));
    }
    if opts.target_size <= NUM_SPECIALS {
        return Err(Error::Config(format!(
            "vocabulary size {} leaves no room after {NUM_SPECIALS} specials",
            opts.target_size
        )));
    }

    let mut whole_counts: HashMap<String, u64> = HashMap::new();
    let mut word_counts: HashMap<String, u64> = HashMap::new();
    let mut start_chars = BTreeSet::new();
    let mut cont_chars = BTreeSet::new();

    for doc in docs {
        let text = doc.text.as_str();
        let byte_of = crate::corpus::char_to_byte_table(text);
        for (s, e) in noun_phrase_spans(doc, opts.noun_phrase_source) {
            for (ws, we) in whitespace_words(&text[byte_of[s]..byte_of[e]]) {
                let w = trim_word(&text[byte_of[s] + ws..byte_of[s] + we]);
                if !w.is_empty() {
                    *whole_counts.entry(w.to_string()).or_default() += 1;
                }
            }
        }
        for (ws, we) in whitespace_words(text) {
            let word = &text[ws..we];
            *word_counts.entry(word.to_string()).or_default() += 1;
            let mut after_punct = true;
            for (k, c) in word.chars().enumerate() {
                if k > 0 {
                    cont_chars.insert(c);
                }
                // Characters that begin a punctuation-split piece also need a start entry.
                if after_punct || is_punctuation(c) {
                    start_chars.insert(c);
                }
                after_punct = is_punctuation(c);
            }
        }
    }

    let alphabet = start_chars.len() + cont_chars.len();
    let capacity = opts.target_size - NUM_SPECIALS;
    if alphabet > capacity {
        return Err(Error::Config(format!(
            "vocabulary size {} cannot hold {NUM_SPECIALS} specials plus a {alphabet}-piece alphabet",
            opts.target_size
        )));
    }

    let quota = (opts.whole_form_fraction * capacity as f64).floor() as usize;
    let mut ranked: Vec<(String, u64)> = whole_counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(quota.min(capacity - alphabet));

    let mut vocab = Vocabulary::from_entries(
        ranked.into_iter().map(|(w, _)| (w, EntryKind::Whole)),
        opts.whole_form_fraction,
    )?;
    for c in &start_chars {
        let s = c.to_string();
        if vocab.id(&s).is_none() {
            vocab.push(s, EntryKind::SubwordStart)?;
        }
    }
    for c in &cont_chars {
        vocab.push(format!("{CONTINUATION_PREFIX}{c}"), EntryKind::SubwordCont)?;
    }

    learn_merges(&mut vocab, word_counts, opts.target_size)?;
    Ok(vocab)
}

fn learn_merges(vocab: &mut Vocabulary, word_counts: HashMap<String, u64>, target: usize) -> Result<()> {
    let mut words: Vec<(Vec<String>, u64)> = word_counts
        .into_iter()
        .map(|(w, n)| {
            let symbols = w
                .chars()
                .enumerate()
                .map(|(k, c)| {
                    if k == 0 {
                        c.to_string()
                    } else {
                        format!("{CONTINUATION_PREFIX}{c}")
                    }
                })
                .collect();
            (symbols, n)
        })
        .collect();
    words.sort();

    while vocab.len() < target {
        let mut symbol_freq: HashMap<&str, u64> = HashMap::new();
        let mut pair_freq: HashMap<(&str, &str), u64> = HashMap::new();
        for (symbols, n) in &words {
            for s in symbols {
                *symbol_freq.entry(s).or_default() += n;
            }
            for pair in symbols.windows(2) {
                *pair_freq.entry((&pair[0], &pair[1])).or_default() += n;
            }
        }

        // Highest count(ab)/(count(a)count(b)), compared exactly; ties go to the
        // lexicographically smallest merged surface.
        let mut best: Option<((&str, &str), u64, u128, String)> = None;
        for (&(a, b), &n) in &pair_freq {
            let denom = symbol_freq[a] as u128 * symbol_freq[b] as u128;
            let merged = merge_surface(a, b);
            let better = match &best {
                None => true,
                Some((_, bn, bd, bm)) => {
                    let lhs = n as u128 * bd;
                    let rhs = *bn as u128 * denom;
                    lhs > rhs || (lhs == rhs && merged < *bm)
                }
            };
            if better {
                best = Some(((a, b), n, denom, merged));
            }
        }
        let Some(((a, b), _, _, merged)) = best else { break };
        let (a, b) = (a.to_string(), b.to_string());

        for (symbols, _) in &mut words {
            let mut i = 0;
            while i + 1 < symbols.len() {
                if symbols[i] == a && symbols[i + 1] == b {
                    symbols[i] = merged.clone();
                    symbols.remove(i + 1);
                }
                i += 1;
            }
        }
        if vocab.id(&merged).is_none() {
            let kind = if merged.starts_with(CONTINUATION_PREFIX) {
                EntryKind::SubwordCont
            } else {
                EntryKind::SubwordStart
            };
            vocab.push(merged, kind)?;
        }
    }
    Ok(())
}

fn merge_surface(a: &str, b: &str) -> String {
    let mut s = a.to_string();
    s.push_str(b.strip_prefix(CONTINUATION_PREFIX).unwrap_or(b));
    s
}
