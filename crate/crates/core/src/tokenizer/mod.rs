//! Vocabulary, the whole-form tokenizer, and the wordpiece baseline.
//!
//! The whole-form tokenizer splits on whitespace only. A whitespace word that
//! is a `WHOLE` vocabulary entry becomes one token; anything else falls back to
//! greedy longest-match wordpiece over the entire word. The baseline first
//! splits punctuation off into separate words (BERT basic tokenization) and then
//! runs the same greedy wordpiece matcher.

mod trainer;
mod vocab;

pub use trainer::{build_vocabulary, VocabBuildOptions};
pub use vocab::{
    is_special_id, EntryKind, Vocabulary, CLS_ID, CONTINUATION_PREFIX, MASK_ID, NUM_SPECIALS,
    PAD_ID, SEP_ID, SPECIAL_TOKENS, UNK_ID,
};

/// Words longer than this (in chars) become `[UNK]` without matching.
pub const MAX_WORD_CHARS: usize = 100;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TokenizerOptions {
    /// Lowercase before wordpiece matching. Whole-form matching is always
    /// case-sensitive.
    pub lowercase: bool,
}

/// Output of a tokenizer. Offsets are byte ranges into the source text.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TokenizedSequence {
    pub ids: Vec<usize>,
    /// Vocabulary surface of each token (continuations keep their `##`).
    pub surfaces: Vec<String>,
    /// True where the token begins a whitespace-delimited word.
    pub word_start: Vec<bool>,
    pub offsets: Vec<(usize, usize)>,
}

impl TokenizedSequence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    fn push(&mut self, id: usize, surface: &str, word_start: bool, offset: (usize, usize)) {
        self.ids.push(id);
        self.surfaces.push(surface.to_string());
        self.word_start.push(word_start);
        self.offsets.push(offset);
    }

    /// Token index covering byte `pos`, if any.
    pub fn token_at_byte(&self, pos: usize) -> Option<usize> {
        let i = self.offsets.partition_point(|&(_, end)| end <= pos);
        (i < self.offsets.len() && self.offsets[i].0 <= pos).then_some(i)
    }
}

/// Byte ranges of whitespace-delimited words.
pub(crate) fn whitespace_words(text: &str) -> Vec<(usize, usize)> {
    let mut words = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                words.push((s, i));
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        words.push((s, text.len()));
    }
    words
}

/// Punctuation per BERT's basic tokenizer: all ASCII symbols plus common
/// Unicode punctuation marks.
pub fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '\u{00A1}'..='\u{00BF}' | '\u{2010}'..='\u{2027}' | '\u{2030}'..='\u{205E}' | '\u{3000}'..='\u{303F}'
        )
}

/// Greedy longest-match wordpiece over `text[start..end]`, appending to `out`.
/// A word with any unmatched remainder becomes a single `[UNK]`.
fn wordpiece_word(
    text: &str,
    (start, end): (usize, usize),
    word_start: bool,
    vocab: &Vocabulary,
    opts: TokenizerOptions,
    out: &mut TokenizedSequence,
) {
    let word = &text[start..end];
    let bounds: Vec<usize> = word
        .char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(word.len()))
        .collect();
    let chars = bounds.len() - 1;
    if chars > MAX_WORD_CHARS {
        out.push(UNK_ID, SPECIAL_TOKENS[UNK_ID], word_start, (start, end));
        return;
    }
    let folded = |a: usize, b: usize| -> String {
        let s = &word[bounds[a]..bounds[b]];
        if opts.lowercase {
            s.to_lowercase()
        } else {
            s.to_string()
        }
    };

    let mut pieces = Vec::new();
    let mut pos = 0;
    while pos < chars {
        let found = (pos + 1..=chars).rev().find_map(|stop| {
            let piece = folded(pos, stop);
            let id = if pos == 0 {
                vocab.start_piece_id(&piece)
            } else {
                vocab.continuation_id(&piece)
            };
            id.map(|id| (id, stop))
        });
        match found {
            Some((id, stop)) => {
                pieces.push((id, (start + bounds[pos], start + bounds[stop])));
                pos = stop;
            }
            None => {
                out.push(UNK_ID, SPECIAL_TOKENS[UNK_ID], word_start, (start, end));
                return;
            }
        }
    }
    for (k, (id, offset)) in pieces.into_iter().enumerate() {
        out.push(id, vocab.surface(id), word_start && k == 0, offset);
    }
}

/// Whole-form tokenization: whitespace split, whole-entry lookup, wordpiece fallback.
pub fn tokenize(text: &str, vocab: &Vocabulary, opts: TokenizerOptions) -> TokenizedSequence {
    let mut out = TokenizedSequence::default();
    for (start, end) in whitespace_words(text) {
        let word = &text[start..end];
        match vocab.whole_id(word) {
            Some(id) => out.push(id, word, true, (start, end)),
            None => wordpiece_word(text, (start, end), true, vocab, opts, &mut out),
        }
    }
    out
}

/// BERT-style baseline: whitespace split, punctuation split, greedy wordpiece.
pub fn wordpiece_tokenize(text: &str, vocab: &Vocabulary, opts: TokenizerOptions) -> TokenizedSequence {
    let mut out = TokenizedSequence::default();
    for (start, end) in whitespace_words(text) {
        let mut first = true;
        let mut run_start = None;
        for (i, c) in text[start..end].char_indices() {
            let i = start + i;
            if is_punctuation(c) {
                if let Some(s) = run_start.take() {
                    wordpiece_word(text, (s, i), first, vocab, opts, &mut out);
                    first = false;
                }
                wordpiece_word(text, (i, i + c.len_utf8()), first, vocab, opts, &mut out);
                first = false;
            } else if run_start.is_none() {
                run_start = Some(i);
            }
        }
        if let Some(s) = run_start {
            wordpiece_word(text, (s, end), first, vocab, opts, &mut out);
        }
    }
    out
}

/// Joins token surfaces, gluing `##` continuations onto the previous token and
/// separating everything else with one space.
pub fn detokenize(seq: &TokenizedSequence, vocab: &Vocabulary) -> String {
    let mut text = String::new();
    for &id in &seq.ids {
        let surface = vocab.surface(id);
        match surface.strip_prefix(CONTINUATION_PREFIX) {
            Some(rest) if vocab.kind(id) == EntryKind::SubwordCont => text.push_str(rest),
            _ => {
                if !text.is_empty() {
                    text.push(' ');
                }
                text.push_str(surface);
            }
        }
    }
    text
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab(entries: &[(&str, EntryKind)]) -> Vocabulary {
        Vocabulary::from_entries(entries.iter().map(|(s, k)| (*s, *k)), 0.5).unwrap()
    }

    fn surfaces(seq: &TokenizedSequence) -> Vec<&str> {
        seq.surfaces.iter().map(String::as_str).collect()
    }

    /// Greedy longest-match reference over a plain list of pieces.
    fn greedy_oracle(word: &str, starts: &[&str], conts: &[&str]) -> Vec<String> {
        let chars: Vec<char> = word.chars().collect();
        let mut out = Vec::new();
        let mut pos = 0;
        while pos < chars.len() {
            let mut matched = None;
            for stop in (pos + 1..=chars.len()).rev() {
                let piece: String = chars[pos..stop].iter().collect();
                let table = if pos == 0 { starts } else { conts };
                if table.contains(&piece.as_str()) {
                    matched = Some((piece, stop));
                    break;
                }
            }
            let Some((piece, stop)) = matched else {
                return vec!["[UNK]".into()];
            };
            out.push(if pos == 0 { piece } else { format!("##{piece}") });
            pos = stop;
        }
        out
    }

    #[test]
    fn empty_text_yields_nothing() {
        let v = vocab(&[("a", EntryKind::SubwordStart)]);
        assert!(tokenize("", &v, TokenizerOptions::default()).is_empty());
        assert!(wordpiece_tokenize("", &v, TokenizerOptions::default()).is_empty());
        assert!(tokenize("   \n", &v, TokenizerOptions::default()).is_empty());
    }

    #[test]
    fn fallback_matches_greedy_oracle() {
        use EntryKind::*;
        let v = vocab(&[
            ("Sant", SubwordStart),
            ("'", SubwordStart),
            ("E", SubwordStart),
            ("##'", SubwordCont),
            ("##E", SubwordCont),
            ("##gi", SubwordCont),
            ("##dio", SubwordCont),
            ("##g", SubwordCont),
        ]);
        let expected = greedy_oracle(
            "Sant'Egidio",
            &["Sant", "'", "E"],
            &["'", "E", "gi", "dio", "g"],
        );
        assert_eq!(expected, vec!["Sant", "##'", "##E", "##gi", "##dio"]);
        let seq = tokenize("Sant'Egidio", &v, TokenizerOptions::default());
        assert_eq!(surfaces(&seq), expected);
        assert_eq!(seq.word_start, vec![true, false, false, false, false]);
    }

    #[test]
    fn unmatched_word_becomes_unk() {
        let v = vocab(&[("ab", EntryKind::SubwordStart)]);
        let seq = tokenize("abc ab", &v, TokenizerOptions::default());
        assert_eq!(seq.ids, vec![UNK_ID, v.id("ab").unwrap()]);
        assert_eq!(seq.offsets, vec![(0, 3), (4, 6)]);
    }

    #[test]
    fn lowercase_only_affects_fallback() {
        use EntryKind::*;
        let v = vocab(&[("Paris", Whole), ("par", SubwordStart), ("##is", SubwordCont)]);
        let opts = TokenizerOptions { lowercase: true };
        assert_eq!(surfaces(&tokenize("Paris PARIS", &v, opts)), vec!["Paris", "par", "##is"]);
        assert_eq!(
            tokenize("PARIS", &v, TokenizerOptions::default()).ids,
            vec![UNK_ID]
        );
    }

    #[test]
    fn baseline_detokenize_is_lossy_around_punctuation() {
        use EntryKind::*;
        let v = vocab(&[("non", SubwordStart), ("-", SubwordStart), ("profit", SubwordStart)]);
        let seq = wordpiece_tokenize("non-profit", &v, TokenizerOptions::default());
        assert_eq!(surfaces(&seq), vec!["non", "-", "profit"]);
        assert_eq!(seq.word_start, vec![true, false, false]);
        assert_eq!(detokenize(&seq, &v), "non - profit");
    }

    #[test]
    fn whole_entry_detokenizes_to_itself() {
        let v = vocab(&[("COVID-19", EntryKind::Whole)]);
        let seq = tokenize("COVID-19", &v, TokenizerOptions::default());
        assert_eq!(detokenize(&seq, &v), "COVID-19");
    }

    #[test]
    fn token_at_byte_finds_covering_token() {
        let v = vocab(&[("ab", EntryKind::Whole), ("cd", EntryKind::Whole)]);
        let seq = tokenize("ab  cd", &v, TokenizerOptions::default());
        assert_eq!(seq.token_at_byte(1), Some(0));
        assert_eq!(seq.token_at_byte(2), None);
        assert_eq!(seq.token_at_byte(4), Some(1));
        assert_eq!(seq.token_at_byte(6), None);
    }
}
