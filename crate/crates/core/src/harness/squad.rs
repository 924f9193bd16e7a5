//! Extractive-QA data in the v1.1 JSON layout and model input features.

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::harness::config::TokenizerKind;
use crate::tokenizer::{tokenize, wordpiece_tokenize, TokenizedSequence, TokenizerOptions, Vocabulary, CLS_ID, SEP_ID};

#[derive(Deserialize)]
struct SquadFile {
    data: Vec<Article>,
}

#[derive(Deserialize)]
struct Article {
    paragraphs: Vec<Paragraph>,
}

#[derive(Deserialize)]
struct Paragraph {
    context: String,
    qas: Vec<RawQa>,
}

#[derive(Deserialize)]
struct RawQa {
    id: String,
    question: String,
    answers: Vec<RawAnswer>,
    #[serde(default)]
    is_impossible: Option<serde_json::Value>,
}

#[derive(Deserialize)]
struct RawAnswer {
    text: String,
    answer_start: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QaExample {
    pub id: String,
    pub question: String,
    pub context: String,
    /// Answers whose text occurs at the stated char offset, as `(text, char start)`.
    pub answers: Vec<(String, usize)>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SquadStats {
    pub examples: usize,
    /// Answers dropped because the text was not found at the stated offset.
    pub misaligned_answers: usize,
    /// Questions dropped because none of their answers aligned.
    pub skipped_examples: usize,
}

/// Parses a v1.1 dataset. Any question carrying the v2.0 `is_impossible`
/// field is a format error.
pub fn parse_squad(json: &str, source_name: &str) -> Result<(Vec<QaExample>, SquadStats)> {
    let file: SquadFile = serde_json::from_str(json).map_err(|e| Error::format(source_name, e.to_string()))?;
    let mut out = Vec::new();
    let mut stats = SquadStats::default();
    for article in file.data {
        for p in article.paragraphs {
            let chars: Vec<char> = p.context.chars().collect();
            for qa in p.qas {
                if qa.is_impossible.is_some() {
                    return Err(Error::format(
                        source_name,
                        format!("question {} is marked is_impossible; the v1.1 reader has no unanswerable questions", qa.id),
                    ));
                }
                let mut answers = Vec::new();
                for a in qa.answers {
                    let n = a.text.chars().count();
                    let found: String = chars.iter().skip(a.answer_start).take(n).collect();
                    if a.answer_start + n <= chars.len() && found == a.text && n > 0 {
                        answers.push((a.text, a.answer_start));
                    } else {
                        log::warn!("{source_name}: answer `{}` of {} not found at offset {}", a.text, qa.id, a.answer_start);
                        stats.misaligned_answers += 1;
                    }
                }
                if answers.is_empty() {
                    stats.skipped_examples += 1;
                    continue;
                }
                stats.examples += 1;
                out.push(QaExample {
                    id: qa.id,
                    question: qa.question,
                    context: p.context.clone(),
                    answers,
                });
            }
        }
    }
    Ok((out, stats))
}

pub fn read_squad(path: &Path) -> Result<(Vec<QaExample>, SquadStats)> {
    if !path.exists() {
        return Err(Error::MissingInput(path.to_path_buf()));
    }
    parse_squad(&std::fs::read_to_string(path)?, &path.display().to_string())
}

/// Model input for one question: `[CLS] question [SEP] passage [SEP]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QaFeature {
    pub id: String,
    pub ids: Vec<usize>,
    /// True at passage positions, the only legal span boundaries.
    pub allowed: Vec<bool>,
    /// Byte range in the context for each passage position.
    pub offsets: Vec<Option<(usize, usize)>>,
    /// Token span of the first answer, if it survived truncation.
    pub answer: Option<(usize, usize)>,
}

#[derive(Clone, Copy, Debug)]
pub struct FeatureOptions {
    pub max_len: usize,
    pub max_query_len: usize,
    pub tokenizer: TokenizerKind,
    pub lowercase: bool,
}

fn run_tokenizer(text: &str, vocab: &Vocabulary, opts: &FeatureOptions) -> TokenizedSequence {
    let o = TokenizerOptions { lowercase: opts.lowercase };
    match opts.tokenizer {
        TokenizerKind::WholeForm => tokenize(text, vocab, o),
        TokenizerKind::Wordpiece => wordpiece_tokenize(text, vocab, o),
    }
}

pub fn build_feature(ex: &QaExample, vocab: &Vocabulary, opts: &FeatureOptions) -> QaFeature {
    let q = run_tokenizer(&ex.question, vocab, opts);
    let p = run_tokenizer(&ex.context, vocab, opts);
    let q_len = q.len().min(opts.max_query_len);
    let p_len = p.len().min(opts.max_len.saturating_sub(q_len + 3));

    let mut ids = vec![CLS_ID];
    ids.extend_from_slice(&q.ids[..q_len]);
    ids.push(SEP_ID);
    let passage_start = ids.len();
    ids.extend_from_slice(&p.ids[..p_len]);
    ids.push(SEP_ID);

    let mut allowed = vec![false; ids.len()];
    let mut offsets = vec![None; ids.len()];
    for k in 0..p_len {
        allowed[passage_start + k] = true;
        offsets[passage_start + k] = Some(p.offsets[k]);
    }

    let answer = ex.answers.first().and_then(|(text, char_start)| {
        let bs = ex.context.char_indices().nth(*char_start).map(|(b, _)| b)?;
        let be = bs + text.len();
        let first = p.offsets[..p_len].iter().position(|&(_, e)| e > bs)?;
        let last = p.offsets[..p_len].iter().rposition(|&(s, _)| s < be)?;
        (first <= last).then_some((passage_start + first, passage_start + last))
    });
    QaFeature { id: ex.id.clone(), ids, allowed, offsets, answer }
}

/// Context text covered by token positions `start..=end`.
pub fn span_text<'a>(context: &'a str, feature: &QaFeature, span: Option<(usize, usize)>) -> &'a str {
    match span.and_then(|(s, e)| Some((feature.offsets[s]?, feature.offsets[e]?))) {
        Some(((bs, _), (_, be))) => &context[bs..be],
        None => "",
    }
}
