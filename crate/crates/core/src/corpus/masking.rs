//! Three-tier masking plans: noun-phrase spans, then whole words, then single
//! tokens, with one replacement-action draw per selected unit.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tokenizer::{TokenizedSequence, MASK_ID, NUM_SPECIALS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tier {
    NounPhrase,
    WholeWord,
    Token,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Action {
    Mask,
    Keep,
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Selection {
    pub position: usize,
    pub tier: Tier,
    pub action: Action,
    pub original_id: usize,
    /// Index of the unit (span, word or token) this position was selected with.
    pub unit: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MaskingPlan {
    /// Sorted by position.
    pub selected: Vec<Selection>,
}

impl MaskingPlan {
    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }
}

/// Which units a pretraining run masks.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MaskingScheme {
    /// Independent single tokens.
    Standard,
    /// Entity spans from document annotations, then whole words, then tokens.
    Entity,
    /// Noun-phrase spans, then whole words, then tokens.
    #[default]
    NounPhrase,
}

impl MaskingScheme {
    pub const ALL: [MaskingScheme; 3] = [MaskingScheme::Standard, MaskingScheme::Entity, MaskingScheme::NounPhrase];

    pub fn as_str(self) -> &'static str {
        match self {
            MaskingScheme::Standard => "standard",
            MaskingScheme::Entity => "entity",
            MaskingScheme::NounPhrase => "noun_phrase",
        }
    }

    pub fn uses_whole_words(self) -> bool {
        self != MaskingScheme::Standard
    }
}

impl std::str::FromStr for MaskingScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MaskingScheme::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown masking scheme `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaskingConfig {
    pub budget: f64,
    pub mask_prob: f64,
    pub keep_prob: f64,
    pub random_prob: f64,
    pub whole_words: bool,
}

impl Default for MaskingConfig {
    fn default() -> Self {
        MaskingConfig {
            budget: 0.15,
            mask_prob: 0.8,
            keep_prob: 0.1,
            random_prob: 0.1,
            whole_words: true,
        }
    }
}

impl MaskingConfig {
    pub fn validate(&self) -> Result<()> {
        let probs = [self.mask_prob, self.keep_prob, self.random_prob];
        if !(self.budget > 0.0 && self.budget < 1.0) {
            return Err(Error::Config(format!("masking budget {} not in (0, 1)", self.budget)));
        }
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) || (probs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("masking action probabilities {probs:?} do not sum to 1")));
        }
        Ok(())
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> Action {
        let u: f64 = rng.random();
        if u < self.mask_prob {
            Action::Mask
        } else if u < self.mask_prob + self.keep_prob {
            Action::Keep
        } else {
            Action::Random
        }
    }
}

/// Maps char spans to half-open token-index spans via byte offsets. Spans that
/// cover no token, or overlap an earlier span after mapping, are dropped.
pub fn char_spans_to_token_spans(text: &str, seq: &TokenizedSequence, spans: &[(usize, usize)]) -> Vec<(usize, usize)> {
    let table = crate::corpus::char_to_byte_table(text);
    let mut out: Vec<(usize, usize)> = Vec::new();
    for &(cs, ce) in spans {
        if ce > table.len() - 1 || cs >= ce {
            continue;
        }
        let (bs, be) = (table[cs], table[ce]);
        let first = seq.offsets.partition_point(|&(_, end)| end <= bs);
        let last = seq.offsets.partition_point(|&(start, _)| start < be);
        if first >= last || out.last().is_some_and(|&(_, prev_end)| first < prev_end) {
            continue;
        }
        out.push((first, last));
    }
    out
}

/// Selects `floor(budget * len)` positions, preferring whole spans, then
/// multi-token whole words, then single tokens. Every unit is kept whole; when
/// no remaining token fits, whole units are added while the count is short, so
/// the overshoot is below the length of the last unit added.
pub fn plan_masking(
    seq: &TokenizedSequence,
    spans: &[(usize, usize)],
    cfg: &MaskingConfig,
    seed: u64,
) -> Result<MaskingPlan> {
    cfg.validate()?;
    let len = seq.len();
    let target = (cfg.budget * len as f64).floor() as usize;
    if target == 0 {
        return Ok(MaskingPlan::default());
    }
    let mut prev_end = 0;
    for &(s, e) in spans {
        if s >= e || e > len || s < prev_end {
            return Err(Error::Plan(format!("span [{s}, {e}) invalid for a {len}-token sequence")));
        }
        prev_end = e;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut covered = vec![false; len];
    let mut units: Vec<(Tier, usize, usize)> = Vec::new();
    let mut count = 0;

    let mut span_order: Vec<usize> = (0..spans.len()).collect();
    span_order.shuffle(&mut rng);
    let mut leftover: Vec<(Tier, usize, usize)> = Vec::new();
    for &k in &span_order {
        let (s, e) = spans[k];
        if count + (e - s) <= target {
            units.push((Tier::NounPhrase, s, e));
            covered[s..e].iter_mut().for_each(|c| *c = true);
            count += e - s;
        } else {
            leftover.push((Tier::NounPhrase, s, e));
        }
    }

    let mut in_multi_word = vec![false; len];
    if cfg.whole_words {
        let mut words = Vec::new();
        let mut s = 0;
        for i in 1..=len {
            if i == len || seq.word_start[i] {
                if i - s > 1 {
                    words.push((s, i));
                    in_multi_word[s..i].iter_mut().for_each(|c| *c = true);
                }
                s = i;
            }
        }
        words.shuffle(&mut rng);
        for (s, e) in words {
            if covered[s..e].iter().any(|&c| c) {
                continue;
            }
            if count + (e - s) <= target {
                units.push((Tier::WholeWord, s, e));
                covered[s..e].iter_mut().for_each(|c| *c = true);
                count += e - s;
            } else {
                leftover.push((Tier::WholeWord, s, e));
            }
        }
    }

    let mut singles: Vec<usize> = (0..len).filter(|&i| !covered[i] && !in_multi_word[i]).collect();
    singles.shuffle(&mut rng);
    for i in singles {
        if count == target {
            break;
        }
        units.push((Tier::Token, i, i + 1));
        covered[i] = true;
        count += 1;
    }

    for (tier, s, e) in leftover {
        if count >= target {
            break;
        }
        if covered[s..e].iter().all(|&c| !c) {
            units.push((tier, s, e));
            covered[s..e].iter_mut().for_each(|c| *c = true);
            count += e - s;
        }
    }

    let mut selected = Vec::with_capacity(count);
    for (unit, &(tier, s, e)) in units.iter().enumerate() {
        let action = cfg.draw(&mut rng);
        selected.extend((s..e).map(|position| Selection {
            position,
            tier,
            action,
            original_id: seq.ids[position],
            unit,
        }));
    }
    selected.sort_by_key(|s| s.position);
    Ok(MaskingPlan { selected })
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MaskedSequence {
    pub masked_ids: Vec<usize>,
    pub predict_positions: Vec<usize>,
    pub target_ids: Vec<usize>,
}

/// Applies a plan. Random replacements are drawn uniformly from non-special ids.
pub fn apply_masking(ids: &[usize], plan: &MaskingPlan, vocab_size: usize, seed: u64) -> Result<MaskedSequence> {
    if vocab_size <= NUM_SPECIALS {
        return Err(Error::Plan(format!("vocabulary of {vocab_size} has no non-special ids")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = MaskedSequence {
        masked_ids: ids.to_vec(),
        ..Default::default()
    };
    for sel in &plan.selected {
        if ids.get(sel.position) != Some(&sel.original_id) {
            return Err(Error::Plan(format!(
                "plan expects id {} at position {} of a {}-token sequence",
                sel.original_id,
                sel.position,
                ids.len()
            )));
        }
        out.masked_ids[sel.position] = match sel.action {
            Action::Mask => MASK_ID,
            Action::Keep => sel.original_id,
            Action::Random => rng.random_range(NUM_SPECIALS..vocab_size),
        };
        out.predict_positions.push(sel.position);
        out.target_ids.push(sel.original_id);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tokens(len: usize, word_len: usize) -> TokenizedSequence {
        TokenizedSequence {
            ids: (0..len).map(|i| NUM_SPECIALS + i).collect(),
            surfaces: (0..len).map(|i| format!("t{i}")).collect(),
            word_start: (0..len).map(|i| i % word_len == 0).collect(),
            offsets: (0..len).map(|i| (i, i + 1)).collect(),
        }
    }

    /// Single-pass reference enumeration of the tiered selection, written
    /// without the shared bookkeeping used by `plan_masking`.
    fn reference(seq: &TokenizedSequence, spans: &[(usize, usize)], seed: u64) -> Vec<(usize, Tier, Action)> {
        let cfg = MaskingConfig::default();
        let n = seq.len() * 15 / 100;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..spans.len()).collect();
        order.shuffle(&mut rng);
        let mut taken: Vec<(Tier, Vec<usize>)> = Vec::new();
        let mut rest = Vec::new();
        let size = |t: &Vec<(Tier, Vec<usize>)>| t.iter().map(|u| u.1.len()).sum::<usize>();
        for k in order {
            let u: Vec<usize> = (spans[k].0..spans[k].1).collect();
            if size(&taken) + u.len() <= n {
                taken.push((Tier::NounPhrase, u));
            } else {
                rest.push((Tier::NounPhrase, u));
            }
        }
        let starts: Vec<usize> = (0..seq.len()).filter(|&i| seq.word_start[i]).chain([seq.len()]).collect();
        let mut words: Vec<(usize, usize)> = starts.windows(2).map(|w| (w[0], w[1])).filter(|w| w.1 - w.0 > 1).collect();
        words.shuffle(&mut rng);
        let used = |t: &Vec<(Tier, Vec<usize>)>, p: usize| t.iter().any(|u| u.1.contains(&p));
        for (s, e) in words.iter().copied() {
            if (s..e).any(|p| used(&taken, p)) {
                continue;
            }
            if size(&taken) + (e - s) <= n {
                taken.push((Tier::WholeWord, (s..e).collect()));
            } else {
                rest.push((Tier::WholeWord, (s..e).collect()));
            }
        }
        let mut singles: Vec<usize> = (0..seq.len())
            .filter(|&p| !used(&taken, p) && !words.iter().any(|&(s, e)| s <= p && p < e))
            .collect();
        singles.shuffle(&mut rng);
        for p in singles {
            if size(&taken) < n {
                taken.push((Tier::Token, vec![p]));
            }
        }
        for (t, u) in rest {
            if size(&taken) < n && !u.iter().any(|&p| used(&taken, p)) {
                taken.push((t, u));
            }
        }
        let mut out = Vec::new();
        for (t, u) in taken {
            let a = cfg.draw(&mut rng);
            out.extend(u.into_iter().map(|p| (p, t, a)));
        }
        out.sort_by_key(|x| x.0);
        out
    }

    #[test]
    fn short_sequence_gets_empty_plan() {
        let plan = plan_masking(&tokens(6, 1), &[], &MaskingConfig::default(), 1).unwrap();
        assert!(plan.is_empty());
    }

    #[test]
    fn hundred_plain_tokens_select_fifteen() {
        let plan = plan_masking(&tokens(100, 1), &[], &MaskingConfig::default(), 3).unwrap();
        assert_eq!(plan.len(), 15);
        assert!(plan.selected.iter().all(|s| s.tier == Tier::Token));
    }

    #[test]
    fn forty_tokens_one_span_matches_reference() {
        let seq = tokens(40, 3);
        let spans = [(10, 15)];
        let plan = plan_masking(&seq, &spans, &MaskingConfig::default(), 42).unwrap();
        let got: Vec<(usize, Tier, Action)> = plan.selected.iter().map(|s| (s.position, s.tier, s.action)).collect();
        assert_eq!(got, reference(&seq, &spans, 42));
        let span_positions: Vec<usize> = plan.selected.iter().filter(|s| s.tier == Tier::NounPhrase).map(|s| s.position).collect();
        assert_eq!(span_positions, vec![10, 11, 12, 13, 14]);
        assert_eq!(plan.len(), 6);
    }

    #[test]
    fn reference_agrees_across_seeds() {
        for seed in 0..200 {
            let seq = tokens(37 + (seed as usize % 50), 1 + seed as usize % 4);
            let spans = [(2, 5), (9, 13), (20, 22), (30, 36)];
            let plan = plan_masking(&seq, &spans, &MaskingConfig::default(), seed).unwrap();
            let got: Vec<(usize, Tier, Action)> = plan.selected.iter().map(|s| (s.position, s.tier, s.action)).collect();
            assert_eq!(got, reference(&seq, &spans, seed), "seed {seed}");
        }
    }

    #[test]
    fn straddling_span_adds_bounded_slack() {
        let seq = tokens(20, 1);
        // budget 3, only a 4-token span and nothing else uncovered would leave it short
        let plan = plan_masking(&seq, &[(0, 4)], &MaskingConfig::default(), 0).unwrap();
        assert!(plan.len() >= 3 && plan.len() <= 3 + 3);
    }

    #[test]
    fn apply_replaces_and_records_targets() {
        let seq = tokens(40, 1);
        let plan = MaskingPlan {
            selected: (3..6)
                .map(|p| Selection { position: p, tier: Tier::NounPhrase, action: Action::Mask, original_id: seq.ids[p], unit: 0 })
                .collect(),
        };
        let out = apply_masking(&seq.ids, &plan, 100, 9).unwrap();
        assert_eq!(&out.masked_ids[3..6], &[MASK_ID; 3]);
        assert_eq!(out.predict_positions, vec![3, 4, 5]);
        assert_eq!(out.target_ids, seq.ids[3..6].to_vec());
        let empty = apply_masking(&seq.ids, &MaskingPlan::default(), 100, 9).unwrap();
        assert_eq!(empty.masked_ids, seq.ids);
        assert!(empty.target_ids.is_empty());
        assert!(matches!(apply_masking(&seq.ids[..2], &plan, 100, 9), Err(Error::Plan(_))));
    }

    #[test]
    fn random_replacements_avoid_specials() {
        let seq = tokens(200, 1);
        let plan = MaskingPlan {
            selected: (0..200)
                .map(|p| Selection { position: p, tier: Tier::Token, action: Action::Random, original_id: seq.ids[p], unit: p })
                .collect(),
        };
        let out = apply_masking(&seq.ids, &plan, 8, 1).unwrap();
        assert!(out.masked_ids.iter().all(|&id| (NUM_SPECIALS..8).contains(&id)));
    }
}
