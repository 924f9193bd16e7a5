//! Extractive-QA exact match and token-overlap F1.

use std::collections::{BTreeMap, HashMap};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lowercase, drop ASCII punctuation, drop the articles a/an/the, collapse
/// whitespace.
pub fn normalize_answer(s: &str) -> String {
    static ARTICLES: OnceLock<Regex> = OnceLock::new();
    let articles = ARTICLES.get_or_init(|| Regex::new(r"\b(a|an|the)\b").expect("valid regex"));
    let lower = s.to_lowercase();
    let no_punct: String = lower.chars().filter(|c| !c.is_ascii_punctuation()).collect();
    let no_articles = articles.replace_all(&no_punct, " ");
    no_articles.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn exact_match(prediction: &str, gold: &str) -> f64 {
    f64::from(u8::from(normalize_answer(prediction) == normalize_answer(gold)))
}

pub fn f1_score(prediction: &str, gold: &str) -> f64 {
    let p = normalize_answer(prediction);
    let g = normalize_answer(gold);
    let pt: Vec<&str> = p.split_whitespace().collect();
    let gt: Vec<&str> = g.split_whitespace().collect();
    let mut counts: HashMap<&str, i64> = HashMap::new();
    for t in &gt {
        *counts.entry(t).or_default() += 1;
    }
    let mut same = 0usize;
    for t in &pt {
        if let Some(c) = counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                same += 1;
            }
        }
    }
    if same == 0 {
        return 0.0;
    }
    let precision = same as f64 / pt.len() as f64;
    let recall = same as f64 / gt.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExampleScore {
    pub id: String,
    pub prediction: String,
    pub golds: Vec<String>,
    pub exact_match: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// `exact_match` and `f1` are percentages; `count` is the number of examples.
    pub metrics: BTreeMap<String, f64>,
    pub examples: Vec<ExampleScore>,
    pub config_fingerprint: String,
    pub seed: u64,
    /// Settings that produced the predictions, such as fine-tuning hyperparameters.
    pub settings: BTreeMap<String, String>,
}

impl EvalReport {
    pub fn exact_match(&self) -> f64 {
        self.metrics["exact_match"]
    }

    pub fn f1(&self) -> f64 {
        self.metrics["f1"]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

/// Scores predictions against gold answer lists keyed by example id. Every
/// id must appear on both sides.
pub fn evaluate_em_f1(
    predictions: &BTreeMap<String, String>,
    golds: &BTreeMap<String, Vec<String>>,
) -> Result<EvalReport> {
    let missing: Vec<&str> = golds.keys().filter(|k| !predictions.contains_key(*k)).map(String::as_str).collect();
    let extra: Vec<&str> = predictions.keys().filter(|k| !golds.contains_key(*k)).map(String::as_str).collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(Error::Evaluation(format!(
            "ids without predictions: [{}]; predictions without golds: [{}]",
            missing.join(", "),
            extra.join(", ")
        )));
    }
    let mut examples = Vec::with_capacity(golds.len());
    for (id, refs) in golds {
        if refs.is_empty() {
            return Err(Error::Evaluation(format!("example {id} has no gold answers")));
        }
        let pred = &predictions[id];
        let em = refs.iter().map(|g| exact_match(pred, g)).fold(0.0, f64::max);
        let f1 = refs.iter().map(|g| f1_score(pred, g)).fold(0.0, f64::max);
        examples.push(ExampleScore {
            id: id.clone(),
            prediction: pred.clone(),
            golds: refs.clone(),
            exact_match: em,
            f1,
        });
    }
    let n = examples.len();
    let mean = |f: fn(&ExampleScore) -> f64| {
        if n == 0 {
            0.0
        } else {
            100.0 * examples.iter().map(f).sum::<f64>() / n as f64
        }
    };
    let mut metrics = BTreeMap::new();
    metrics.insert("exact_match".to_string(), mean(|e| e.exact_match));
    metrics.insert("f1".to_string(), mean(|e| e.f1));
    metrics.insert("count".to_string(), n as f64);
    Ok(EvalReport {
        metrics,
        examples,
        config_fingerprint: String::new(),
        seed: 0,
        settings: BTreeMap::new(),
    })
}
