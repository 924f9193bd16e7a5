//! Exact match and token F1 on hand-worked cases.
//!
//! `cargo run --example evaluate`

use std::collections::BTreeMap;
use std::path::PathBuf;

use anna::harness::{evaluate_em_f1, normalize_answer};

fn main() -> anna::Result<()> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/em_f1_cases.jsonl");
    let mut preds = BTreeMap::new();
    let mut golds = BTreeMap::new();
    for line in std::fs::read_to_string(path)?.lines().filter(|l| !l.trim().is_empty()) {
        let v: serde_json::Value = serde_json::from_str(line)?;
        let id = v["id"].as_str().unwrap_or_default().to_string();
        preds.insert(id.clone(), v["prediction"].as_str().unwrap_or_default().to_string());
        let refs = v["golds"].as_array().into_iter().flatten().filter_map(|g| g.as_str().map(String::from)).collect();
        golds.insert(id, refs);
    }
    let report = evaluate_em_f1(&preds, &golds)?;
    for ex in &report.examples {
        println!(
            "{} EM {} F1 {:.3}  {:?} vs {:?}",
            ex.id,
            ex.exact_match,
            ex.f1,
            normalize_answer(&ex.prediction),
            ex.golds.iter().map(|g| normalize_answer(g)).collect::<Vec<_>>()
        );
    }
    println!("aggregate EM {:.3} F1 {:.3}", report.exact_match(), report.f1());
    Ok(())
}
