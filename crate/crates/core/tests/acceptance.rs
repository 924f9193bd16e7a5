//! Acceptance suite: one line per criterion, PASS or FAIL, with the measured
//! values. Runs as a plain binary so the lines are always shown.

use std::collections::{BTreeMap, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anna::attention::{attention_probabilities, neighbor_aware_attention, AttentionConfig, AttentionVariant, AttentionWeights};
use anna::corpus::{
    apply_masking, char_spans_to_token_spans, chunk_document, clean_corpus, heuristic_noun_phrase_chunker,
    plan_masking, read_documents, split_sentences, Action, ChunkOptions, CleaningRules, Document, MaskingConfig, Tier,
};
use anna::encoder::{
    build_model, decode_span, encode_sequence, mlm_batch_gradients, parse_sublayer_order, qa_span_forward, stacking_orders,
    EncoderStackConfig, MlmItem, ModelParams,
};
use anna::harness::commands::{feature_options, qa_features};
use anna::harness::data::read_examples;
use anna::harness::squad::read_squad;
use anna::harness::train::{finetune_qa, predict_answers, pretrain};
use anna::harness::{evaluate_em_f1, RunConfig};
use anna::numerics::{finite_diff_check, GradCheckConfig, Tensor};
use anna::tokenizer::{tokenize, wordpiece_tokenize, EntryKind, TokenizerOptions, Vocabulary, MASK_ID};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn fixture(name: &str) -> PathBuf {
    crate_dir().join("fixtures").join(name)
}

fn desk() -> RunConfig {
    RunConfig::load(&crate_dir().join("configs/desk.conf")).expect("desk config")
}

fn toy_corpus() -> Vec<Document> {
    let f = std::fs::File::open(fixture("toy_corpus.jsonl")).unwrap();
    read_documents(std::io::BufReader::new(f), "toy_corpus").unwrap().0
}

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------- criterion 1

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.5..1.5)).collect()).unwrap()
}

/// Per-head softmax of scaled dot products, written without the library graph.
fn oracle_probabilities(h: &Tensor, w: &AttentionWeights, heads: usize) -> Vec<Vec<Vec<f64>>> {
    let (len, d) = (h.shape()[0], h.shape()[1]);
    let dk = d / heads;
    let proj = |wt: &Tensor, b: &Tensor| -> Vec<Vec<f64>> {
        (0..len)
            .map(|i| (0..d).map(|j| b.data()[j] + (0..d).map(|p| h.at(i, p) * wt.at(p, j)).sum::<f64>()).collect())
            .collect()
    };
    let (q, k) = (proj(&w.w_q, &w.b_q), proj(&w.w_k, &w.b_k));
    (0..heads)
        .map(|hd| {
            (0..len)
                .map(|i| {
                    let s: Vec<f64> = (0..len)
                        .map(|j| (0..dk).map(|c| q[i][hd * dk + c] * k[j][hd * dk + c]).sum::<f64>() / (dk as f64).sqrt())
                        .collect();
                    let m = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let e: Vec<f64> = s.iter().map(|x| (x - m).exp()).collect();
                    let z: f64 = e.iter().sum();
                    e.iter().map(|x| x / z).collect()
                })
                .collect()
        })
        .collect()
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst_ss, mut worst_sn, mut worst_naa, mut worst_out) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut diag_nonzero = 0usize;
    for _ in 0..1000 {
        let len = rng.random_range(1..=8);
        let heads = *[1usize, 2, 4].choose(&mut rng).unwrap();
        let d = heads * rng.random_range(1..=16 / heads);
        let h = random_tensor(&mut rng, &[len, d]);
        let w = AttentionWeights {
            w_q: random_tensor(&mut rng, &[d, d]),
            b_q: random_tensor(&mut rng, &[d]),
            w_k: random_tensor(&mut rng, &[d, d]),
            b_k: random_tensor(&mut rng, &[d]),
            w_v: random_tensor(&mut rng, &[d, d]),
            b_v: random_tensor(&mut rng, &[d]),
            output: None,
            relative: None,
        };
        let sa = AttentionConfig::new(d, heads, AttentionVariant::SelfAttention).unwrap();
        let naa = sa.with_variant(AttentionVariant::NeighborAware);
        let ss = attention_probabilities(&h, &w, None, &sa).unwrap();
        let sn = attention_probabilities(&h, &w, None, &naa).unwrap();
        let oracle = oracle_probabilities(&h, &w, heads);
        let dk = d / heads;
        // V projected by hand for the output comparison.
        let v: Vec<Vec<f64>> = (0..len)
            .map(|i| (0..d).map(|j| w.b_v.data()[j] + (0..d).map(|p| h.at(i, p) * w.w_v.at(p, j)).sum::<f64>()).collect())
            .collect();
        let out = neighbor_aware_attention(&h, &w, None, &naa).unwrap();
        for hd in 0..heads {
            for i in 0..len {
                let row_ss: f64 = (0..len).map(|j| ss[hd].at(i, j)).sum();
                worst_ss = worst_ss.max((row_ss - 1.0).abs());
                if len >= 2 {
                    if sn[hd].at(i, i) != 0.0 {
                        diag_nonzero += 1;
                    }
                    let row_sn: f64 = (0..len).map(|j| sn[hd].at(i, j)).sum();
                    worst_sn = worst_sn.max((row_sn - 1.0).abs());
                    // Mask-then-renormalize oracle over the plain softmax.
                    let z: f64 = (0..len).filter(|&j| j != i).map(|j| oracle[hd][i][j]).sum();
                    let mut ctx = vec![0.0; dk];
                    for j in 0..len {
                        let expect = if j == i { 0.0 } else { oracle[hd][i][j] / z };
                        worst_naa = worst_naa.max((sn[hd].at(i, j) - expect).abs());
                        for (c, x) in ctx.iter_mut().enumerate() {
                            *x += expect * v[j][hd * dk + c];
                        }
                    }
                    for (c, x) in ctx.iter().enumerate() {
                        worst_out = worst_out.max((out.at(i, hd * dk + c) - x).abs());
                    }
                }
            }
        }
    }
    check(
        worst_ss < 1e-9 && worst_sn < 1e-9 && diag_nonzero == 0 && worst_naa < 1e-10 && worst_out < 1e-10,
        format!(
            "1000 instances; max |rowsum-1| S_S {worst_ss:.1e}, S_N {worst_sn:.1e}; nonzero S_N diagonals {diag_nonzero}; \
             NAA vs oracle probs {worst_naa:.1e}, outputs {worst_out:.1e}"
        ),
    )
}

// ---------------------------------------------------------------- criterion 2

fn criterion_2() -> Outcome {
    let cfg = EncoderStackConfig {
        num_layers: 1,
        sublayer_order: parse_sublayer_order("SA,NAA,FFN").unwrap(),
        hidden_size: 8,
        ffn_inner_size: 16,
        num_heads: 2,
        max_sequence_length: 6,
        attention_dropout: 0.0,
        hidden_dropout: 0.0,
        init_std: 0.3,
        ..Default::default()
    };
    let base = build_model(&cfg, 11, 5).unwrap();
    let masked = [7, MASK_ID, 9, 5, MASK_ID, 10];
    let positions = [1, 4];
    let targets = [6, 8];
    let f = |ps: &[Tensor]| {
        let mut m = base.clone();
        m.tensors = ps.to_vec();
        let item = MlmItem { masked_ids: &masked, positions: &positions, targets: &targets };
        mlm_batch_gradients(&m, &[item], None)
    };
    let report = finite_diff_check(f, &base.tensors, &GradCheckConfig::default()).unwrap();
    check(
        report.max_relative_error < 1e-4 && report.passed(),
        format!(
            "{} coordinates over {} tensors, max relative error {:.2e}",
            report.checked,
            base.tensors.len(),
            report.max_relative_error
        ),
    )
}

// ---------------------------------------------------------------- criterion 3

fn criterion_3() -> Outcome {
    use EntryKind::*;
    let whole = ["Sant'Egidio", "COVID-19", "U.S.", "Ph.D.", "l'amour", "non-profit", "X-Files", "UTF-16", "C++"];
    let starts = [
        "Sant", "'", "E", "CO", "-", "19", "U", ".", "S", "Ph", "D", "l", "am", "non", "profit", "X", "Files", "16", "C", "+",
    ];
    let conts = ["##gi", "##dio", "##VI", "##D", "##our", "##TF"];
    let vocab = Vocabulary::from_entries(
        whole
            .iter()
            .map(|s| (*s, Whole))
            .chain(starts.iter().map(|s| (*s, SubwordStart)))
            .chain(conts.iter().map(|s| (*s, SubwordCont))),
        0.7,
    )
    .unwrap();
    let bert: [&[&str]; 9] = [
        &["Sant", "'", "E", "##gi", "##dio"],
        &["CO", "##VI", "##D", "-", "19"],
        &["U", ".", "S", "."],
        &["Ph", ".", "D", "."],
        &["l", "'", "am", "##our"],
        &["non", "-", "profit"],
        &["X", "-", "Files"],
        &["U", "##TF", "-", "16"],
        &["C", "+", "+"],
    ];
    let o = TokenizerOptions::default();
    let mut failures = Vec::new();
    for (word, expect) in whole.iter().zip(bert) {
        let a = tokenize(word, &vocab, o).surfaces;
        let b = wordpiece_tokenize(word, &vocab, o).surfaces;
        if a != [*word] {
            failures.push(format!("{word}: whole-form gave {a:?}"));
        }
        if b != expect {
            failures.push(format!("{word}: wordpiece gave {b:?}"));
        }
    }
    check(failures.is_empty(), if failures.is_empty() { "9/9 rows match under both tokenizers".into() } else { failures.join("; ") })
}

// ---------------------------------------------------------------- criterion 4

fn criterion_4() -> Outcome {
    // Synthetic 510-token sequences: sentences drawn with replacement from the toy corpus.
    let sentences: Vec<String> = toy_corpus().iter().flat_map(|d| split_sentences(&d.text).into_iter().map(String::from).collect::<Vec<_>>()).collect();
    let vocab = Vocabulary::load(&fixture("toy_vocab.txt")).unwrap();
    let cfg = MaskingConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut tokens, mut selected, mut spans_seen, mut fragmented) = (0usize, 0usize, 0usize, 0usize);
    let mut unit_actions: HashMap<Action, usize> = HashMap::new();
    let mut units = 0usize;
    let mut seq_id = 0u64;
    while tokens < 200_000 {
        let mut text = String::new();
        let seq = loop {
            if !text.is_empty() {
                text.push(' ');
            }
            text.push_str(sentences.choose(&mut rng).unwrap());
            let s = tokenize(&text, &vocab, TokenizerOptions::default());
            if s.len() >= 510 {
                break s;
            }
        };
        let mut seq = seq;
        seq.ids.truncate(510);
        seq.surfaces.truncate(510);
        seq.word_start.truncate(510);
        seq.offsets.truncate(510);
        let spans = char_spans_to_token_spans(&text, &seq, &heuristic_noun_phrase_chunker(&text));
        let plan = plan_masking(&seq, &spans, &cfg, seq_id).unwrap();
        let masked = apply_masking(&seq.ids, &plan, vocab.len(), seq_id + 1_000_000).unwrap();
        seq_id += 1;
        tokens += seq.len();
        selected += plan.selected.len();

        let mut by_unit: BTreeMap<usize, Vec<&anna::corpus::Selection>> = BTreeMap::new();
        for s in &plan.selected {
            by_unit.entry(s.unit).or_default().push(s);
        }
        for members in by_unit.values() {
            units += 1;
            *unit_actions.entry(members[0].action).or_default() += 1;
            if members.iter().any(|m| m.action != members[0].action || m.tier != members[0].tier) {
                fragmented += 1;
            }
        }
        let pos: HashMap<usize, &anna::corpus::Selection> = plan.selected.iter().map(|s| (s.position, s)).collect();
        for &(a, b) in &spans {
            let hit: Vec<usize> = (a..b).filter(|p| pos.contains_key(p)).collect();
            if hit.is_empty() {
                continue;
            }
            let s0 = pos[&a.max(hit[0])];
            if s0.tier != Tier::NounPhrase {
                continue;
            }
            spans_seen += 1;
            let whole = hit.len() == b - a
                && hit.iter().all(|p| pos[p].unit == s0.unit && pos[p].action == s0.action);
            let replaced_together = match s0.action {
                Action::Mask => (a..b).all(|p| masked.masked_ids[p] == MASK_ID),
                Action::Keep => (a..b).all(|p| masked.masked_ids[p] == seq.ids[p]),
                Action::Random => (a..b).all(|p| masked.masked_ids[p] != MASK_ID),
            };
            if !whole || !replaced_together {
                fragmented += 1;
            }
        }
    }
    let frac = selected as f64 / tokens as f64;
    let share = |a: Action| *unit_actions.get(&a).unwrap_or(&0) as f64 / units as f64;
    let (m, k, r) = (share(Action::Mask), share(Action::Keep), share(Action::Random));
    check(
        (frac - 0.15).abs() <= 0.005 && (m - 0.8).abs() <= 0.01 && (k - 0.1).abs() <= 0.01 && (r - 0.1).abs() <= 0.01 && fragmented == 0,
        format!(
            "{tokens} tokens in {seq_id} sequences; selected {:.3}%; units {units} MASK/KEEP/RANDOM {:.2}/{:.2}/{:.2}%; \
             {spans_seen} selected NP spans, {fragmented} fragmented",
            frac * 100.0,
            m * 100.0,
            k * 100.0,
            r * 100.0
        ),
    )
}

// ---------------------------------------------------------------- criterion 5

fn criterion_5() -> Outcome {
    let mut cfg = desk();
    cfg.max_steps = 10;
    cfg.warmup_steps = 2;
    let vocab = Vocabulary::load(&fixture("toy_vocab.txt")).unwrap();
    let examples = read_examples(&fixture("toy_pretrain.jsonl"), vocab.len()).unwrap();
    let mut notes = Vec::new();
    let mut ok = true;
    for order in stacking_orders() {
        let mut c = cfg.clone();
        c.encoder.sublayer_order = order.clone();
        let name = anna::encoder::format_sublayer_order(&order).replace(',', "->");
        let params = build_model(&c.encoder, vocab.len(), c.seed).unwrap();
        match pretrain(params, &examples, &c, |_, _| Ok(())) {
            Ok((_, log)) => {
                let n = log.len() as f64;
                let xbar = (n + 1.0) / 2.0;
                let ybar = log.iter().map(|r| r.loss).sum::<f64>() / n;
                let slope = log.iter().map(|r| (r.step as f64 - xbar) * (r.loss - ybar)).sum::<f64>()
                    / log.iter().map(|r| (r.step as f64 - xbar).powi(2)).sum::<f64>();
                let finite = log.iter().all(|r| r.loss.is_finite());
                ok &= finite && log.len() == 10 && slope < 0.0;
                notes.push(format!("{name} slope {slope:.3}"));
            }
            Err((e, _)) => {
                ok = false;
                notes.push(format!("{name} failed: {e}"));
            }
        }
    }
    let mut a = cfg.encoder.clone();
    a.sublayer_order = parse_sublayer_order("SA,NAA,FFN").unwrap();
    let mut b = cfg.encoder.clone();
    b.sublayer_order = parse_sublayer_order("SA,FFN").unwrap();
    let ids = &examples[0].token_ids;
    let ha = encode_sequence(ids, None, &build_model(&a, vocab.len(), 7).unwrap()).unwrap();
    let hb = encode_sequence(ids, None, &build_model(&b, vocab.len(), 7).unwrap()).unwrap();
    let diff = ha.data().iter().zip(hb.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    ok &= diff > 1e-6;
    check(ok, format!("{}; SA->NAA->FFN vs SA->FFN max-norm difference {diff:.3e}", notes.join(", ")))
}

// ------------------------------------------------------------- criteria 6, 7

fn criterion_6(trained: &mut Option<ModelParams>) -> Outcome {
    let cfg = desk();
    let vocab = Vocabulary::load(&fixture("toy_vocab.txt")).unwrap();
    let examples = read_examples(&fixture("toy_pretrain.jsonl"), vocab.len()).unwrap();
    let oracle = std::fs::read_to_string(fixture("toy_pretrain_oracle.txt")).unwrap();
    let value = |key: &str| -> f64 {
        oracle
            .lines()
            .find_map(|l| l.strip_prefix(key)?.trim().strip_prefix('=')?.trim().parse().ok())
            .unwrap_or_else(|| panic!("oracle file lacks {key}"))
    };
    let threshold = value("threshold");
    let params = build_model(&cfg.encoder, vocab.len(), cfg.seed).unwrap();
    let (params, log) = pretrain(params, &examples, &cfg, |_, _| Ok(())).map_err(|(e, _)| e.to_string())?;
    let first = log.first().unwrap().loss;
    let last = log.last().unwrap().loss;
    let ln_v = (vocab.len() as f64).ln();
    *trained = Some(params);
    check(
        examples.len() == 32 && log.len() == 300 && last < threshold && (first - ln_v).abs() < 0.5,
        format!(
            "{} sequences, 300 steps; loss {first:.3} (ln V = {ln_v:.3}) -> {last:.4}; threshold {threshold}, committed oracle {}",
            examples.len(),
            value("final_loss")
        ),
    )
}

/// Best span by enumerating every legal pair; ties keep the first pair found.
fn exhaustive_decode(start: &[f64], end: &[f64], allowed: &[bool], max_len: usize) -> Option<(usize, usize)> {
    let mut best: Option<((usize, usize), f64)> = None;
    for s in 0..start.len() {
        for e in s..end.len() {
            if !allowed[s] || !allowed[e] || e - s > max_len {
                continue;
            }
            let score = start[s] + end[e];
            if best.is_none_or(|(_, b)| score > b) {
                best = Some(((s, e), score));
            }
        }
    }
    best.map(|(p, _)| p)
}

fn criterion_7(trained: Option<ModelParams>) -> Outcome {
    let cfg = desk();
    let vocab = Vocabulary::load(&fixture("toy_vocab.txt")).unwrap();
    let params = match trained {
        Some(p) => p,
        None => return Err("no pretrained parameters (criterion 6 did not finish)".into()),
    };
    let (examples, stats) = read_squad(&fixture("toy_qa.json")).unwrap();
    let opts = feature_options(&cfg, &params);
    let features = qa_features(&examples, &vocab, &opts);
    let (params, log) = finetune_qa(params, &features, &cfg).map_err(|e| e.to_string())?;
    let preds = predict_answers(&params, &examples, &features, cfg.max_answer_length).map_err(|e| e.to_string())?;
    let golds = examples.iter().map(|e| (e.id.clone(), e.answers.iter().map(|a| a.0.clone()).collect())).collect();
    let report = evaluate_em_f1(&preds, &golds).map_err(|e| e.to_string())?;
    let mut decoder_mismatch = 0;
    for f in &features {
        let (s, e) = qa_span_forward(&f.ids, &params).unwrap();
        if decode_span(&s, &e, &f.allowed, cfg.max_answer_length) != exhaustive_decode(&s, &e, &f.allowed, cfg.max_answer_length) {
            decoder_mismatch += 1;
        }
    }
    check(
        examples.len() == 50 && stats.misaligned_answers == 0 && report.exact_match() == 100.0 && report.f1() == 100.0 && decoder_mismatch == 0,
        format!(
            "{} examples, {} steps; EM {:.2} F1 {:.2}; decoder disagreements with exhaustive oracle {decoder_mismatch}",
            examples.len(),
            log.len(),
            report.exact_match(),
            report.f1()
        ),
    )
}

// ---------------------------------------------------------------- criterion 8

fn fraction(s: &str) -> f64 {
    match s.split_once('/') {
        Some((n, d)) => n.parse::<f64>().unwrap() / d.parse::<f64>().unwrap(),
        None => s.parse().unwrap(),
    }
}

fn criterion_8() -> Outcome {
    let text = std::fs::read_to_string(fixture("em_f1_cases.jsonl")).unwrap();
    let mut preds = BTreeMap::new();
    let mut golds = BTreeMap::new();
    let mut expect = BTreeMap::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        let id = v["id"].as_str().unwrap().to_string();
        preds.insert(id.clone(), v["prediction"].as_str().unwrap().to_string());
        golds.insert(id.clone(), v["golds"].as_array().unwrap().iter().map(|g| g.as_str().unwrap().to_string()).collect());
        expect.insert(id, (v["em"].as_f64().unwrap(), fraction(v["f1"].as_str().unwrap())));
    }
    let report = evaluate_em_f1(&preds, &golds).unwrap();
    let mut bad = Vec::new();
    for ex in &report.examples {
        let (em, f1) = expect[&ex.id];
        if (ex.exact_match - em).abs() > 1e-9 || (ex.f1 - f1).abs() > 1e-9 {
            bad.push(format!("{}: got EM {} F1 {}, expected {em} {f1}", ex.id, ex.exact_match, ex.f1));
        }
    }
    let em_mean = expect.values().map(|x| x.0).sum::<f64>() / expect.len() as f64 * 100.0;
    let f1_mean = expect.values().map(|x| x.1).sum::<f64>() / expect.len() as f64 * 100.0;
    let agg_ok = (report.exact_match() - em_mean).abs() < 1e-9 && (report.f1() - f1_mean).abs() < 1e-9;
    check(
        bad.is_empty() && agg_ok && expect.len() == 10,
        format!(
            "{} cases; aggregate EM {:.4} (expected {em_mean:.4}), F1 {:.4} (expected {f1_mean:.4}){}",
            expect.len(),
            report.exact_match(),
            report.f1(),
            if bad.is_empty() { String::new() } else { format!("; {}", bad.join("; ")) }
        ),
    )
}

// ---------------------------------------------------------------- criterion 9

fn criterion_9() -> Outcome {
    let f = std::fs::File::open(fixture("pipeline_cases.jsonl")).unwrap();
    let (docs, _) = read_documents(std::io::BufReader::new(f), "pipeline_cases").unwrap();
    let rules = CleaningRules::bundled();
    let (kept, stats) = clean_corpus(&docs, &rules);
    let short_dropped = !kept.iter().any(|d| d.id == "short_99_words");
    let nine = "The old hall was closed for repairs last winter.";
    let long = kept.iter().find(|d| d.id == "nine_word_sentence");
    let sentence_dropped = long.is_some_and(|d| !d.text.contains(nine)) && stats.sentences_dropped_short == 1;

    // Overlap 0: chunks partition the sentences.
    let mut partition_ok = true;
    for doc in toy_corpus() {
        let sentences = split_sentences(&doc.text);
        let chunks = chunk_document(&doc.text, ChunkOptions { max_words: 45, overlap_words: 0 });
        let mut next = 0;
        for c in &chunks {
            partition_ok &= c.sentences.start == next && c.overlap_words == 0;
            next = c.sentences.end;
            partition_ok &= c.text == sentences[c.sentences.clone()].join(" ");
        }
        partition_ok &= next == sentences.len();
    }

    // Overlap 128 on a long document built from the whole toy corpus.
    let long_text = toy_corpus().iter().map(|d| d.text.clone()).collect::<Vec<_>>().join(" ");
    let chunks = chunk_document(&long_text, ChunkOptions { max_words: 300, overlap_words: 128 });
    let mut overlap_ok = chunks.len() >= 3;
    for pair in chunks.windows(2) {
        let prev: Vec<&str> = pair[0].text.split_whitespace().collect();
        let next: Vec<&str> = pair[1].text.split_whitespace().collect();
        overlap_ok &= pair[1].overlap_words == 128 && next.len() > 128 && next[..128] == prev[prev.len() - 128..];
    }
    check(
        short_dropped && sentence_dropped && partition_ok && overlap_ok,
        format!(
            "99-word document dropped: {short_dropped}; 9-word sentence removed: {sentence_dropped}; \
             overlap 0 partitions: {partition_ok}; {} chunks share exactly 128 words: {overlap_ok}",
            chunks.len()
        ),
    )
}

// --------------------------------------------------------------- criterion 10

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_anna"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("anna {} failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)))
    }
}

fn files_in(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

fn criterion_10() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let conf = crate_dir().join("configs/desk.conf");
    let conf = conf.to_str().unwrap();
    let dir = |run: &str, cmd: &str| tmp.path().join(run).join(cmd);
    let s = |p: PathBuf| p.to_string_lossy().into_owned();
    let pretrained = s(dir("a", "pretrain").join("checkpoint.bin"));
    let tuned = s(dir("a", "finetune-qa").join("qa_checkpoint.bin"));
    let qa = s(fixture("toy_qa.json"));
    let commands: Vec<(&str, Vec<String>)> = vec![
        ("build-vocab", vec![]),
        ("preprocess", vec![]),
        ("pretrain", vec!["--set".into(), "checkpoint_every=100".into()]),
        ("finetune-qa", vec!["--set".into(), format!("checkpoint_path={pretrained}")]),
        ("eval", vec!["--set".into(), format!("checkpoint_path={tuned}"), "--set".into(), format!("qa_dev_path={qa}")]),
        ("ablate", vec!["--axis".into(), "attention".into(), "--set".into(), "max_steps=20".into()]),
    ];
    let mut notes = Vec::new();
    let mut ok = true;
    for (cmd, extra) in &commands {
        for run in ["a", "b"] {
            let out = s(dir(run, cmd));
            let mut args: Vec<&str> = vec![cmd, "--config", conf, "--seed", "7", "--out", &out];
            args.extend(extra.iter().map(String::as_str));
            run_cli(&args)?;
        }
        let (a, b) = (files_in(&dir("a", cmd)), files_in(&dir("b", cmd)));
        let same = a == b && !a.is_empty();
        ok &= same;
        notes.push(format!("{cmd} {} files {}", a.len(), if same { "identical" } else { "DIFFER" }));
    }
    check(ok, notes.join(", "))
}

// ------------------------------------------------------------------- driver

fn main() {
    let args: Vec<String> = std::env::args().collect();
    // `cargo test -- --list` and similar harness probes.
    if args.iter().any(|a| a == "--list") {
        for n in 1..=10 {
            println!("criterion_{n}: test");
        }
        return;
    }
    let mut trained = None;
    let criteria: Vec<(&str, Duration, Box<dyn FnOnce(&mut Option<ModelParams>) -> Outcome>)> = vec![
        ("1 attention correctness", Duration::from_secs(10), Box::new(|_| criterion_1())),
        ("2 gradient fidelity", Duration::from_secs(60), Box::new(|_| criterion_2())),
        ("3 tokenizer golden vectors", Duration::from_secs(1), Box::new(|_| criterion_3())),
        ("4 masking statistics", Duration::from_secs(30), Box::new(|_| criterion_4())),
        ("5 stacking-matrix smoke", Duration::from_secs(300), Box::new(|_| criterion_5())),
        ("6 toy MLM convergence", Duration::from_secs(600), Box::new(criterion_6)),
        ("7 toy QA overfit", Duration::from_secs(600), Box::new(|t: &mut Option<ModelParams>| criterion_7(t.take()))),
        ("8 metric conformance", Duration::from_secs(1), Box::new(|_| criterion_8())),
        ("9 pipeline conformance", Duration::from_secs(10), Box::new(|_| criterion_9())),
        ("10 determinism", Duration::from_secs(900), Box::new(|_| criterion_10())),
    ];
    let mut failed = 0;
    for (name, budget, run) in criteria {
        let t0 = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| run(&mut trained)))
            .unwrap_or_else(|p| Err(format!("panicked: {}", p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())));
        let took = t0.elapsed();
        let within = took <= budget;
        let (pass, detail) = match outcome {
            Ok(d) => (within, d),
            Err(d) => (false, d),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "{} criterion {name}: {detail} [{:.2}s of {}s budget{}]",
            if pass { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            budget.as_secs(),
            if within { "" } else { ", over budget" }
        );
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
