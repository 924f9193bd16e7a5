//! Central-difference check of the masked-LM gradients of a small encoder.
//!
//! `cargo run --release --example gradient_check`

use anna::encoder::{build_model, mlm_batch_gradients, parse_sublayer_order, EncoderStackConfig, MlmItem};
use anna::numerics::{finite_diff_check, GradCheckConfig, Tensor};
use anna::tokenizer::MASK_ID;

fn main() -> anna::Result<()> {
    let cfg = EncoderStackConfig {
        num_layers: 1,
        sublayer_order: parse_sublayer_order("SA,NAA,REL_QK,FFN")?,
        hidden_size: 8,
        ffn_inner_size: 16,
        num_heads: 2,
        max_sequence_length: 6,
        max_relative_distance: 2,
        attention_dropout: 0.0,
        hidden_dropout: 0.0,
        init_std: 0.3,
        ..Default::default()
    };
    let base = build_model(&cfg, 11, 5)?;
    let masked = [7, MASK_ID, 9, 5, MASK_ID, 10];
    let item = || MlmItem { masked_ids: &masked, positions: &[1, 4], targets: &[6, 8] };
    let loss = |ps: &[Tensor]| {
        let mut m = base.clone();
        m.tensors = ps.to_vec();
        mlm_batch_gradients(&m, &[item()], None)
    };
    let report = finite_diff_check(loss, &base.tensors, &GradCheckConfig::default())?;
    println!(
        "{} coordinates over {} tensors; max relative error {:.2e}; {}",
        report.checked,
        base.tensors.len(),
        report.max_relative_error,
        if report.passed() { "passed" } else { "FAILED" }
    );
    Ok(())
}
