//! Attention probabilities under plain and neighbor-aware self-attention,
//! and outputs of the two relative-position modes.
//!
//! `cargo run --example attention_variants`

use anna::attention::{
    attention_probabilities, relative_position_attention, AttentionConfig, AttentionVariant, AttentionWeights,
};
use anna::numerics::truncated_normal;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn print_matrix(title: &str, m: &anna::numerics::Tensor) {
    println!("{title}");
    for i in 0..m.shape()[0] {
        let row: Vec<String> = (0..m.shape()[1]).map(|j| format!("{:.3}", m.at(i, j))).collect();
        println!("  [{}]", row.join(" "));
    }
}

fn main() -> anna::Result<()> {
    let (len, d, heads) = (5, 8, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let h = truncated_normal(&mut rng, &[len, d], 1.0);
    let weights = AttentionWeights {
        w_q: truncated_normal(&mut rng, &[d, d], 0.5),
        b_q: truncated_normal(&mut rng, &[d], 0.1),
        w_k: truncated_normal(&mut rng, &[d, d], 0.5),
        b_k: truncated_normal(&mut rng, &[d], 0.1),
        w_v: truncated_normal(&mut rng, &[d, d], 0.5),
        b_v: truncated_normal(&mut rng, &[d], 0.1),
        output: None,
        relative: None,
    };
    let sa = AttentionConfig::new(d, heads, AttentionVariant::SelfAttention)?;
    let naa = sa.with_variant(AttentionVariant::NeighborAware);

    let plain = attention_probabilities(&h, &weights, None, &sa)?;
    let neighbor = attention_probabilities(&h, &weights, None, &naa)?;
    print_matrix("self-attention, head 0:", &plain[0]);
    print_matrix("neighbor-aware attention, head 0 (zero diagonal):", &neighbor[0]);

    let mut rel = sa;
    rel.max_relative_distance = 2;
    let table = truncated_normal(&mut rng, &[2 * rel.max_relative_distance + 1, d / heads], 0.5);
    for mode in [AttentionVariant::RelativeQk, AttentionVariant::RelativeQv] {
        let out = relative_position_attention(&h, &weights, &table, mode, None, &rel)?;
        print_matrix(&format!("{mode} output:"), &out);
    }
    Ok(())
}
