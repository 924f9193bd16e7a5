//! Short runs over every sub-layer stacking order, written as a CSV table.
//!
//! `cargo run --release --example ablation`

use std::path::PathBuf;

use anna::harness::ablate::{results_csv, run_ablation, Axis};
use anna::harness::RunConfig;

fn main() -> anna::Result<()> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let mut cfg = RunConfig::load(&dir.join("configs/toy.conf"))?;
    cfg.max_steps = 15;
    for axis in [Axis::Stacking, Axis::Attention] {
        print!("{}", results_csv(&run_ablation(&cfg, axis)?));
    }
    Ok(())
}
