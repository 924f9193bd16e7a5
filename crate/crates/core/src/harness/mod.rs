//! Run configuration, data preparation, training loops, scoring, and the
//! command implementations behind the `anna` binary.

pub mod ablate;
pub mod commands;
pub mod config;
pub mod data;
pub mod metrics;
pub mod schedule;
pub mod squad;
pub mod train;

pub use config::{ChunkingMode, RunConfig, TokenizerKind};
pub use metrics::{evaluate_em_f1, exact_match, f1_score, normalize_answer, EvalReport};
