pub mod attention;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod harness;
pub mod numerics;
pub mod tokenizer;

pub use error::{Error, Result};
