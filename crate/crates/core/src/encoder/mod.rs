//! Embeddings, configurable-order encoder blocks, MLM and QA span heads.

mod checkpoint;
mod config;
mod forward;
mod params;
mod qa;

pub use checkpoint::Checkpoint;
pub use config::{format_sublayer_order, parse_sublayer_order, stacking_orders, EncoderStackConfig, SubLayer};
pub use forward::{
    encode, encode_sequence, mlm_batch_gradients, mlm_forward, mlm_logits, mlm_loss, qa_batch_gradients,
    qa_logits, qa_loss, qa_span_forward, span_mask, BoundModel, MlmItem, MlmOutput, QaItem,
};
pub use params::{
    build_model, parameter_count, AttentionSlots, FeedForwardSlots, ModelParams, ParamLayout, SubLayerSlots,
};
pub use qa::decode_span;
