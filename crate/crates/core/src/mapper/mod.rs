//! Toy end-to-end panorama-to-BEV mapper: patch encoder, depth-derived
//! BEV queries, a stack of panoramic attention layers and a per-cell
//! decoder, trained with per-cell cross-entropy.

mod encoder;
mod model;
mod train;

pub use encoder::{encode_cached, encode_panorama, encoder_backward, patchify, EncoderCache, ToyEncoderParams};
pub use model::{
    cross_entropy, forward, mapper_gradcheck, predict_from_logits, predict_map, prepare_frame, BevLogits,
    MapperConfig, MapperModel, MapperOutput, MapperParams, PreparedFrame,
};
pub use train::{evaluate_scenes, train, TrainConfig, TrainReport, TrainingScene};
