//! Reverse-mode autodiff, layers, networks and optimisation.

pub mod checkpoint;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod models;
pub mod optim;
pub mod params;
pub mod tensor;

pub use graph::{Gradients, Graph, Var};
pub use layers::{Linear, SelfAttention, SwiGlu, TransformerLayer};
pub use models::{
    Discriminator, DiscriminatorConfig, Encoder, EncoderConfig, Mode, Predictor, PredictorConfig,
};
pub use optim::{warmup_lr, AdamW, AdamWConfig};
pub use params::{Param, ParamId, ParamStore};
pub use tensor::Tensor;
