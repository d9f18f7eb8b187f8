//! Miniature DLRM-style recommendation model with hand-written gradients.

mod batch;
mod embedding;
pub mod interaction;
mod layer;
mod loss;
mod model;
mod optim;
mod snapshot;

pub use batch::Batch;
pub use embedding::{CategoricalFeature, EmbeddingTable};
pub use interaction::dot_interaction;
pub use layer::{apply_mask, Activation, DenseParam, Layer, MaskedLayer};
pub use loss::{ce_loss, ce_sum, clamp_prob, example_ce, PROB_CLAMP};
pub use model::{sigmoid, ModelConfig, ParamSlot, RecModel, Tower};
pub use optim::{adagrad_step, Adagrad};
pub use snapshot::{read_snapshot, write_snapshot, SNAPSHOT_MAGIC};
