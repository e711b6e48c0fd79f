//! Neural in-domain/out-of-domain sentence classifiers with a CNN or BLSTM
//! encoder.

mod embeddings;
mod model;
pub mod store;
mod train;

pub use embeddings::{load_pretrained_embeddings, EmbeddingLoadReport};
pub use model::{ClassifierConfig, ClassifierModel, EncoderKind};
pub use train::{train, train_on, EpochStats, OptimizerKind, TrainConfig, TrainHistory};
