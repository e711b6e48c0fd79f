//! Dense double-precision tensors, a reverse-mode autodiff tape and the
//! Adam/Adadelta optimizers.

pub mod checkpoint;
mod graph;
pub mod optim;
mod tensor;

pub use graph::{Gradients, Graph, ParamId, ParamStore, Var};
pub use optim::{Adadelta, AdadeltaConfig, Adam, AdamConfig, Optimizer};
pub use tensor::Tensor;
