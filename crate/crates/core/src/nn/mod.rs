//! Dense tensors and the fixed convolutional policy network.

pub mod checkpoint;
mod grad;
mod net;
mod optim;
mod real;
mod tensor;

pub use grad::{argmax, clip_grad_norm, log_softmax, softmax, Gradients, Parameters};
pub use net::{glorot_init, Activations, ConvSpec, Layer, NetSpec, PolicyNet};
pub use optim::{LrSchedule, Optimizer, OptimizerKind};
pub use real::Real;
pub use tensor::Tensor;
