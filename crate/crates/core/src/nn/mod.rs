//! Multilayer perceptrons with hand-written backpropagation and optimizers.

pub mod activation;
pub mod mlp;
pub mod train;

pub use activation::Activation;
pub use mlp::{mse, GaussianStream, InitScheme, Mlp, Samples, CHECKPOINT_MAGIC};
pub use train::{train, Control, Observer, Optimizer, OptimizerConfig, StepDecay, TrainingTrace};
