//! Physics-informed neural network training with adaptive wavelet-tanh
//! activations.

pub mod activations;
pub mod autodiff;
pub mod loss;
pub mod metrics;
pub mod network;
pub mod optimizer;
pub mod pde;
