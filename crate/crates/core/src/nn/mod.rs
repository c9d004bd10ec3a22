//! Minimal differentiable building blocks shared by the embedding network and
//! the classifier head.

pub mod gradcheck;
pub mod ops;
pub mod optim;
pub mod params;

pub use params::{ParamId, ParamSet, TensorRecord};
