//! DudeNet: a dual-branch denoising CNN with its own autodiff engine, data
//! pipeline, training loop and evaluation harness.

pub mod autodiff;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod graph;
pub mod ops;
pub mod optim;
pub mod rng;
pub mod store;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Real, Shape, Tensor};
