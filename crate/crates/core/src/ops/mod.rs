//! Layer primitives: forward kernels and the backward rules the tape dispatches to.

pub mod batchnorm;
pub mod conv;
pub mod elementwise;
pub mod loss;

pub use batchnorm::{batchnorm, BatchNormState, BatchStats, BnMode, RunningStats, BN_EPSILON, BN_MOMENTUM};
pub use conv::{conv2d, same_padding, ConvParams};
pub use elementwise::{concat_channels, relu, residual_subtract, split_channels};
pub use loss::{mse_residual_loss, LossOutput};
