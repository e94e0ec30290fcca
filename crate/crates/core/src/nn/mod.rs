//! Layer kernels with hand-derived backward passes.
//!
//! Every kernel is a pure function of its inputs. Forward functions that need
//! state for the backward pass return it as an explicit cache value.

mod activation;
mod batchnorm;
mod conv;
mod dense;
mod dropout;
pub mod gradcheck;
mod loss;
mod pool;

pub use activation::{relu, relu_backward};
pub use batchnorm::{
    batchnorm2d_backward, batchnorm2d_eval, batchnorm2d_train, BatchNormCache, BatchNormGrads,
    BatchNormState, BN_EPS, BN_MOMENTUM,
};
pub use conv::{conv2d, conv2d_backward, Conv2dGrads, KERNEL};
pub use dense::{dense, dense_backward, DenseGrads};
pub use dropout::{dropout, dropout_backward, DropoutMask};
pub use gradcheck::{grad_check, relative_error};
pub use loss::softmax_cross_entropy;
pub use pool::{
    adaptive_avgpool2d, adaptive_avgpool2d_backward, adaptive_window, maxpool2d,
    maxpool2d_backward, MaxPoolCache,
};

/// Whether a forward pass is part of training (batch statistics, dropout)
/// or evaluation (running statistics, no randomness).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}
