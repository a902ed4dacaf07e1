//! Forward and backward passes for the layers the network templates use.
//!
//! Layers hold parameters and gradient accumulators but no activation
//! cache: backward takes the forward input explicitly, and the model keeps
//! whatever it needs on its own tape.

mod activation;
mod batchnorm;
mod conv;
mod linear;
mod loss;
mod param;
mod pool;

pub use activation::{relu, relu_backward};
pub use batchnorm::{BatchNorm2d, BnCache, BN_EPS, BN_MOMENTUM};
pub use conv::Conv2d;
pub use linear::Linear;
pub use loss::softmax_cross_entropy;
pub use param::Param;
pub use pool::{global_avg_pool, global_avg_pool_backward};

/// Train/eval switch for layers with mode-dependent behavior.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Train,
    Eval,
}
