//! Convolutional networks with stochastic pooling.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`], [`conv`], [`relu`]: dense 4-D tensors and the convolution
//!   and rectification kernels.
//! * [`pooling`]: average, max, stochastic and probability-weighted pooling
//!   with switch recording and exact backward passes.
//! * [`net`]: declarative layer stacks, response normalization, the softmax
//!   classifier, forward/backward orchestration and Stochastic-N prediction.
//! * [`optim`]: SGD with momentum, weight decay and linear annealing.
//! * [`data`]: MNIST IDX and CIFAR binary loaders plus preprocessing.
//! * [`deconviz`]: top-down reconstructions through unpooling and
//!   transposed filters.
//! * [`experiment`]: configs, the training loop, checkpoints and the
//!   experiment commands behind the `stochpool` binary.

pub mod conv;
pub mod data;
pub mod deconviz;
pub mod error;
pub mod experiment;
pub mod net;
pub mod optim;
pub mod pooling;
pub mod relu;
pub mod rng;
pub mod tensor;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
pub use tensor::{Shape4, Tensor4};
