//! Class-incremental continual learning with negotiated Walsh-code
//! representations.
//!
//! A small from-scratch differentiable network is trained on a sequence of
//! disjoint class groups. Every class is tied to a row of a {0,1} Walsh
//! matrix (all distinct rows sit at the same Hamming distance), chosen as
//! the available row nearest to the model's own mean prediction for that
//! class. Training targets for a task are a blend of the model's pre-task
//! predictions and the assigned codes (the model "negotiates" with the new
//! labels instead of moving all the way to them), and the blend rate is
//! advanced between tasks so that every task ends up with an equal share of
//! the model's capacity. Inference picks the seen class whose code is
//! nearest to the network output.
//!
//! Modules:
//! - [`net`]: the layer vocabulary (conv2d / maxpool2d / flatten / dense /
//!   relu / softened sigmoid), seeded initialization, backprop, optimizers.
//! - [`walsh`]: Sylvester-ordered Walsh matrix and the assignment registry.
//! - [`negotiation`]: rate scheduling, capacity simulation, nearest-code
//!   assignment and negotiated target construction.
//! - [`metrics`]: minimum-distance classification and incremental-accuracy
//!   bookkeeping.
//! - [`data`]: IDX / CIFAR binary loaders, task splitting, synthetic data.
//! - [`harness`]: experiment configs, full runs, sweeps and report files.

pub mod data;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod negotiation;
pub mod net;
pub mod rng;
pub mod tensor;
pub mod walsh;

pub(crate) mod parallel;

pub use error::{Error, Result};
pub use tensor::Tensor;
