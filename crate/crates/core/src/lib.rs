//! Evolutionary synthesis of sparse convolutional networks.
//!
//! A trained ancestor network is encoded as a two-level synaptic probability
//! model (kernel clusters, then individual synapses within a cluster). Each
//! generation samples a sparser offspring from that model under an
//! environmental synapse budget, retrains it, and records architectural and
//! cluster efficiency relative to the ancestor.
//!
//! Module map:
//! - [`numerics`]: dense tensors and masked forward/backward/update kernels.
//! - [`model`]: network architecture, synapse masks, kernel clusters, checkpoints.
//! - [`training`]: mini-batch SGD and evaluation over a [`model::NetworkArch`].
//! - [`heredity`]: the cluster/synapse probability model built from a parent.
//! - [`synthesis`]: budget calibration, offspring sampling, the generation loop.
//! - [`data`]: MNIST IDX loading and deterministic batching.
//! - [`metrics`]: efficiency metrics and report files.
//! - [`harness`]: run configuration and the `evosynth` command line.

pub mod data;
pub mod error;
pub mod harness;
pub mod heredity;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod synthesis;
pub mod training;

pub use error::{Error, Result};
