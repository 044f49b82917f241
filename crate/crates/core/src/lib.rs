//! Self-referenced two-stage training on a small reverse-mode engine.
//!
//! The crate trains desk-scale classifiers three ways:
//!
//! * **vanilla**: one stage of cross-entropy under a step-decay learning rate;
//! * **knowledge distillation**: a student imitates a frozen teacher's softened
//!   class probabilities alongside the labels;
//! * **self-referenced**: the first half of the epoch budget trains the model
//!   normally under its own complete decay program, the half-trained model's
//!   softened predictions are extracted once, and the second half trains a
//!   freshly initialised model against labels plus those predictions.
//!
//! Training cost is accounted as forward FLOPs × epochs × training-set size.
//! Evaluation covers top-1 accuracy, CMC/mAP retrieval metrics, ensembles, and
//! a random-direction loss-landscape probe.

// `!(x > 0.0)` is how validation rejects NaN along with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod augment;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod kernels;
pub mod knowledge;
pub mod landscape;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod rng;
pub mod schedule;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use graph::{Graph, Var};
pub use tensor::{Real, Tensor};
