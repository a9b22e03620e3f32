//! Dense tensor math with hand-written backward passes.
//!
//! Everything the explainers and the reasoner need lives here: affine maps,
//! softmax, an LSTM cell, the two cross-entropy losses, batch normalization,
//! inverted dropout, Adam, and a finite-difference gradient checker. There is
//! no tape; every layer exposes an explicit `*_backward` that the models call
//! in reverse order.

mod adam;
mod batchnorm;
mod dropout;
mod gradcheck;
mod lstm;
mod ops;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use batchnorm::{BatchNorm, BatchNormCache};
pub use dropout::{apply_dropout, dropout_mask};
pub use gradcheck::{grad_check, GradCheckReport};
pub use lstm::{
    lstm_cell_step, lstm_sequence_backward, lstm_sequence_forward, lstm_step_backward,
    lstm_step_forward, LstmParams, LstmStepCache,
};
pub use ops::{
    affine, affine_backward, log_softmax, matvec_add, matvec_transpose_acc, outer_acc, sigmoid,
    sigmoid_cross_entropy, softmax, softmax_cross_entropy,
};
pub use tensor::{Parameters, Precision, Tensor};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("{0}: empty input")]
    Empty(&'static str),
    #[error("target index {target} out of range for {classes} classes")]
    TargetOutOfRange { target: usize, classes: usize },
    #[error("dropout rate {0} outside [0, 1)")]
    InvalidRate(f64),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
}

pub(crate) fn shape_err(msg: impl Into<String>) -> KernelError {
    KernelError::Shape(msg.into())
}
