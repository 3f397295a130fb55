//! Minimal dense numeric kernel with manual gradients.
//!
//! Everything downstream that trains (forecasters, autoencoder, graph
//! scorer) is built from these pieces: a row-major `f64` matrix, a dense
//! layer with exact analytic backward, elementwise activations, mean-reduced
//! losses, Adam, and a central-difference gradient checker that the tests
//! lean on heavily. There is deliberately no autodiff graph — the model zoo
//! is small and fixed, and per-layer gradients keep the math auditable.

pub mod adam;
pub mod checkpoint;
pub mod dense;
pub mod gradcheck;
pub mod loss;
pub mod tensor;

pub use adam::{adam_step, Adam, AdamState};
pub use checkpoint::Checkpoint;
pub use dense::{Activation, DenseLayer};
pub use gradcheck::grad_check;
pub use loss::{bce_with_logits, bce_with_logits_weighted, mse_loss};
pub use tensor::Tensor2;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NumericError {
    #[error("shape mismatch in {op}: expected {expected}, got {got}")]
    ShapeMismatch {
        op: &'static str,
        expected: String,
        got: String,
    },
}
