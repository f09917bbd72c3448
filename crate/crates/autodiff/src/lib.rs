//! Dense f64 tensors with reverse-mode automatic differentiation.
//!
//! Operations build a graph of reference-counted nodes as they execute.
//! [`Tensor::backward`] accumulates gradients into leaves; [`grad`] returns
//! gradients as tensors and, with `create_graph`, records them so that a
//! loss built from a gradient (a gradient penalty, say) can itself be
//! differentiated.
//!
//! ```
//! use autodiff::Tensor;
//!
//! let w = Tensor::param(&[2], vec![3.0, 4.0]).unwrap();
//! let loss = w.square().sum();
//! loss.backward().unwrap();
//! assert_eq!(w.grad().unwrap(), vec![6.0, 8.0]);
//! ```

mod engine;
mod error;
pub mod functional;
mod ops;
mod tensor;

pub use engine::{grad, grad_per_row};
pub use error::{AutodiffError, Result};
pub use tensor::{is_grad_enabled, no_grad, with_no_grad, GradModeGuard, Tensor};
