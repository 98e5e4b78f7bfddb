//! Dense `f64` arrays with tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation applied to its [`Var`] handles. Calling
//! [`Graph::backward`] on a scalar node propagates gradients back to the
//! parameter leaves, where they accumulate until [`Graph::zero_grad`].
//!
//! ```
//! use ndiff::{Array, Graph};
//!
//! let mut g = Graph::new();
//! let x = g.param(Array::row_vector(vec![1.0, 2.0, 3.0]));
//! let y = g.tanh(x);
//! let loss = g.sum(y);
//! g.backward(loss).unwrap();
//! let grad = g.grad(x).unwrap();
//! assert!((grad.data()[0] - (1.0 - 1f64.tanh().powi(2))).abs() < 1e-12);
//! ```
//!
//! Everything is 64-bit and single-threaded per graph. Separate graphs share
//! nothing mutable, so independent training runs can proceed in parallel.

mod array;
mod checkpoint;
mod error;
mod gradcheck;
mod graph;
mod kernels;
mod optim;
mod params;
mod rng;

pub use array::Array;
pub use checkpoint::Checkpoint;
pub use error::{NdError, Result};
pub use gradcheck::{grad_check, grad_check_params};
pub use graph::{Graph, Var};
pub use kernels::DIRECT_MAX_ROWS;
pub use optim::{clip_global_norm, Adam, AdamConfig};
pub use params::{GradBuffer, ParamStore};
pub use rng::SeededRng;
