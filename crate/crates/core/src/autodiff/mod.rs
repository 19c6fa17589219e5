//! Dense reverse-mode automatic differentiation.
//!
//! A [`Tape`] records the handful of matrix primitives the network uses
//! (matmul, sigmoid, column concatenation, column average pooling, add,
//! scale, softmax cross-entropy). [`Tape::backward`] sweeps it in reverse and
//! returns gradients keyed by parameter name, matching the layout of a
//! [`ParamSet`]. [`finite_difference_gradient`] is the numerical oracle.

mod finite_diff;
mod matrix;
mod params;
mod tape;

pub use finite_diff::{finite_difference_gradient, relative_error, worst_relative_errors};
pub use matrix::Matrix;
pub use params::ParamSet;
pub use tape::{sigmoid, Tape, Var};
