//! Graph convolutional network with deep feature fusion for labeling the
//! nodes and edges of vascular graphs.

pub mod autodiff;
pub mod cli;
pub mod error;
pub mod evaluation;
pub mod graph;
pub mod io;
pub mod model;
pub mod training;

pub use error::{Error, Result};
