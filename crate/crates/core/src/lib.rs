//! ATLAS: additive exponential spline function approximation with exact
//! sparse gradients and output-preserving capacity expansion.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bspline;
pub mod error;
pub mod harness;
pub mod model;
pub mod model_file;
pub mod off_target;
pub mod optim;
pub mod rng;
pub mod sparse;
pub mod targets;
pub mod verify;

pub use error::{AtlasError, Result};
pub use model::{AtlasModel, Variant};
pub use sparse::SparseGradient;
