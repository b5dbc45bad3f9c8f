//! Cylinder-wake flow simulation and ConvLSTM flow-field prediction.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`], [`rng`], [`vten`]: dense arrays, seeded randomness, binary tensor files.
//! - [`cfd`]: a projection-method Navier-Stokes solver with immersed cylinders.
//! - [`dataset`]: windowing, normalization and seeded splits of snapshot streams.
//! - [`nn`]: convolution, dense, squeeze-and-excitation and residual layers with
//!   analytic backward passes.
//! - [`convlstm`]: the peephole ConvLSTM cell with backpropagation through time.
//! - [`model`]: the standard and improved predictors, training, metrics,
//!   rollouts and the side-by-side comparison.
//! - [`render`]: PGM/PPM field images.

pub mod cfd;
pub mod convlstm;
pub mod dataset;
pub mod error;
pub mod kv;
pub mod linalg;
pub mod model;
pub mod nn;
pub mod render;
pub mod rng;
pub mod tensor;
pub mod vten;

pub use error::{Error, Result};
pub use rng::Rng;
pub use tensor::{DType, Real, Tensor};
