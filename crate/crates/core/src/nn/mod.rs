//! Differentiable layers with hand-written backward passes.
//!
//! All convolutions are stride-1 cross-correlations (no kernel flip) with
//! zero "same" padding, so spatial and temporal extents are preserved.
//! Backward passes return exact gradients of a scalar loss given the
//! upstream gradient `grad_out`.

mod conv2d;
mod conv3d;
mod dense;
mod residual;
mod se;

pub use conv2d::Conv2d;
pub use conv3d::Conv3d;
pub use dense::Dense;
pub use residual::{ResidualBlock3d, ResidualCache};
pub use se::{SeBlock, SeCache};

use crate::error::{Error, Result};
use crate::rng::{random_uniform, Rng};
use crate::tensor::{relu, Real, Tensor};

/// Uniform Glorot initialisation in `+-sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<T: Real>(rng: &mut Rng, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor<T> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    random_uniform(rng, shape, -limit, limit).expect("positive limit")
}

/// Named parameter access shared by every layer.
pub trait Parameters<T: Real> {
    fn params(&self) -> Vec<(String, &Tensor<T>)>;

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>>;

    fn count_params(&self) -> usize {
        self.params().iter().map(|(_, t)| t.len()).sum()
    }
}

pub(crate) fn prefixed<'a, T: Real>(prefix: &str, inner: Vec<(String, &'a Tensor<T>)>) -> Vec<(String, &'a Tensor<T>)> {
    inner
        .into_iter()
        .map(|(name, t)| (format!("{prefix}.{name}"), t))
        .collect()
}

pub fn relu_backward<T: Real>(pre: &Tensor<T>, grad: &Tensor<T>) -> Result<Tensor<T>> {
    pre.zip_map(grad, "relu_backward", |x, g| if x > T::zero() { g } else { T::zero() })
}

pub fn relu_inplace<T: Real>(x: &mut Tensor<T>) {
    x.data_mut().iter_mut().for_each(|v| *v = relu(*v));
}

pub(crate) fn expect_rank<T: Real>(x: &Tensor<T>, rank: usize, what: &str) -> Result<()> {
    if x.rank() != rank {
        return Err(Error::invalid(format!(
            "{what} expects a rank-{rank} tensor, got shape {:?}",
            x.shape()
        )));
    }
    Ok(())
}

pub fn check_kernel(k: usize, what: &str) -> Result<()> {
    if k == 0 || k % 2 == 0 {
        return Err(Error::invalid(format!(
            "{what} kernel size must be odd for same padding, got {k}"
        )));
    }
    Ok(())
}
