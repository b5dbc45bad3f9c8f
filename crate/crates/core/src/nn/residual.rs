use super::{prefixed, relu_backward, Conv3d, Parameters};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{relu, Real, Tensor};

/// `relu(F(x) + x)` with `F = conv3d -> relu -> conv3d`, channel preserving.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualBlock3d<T: Real = f64> {
    pub conv1: Conv3d<T>,
    pub conv2: Conv3d<T>,
}

#[derive(Debug, Clone)]
pub struct ResidualCache<T: Real> {
    pub inner_pre: Tensor<T>,
    pub inner: Tensor<T>,
    /// Pre-activation of the output ReLU.
    pub sum: Tensor<T>,
}

impl<T: Real> ResidualBlock3d<T> {
    pub fn new(conv1: Conv3d<T>, conv2: Conv3d<T>) -> Result<Self> {
        let c = conv1.in_channels();
        if conv1.out_channels() != c || conv2.in_channels() != c || conv2.out_channels() != c {
            return Err(Error::invalid(format!(
                "residual branch must preserve channels: {}->{} then {}->{}",
                conv1.in_channels(),
                conv1.out_channels(),
                conv2.in_channels(),
                conv2.out_channels()
            )));
        }
        Ok(ResidualBlock3d { conv1, conv2 })
    }

    pub fn init(rng: &mut Rng, channels: usize, kt: usize, k: usize) -> Result<Self> {
        let conv1 = Conv3d::init(rng, channels, channels, kt, k)?;
        let conv2 = Conv3d::init(rng, channels, channels, kt, k)?;
        Self::new(conv1, conv2)
    }

    pub fn zeros_like(&self) -> Self {
        ResidualBlock3d {
            conv1: self.conv1.zeros_like(),
            conv2: self.conv2.zeros_like(),
        }
    }

    pub fn channels(&self) -> usize {
        self.conv1.in_channels()
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward_train(x)?.0)
    }

    pub fn forward_train(&self, x: &Tensor<T>) -> Result<(Tensor<T>, ResidualCache<T>)> {
        let inner_pre = self.conv1.forward(x)?;
        let inner = inner_pre.map(relu);
        let branch = self.conv2.forward(&inner)?;
        if branch.shape() != x.shape() {
            return Err(Error::ShapeMismatch {
                op: "residual skip",
                left: branch.shape().to_vec(),
                right: x.shape().to_vec(),
            });
        }
        let sum = branch.add(x)?;
        let out = sum.map(relu);
        Ok((
            out,
            ResidualCache {
                inner_pre,
                inner,
                sum,
            },
        ))
    }

    pub fn backward(&self, x: &Tensor<T>, grad_out: &Tensor<T>) -> Result<(Tensor<T>, ResidualBlock3d<T>)> {
        let (_, cache) = self.forward_train(x)?;
        let mut grads = self.zeros_like();
        let gx = self.backward_cached(x, &cache, grad_out, &mut grads)?;
        Ok((gx, grads))
    }

    pub fn backward_cached(
        &self,
        x: &Tensor<T>,
        cache: &ResidualCache<T>,
        grad_out: &Tensor<T>,
        grads: &mut ResidualBlock3d<T>,
    ) -> Result<Tensor<T>> {
        let grad_sum = relu_backward(&cache.sum, grad_out)?;
        let grad_inner = self
            .conv2
            .backward_accumulate(&cache.inner, &grad_sum, &mut grads.conv2, true)?
            .expect("input gradient");
        let grad_pre = relu_backward(&cache.inner_pre, &grad_inner)?;
        let mut gx = self
            .conv1
            .backward_accumulate(x, &grad_pre, &mut grads.conv1, true)?
            .expect("input gradient");
        // Skip path contributes the identity.
        gx.add_assign(&grad_sum)?;
        Ok(gx)
    }
}

impl<T: Real> Parameters<T> for ResidualBlock3d<T> {
    fn params(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = prefixed("conv1", self.conv1.params());
        out.extend(prefixed("conv2", self.conv2.params()));
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = self.conv1.params_mut();
        out.extend(self.conv2.params_mut());
        out
    }
}
