use super::{prefixed, Dense, Parameters};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{relu, sigmoid, Real, Tensor};

/// Squeeze-and-excitation channel attention.
///
/// Accepts `(C, H, W)` images or `(T, C, H, W)` sequences; the squeeze
/// averages every channel over all remaining axes.
#[derive(Debug, Clone, PartialEq)]
pub struct SeBlock<T: Real = f64> {
    /// `C -> C / r`, followed by ReLU.
    pub reduce: Dense<T>,
    /// `C / r -> C`, followed by a sigmoid.
    pub expand: Dense<T>,
}

/// Intermediates of one forward pass.
#[derive(Debug, Clone)]
pub struct SeCache<T: Real> {
    pub squeeze: Tensor<T>,
    pub hidden_pre: Tensor<T>,
    pub hidden: Tensor<T>,
    pub scale: Tensor<T>,
}

impl<T: Real> SeBlock<T> {
    pub fn init(rng: &mut Rng, channels: usize, ratio: usize) -> Result<Self> {
        if ratio == 0 || channels % ratio != 0 {
            return Err(Error::invalid(format!(
                "SE block needs channels divisible by the reduction ratio, got {channels} and {ratio}"
            )));
        }
        Ok(SeBlock {
            reduce: Dense::init(rng, channels, channels / ratio)?,
            expand: Dense::init(rng, channels / ratio, channels)?,
        })
    }

    pub fn new(reduce: Dense<T>, expand: Dense<T>) -> Result<Self> {
        if reduce.out_features() != expand.in_features() || reduce.in_features() != expand.out_features() {
            return Err(Error::invalid("SE dense layers do not chain back to the channel count"));
        }
        Ok(SeBlock { reduce, expand })
    }

    pub fn zeros_like(&self) -> Self {
        SeBlock {
            reduce: self.reduce.zeros_like(),
            expand: self.expand.zeros_like(),
        }
    }

    pub fn channels(&self) -> usize {
        self.reduce.in_features()
    }

    fn channel_layout(&self, x: &Tensor<T>) -> Result<(usize, usize)> {
        let (outer, c) = match x.shape() {
            [c, _, _] => (1, *c),
            [t, c, _, _] => (*t, *c),
            s => {
                return Err(Error::invalid(format!(
                    "SE block expects (C, H, W) or (T, C, H, W), got {s:?}"
                )))
            }
        };
        if c != self.channels() {
            return Err(Error::invalid(format!(
                "SE block built for {} channels, got {c}",
                self.channels()
            )));
        }
        Ok((outer, c))
    }

    /// Global average per channel.
    pub fn squeeze(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (outer, c) = self.channel_layout(x)?;
        let plane = x.len() / (outer * c);
        let mut z = Tensor::zeros(&[c]);
        for t in 0..outer {
            for ch in 0..c {
                let start = (t * c + ch) * plane;
                z.data_mut()[ch] += x.data()[start..start + plane]
                    .iter()
                    .fold(T::zero(), |a, &v| a + v);
            }
        }
        let n = T::of((outer * plane) as f64);
        z.data_mut().iter_mut().for_each(|v| *v /= n);
        Ok(z)
    }

    /// Channel weights `s = sigmoid(W2 relu(W1 z + b1) + b2)`, each in (0, 1).
    pub fn excitation(&self, squeeze: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.excite(squeeze)?.scale)
    }

    fn excite(&self, squeeze: &Tensor<T>) -> Result<SeCache<T>> {
        let hidden_pre = self.reduce.forward(squeeze)?;
        let hidden = hidden_pre.map(relu);
        let scale = self.expand.forward(&hidden)?.map(sigmoid);
        Ok(SeCache {
            squeeze: squeeze.clone(),
            hidden_pre,
            hidden,
            scale,
        })
    }

    /// Multiply every element of channel `c` by `s[c]`.
    pub fn scale(&self, x: &Tensor<T>, s: &Tensor<T>) -> Result<Tensor<T>> {
        let (outer, c) = self.channel_layout(x)?;
        if s.shape() != [c] {
            return Err(Error::ShapeMismatch {
                op: "SE scale",
                left: s.shape().to_vec(),
                right: vec![c],
            });
        }
        let plane = x.len() / (outer * c);
        let mut out = x.clone();
        for (i, chunk) in out.data_mut().chunks_mut(plane).enumerate() {
            let f = s.data()[i % c];
            chunk.iter_mut().for_each(|v| *v *= f);
        }
        Ok(out)
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward_train(x)?.0)
    }

    pub fn forward_train(&self, x: &Tensor<T>) -> Result<(Tensor<T>, SeCache<T>)> {
        let cache = self.excite(&self.squeeze(x)?)?;
        let out = self.scale(x, &cache.scale)?;
        Ok((out, cache))
    }

    pub fn backward(&self, x: &Tensor<T>, grad_out: &Tensor<T>) -> Result<(Tensor<T>, SeBlock<T>)> {
        let (_, cache) = self.forward_train(x)?;
        let mut grads = self.zeros_like();
        let gx = self.backward_cached(x, &cache, grad_out, &mut grads)?;
        Ok((gx, grads))
    }

    pub fn backward_cached(
        &self,
        x: &Tensor<T>,
        cache: &SeCache<T>,
        grad_out: &Tensor<T>,
        grads: &mut SeBlock<T>,
    ) -> Result<Tensor<T>> {
        x.expect_same_shape(grad_out, "SE backward")?;
        let (outer, c) = self.channel_layout(x)?;
        let plane = x.len() / (outer * c);

        let mut grad_scale = Tensor::zeros(&[c]);
        for (i, (xs, gs)) in x.data().chunks(plane).zip(grad_out.data().chunks(plane)).enumerate() {
            grad_scale.data_mut()[i % c] += xs.iter().zip(gs).fold(T::zero(), |a, (&v, &g)| a + v * g);
        }
        let grad_logit = grad_scale.zip_map(&cache.scale, "SE sigmoid", |g, s| g * s * (T::one() - s))?;
        let grad_hidden = self.expand.backward_accumulate(&cache.hidden, &grad_logit, &mut grads.expand)?;
        let grad_pre = super::relu_backward(&cache.hidden_pre, &grad_hidden)?;
        let grad_squeeze = self.reduce.backward_accumulate(&cache.squeeze, &grad_pre, &mut grads.reduce)?;

        let n = T::of((outer * plane) as f64);
        let mut gx = self.scale(grad_out, &cache.scale)?;
        for (i, chunk) in gx.data_mut().chunks_mut(plane).enumerate() {
            let add = grad_squeeze.data()[i % c] / n;
            chunk.iter_mut().for_each(|v| *v += add);
        }
        Ok(gx)
    }
}

impl<T: Real> Parameters<T> for SeBlock<T> {
    fn params(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = prefixed("reduce", self.reduce.params());
        out.extend(prefixed("expand", self.expand.params()));
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = self.reduce.params_mut();
        out.extend(self.expand.params_mut());
        out
    }
}
