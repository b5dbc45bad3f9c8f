use super::{expect_rank, glorot_uniform, Parameters};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Real, Tensor};

/// Fully connected layer `y = W x + b` on vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T: Real = f64> {
    /// `(out_features, in_features)`
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Real> Dense<T> {
    pub fn new(weight: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        expect_rank(&weight, 2, "dense weight")?;
        if bias.shape() != [weight.shape()[0]] {
            return Err(Error::ShapeMismatch {
                op: "dense bias",
                left: bias.shape().to_vec(),
                right: vec![weight.shape()[0]],
            });
        }
        Ok(Dense { weight, bias })
    }

    pub fn init(rng: &mut Rng, in_features: usize, out_features: usize) -> Result<Self> {
        if in_features == 0 || out_features == 0 {
            return Err(Error::invalid("dense layer sizes must be positive"));
        }
        Ok(Dense {
            weight: glorot_uniform(rng, &[out_features, in_features], in_features, out_features),
            bias: Tensor::zeros(&[out_features]),
        })
    }

    pub fn zeros_like(&self) -> Self {
        Dense {
            weight: Tensor::zeros_like(&self.weight),
            bias: Tensor::zeros_like(&self.bias),
        }
    }

    pub fn in_features(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_features(&self) -> usize {
        self.weight.shape()[0]
    }

    fn check(&self, x: &Tensor<T>) -> Result<()> {
        if x.shape() != [self.in_features()] {
            return Err(Error::ShapeMismatch {
                op: "dense",
                left: x.shape().to_vec(),
                right: vec![self.in_features()],
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check(x)?;
        let n = self.in_features();
        let w = self.weight.data();
        Ok(Tensor::from_fn(&[self.out_features()], |o| {
            w[o * n..(o + 1) * n]
                .iter()
                .zip(x.data())
                .fold(self.bias.data()[o], |acc, (&a, &b)| acc + a * b)
        }))
    }

    pub fn backward(&self, x: &Tensor<T>, grad_out: &Tensor<T>) -> Result<(Tensor<T>, Dense<T>)> {
        let mut grads = self.zeros_like();
        let gx = self.backward_accumulate(x, grad_out, &mut grads)?;
        Ok((gx, grads))
    }

    pub fn backward_accumulate(&self, x: &Tensor<T>, grad_out: &Tensor<T>, grads: &mut Dense<T>) -> Result<Tensor<T>> {
        self.check(x)?;
        if grad_out.shape() != [self.out_features()] {
            return Err(Error::ShapeMismatch {
                op: "dense backward",
                left: grad_out.shape().to_vec(),
                right: vec![self.out_features()],
            });
        }
        let n = self.in_features();
        let mut gx = Tensor::zeros(&[n]);
        for (o, &g) in grad_out.data().iter().enumerate() {
            grads.bias.data_mut()[o] += g;
            let row = &self.weight.data()[o * n..(o + 1) * n];
            let grow = &mut grads.weight.data_mut()[o * n..(o + 1) * n];
            for i in 0..n {
                grow[i] += g * x.data()[i];
                gx.data_mut()[i] += g * row[i];
            }
        }
        Ok(gx)
    }
}

impl<T: Real> Parameters<T> for Dense<T> {
    fn params(&self) -> Vec<(String, &Tensor<T>)> {
        vec![("weight".into(), &self.weight), ("bias".into(), &self.bias)]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}
