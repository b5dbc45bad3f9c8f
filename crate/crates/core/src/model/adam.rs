use crate::error::{Error, Result};
use crate::nn::Parameters;
use crate::tensor::{Real, Tensor};

/// Adaptive-moment optimizer with bias-corrected first and second moments.
#[derive(Debug, Clone)]
pub struct Adam<T: Real> {
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    step: i32,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new<M: Parameters<T>>(model: &M, lr: f64, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        let zeros: Vec<Tensor<T>> = model.params().iter().map(|(_, t)| Tensor::zeros_like(t)).collect();
        Adam {
            lr,
            beta1,
            beta2,
            epsilon,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps(&self) -> i32 {
        self.step
    }

    /// One update `θ -= lr * m̂ / (sqrt(v̂) + ε)`.
    pub fn update<M: Parameters<T>>(&mut self, model: &mut M, grads: &M) -> Result<()> {
        let g = grads.params();
        let params = model.params_mut();
        if params.len() != g.len() || g.len() != self.m.len() {
            return Err(Error::invalid("optimizer state does not match the model"));
        }
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let (ob1, ob2) = (T::of(1.0 - self.beta1), T::of(1.0 - self.beta2));
        let step = T::of(self.lr / c1);
        let (inv_c2, eps) = (T::of(1.0 / c2), T::of(self.epsilon));
        for (((p, (_, g)), m), v) in params.into_iter().zip(g).zip(&mut self.m).zip(&mut self.v) {
            p.expect_same_shape(g, "adam")?;
            for (((p, &g), m), v) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *m = b1 * *m + ob1 * g;
                *v = b2 * *v + ob2 * g * g;
                *p -= step * *m / ((*v * inv_c2).sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Dense;

    #[test]
    fn first_step_moves_each_weight_by_lr() {
        let mut d: Dense<f64> = Dense::new(Tensor::zeros(&[2, 3]), Tensor::zeros(&[2])).unwrap();
        let mut g = d.zeros_like();
        g.weight.data_mut().copy_from_slice(&[1.0, -2.0, 0.5, 3.0, -1.0, 4.0]);
        g.bias.data_mut().copy_from_slice(&[1.0, -1.0]);
        let mut opt = Adam::new(&d, 0.01, 0.9, 0.999, 1e-12);
        opt.update(&mut d, &g).unwrap();
        for (&w, &gw) in d.weight.data().iter().zip(g.weight.data()) {
            assert!((w + 0.01 * gw.signum()).abs() < 1e-9);
        }
        assert_eq!(opt.steps(), 1);
    }
}
