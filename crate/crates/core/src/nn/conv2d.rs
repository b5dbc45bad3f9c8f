use super::{check_kernel, expect_rank, glorot_uniform, Parameters};
use crate::error::{Error, Result};
use crate::linalg::{col2im, gemm, im2col, MatRef};
use crate::rng::Rng;
use crate::tensor::{Real, Tensor};

/// 2D convolution over `(channels, height, width)` inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T: Real = f64> {
    /// `(out_channels, in_channels, k, k)`
    pub weight: Tensor<T>,
    /// `(out_channels)`
    pub bias: Tensor<T>,
}

impl<T: Real> Conv2d<T> {
    pub fn new(weight: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        expect_rank(&weight, 4, "conv2d weight")?;
        let s = weight.shape();
        if s[2] != s[3] {
            return Err(Error::invalid(format!("conv2d kernel must be square, got {s:?}")));
        }
        check_kernel(s[2], "conv2d")?;
        if bias.shape() != [s[0]] {
            return Err(Error::ShapeMismatch {
                op: "conv2d bias",
                left: bias.shape().to_vec(),
                right: vec![s[0]],
            });
        }
        Ok(Conv2d { weight, bias })
    }

    pub fn init(rng: &mut Rng, in_channels: usize, out_channels: usize, k: usize) -> Result<Self> {
        check_kernel(k, "conv2d")?;
        if in_channels == 0 || out_channels == 0 {
            return Err(Error::invalid("conv2d channel counts must be positive"));
        }
        let weight = glorot_uniform(rng, &[out_channels, in_channels, k, k], in_channels * k * k, out_channels * k * k);
        Ok(Conv2d {
            weight,
            bias: Tensor::zeros(&[out_channels]),
        })
    }

    pub fn zeros_like(&self) -> Self {
        Conv2d {
            weight: Tensor::zeros_like(&self.weight),
            bias: Tensor::zeros_like(&self.bias),
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[2]
    }

    fn patch_len(&self) -> usize {
        self.in_channels() * self.kernel() * self.kernel()
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<(usize, usize)> {
        expect_rank(x, 3, "conv2d")?;
        if x.shape()[0] != self.in_channels() {
            return Err(Error::invalid(format!(
                "conv2d expects {} input channels, got {}",
                self.in_channels(),
                x.shape()[0]
            )));
        }
        Ok((x.shape()[1], x.shape()[2]))
    }

    fn patches(&self, x: &Tensor<T>, h: usize, w: usize) -> Vec<T> {
        let mut cols = vec![T::zero(); self.patch_len() * h * w];
        im2col(x.data(), self.in_channels(), h, w, self.kernel(), &mut cols);
        cols
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (h, w) = self.check_input(x)?;
        let plane = h * w;
        let cols = self.patches(x, h, w);
        let mut out = Tensor::zeros(&[self.out_channels(), h, w]);
        for (o, &b) in self.bias.data().iter().enumerate() {
            out.slab_mut(o).fill(b);
        }
        gemm(
            T::one(),
            MatRef::new(self.weight.data(), self.out_channels(), self.patch_len()),
            MatRef::new(&cols, self.patch_len(), plane),
            T::one(),
            out.data_mut(),
        );
        Ok(out)
    }

    /// Returns `(grad_x, parameter gradients)`.
    pub fn backward(&self, x: &Tensor<T>, grad_out: &Tensor<T>) -> Result<(Tensor<T>, Conv2d<T>)> {
        let mut grads = self.zeros_like();
        let gx = self.backward_accumulate(x, grad_out, &mut grads)?;
        Ok((gx, grads))
    }

    /// Adds parameter gradients into `grads` and returns `grad_x`.
    pub fn backward_accumulate(&self, x: &Tensor<T>, grad_out: &Tensor<T>, grads: &mut Conv2d<T>) -> Result<Tensor<T>> {
        let (h, w) = self.check_input(x)?;
        let expect = [self.out_channels(), h, w];
        if grad_out.shape() != expect {
            return Err(Error::ShapeMismatch {
                op: "conv2d backward",
                left: grad_out.shape().to_vec(),
                right: expect.to_vec(),
            });
        }
        let plane = h * w;
        let k_len = self.patch_len();
        let cols = self.patches(x, h, w);
        let g = MatRef::new(grad_out.data(), self.out_channels(), plane);
        gemm(T::one(), g, MatRef::new(&cols, k_len, plane).t(), T::one(), grads.weight.data_mut());
        for (o, b) in grads.bias.data_mut().iter_mut().enumerate() {
            *b += grad_out.slab(o).iter().fold(T::zero(), |acc, &v| acc + v);
        }
        let mut gcols = vec![T::zero(); k_len * plane];
        gemm(
            T::one(),
            MatRef::new(self.weight.data(), self.out_channels(), k_len).t(),
            g,
            T::zero(),
            &mut gcols,
        );
        let mut gx = Tensor::zeros(x.shape());
        col2im(&gcols, self.in_channels(), h, w, self.kernel(), gx.data_mut());
        Ok(gx)
    }
}

impl<T: Real> Parameters<T> for Conv2d<T> {
    fn params(&self) -> Vec<(String, &Tensor<T>)> {
        vec![("weight".into(), &self.weight), ("bias".into(), &self.bias)]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

#[cfg(test)]
mod tests {
    use super::super::gradcheck::*;
    use super::*;

    /// Direct quadruple loop, independent of the patch-matrix path.
    fn naive(layer: &Conv2d<f64>, x: &Tensor<f64>) -> Tensor<f64> {
        let (ci, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let (co, k) = (layer.out_channels(), layer.kernel());
        let p = (k / 2) as isize;
        Tensor::from_fn(&[co, h, w], |flat| {
            let (o, y, xx) = (flat / (h * w), (flat / w) % h, flat % w);
            let mut acc = layer.bias.data()[o];
            for c in 0..ci {
                for ky in 0..k {
                    for kx in 0..k {
                        let sy = y as isize + ky as isize - p;
                        let sx = xx as isize + kx as isize - p;
                        if sy >= 0 && sy < h as isize && sx >= 0 && sx < w as isize {
                            acc += layer.weight.get(&[o, c, ky, kx]).unwrap()
                                * x.get(&[c, sy as usize, sx as usize]).unwrap();
                        }
                    }
                }
            }
            acc
        })
    }

    #[test]
    fn unit_kernel_is_identity() {
        let layer = Conv2d::<f64>::new(Tensor::ones(&[1, 1, 1, 1]), Tensor::zeros(&[1])).unwrap();
        let x = random(&mut Rng::new(1), &[1, 4, 5]);
        assert_eq!(layer.forward(&x).unwrap(), x);
    }

    #[test]
    fn ones_kernel_interior_sum_is_nine() {
        let layer = Conv2d::<f64>::new(Tensor::ones(&[1, 1, 3, 3]), Tensor::zeros(&[1])).unwrap();
        let out = layer.forward(&Tensor::ones(&[1, 5, 5])).unwrap();
        assert_eq!(out.get(&[0, 2, 2]).unwrap(), 9.0);
        assert_eq!(out.get(&[0, 0, 0]).unwrap(), 4.0);
        assert_eq!(out.get(&[0, 0, 2]).unwrap(), 6.0);
    }

    #[test]
    fn matches_direct_loop_and_preserves_shape() {
        let mut rng = Rng::new(3);
        for k in [1, 3, 5] {
            let mut layer = Conv2d::<f64>::init(&mut rng, 2, 3, k).unwrap();
            layer.bias = random(&mut rng, &[3]);
            let x = random(&mut rng, &[2, 4, 6]);
            let out = layer.forward(&x).unwrap();
            assert_eq!(out.shape(), &[3, 4, 6]);
            assert!(out.max_abs_diff(&naive(&layer, &x)).unwrap() < 1e-12);
        }
    }

    #[test]
    fn channel_mismatch_is_error() {
        let layer = Conv2d::<f64>::init(&mut Rng::new(0), 2, 3, 3).unwrap();
        assert!(layer.forward(&Tensor::zeros(&[3, 4, 4])).is_err());
        assert!(Conv2d::<f64>::init(&mut Rng::new(0), 2, 3, 2).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..5 {
            let mut rng = Rng::new(100 + seed);
            let mut layer = Conv2d::<f64>::init(&mut rng, 2, 3, 3).unwrap();
            layer.bias = random(&mut rng, &[3]);
            let mut x = random(&mut rng, &[2, 4, 4]);
            let pattern = random(&mut rng, &[3, 4, 4]);
            let (gx, grads) = layer.backward(&x, &pattern).unwrap();

            let num_x: Vec<f64> = (0..x.len())
                .map(|i| numeric(&mut x, i, |x| dot(&layer.forward(x).unwrap(), &pattern)))
                .collect();
            assert!(max_rel(&gx, &num_x) < 1e-6);

            let mut w = layer.weight.clone();
            let num_w: Vec<f64> = (0..w.len())
                .map(|i| {
                    numeric(&mut w, i, |w| {
                        let l = Conv2d::new(w.clone(), layer.bias.clone()).unwrap();
                        dot(&l.forward(&x).unwrap(), &pattern)
                    })
                })
                .collect();
            assert!(max_rel(&grads.weight, &num_w) < 1e-6);

            let mut b = layer.bias.clone();
            let num_b: Vec<f64> = (0..b.len())
                .map(|i| {
                    numeric(&mut b, i, |b| {
                        let l = Conv2d::new(layer.weight.clone(), b.clone()).unwrap();
                        dot(&l.forward(&x).unwrap(), &pattern)
                    })
                })
                .collect();
            assert!(max_rel(&grads.bias, &num_b) < 1e-6);
        }
    }
}
