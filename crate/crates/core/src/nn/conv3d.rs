use super::{check_kernel, expect_rank, glorot_uniform, Parameters};
use crate::error::{Error, Result};
use crate::linalg::{col2im, gemm, im2col, MatRef};
use crate::rng::Rng;
use crate::tensor::{Real, Tensor};

/// 3D convolution over `(time, channels, height, width)` inputs.
///
/// The time axis leads so each frame is a contiguous `(C, H, W)` image; the
/// kernel is applied as `k_t` spatial convolutions of neighbouring frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv3d<T: Real = f64> {
    /// `(out_channels, in_channels, k_t, k, k)`
    pub weight: Tensor<T>,
    /// `(out_channels)`
    pub bias: Tensor<T>,
}

impl<T: Real> Conv3d<T> {
    pub fn new(weight: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        expect_rank(&weight, 5, "conv3d weight")?;
        let s = weight.shape();
        if s[3] != s[4] {
            return Err(Error::invalid(format!("conv3d spatial kernel must be square, got {s:?}")));
        }
        check_kernel(s[2], "conv3d temporal")?;
        check_kernel(s[3], "conv3d")?;
        if bias.shape() != [s[0]] {
            return Err(Error::ShapeMismatch {
                op: "conv3d bias",
                left: bias.shape().to_vec(),
                right: vec![s[0]],
            });
        }
        Ok(Conv3d { weight, bias })
    }

    pub fn init(rng: &mut Rng, in_channels: usize, out_channels: usize, kt: usize, k: usize) -> Result<Self> {
        check_kernel(kt, "conv3d temporal")?;
        check_kernel(k, "conv3d")?;
        if in_channels == 0 || out_channels == 0 {
            return Err(Error::invalid("conv3d channel counts must be positive"));
        }
        let taps = kt * k * k;
        let weight = glorot_uniform(rng, &[out_channels, in_channels, kt, k, k], in_channels * taps, out_channels * taps);
        Ok(Conv3d {
            weight,
            bias: Tensor::zeros(&[out_channels]),
        })
    }

    pub fn zeros_like(&self) -> Self {
        Conv3d {
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

    pub fn temporal_kernel(&self) -> usize {
        self.weight.shape()[2]
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[3]
    }

    fn patch_len(&self) -> usize {
        self.in_channels() * self.kernel() * self.kernel()
    }

    /// Contiguous `(out, in * k * k)` matrix of temporal tap `d`.
    fn tap_matrix(&self, d: usize) -> Vec<T> {
        let (co, ci, kt) = (self.out_channels(), self.in_channels(), self.temporal_kernel());
        let kk = self.kernel() * self.kernel();
        let w = self.weight.data();
        let mut m = Vec::with_capacity(co * ci * kk);
        for o in 0..co {
            for c in 0..ci {
                let start = ((o * ci + c) * kt + d) * kk;
                m.extend_from_slice(&w[start..start + kk]);
            }
        }
        m
    }

    fn scatter_tap(&self, d: usize, m: &[T], into: &mut Tensor<T>) {
        let (co, ci, kt) = (self.out_channels(), self.in_channels(), self.temporal_kernel());
        let kk = self.kernel() * self.kernel();
        let w = into.data_mut();
        for o in 0..co {
            for c in 0..ci {
                let start = ((o * ci + c) * kt + d) * kk;
                let src = &m[(o * ci + c) * kk..(o * ci + c + 1) * kk];
                w[start..start + kk].iter_mut().zip(src).for_each(|(a, &b)| *a += b);
            }
        }
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<(usize, usize, usize)> {
        expect_rank(x, 4, "conv3d")?;
        let s = x.shape();
        if s[1] != self.in_channels() {
            return Err(Error::invalid(format!(
                "conv3d expects {} input channels, got {}",
                self.in_channels(),
                s[1]
            )));
        }
        Ok((s[0], s[2], s[3]))
    }

    fn frame_patches(&self, x: &Tensor<T>, frames: usize, h: usize, w: usize) -> Vec<Vec<T>> {
        (0..frames)
            .map(|t| {
                let mut cols = vec![T::zero(); self.patch_len() * h * w];
                im2col(x.slab(t), self.in_channels(), h, w, self.kernel(), &mut cols);
                cols
            })
            .collect()
    }

    /// Input frame feeding output frame `t` through tap `d`, if inside the sequence.
    fn source_frame(&self, t: usize, d: usize, frames: usize) -> Option<usize> {
        let s = t as isize + d as isize - (self.temporal_kernel() / 2) as isize;
        (s >= 0 && (s as usize) < frames).then_some(s as usize)
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (frames, h, w) = self.check_input(x)?;
        let plane = h * w;
        let co = self.out_channels();
        let k_len = self.patch_len();
        let cols = self.frame_patches(x, frames, h, w);
        let taps: Vec<Vec<T>> = (0..self.temporal_kernel()).map(|d| self.tap_matrix(d)).collect();
        let mut out = Tensor::zeros(&[frames, co, h, w]);
        for t in 0..frames {
            let frame = out.slab_mut(t);
            for (o, &b) in self.bias.data().iter().enumerate() {
                frame[o * plane..(o + 1) * plane].fill(b);
            }
            for (d, tap) in taps.iter().enumerate() {
                if let Some(s) = self.source_frame(t, d, frames) {
                    gemm(
                        T::one(),
                        MatRef::new(tap, co, k_len),
                        MatRef::new(&cols[s], k_len, plane),
                        T::one(),
                        frame,
                    );
                }
            }
        }
        Ok(out)
    }

    pub fn backward(&self, x: &Tensor<T>, grad_out: &Tensor<T>) -> Result<(Tensor<T>, Conv3d<T>)> {
        let mut grads = self.zeros_like();
        let gx = self.backward_accumulate(x, grad_out, &mut grads, true)?;
        Ok((gx.expect("input gradient requested"), grads))
    }

    /// Adds parameter gradients into `grads`; returns `grad_x` when asked for.
    pub fn backward_accumulate(
        &self,
        x: &Tensor<T>,
        grad_out: &Tensor<T>,
        grads: &mut Conv3d<T>,
        want_input_grad: bool,
    ) -> Result<Option<Tensor<T>>> {
        let (frames, h, w) = self.check_input(x)?;
        let co = self.out_channels();
        let expect = [frames, co, h, w];
        if grad_out.shape() != expect {
            return Err(Error::ShapeMismatch {
                op: "conv3d backward",
                left: grad_out.shape().to_vec(),
                right: expect.to_vec(),
            });
        }
        let plane = h * w;
        let k_len = self.patch_len();
        let cols = self.frame_patches(x, frames, h, w);

        for (o, b) in grads.bias.data_mut().iter_mut().enumerate() {
            for t in 0..frames {
                let g = &grad_out.slab(t)[o * plane..(o + 1) * plane];
                *b += g.iter().fold(T::zero(), |acc, &v| acc + v);
            }
        }

        let mut gcols: Vec<Vec<T>> = if want_input_grad {
            vec![vec![T::zero(); k_len * plane]; frames]
        } else {
            Vec::new()
        };
        for d in 0..self.temporal_kernel() {
            let tap = self.tap_matrix(d);
            let mut gtap = vec![T::zero(); co * k_len];
            for t in 0..frames {
                let Some(s) = self.source_frame(t, d, frames) else {
                    continue;
                };
                let g = MatRef::new(grad_out.slab(t), co, plane);
                gemm(T::one(), g, MatRef::new(&cols[s], k_len, plane).t(), T::one(), &mut gtap);
                if want_input_grad {
                    gemm(T::one(), MatRef::new(&tap, co, k_len).t(), g, T::one(), &mut gcols[s]);
                }
            }
            self.scatter_tap(d, &gtap, &mut grads.weight);
        }

        if !want_input_grad {
            return Ok(None);
        }
        let mut gx = Tensor::zeros(x.shape());
        for (t, gc) in gcols.iter().enumerate() {
            col2im(gc, self.in_channels(), h, w, self.kernel(), gx.slab_mut(t));
        }
        Ok(Some(gx))
    }
}

impl<T: Real> Parameters<T> for Conv3d<T> {
    fn params(&self) -> Vec<(String, &Tensor<T>)> {
        vec![("weight".into(), &self.weight), ("bias".into(), &self.bias)]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}
