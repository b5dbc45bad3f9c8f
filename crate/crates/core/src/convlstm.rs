//! Peephole ConvLSTM with backpropagation through time.
//!
//! One step computes, with `*` a same-padded convolution and `.` the
//! per-channel Hadamard product:
//!
//! ```text
//! g_t = tanh(W_xg * X_t + W_hg * H_{t-1} + b_g)
//! i_t = sigm(W_xi * X_t + W_hi * H_{t-1} + w_ci . C_{t-1} + b_i)
//! f_t = sigm(W_xf * X_t + W_hf * H_{t-1} + w_cf . C_{t-1} + b_f)
//! C_t = f_t . C_{t-1} + i_t . g_t
//! o_t = sigm(W_xo * X_t + W_ho * H_{t-1} + w_co . C_t + b_o)
//! H_t = o_t . tanh(C_t)
//! ```
//!
//! The four gate kernels are stored stacked along the output-channel axis
//! in the order `g, i, f, o`. Peephole weights are one scalar per hidden
//! channel, broadcast over the spatial plane.

use crate::error::{Error, Result};
use crate::linalg::{col2im, gemm, im2col, MatRef};
use crate::nn::{check_kernel, glorot_uniform, Parameters};
use crate::rng::Rng;
use crate::tensor::{sigmoid, Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Candidate = 0,
    Input = 1,
    Forget = 2,
    Output = 3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Peephole {
    Input = 0,
    Forget = 1,
    Output = 2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLstmCell<T: Real = f64> {
    /// `(4 * hidden, in_channels, k, k)`
    pub input_kernel: Tensor<T>,
    /// `(4 * hidden, hidden, k, k)`
    pub hidden_kernel: Tensor<T>,
    /// `(3, hidden)`: rows for the input, forget and output gates.
    pub peephole: Tensor<T>,
    /// `(4 * hidden)`
    pub bias: Tensor<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState<T: Real = f64> {
    /// `H`, shape `(hidden, h, w)`
    pub hidden: Tensor<T>,
    /// `C`, shape `(hidden, h, w)`
    pub cell: Tensor<T>,
}

impl<T: Real> LstmState<T> {
    pub fn zeros(hidden: usize, h: usize, w: usize) -> Self {
        LstmState {
            hidden: Tensor::zeros(&[hidden, h, w]),
            cell: Tensor::zeros(&[hidden, h, w]),
        }
    }
}

/// Everything one backward step needs.
#[derive(Debug, Clone)]
pub struct StepCache<T: Real> {
    pub x: Tensor<T>,
    pub prev: LstmState<T>,
    /// Gate activations `(4 * hidden, h, w)` in `g, i, f, o` order.
    pub gates: Tensor<T>,
    pub cell: Tensor<T>,
    pub tanh_cell: Tensor<T>,
    hidden_was_zero: bool,
}

#[derive(Debug, Clone)]
pub struct SequenceCache<T: Real> {
    pub steps: Vec<StepCache<T>>,
}

impl<T: Real> ConvLstmCell<T> {
    pub fn new(input_kernel: Tensor<T>, hidden_kernel: Tensor<T>, peephole: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        let (ik, hk) = (input_kernel.shape(), hidden_kernel.shape());
        if ik.len() != 4 || hk.len() != 4 {
            return Err(Error::invalid("ConvLSTM kernels must be rank 4"));
        }
        let hidden = hk[1];
        let k = ik[2];
        let ok = hidden > 0
            && ik[1] > 0
            && ik[0] == 4 * hidden
            && hk[0] == 4 * hidden
            && ik[3] == k
            && hk[2] == k
            && hk[3] == k
            && peephole.shape() == [3, hidden]
            && bias.shape() == [4 * hidden];
        if !ok {
            return Err(Error::invalid(format!(
                "inconsistent ConvLSTM shapes: input {ik:?}, hidden {hk:?}, peephole {:?}, bias {:?}",
                peephole.shape(),
                bias.shape()
            )));
        }
        check_kernel(k, "ConvLSTM")?;
        Ok(ConvLstmCell {
            input_kernel,
            hidden_kernel,
            peephole,
            bias,
        })
    }

    /// Glorot-uniform kernels, zero peepholes and biases.
    pub fn init(rng: &mut Rng, in_channels: usize, hidden: usize, k: usize) -> Result<Self> {
        if in_channels == 0 || hidden == 0 {
            return Err(Error::invalid(format!(
                "ConvLSTM needs positive channel counts, got in={in_channels} hidden={hidden}"
            )));
        }
        check_kernel(k, "ConvLSTM")?;
        let kk = k * k;
        let input_kernel = glorot_uniform(rng, &[4 * hidden, in_channels, k, k], in_channels * kk, hidden * kk);
        let hidden_kernel = glorot_uniform(rng, &[4 * hidden, hidden, k, k], hidden * kk, hidden * kk);
        Self::new(
            input_kernel,
            hidden_kernel,
            Tensor::zeros(&[3, hidden]),
            Tensor::zeros(&[4 * hidden]),
        )
    }

    pub fn zeros_like(&self) -> Self {
        ConvLstmCell {
            input_kernel: Tensor::zeros_like(&self.input_kernel),
            hidden_kernel: Tensor::zeros_like(&self.hidden_kernel),
            peephole: Tensor::zeros_like(&self.peephole),
            bias: Tensor::zeros_like(&self.bias),
        }
    }

    pub fn in_channels(&self) -> usize {
        self.input_kernel.shape()[1]
    }

    pub fn hidden(&self) -> usize {
        self.hidden_kernel.shape()[1]
    }

    pub fn kernel(&self) -> usize {
        self.input_kernel.shape()[2]
    }

    /// `4 k^2 C_in C_h + 4 k^2 C_h^2 + 3 C_h + 4 C_h`.
    pub fn count_params(&self) -> usize {
        count_params(self.in_channels(), self.hidden(), self.kernel())
    }

    pub fn gate_bias_mut(&mut self, gate: Gate) -> &mut [T] {
        let h = self.hidden();
        let g = gate as usize;
        &mut self.bias.data_mut()[g * h..(g + 1) * h]
    }

    pub fn peephole_mut(&mut self, which: Peephole) -> &mut [T] {
        let h = self.hidden();
        let p = which as usize;
        &mut self.peephole.data_mut()[p * h..(p + 1) * h]
    }

    fn check_step(&self, x: &Tensor<T>, state: &LstmState<T>) -> Result<(usize, usize)> {
        let xs = x.shape();
        if xs.len() != 3 || xs[0] != self.in_channels() {
            return Err(Error::invalid(format!(
                "ConvLSTM input must be ({}, h, w), got {xs:?}",
                self.in_channels()
            )));
        }
        let expect = [self.hidden(), xs[1], xs[2]];
        for t in [&state.hidden, &state.cell] {
            if t.shape() != expect {
                return Err(Error::ShapeMismatch {
                    op: "ConvLSTM state",
                    left: t.shape().to_vec(),
                    right: expect.to_vec(),
                });
            }
        }
        Ok((xs[1], xs[2]))
    }

    pub fn cell_forward(&self, x: &Tensor<T>, state: &LstmState<T>) -> Result<(LstmState<T>, StepCache<T>)> {
        self.step(x, state, false)
    }

    fn step(&self, x: &Tensor<T>, state: &LstmState<T>, hidden_is_zero: bool) -> Result<(LstmState<T>, StepCache<T>)> {
        let (h, w) = self.check_step(x, state)?;
        let plane = h * w;
        let (ch, k) = (self.hidden(), self.kernel());
        let kk = k * k;

        let mut z = vec![T::zero(); 4 * ch * plane];
        for (row, &b) in z.chunks_mut(plane).zip(self.bias.data()) {
            row.fill(b);
        }
        let mut cols = vec![T::zero(); self.in_channels() * kk * plane];
        im2col(x.data(), self.in_channels(), h, w, k, &mut cols);
        gemm(
            T::one(),
            MatRef::new(self.input_kernel.data(), 4 * ch, self.in_channels() * kk),
            MatRef::new(&cols, self.in_channels() * kk, plane),
            T::one(),
            &mut z,
        );
        if !hidden_is_zero {
            let mut hcols = vec![T::zero(); ch * kk * plane];
            im2col(state.hidden.data(), ch, h, w, k, &mut hcols);
            gemm(
                T::one(),
                MatRef::new(self.hidden_kernel.data(), 4 * ch, ch * kk),
                MatRef::new(&hcols, ch * kk, plane),
                T::one(),
                &mut z,
            );
        }

        let peep = self.peephole.data();
        let c_prev = state.cell.data();
        let mut cell = vec![T::zero(); ch * plane];
        let mut tanh_cell = vec![T::zero(); ch * plane];
        let mut hidden = vec![T::zero(); ch * plane];
        let (zg, rest) = z.split_at_mut(ch * plane);
        let (zi, rest) = rest.split_at_mut(ch * plane);
        let (zf, zo) = rest.split_at_mut(ch * plane);
        for c in 0..ch {
            let (wci, wcf, wco) = (peep[c], peep[ch + c], peep[2 * ch + c]);
            for p in c * plane..(c + 1) * plane {
                let g = zg[p].tanh();
                let i = sigmoid(zi[p] + wci * c_prev[p]);
                let f = sigmoid(zf[p] + wcf * c_prev[p]);
                let cn = f * c_prev[p] + i * g;
                let o = sigmoid(zo[p] + wco * cn);
                let tc = cn.tanh();
                zg[p] = g;
                zi[p] = i;
                zf[p] = f;
                zo[p] = o;
                cell[p] = cn;
                tanh_cell[p] = tc;
                hidden[p] = o * tc;
            }
        }

        let shape = [ch, h, w];
        let next = LstmState {
            hidden: Tensor::new(shape.to_vec(), hidden)?,
            cell: Tensor::new(shape.to_vec(), cell.clone())?,
        };
        let cache = StepCache {
            x: x.clone(),
            prev: state.clone(),
            gates: Tensor::new(vec![4 * ch, h, w], z)?,
            cell: Tensor::new(shape.to_vec(), cell)?,
            tanh_cell: Tensor::new(shape.to_vec(), tanh_cell)?,
            hidden_was_zero: hidden_is_zero,
        };
        Ok((next, cache))
    }

    /// One step of the adjoint recursion.
    ///
    /// `grad_hidden` and `grad_cell` are the total gradients reaching
    /// `H_t` and `C_t` (from the loss and from step `t + 1`). Parameter
    /// gradients are added into `grads`; returns
    /// `(grad_x, grad_H_{t-1}, grad_C_{t-1})`.
    pub fn cell_backward(
        &self,
        cache: &StepCache<T>,
        grad_hidden: &Tensor<T>,
        grad_cell: &Tensor<T>,
        grads: &mut ConvLstmCell<T>,
    ) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
        cache.cell.expect_same_shape(grad_hidden, "ConvLSTM backward hidden")?;
        cache.cell.expect_same_shape(grad_cell, "ConvLSTM backward cell")?;
        let (ch, h, w) = (self.hidden(), cache.cell.shape()[1], cache.cell.shape()[2]);
        let plane = h * w;
        let (k, kk) = (self.kernel(), self.kernel() * self.kernel());
        let cin = self.in_channels();

        let gates = cache.gates.data();
        let (g_act, rest) = gates.split_at(ch * plane);
        let (i_act, rest) = rest.split_at(ch * plane);
        let (f_act, o_act) = rest.split_at(ch * plane);
        let c_prev = cache.prev.cell.data();
        let cell = cache.cell.data();
        let tanh_c = cache.tanh_cell.data();
        let peep = self.peephole.data();
        let dh = grad_hidden.data();
        let dc_next = grad_cell.data();

        let mut dz = vec![T::zero(); 4 * ch * plane];
        let mut dc_prev = vec![T::zero(); ch * plane];
        let mut dpeep = vec![T::zero(); 3 * ch];
        {
            let (dzg, rest) = dz.split_at_mut(ch * plane);
            let (dzi, rest) = rest.split_at_mut(ch * plane);
            let (dzf, dzo) = rest.split_at_mut(ch * plane);
            let one = T::one();
            for c in 0..ch {
                let (wci, wcf, wco) = (peep[c], peep[ch + c], peep[2 * ch + c]);
                let (mut sci, mut scf, mut sco) = (T::zero(), T::zero(), T::zero());
                for p in c * plane..(c + 1) * plane {
                    let (g, i, f, o) = (g_act[p], i_act[p], f_act[p], o_act[p]);
                    let d_o = dh[p] * tanh_c[p] * o * (one - o);
                    let dc = dc_next[p] + dh[p] * o * (one - tanh_c[p] * tanh_c[p]) + d_o * wco;
                    let d_f = dc * c_prev[p] * f * (one - f);
                    let d_i = dc * g * i * (one - i);
                    let d_g = dc * i * (one - g * g);
                    dzg[p] = d_g;
                    dzi[p] = d_i;
                    dzf[p] = d_f;
                    dzo[p] = d_o;
                    dc_prev[p] = dc * f + d_i * wci + d_f * wcf;
                    sci += d_i * c_prev[p];
                    scf += d_f * c_prev[p];
                    sco += d_o * cell[p];
                }
                dpeep[c] = sci;
                dpeep[ch + c] = scf;
                dpeep[2 * ch + c] = sco;
            }
        }
        grads
            .peephole
            .data_mut()
            .iter_mut()
            .zip(&dpeep)
            .for_each(|(a, &b)| *a += b);
        for (b, row) in grads.bias.data_mut().iter_mut().zip(dz.chunks(plane)) {
            *b += row.iter().fold(T::zero(), |acc, &v| acc + v);
        }
        let dz_mat = MatRef::new(&dz, 4 * ch, plane);

        let mut cols = vec![T::zero(); cin * kk * plane];
        im2col(cache.x.data(), cin, h, w, k, &mut cols);
        gemm(
            T::one(),
            dz_mat,
            MatRef::new(&cols, cin * kk, plane).t(),
            T::one(),
            grads.input_kernel.data_mut(),
        );
        // Reuse the patch buffer for the input gradient.
        gemm(
            T::one(),
            MatRef::new(self.input_kernel.data(), 4 * ch, cin * kk).t(),
            dz_mat,
            T::zero(),
            &mut cols,
        );
        let mut dx = Tensor::zeros(cache.x.shape());
        col2im(&cols, cin, h, w, k, dx.data_mut());

        let mut hcols = vec![T::zero(); ch * kk * plane];
        if !cache.hidden_was_zero {
            im2col(cache.prev.hidden.data(), ch, h, w, k, &mut hcols);
            gemm(
                T::one(),
                dz_mat,
                MatRef::new(&hcols, ch * kk, plane).t(),
                T::one(),
                grads.hidden_kernel.data_mut(),
            );
        }
        gemm(
            T::one(),
            MatRef::new(self.hidden_kernel.data(), 4 * ch, ch * kk).t(),
            dz_mat,
            T::zero(),
            &mut hcols,
        );
        let mut dh_prev = Tensor::zeros(&[ch, h, w]);
        col2im(&hcols, ch, h, w, k, dh_prev.data_mut());

        Ok((dx, dh_prev, Tensor::new(vec![ch, h, w], dc_prev)?))
    }

    /// Runs `xs` `(T, C_in, h, w)` from a zero state; returns every `H_t` as `(T, C_h, h, w)`.
    pub fn sequence_forward(&self, xs: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.sequence_forward_train(xs)?.0)
    }

    pub fn sequence_forward_train(&self, xs: &Tensor<T>) -> Result<(Tensor<T>, SequenceCache<T>)> {
        let s = xs.shape();
        if s.len() != 4 {
            return Err(Error::invalid(format!(
                "ConvLSTM sequence must be (T, C, h, w), got {s:?}"
            )));
        }
        let (frames, h, w) = (s[0], s[2], s[3]);
        if frames == 0 {
            return Err(Error::invalid("ConvLSTM sequence needs at least one frame"));
        }
        let ch = self.hidden();
        let mut state = LstmState::zeros(ch, h, w);
        let mut hs = Tensor::zeros(&[frames, ch, h, w]);
        let mut steps = Vec::with_capacity(frames);
        for t in 0..frames {
            let x = xs.index_axis0(t);
            let (next, cache) = self.step(&x, &state, t == 0)?;
            hs.slab_mut(t).copy_from_slice(next.hidden.data());
            steps.push(cache);
            state = next;
        }
        Ok((hs, SequenceCache { steps }))
    }

    /// Backpropagation through time; `grad_hs` is `dL/dH_t` for every `t`.
    pub fn sequence_backward(
        &self,
        cache: &SequenceCache<T>,
        grad_hs: &Tensor<T>,
        grads: &mut ConvLstmCell<T>,
    ) -> Result<Tensor<T>> {
        let frames = cache.steps.len();
        let first = cache
            .steps
            .first()
            .ok_or_else(|| Error::invalid("empty sequence cache"))?;
        let (h, w) = (first.cell.shape()[1], first.cell.shape()[2]);
        let ch = self.hidden();
        let expect = [frames, ch, h, w];
        if grad_hs.shape() != expect {
            return Err(Error::ShapeMismatch {
                op: "ConvLSTM sequence backward",
                left: grad_hs.shape().to_vec(),
                right: expect.to_vec(),
            });
        }
        let mut dxs = Tensor::zeros(&[frames, self.in_channels(), h, w]);
        let mut dh_carry = Tensor::zeros(&[ch, h, w]);
        let mut dc_carry = Tensor::zeros(&[ch, h, w]);
        for t in (0..frames).rev() {
            let mut dh = grad_hs.index_axis0(t);
            dh.add_assign(&dh_carry)?;
            let (dx, dh_prev, dc_prev) = self.cell_backward(&cache.steps[t], &dh, &dc_carry, grads)?;
            dxs.slab_mut(t).copy_from_slice(dx.data());
            dh_carry = dh_prev;
            dc_carry = dc_prev;
        }
        Ok(dxs)
    }
}

pub fn count_params(in_channels: usize, hidden: usize, k: usize) -> usize {
    4 * k * k * in_channels * hidden + 4 * k * k * hidden * hidden + 3 * hidden + 4 * hidden
}

impl<T: Real> Parameters<T> for ConvLstmCell<T> {
    fn params(&self) -> Vec<(String, &Tensor<T>)> {
        vec![
            ("input_kernel".into(), &self.input_kernel),
            ("hidden_kernel".into(), &self.hidden_kernel),
            ("peephole".into(), &self.peephole),
            ("bias".into(), &self.bias),
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![
            &mut self.input_kernel,
            &mut self.hidden_kernel,
            &mut self.peephole,
            &mut self.bias,
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::*;

    fn randomized(rng: &mut Rng, cin: usize, ch: usize, k: usize) -> ConvLstmCell<f64> {
        let mut cell = ConvLstmCell::init(rng, cin, ch, k).unwrap();
        cell.peephole = random(rng, &[3, ch]);
        cell.bias = random(rng, &[4 * ch]).scale(0.5);
        cell
    }

    fn zero_cell(cin: usize, ch: usize) -> ConvLstmCell<f64> {
        let mut cell = ConvLstmCell::init(&mut Rng::new(0), cin, ch, 3).unwrap();
        cell.params_mut().into_iter().for_each(|t| t.fill(0.0));
        cell
    }

    #[test]
    fn zero_weights_halve_the_cell() {
        let cell = zero_cell(1, 2);
        let mut rng = Rng::new(1);
        let x = random(&mut rng, &[1, 3, 3]);
        let c0 = random(&mut rng, &[2, 3, 3]).scale(3.0);
        let state = LstmState {
            hidden: random(&mut rng, &[2, 3, 3]),
            cell: c0.clone(),
        };
        let (next, cache) = cell.cell_forward(&x, &state).unwrap();
        let half = c0.scale(0.5);
        assert!(next.cell.max_abs_diff(&half).unwrap() < 1e-15);
        let expect_h = half.map(|c| 0.5 * c.tanh());
        assert!(next.hidden.max_abs_diff(&expect_h).unwrap() < 1e-15);
        // g = 0, i = f = o = 0.5
        let plane = 2 * 9;
        assert!(cache.gates.data()[..plane].iter().all(|&g| g == 0.0));
        assert!(cache.gates.data()[plane..].iter().all(|&g| g == 0.5));
    }

    #[test]
    fn saturated_forget_gate_keeps_memory() {
        let mut rng = Rng::new(2);
        let mut cell = randomized(&mut rng, 1, 2, 3);
        cell.input_kernel.fill(0.0);
        cell.hidden_kernel.fill(0.0);
        cell.peephole.fill(0.0);
        cell.gate_bias_mut(Gate::Forget).fill(30.0);
        cell.gate_bias_mut(Gate::Input).fill(-30.0);
        let state = LstmState {
            hidden: random(&mut rng, &[2, 4, 4]),
            cell: random(&mut rng, &[2, 4, 4]),
        };
        let (next, _) = cell.cell_forward(&random(&mut rng, &[1, 4, 4]), &state).unwrap();
        assert!(next.cell.max_abs_diff(&state.cell).unwrap() < 1e-9);
    }

    #[test]
    fn single_frame_sequence_equals_one_step() {
        let mut rng = Rng::new(3);
        let cell = randomized(&mut rng, 2, 3, 3);
        let xs = random(&mut rng, &[1, 2, 4, 5]);
        let hs = cell.sequence_forward(&xs).unwrap();
        let (next, _) = cell
            .cell_forward(&xs.index_axis0(0), &LstmState::zeros(3, 4, 5))
            .unwrap();
        assert_eq!(hs.index_axis0(0), next.hidden);
    }

    #[test]
    fn zero_weights_ignore_inputs() {
        let mut cell = zero_cell(2, 2);
        cell.bias = random(&mut Rng::new(4), &[8]);
        let a = cell.sequence_forward(&random(&mut Rng::new(5), &[4, 2, 3, 3])).unwrap();
        let b = cell.sequence_forward(&random(&mut Rng::new(6), &[4, 2, 3, 3]).scale(9.0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_sequence_and_bad_shapes_rejected() {
        let cell = zero_cell(2, 2);
        assert!(cell.sequence_forward(&Tensor::zeros(&[2, 3, 3])).is_err());
        assert!(cell
            .cell_forward(&Tensor::zeros(&[2, 3, 3]), &LstmState::zeros(2, 4, 3))
            .is_err());
        assert!(ConvLstmCell::<f64>::init(&mut Rng::new(0), 0, 4, 3).is_err());
    }

    #[test]
    fn parameter_count_formula() {
        assert_eq!(count_params(1, 4, 3), 748);
        let cell = ConvLstmCell::<f64>::init(&mut Rng::new(0), 1, 4, 3).unwrap();
        assert_eq!(cell.count_params(), 748);
        assert_eq!(Parameters::count_params(&cell), 748);
        let ratio = count_params(2, 64, 3) as f64 / count_params(2, 32, 3) as f64;
        assert!((3.5..=4.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn hidden_state_bounded() {
        let mut rng = Rng::new(9);
        let mut cell = randomized(&mut rng, 2, 3, 3);
        cell.input_kernel = cell.input_kernel.scale(5.0);
        let xs = random(&mut rng, &[6, 2, 4, 4]).scale(4.0);
        let (hs, cache) = cell.sequence_forward_train(&xs).unwrap();
        assert!(hs.data().iter().all(|&v| v > -1.0 && v < 1.0));
        for step in &cache.steps {
            let bound = step.prev.cell.data().iter().fold(0.0f64, |m, v| m.max(v.abs())) + 1.0;
            assert!(step.cell.data().iter().all(|v| v.abs() <= bound));
        }
    }

    #[test]
    fn one_step_gradients_match_finite_differences() {
        for seed in 0..5 {
            let mut rng = Rng::new(600 + seed);
            let cell = randomized(&mut rng, 1, 2, 3);
            let mut x = random(&mut rng, &[1, 4, 4]);
            let mut state = LstmState {
                hidden: random(&mut rng, &[2, 4, 4]),
                cell: random(&mut rng, &[2, 4, 4]),
            };
            let ph = random(&mut rng, &[2, 4, 4]);
            let pc = random(&mut rng, &[2, 4, 4]);
            let loss = |cell: &ConvLstmCell<f64>, x: &Tensor<f64>, s: &LstmState<f64>| {
                let (n, _) = cell.cell_forward(x, s).unwrap();
                dot(&n.hidden, &ph) + dot(&n.cell, &pc)
            };
            let (_, cache) = cell.cell_forward(&x, &state).unwrap();
            let mut grads = cell.zeros_like();
            let (dx, dh, dc) = cell.cell_backward(&cache, &ph, &pc, &mut grads).unwrap();

            let nx: Vec<f64> = (0..x.len()).map(|i| numeric(&mut x, i, |x| loss(&cell, x, &state))).collect();
            assert!(max_rel(&dx, &nx) < 1e-6);
            let mut hid = state.hidden.clone();
            let nh: Vec<f64> = (0..hid.len())
                .map(|i| {
                    numeric(&mut hid, i, |hd| {
                        let s = LstmState { hidden: hd.clone(), cell: state.cell.clone() };
                        loss(&cell, &x, &s)
                    })
                })
                .collect();
            assert!(max_rel(&dh, &nh) < 1e-6);
            let mut cl = state.cell.clone();
            let nc: Vec<f64> = (0..cl.len())
                .map(|i| {
                    numeric(&mut cl, i, |c| {
                        let s = LstmState { hidden: state.hidden.clone(), cell: c.clone() };
                        loss(&cell, &x, &s)
                    })
                })
                .collect();
            assert!(max_rel(&dc, &nc) < 1e-6);
            state.hidden = hid;
            check_params(&cell, &grads, 1e-6, |c| loss(c, &x, &state));
        }
    }

    #[test]
    fn bptt_gradients_match_finite_differences() {
        for seed in 0..5 {
            let mut rng = Rng::new(700 + seed);
            let cell = randomized(&mut rng, 2, 2, 3);
            let mut xs = random(&mut rng, &[3, 2, 3, 4]);
            let pattern = random(&mut rng, &[3, 2, 3, 4]);
            let (_, cache) = cell.sequence_forward_train(&xs).unwrap();
            let mut grads = cell.zeros_like();
            let dxs = cell.sequence_backward(&cache, &pattern, &mut grads).unwrap();
            let nx: Vec<f64> = (0..xs.len())
                .map(|i| numeric(&mut xs, i, |xs| dot(&cell.sequence_forward(xs).unwrap(), &pattern)))
                .collect();
            assert!(max_rel(&dxs, &nx) < 1e-6);
            check_params(&cell, &grads, 1e-6, |c| dot(&c.sequence_forward(&xs).unwrap(), &pattern));
        }
    }
}
