use super::config::{ModelConfig, Variant};
use crate::convlstm::{ConvLstmCell, Gate, SequenceCache};
use crate::error::{Error, Result};
use crate::nn::{prefixed, relu_backward, relu_inplace, Conv3d, Dense, Parameters, ResidualBlock3d, ResidualCache, SeBlock, SeCache};
use crate::rng::Rng;
use crate::tensor::{Real, Tensor};

/// Weights of either predictor variant.
///
/// Input and output are `(T, C, h, w)`. With `t_out > 1` the input is
/// extended by `t_out - 1` zero frames and the last `t_out` head outputs are
/// the prediction, so every predicted frame has its own recurrent step.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T: Real = f64> {
    pub lift: Option<Conv3d<T>>,
    pub blocks: Vec<ResidualBlock3d<T>>,
    pub se: Option<SeBlock<T>>,
    pub lstm: Vec<ConvLstmCell<T>>,
    pub head: Conv3d<T>,
    channels: usize,
    t_in: usize,
    t_out: usize,
    persistence_skip: bool,
}

/// Inputs are clamped this far inside (0, 1) before taking their logit; a
/// tighter clamp leaves pixels at the data extremes in the flat tails of the
/// sigmoid, where they barely learn.
pub const SKIP_CLAMP: f64 = 5e-2;

/// Intermediates of [`Network::forward_train`].
#[derive(Debug, Clone)]
pub struct ForwardCache<T: Real> {
    padded: Tensor<T>,
    lift_pre: Option<Tensor<T>>,
    block_inputs: Vec<Tensor<T>>,
    block_caches: Vec<ResidualCache<T>>,
    se: Option<(Tensor<T>, SeCache<T>)>,
    lstm_caches: Vec<SequenceCache<T>>,
    hidden_out: Tensor<T>,
    /// Sigmoid outputs of the predicted frames.
    pub output: Tensor<T>,
}

impl<T: Real> ForwardCache<T> {
    /// Inputs of every ReLU in the network, front to back.
    pub fn relu_inputs(&self) -> Vec<&Tensor<T>> {
        let mut out: Vec<&Tensor<T>> = self.lift_pre.iter().collect();
        for c in &self.block_caches {
            out.push(&c.inner_pre);
            out.push(&c.sum);
        }
        if let Some((_, c)) = &self.se {
            out.push(&c.hidden_pre);
        }
        out
    }
}

impl<T: Real> Network<T> {
    pub fn init(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = Rng::new(cfg.seed);
        let mut width = cfg.channels;
        let (mut lift, mut blocks, mut se) = (None, Vec::new(), None);
        if cfg.variant == Variant::Improved {
            let (f, kt, k) = (cfg.front_width, cfg.front_kernel_t, cfg.front_kernel);
            lift = Some(Conv3d::init(&mut rng, width, f, kt, k)?);
            for _ in 0..cfg.residual_blocks {
                blocks.push(ResidualBlock3d::init(&mut rng, f, kt, k)?);
            }
            if let Some(r) = cfg.se_ratio {
                se = Some(SeBlock::init(&mut rng, f, r)?);
            }
            width = f;
        }
        let mut lstm = Vec::with_capacity(cfg.hidden.len());
        for &h in &cfg.hidden {
            let mut cell = ConvLstmCell::init(&mut rng, width, h, cfg.lstm_kernel)?;
            cell.gate_bias_mut(Gate::Forget).fill(T::one());
            lstm.push(cell);
            width = h;
        }
        let head = Conv3d::init(&mut rng, width, cfg.channels, cfg.head_kernel_t, cfg.head_kernel)?;
        Ok(Network {
            lift,
            blocks,
            se,
            lstm,
            head,
            channels: cfg.channels,
            t_in: cfg.t_in,
            t_out: cfg.t_out,
            persistence_skip: cfg.persistence_skip,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Network {
            lift: self.lift.as_ref().map(Conv3d::zeros_like),
            blocks: self.blocks.iter().map(ResidualBlock3d::zeros_like).collect(),
            se: self.se.as_ref().map(SeBlock::zeros_like),
            lstm: self.lstm.iter().map(ConvLstmCell::zeros_like).collect(),
            head: self.head.zeros_like(),
            ..*self
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn t_in(&self) -> usize {
        self.t_in
    }

    pub fn t_out(&self) -> usize {
        self.t_out
    }

    /// Converts every weight to another precision.
    pub fn cast<U: Real>(&self) -> Network<U> {
        let dense = |d: &Dense<T>| Dense::new(d.weight.cast(), d.bias.cast()).expect("same shapes");
        Network {
            lift: self.lift.as_ref().map(conv_cast),
            blocks: self
                .blocks
                .iter()
                .map(|b| ResidualBlock3d::new(conv_cast(&b.conv1), conv_cast(&b.conv2)).expect("same shapes"))
                .collect(),
            se: self
                .se
                .as_ref()
                .map(|s| SeBlock::new(dense(&s.reduce), dense(&s.expand)).expect("same shapes")),
            lstm: self
                .lstm
                .iter()
                .map(|c| {
                    ConvLstmCell::new(c.input_kernel.cast(), c.hidden_kernel.cast(), c.peephole.cast(), c.bias.cast())
                        .expect("same shapes")
                })
                .collect(),
            head: conv_cast(&self.head),
            channels: self.channels,
            t_in: self.t_in,
            t_out: self.t_out,
            persistence_skip: self.persistence_skip,
        }
    }

    pub fn persistence_skip(&self) -> bool {
        self.persistence_skip
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<(usize, usize)> {
        match x.shape() {
            &[t, c, h, w] if t == self.t_in && c == self.channels && h > 0 && w > 0 => Ok((h, w)),
            s => Err(Error::ShapeMismatch {
                op: "model forward",
                left: s.to_vec(),
                right: vec![self.t_in, self.channels, 0, 0],
            }),
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward_train(x)?.output)
    }

    pub fn forward_train(&self, x: &Tensor<T>) -> Result<ForwardCache<T>> {
        let (h, w) = self.check_input(x)?;
        let frames = self.t_in + self.t_out - 1;
        let mut padded = Tensor::zeros(&[frames, self.channels, h, w]);
        padded.data_mut()[..x.len()].copy_from_slice(x.data());

        let mut lift_pre = None;
        let mut block_inputs = Vec::with_capacity(self.blocks.len());
        let mut block_caches = Vec::with_capacity(self.blocks.len());
        let mut se = None;
        let mut features = match &self.lift {
            Some(lift) => {
                let pre = lift.forward(&padded)?;
                let mut act = pre.clone();
                relu_inplace(&mut act);
                lift_pre = Some(pre);
                act
            }
            None => padded.clone(),
        };
        for block in &self.blocks {
            let (out, cache) = block.forward_train(&features)?;
            block_inputs.push(features);
            block_caches.push(cache);
            features = out;
        }
        if let Some(block) = &self.se {
            let (out, cache) = block.forward_train(&features)?;
            se = Some((features, cache));
            features = out;
        }

        let mut lstm_caches = Vec::with_capacity(self.lstm.len());
        for cell in &self.lstm {
            let (hs, cache) = cell.sequence_forward_train(&features)?;
            lstm_caches.push(cache);
            features = hs;
        }
        let hidden_out = features;
        let logits = self.head.forward(&hidden_out)?;
        let plane = self.channels * h * w;
        let mut output = Tensor::zeros(&[self.t_out, self.channels, h, w]);
        let predicted = &logits.data()[(frames - self.t_out) * plane..];
        let last = &x.data()[(self.t_in - 1) * plane..];
        let (lo, hi) = (T::of(SKIP_CLAMP), T::of(1.0 - SKIP_CLAMP));
        for (k, (dst, &z)) in output.data_mut().iter_mut().zip(predicted).enumerate() {
            let base = if self.persistence_skip {
                let p = last[k % plane].max(lo).min(hi);
                (p / (T::one() - p)).ln()
            } else {
                T::zero()
            };
            *dst = crate::tensor::sigmoid(base + z);
        }
        Ok(ForwardCache {
            padded,
            lift_pre,
            block_inputs,
            block_caches,
            se,
            lstm_caches,
            hidden_out,
            output,
        })
    }

    /// Adds `dL/dθ` into `grads` given `dL/d output`.
    pub fn backward_accumulate(&self, cache: &ForwardCache<T>, grad_out: &Tensor<T>, grads: &mut Network<T>) -> Result<()> {
        cache.output.expect_same_shape(grad_out, "model backward")?;
        let mut g_logits = Tensor::zeros(&[
            cache.padded.shape()[0],
            self.head.out_channels(),
            cache.padded.shape()[2],
            cache.padded.shape()[3],
        ]);
        let skip = g_logits.len() - grad_out.len();
        for ((dst, &g), &s) in g_logits.data_mut()[skip..]
            .iter_mut()
            .zip(grad_out.data())
            .zip(cache.output.data())
        {
            *dst = g * s * (T::one() - s);
        }

        let needs_front = self.lift.is_some();
        let mut g = self
            .head
            .backward_accumulate(&cache.hidden_out, &g_logits, &mut grads.head, true)?
            .expect("input gradient requested");
        for (l, cell) in self.lstm.iter().enumerate().rev() {
            g = cell.sequence_backward(&cache.lstm_caches[l], &g, &mut grads.lstm[l])?;
        }
        if !needs_front {
            return Ok(());
        }
        if let (Some(block), Some((x, sc))) = (&self.se, &cache.se) {
            g = block.backward_cached(x, sc, &g, grads.se.as_mut().expect("same architecture"))?;
        }
        for (b, block) in self.blocks.iter().enumerate().rev() {
            g = block.backward_cached(&cache.block_inputs[b], &cache.block_caches[b], &g, &mut grads.blocks[b])?;
        }
        if let (Some(lift), Some(pre)) = (&self.lift, &cache.lift_pre) {
            let g_pre = relu_backward(pre, &g)?;
            lift.backward_accumulate(&cache.padded, &g_pre, grads.lift.as_mut().expect("same architecture"), false)?;
        }
        Ok(())
    }
}

fn conv_cast<T: Real, U: Real>(c: &Conv3d<T>) -> Conv3d<U> {
    Conv3d::new(c.weight.cast(), c.bias.cast()).expect("same shapes")
}

impl<T: Real> Parameters<T> for Network<T> {
    fn params(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        if let Some(lift) = &self.lift {
            out.extend(prefixed("lift", lift.params()));
        }
        for (i, b) in self.blocks.iter().enumerate() {
            out.extend(prefixed(&format!("res{i}"), b.params()));
        }
        if let Some(se) = &self.se {
            out.extend(prefixed("se", se.params()));
        }
        for (i, c) in self.lstm.iter().enumerate() {
            out.extend(prefixed(&format!("lstm{i}"), c.params()));
        }
        out.extend(prefixed("head", self.head.params()));
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = Vec::new();
        if let Some(lift) = &mut self.lift {
            out.extend(lift.params_mut());
        }
        for b in &mut self.blocks {
            out.extend(b.params_mut());
        }
        if let Some(se) = &mut self.se {
            out.extend(se.params_mut());
        }
        for c in &mut self.lstm {
            out.extend(c.params_mut());
        }
        out.extend(self.head.params_mut());
        out
    }
}
