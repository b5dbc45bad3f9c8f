use std::collections::HashMap;
use std::time::{Duration, Instant};

use super::adam::Adam;
use super::config::{ModelConfig, Variant};
use super::metrics::{metrics, MetricMean, MetricTriple};
use super::network::Network;
use crate::dataset::{Dataset, SequenceSample};
use crate::error::{Error, Result};
use crate::nn::Parameters;
use crate::rng::Rng;
use crate::tensor::{Real, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean per-sample MSE over the epoch's batches.
    pub train_loss: f64,
    pub val: MetricTriple,
    /// Wall-clock seconds spent in this epoch, validation included.
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub variant: Variant,
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose weights were returned; `None` means the initial weights.
    pub best_epoch: Option<usize>,
    pub wall_seconds: f64,
    pub param_count: usize,
    /// Why training ended before the configured epoch count, if it did.
    pub stop_reason: Option<String>,
}

impl TrainReport {
    pub fn losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.train_loss).collect()
    }

    pub fn best(&self) -> Option<&EpochRecord> {
        self.best_epoch.map(|e| &self.epochs[e - 1])
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Stop after the first epoch that ends past this much wall-clock time.
    pub time_budget: Option<Duration>,
}

/// Converts a stored f32 sample to the training precision.
pub fn to_precision<T: Real>(x: &Tensor<f32>) -> Tensor<T> {
    x.cast()
}

pub fn train<T: Real>(cfg: &ModelConfig, ds: &Dataset) -> Result<(Network<T>, TrainReport)> {
    train_with(cfg, ds, &TrainOptions::default(), |_| {})
}

/// Minibatch Adam on the MSE loss; returns the best-validation weights.
pub fn train_with<T: Real>(
    cfg: &ModelConfig,
    ds: &Dataset,
    opts: &TrainOptions,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(Network<T>, TrainReport)> {
    check_dataset(cfg, ds)?;
    if ds.split.train.is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    if ds.split.val.is_empty() {
        return Err(Error::EmptySplit("validation"));
    }
    let start = Instant::now();
    let mut net: Network<T> = Network::init(cfg)?;
    let mut opt = Adam::new(&net, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);
    let mut best = net.clone();
    let mut best_mse = f64::INFINITY;
    let mut report = TrainReport {
        variant: cfg.variant,
        epochs: Vec::with_capacity(cfg.epochs),
        best_epoch: None,
        wall_seconds: 0.0,
        param_count: net.count_params(),
        stop_reason: None,
    };
    let val = ds.val();

    for epoch in 1..=cfg.epochs {
        let t0 = Instant::now();
        let mut order = ds.split.train.clone();
        Rng::derive(cfg.seed, epoch as u64).shuffle(&mut order);
        let mut loss_sum = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mut grads = net.zeros_like();
            let mut batch_loss = 0.0;
            for &i in batch {
                let s = &ds.samples[i];
                batch_loss += sample_step(&net, s, batch.len(), &mut grads)?;
            }
            if !batch_loss.is_finite() || !grads.params().iter().all(|(_, g)| g.all_finite()) {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            opt.update(&mut net, &grads)?;
            loss_sum += batch_loss;
        }
        let val_metrics = evaluate(&net, &val)?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / order.len() as f64,
            val: val_metrics,
            seconds: t0.elapsed().as_secs_f64(),
        };
        if val_metrics.mse < best_mse {
            best_mse = val_metrics.mse;
            best = net.clone();
            report.best_epoch = Some(epoch);
        }
        on_epoch(&record);
        report.epochs.push(record);
        if let Some(budget) = opts.time_budget {
            if start.elapsed() > budget && epoch < cfg.epochs {
                report.stop_reason = Some(format!(
                    "time budget of {:.0} s exhausted after epoch {epoch}",
                    budget.as_secs_f64()
                ));
                break;
            }
        }
    }
    report.wall_seconds = start.elapsed().as_secs_f64();
    Ok((best, report))
}

/// Forward/backward of one sample; adds `dL/dθ` of the batch-mean loss and
/// returns the sample's MSE (unscaled by the batch size).
fn sample_step<T: Real>(net: &Network<T>, s: &SequenceSample, batch: usize, grads: &mut Network<T>) -> Result<f64> {
    let x: Tensor<T> = to_precision(&s.input);
    let y: Tensor<T> = to_precision(&s.target);
    let cache = net.forward_train(&x)?;
    let n = y.len() as f64;
    let scale = T::of(2.0 / (n * batch as f64));
    let mut loss = 0.0;
    let grad = cache.output.zip_map(&y, "loss", |p, t| {
        let d = p - t;
        scale * d
    })?;
    for (&p, &t) in cache.output.data().iter().zip(y.data()) {
        let d = p.as_f64() - t.as_f64();
        loss += d * d;
    }
    net.backward_accumulate(&cache, &grad, grads)?;
    Ok(loss / n)
}

fn check_dataset(cfg: &ModelConfig, ds: &Dataset) -> Result<()> {
    if ds.spec.t_in != cfg.t_in || ds.spec.t_out != cfg.t_out || ds.channels() != cfg.channels {
        return Err(Error::DatasetMismatch(format!(
            "model expects t_in {}, t_out {}, {} channels; dataset has {}, {}, {}",
            cfg.t_in,
            cfg.t_out,
            cfg.channels,
            ds.spec.t_in,
            ds.spec.t_out,
            ds.channels()
        )));
    }
    Ok(())
}

/// Mean per-sample metrics of the model's predictions.
pub fn evaluate<T: Real>(net: &Network<T>, samples: &[&SequenceSample]) -> Result<MetricTriple> {
    let mut acc = MetricMean::default();
    for s in samples {
        let pred = net.forward(&to_precision::<T>(&s.input))?;
        acc.push(metrics(&to_precision::<T>(&s.target), &pred)?);
    }
    acc.mean().ok_or(Error::EmptySplit("evaluation"))
}

/// The last input frame repeated over the target window.
pub fn persistence(sample: &SequenceSample) -> Tensor<f32> {
    let t_in = sample.input.shape()[0];
    let last = sample.input.index_axis0(t_in - 1);
    let frames = vec![last; sample.target.shape()[0]];
    Tensor::stack(&frames).expect("equal frame shapes")
}

pub fn evaluate_persistence(samples: &[&SequenceSample]) -> Result<MetricTriple> {
    let mut acc = MetricMean::default();
    for s in samples {
        acc.push(metrics(&s.target, &persistence(s))?);
    }
    acc.mean().ok_or(Error::EmptySplit("evaluation"))
}

/// Autoregressive prediction: each step's first output frame replaces the
/// oldest frame of the window. Returns `(horizon, C, h, w)`.
pub fn rollout<T: Real>(net: &Network<T>, seed_window: &Tensor<T>, horizon: usize) -> Result<Tensor<T>> {
    if horizon < 1 {
        return Err(Error::invalid("rollout horizon must be at least 1"));
    }
    let mut frames: Vec<Tensor<T>> = (0..seed_window.shape().first().copied().unwrap_or(0))
        .map(|t| seed_window.index_axis0(t))
        .collect();
    let mut out = Vec::with_capacity(horizon);
    let mut window = seed_window.clone();
    for _ in 0..horizon {
        let next = net.forward(&window)?.index_axis0(0);
        frames.remove(0);
        frames.push(next.clone());
        out.push(next);
        window = Tensor::stack(&frames)?;
    }
    Tensor::stack(&out)
}

/// Every normalized frame of the dataset, keyed by `(source, frame index)`.
pub struct FrameIndex<'a> {
    frames: HashMap<(usize, usize), &'a [f32]>,
    shape: Vec<usize>,
}

impl<'a> FrameIndex<'a> {
    pub fn new(ds: &'a Dataset) -> Self {
        let mut frames = HashMap::new();
        let t_in = ds.spec.t_in;
        for s in &ds.samples {
            for t in 0..t_in {
                frames.entry((s.source, s.frame + t)).or_insert(s.input.slab(t));
            }
            for t in 0..s.target.shape()[0] {
                frames.entry((s.source, s.frame + t_in + t)).or_insert(s.target.slab(t));
            }
        }
        let shape = vec![ds.channels(), ds.spec.out_height, ds.spec.out_width];
        FrameIndex { frames, shape }
    }

    /// Ground truth for the `horizon` frames following `sample`'s input window.
    pub fn future(&self, sample: &SequenceSample, t_in: usize, horizon: usize) -> Option<Tensor<f32>> {
        let mut data = Vec::with_capacity(horizon * self.shape.iter().product::<usize>());
        for h in 0..horizon {
            data.extend_from_slice(self.frames.get(&(sample.source, sample.frame + t_in + h))?);
        }
        let mut shape = vec![horizon];
        shape.extend(&self.shape);
        Tensor::new(shape, data).ok()
    }
}

/// Mean metrics at each rollout step `1..=horizon` over the samples whose
/// future is fully available in the dataset.
pub fn evaluate_rollout<T: Real>(
    net: &Network<T>,
    ds: &Dataset,
    samples: &[&SequenceSample],
    horizon: usize,
) -> Result<Vec<MetricTriple>> {
    let index = FrameIndex::new(ds);
    let mut acc = vec![MetricMean::default(); horizon];
    for s in samples {
        let Some(truth) = index.future(s, ds.spec.t_in, horizon) else {
            continue;
        };
        let pred = rollout(net, &to_precision::<T>(&s.input), horizon)?;
        for (h, a) in acc.iter_mut().enumerate() {
            a.push(metrics(&to_precision::<T>(&truth.index_axis0(h)), &pred.index_axis0(h))?);
        }
    }
    acc.iter()
        .map(|a| a.mean().ok_or(Error::EmptySplit("rollout evaluation")))
        .collect()
}
