use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Dynamic range of normalized data.
pub const SSIM_RANGE: f64 = 1.0;
pub const SSIM_C1: f64 = (0.01 * SSIM_RANGE) * (0.01 * SSIM_RANGE);
pub const SSIM_C2: f64 = (0.03 * SSIM_RANGE) * (0.03 * SSIM_RANGE);

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricTriple {
    pub mae: f64,
    pub mse: f64,
    pub ssim: f64,
}

/// MAE and MSE over every element; SSIM from global statistics of each
/// trailing `(h, w)` plane, averaged over the planes.
pub fn metrics<T: Real>(truth: &Tensor<T>, pred: &Tensor<T>) -> Result<MetricTriple> {
    truth.expect_same_shape(pred, "metrics")?;
    if truth.rank() < 2 || truth.is_empty() {
        return Err(Error::invalid(format!(
            "metrics need at least one (h, w) plane, got shape {:?}",
            truth.shape()
        )));
    }
    let n = truth.len() as f64;
    let (mut abs, mut sq) = (0.0, 0.0);
    for (&y, &p) in truth.data().iter().zip(pred.data()) {
        let d = y.as_f64() - p.as_f64();
        abs += d.abs();
        sq += d * d;
    }
    let shape = truth.shape();
    let plane = shape[shape.len() - 2] * shape[shape.len() - 1];
    let planes = truth.len() / plane;
    let ssim = truth
        .data()
        .chunks(plane)
        .zip(pred.data().chunks(plane))
        .map(|(y, p)| ssim_plane(y, p))
        .sum::<f64>()
        / planes as f64;
    Ok(MetricTriple {
        mae: abs / n,
        mse: sq / n,
        ssim,
    })
}

/// Population mean and (co)variance; one code path so `cov(x, x) == var(x)`.
fn moments<T: Real>(a: &[T], b: &[T]) -> (f64, f64, f64) {
    let n = a.len() as f64;
    let ma = a.iter().map(|v| v.as_f64()).sum::<f64>() / n;
    let mb = b.iter().map(|v| v.as_f64()).sum::<f64>() / n;
    let cov = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| (x.as_f64() - ma) * (y.as_f64() - mb))
        .sum::<f64>()
        / n;
    (ma, mb, cov)
}

pub fn ssim_plane<T: Real>(y: &[T], p: &[T]) -> f64 {
    let (my, mp, cov) = moments(y, p);
    let (.., vy) = moments(y, y);
    let (.., vp) = moments(p, p);
    ((2.0 * my * mp + SSIM_C1) * (2.0 * cov + SSIM_C2)) / ((my * my + mp * mp + SSIM_C1) * (vy + vp + SSIM_C2))
}

/// Running mean of per-sample metrics.
#[derive(Debug, Clone, Copy, Default)]
pub struct MetricMean {
    sum: MetricTriple,
    count: usize,
}

impl MetricMean {
    pub fn push(&mut self, m: MetricTriple) {
        self.sum.mae += m.mae;
        self.sum.mse += m.mse;
        self.sum.ssim += m.ssim;
        self.count += 1;
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> Option<MetricTriple> {
        (self.count > 0).then(|| {
            let n = self.count as f64;
            MetricTriple {
                mae: self.sum.mae / n,
                mse: self.sum.mse / n,
                ssim: self.sum.ssim / n,
            }
        })
    }
}
