//! Shedding frequency from the lift history.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::config::SolverConfig;
use super::solver::ForceRecord;
use crate::error::{Error, Result};

/// Minimum number of periods the analysed window must hold.
pub const MIN_PERIODS: f64 = 10.0;
/// Peak-to-median spectral power ratio below which the signal counts as noise.
pub const PEAK_TO_MEDIAN: f64 = 100.0;

/// Dominant frequency (Hz) of a uniformly sampled signal.
///
/// Mean removal, Hann window, fourfold zero padding, and a parabolic fit
/// through the log power of the peak bin and its neighbours.
pub fn dominant_frequency(signal: &[f64], dt: f64) -> Result<f64> {
    let n = signal.len();
    if n < 8 {
        return Err(Error::NoShedding);
    }
    let mean = signal.iter().sum::<f64>() / n as f64;
    let spread = signal.iter().fold(0.0f64, |m, &x| m.max((x - mean).abs()));
    if !(spread > 1e-12 * mean.abs().max(1e-300)) || spread < 1e-300 {
        return Err(Error::NoShedding);
    }
    let len = (4 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = signal
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let w = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos();
            Complex::new((x - mean) * w, 0.0)
        })
        .collect();
    buf.resize(len, Complex::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);
    let power: Vec<f64> = buf[..len / 2].iter().map(|c| c.norm_sqr()).collect();
    // Skip the bins the window smears the (removed) mean into.
    let first = 8;
    let (peak, &peak_power) = power
        .iter()
        .enumerate()
        .skip(first)
        .max_by(|a, b| a.1.total_cmp(b.1))
        .ok_or(Error::NoShedding)?;
    let mut rest: Vec<f64> = power[first..].to_vec();
    rest.sort_by(f64::total_cmp);
    let median = rest[rest.len() / 2];
    if !(peak_power > PEAK_TO_MEDIAN * median) || peak + 1 >= power.len() {
        return Err(Error::NoShedding);
    }
    let (a, b, c) = (power[peak - 1].ln(), peak_power.ln(), power[peak + 1].ln());
    let denom = a - 2.0 * b + c;
    let offset = if denom.abs() > 0.0 { 0.5 * (a - c) / denom } else { 0.0 };
    Ok((peak as f64 + offset) / (len as f64 * dt))
}

/// Strouhal number `f D / U` of cylinder `cylinder`'s lift after the transient.
pub fn strouhal(records: &[ForceRecord], cfg: &SolverConfig, cylinder: usize) -> Result<f64> {
    let c = cfg
        .cylinders
        .get(cylinder)
        .ok_or_else(|| Error::invalid(format!("no cylinder {cylinder}")))?;
    let cutoff = cfg.transient_fraction * records.iter().map(|r| r.t).fold(0.0, f64::max);
    let lift: Vec<f64> = records
        .iter()
        .filter(|r| r.cylinder == cylinder && r.t >= cutoff)
        .map(|r| r.lift)
        .collect();
    let f = dominant_frequency(&lift, cfg.dt)?;
    let periods = f * lift.len() as f64 * cfg.dt;
    if periods < MIN_PERIODS {
        return Err(Error::invalid(format!(
            "lift window holds {periods:.1} shedding periods; at least {MIN_PERIODS} are needed"
        )));
    }
    Ok(f * c.diameter / cfg.inlet_velocity)
}
