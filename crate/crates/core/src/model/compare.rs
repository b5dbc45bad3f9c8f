use std::fmt::Write as _;

use super::config::{ModelConfig, Variant};
use super::metrics::MetricTriple;
use super::network::Network;
use super::train::{evaluate, train_with, TrainOptions, TrainReport};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::nn::Parameters;
use crate::tensor::Real;

/// One trained variant as it enters the comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct VariantResult {
    pub variant: Variant,
    pub total_params: usize,
    pub trainable_params: usize,
    pub train_minutes: f64,
    pub test: MetricTriple,
    /// [`Dataset::fingerprint`] of the data it was trained and tested on.
    pub dataset: String,
}

impl VariantResult {
    pub fn new<T: Real>(net: &Network<T>, report: &TrainReport, test: MetricTriple, dataset: String) -> Self {
        // Every weight is optimized; there are no frozen statistics.
        let n = net.count_params();
        VariantResult {
            variant: report.variant,
            total_params: n,
            trainable_params: n,
            train_minutes: report.wall_seconds / 60.0,
            test,
            dataset,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub metric: &'static str,
    pub standard: f64,
    pub improved: f64,
    /// `100 (improved - standard) / standard`; 0 when both are 0.
    pub delta_percent: f64,
}

impl Row {
    pub fn change(&self) -> String {
        let d = self.delta_percent;
        if d.abs() < 0.5 {
            "unchanged".into()
        } else if d < 0.0 {
            format!("reduced by {:.0}%", -d)
        } else {
            format!("increased by {d:.0}%")
        }
    }

    fn format_value(&self, v: f64) -> String {
        match self.metric {
            "Total params" | "Trainable params" => v.round().to_string(),
            "Training time (min)" => format!("{v:.2}"),
            _ => format!("{v:.6}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub standard: VariantResult,
    pub improved: VariantResult,
}

impl Comparison {
    pub fn new(standard: VariantResult, improved: VariantResult) -> Result<Self> {
        if standard.dataset != improved.dataset {
            return Err(Error::DatasetMismatch(format!(
                "variants were evaluated on different datasets ({} vs {})",
                standard.dataset, improved.dataset
            )));
        }
        Ok(Comparison { standard, improved })
    }

    /// The six metric rows, in table order.
    pub fn rows(&self) -> Vec<Row> {
        let (s, i) = (&self.standard, &self.improved);
        let row = |metric, standard: f64, improved: f64| Row {
            metric,
            standard,
            improved,
            delta_percent: if standard == improved {
                0.0
            } else {
                100.0 * (improved - standard) / standard
            },
        };
        vec![
            row("Total params", s.total_params as f64, i.total_params as f64),
            row("Trainable params", s.trainable_params as f64, i.trainable_params as f64),
            row("Training time (min)", s.train_minutes, i.train_minutes),
            row("MAE", s.test.mae, i.test.mae),
            row("MSE", s.test.mse, i.test.mse),
            row("SSIM", s.test.ssim, i.test.ssim),
        ]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,standard,improved,delta_percent,change\n");
        for r in self.rows() {
            let _ = writeln!(
                out,
                "{},{},{},{:.4},{}",
                r.metric,
                r.format_value(r.standard),
                r.format_value(r.improved),
                r.delta_percent,
                r.change()
            );
        }
        out
    }

    pub fn to_text(&self) -> String {
        let header = ["Metric", "Standard ConvLSTM", "Improved ConvLSTM", "Improvement"];
        let body: Vec<[String; 4]> = self
            .rows()
            .iter()
            .map(|r| {
                [
                    r.metric.to_string(),
                    r.format_value(r.standard),
                    r.format_value(r.improved),
                    r.change(),
                ]
            })
            .collect();
        let mut widths = header.map(str::len);
        for cells in &body {
            for (w, c) in widths.iter_mut().zip(cells) {
                *w = (*w).max(c.len());
            }
        }
        let mut out = String::new();
        let mut line = |cells: [&str; 4]| {
            let _ = writeln!(
                out,
                "{:<w0$}  {:>w1$}  {:>w2$}  {:<w3$}",
                cells[0],
                cells[1],
                cells[2],
                cells[3],
                w0 = widths[0],
                w1 = widths[1],
                w2 = widths[2],
                w3 = widths[3]
            );
        };
        line(header);
        for cells in &body {
            line([&cells[0], &cells[1], &cells[2], &cells[3]]);
        }
        out.lines().map(str::trim_end).collect::<Vec<_>>().join("\n") + "\n"
    }
}

/// Trained weights and reports from [`compare`], kept for checkpointing.
pub struct CompareRun<T: Real> {
    pub table: Comparison,
    pub standard: (Network<T>, TrainReport),
    pub improved: (Network<T>, TrainReport),
}

/// Trains both configurations on `ds` with the same seed and epoch budget
/// and evaluates them on its test split.
///
/// Identical configurations are trained once: training is deterministic,
/// so a second run would reproduce the same weights and metrics exactly.
pub fn compare<T: Real>(
    standard: &ModelConfig,
    improved: &ModelConfig,
    ds: &Dataset,
    opts: &TrainOptions,
    mut on_epoch: impl FnMut(Variant, &super::train::EpochRecord),
) -> Result<CompareRun<T>> {
    if standard.seed != improved.seed || standard.epochs != improved.epochs {
        return Err(Error::invalid(format!(
            "compared models need the same seed and epoch budget (seed {} vs {}, epochs {} vs {})",
            standard.seed, improved.seed, standard.epochs, improved.epochs
        )));
    }
    let test = ds.test();
    if test.is_empty() {
        return Err(Error::EmptySplit("test"));
    }
    let fingerprint = ds.fingerprint();
    let mut run = |cfg: &ModelConfig| -> Result<(Network<T>, TrainReport, VariantResult)> {
        let (net, report) = train_with(cfg, ds, opts, |e| on_epoch(cfg.variant, e))?;
        let metrics = evaluate(&net, &test)?;
        let result = VariantResult::new(&net, &report, metrics, fingerprint.clone());
        Ok((net, report, result))
    };
    let (sn, sr, sres) = run(standard)?;
    let (inet, ir, ires) = if improved == standard {
        (sn.clone(), sr.clone(), sres.clone())
    } else {
        run(improved)?
    };
    Ok(CompareRun {
        table: Comparison::new(sres, ires)?,
        standard: (sn, sr),
        improved: (inet, ir),
    })
}
