use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use vortexcast::cfd::{self, FlowSnapshot, ForceRecord, RunStats, SimulationSink, SnapshotDir, SnapshotWriter};
use vortexcast::dataset::{build_dataset, Channel, Dataset, FrameSource};
use vortexcast::kv::KvDoc;
use vortexcast::model::{
    checkpoint, compare, evaluate, evaluate_persistence, evaluate_rollout, rollout, to_precision, train_with,
    EpochRecord, FrameIndex, MetricTriple, ModelConfig, Network, TrainOptions, TrainReport, Variant,
};
use vortexcast::nn::Parameters;
use vortexcast::render::{triptych, Field, Image};
use vortexcast::{vten, DType, Real, Tensor};

use crate::config::RunConfig;
use crate::{
    parse_field, Cli, CliError, Command, EvalArgs, RenderArgs, COMPARE_DIR, DATASET_DIR, RENDER_DIR, RUN_MANIFEST,
    SIMULATION_DIR,
};

pub const CHECKPOINT_DIR: &str = "checkpoint";

pub fn train_dir(out: &Path, variant: Variant) -> PathBuf {
    out.join(format!("train-{variant}"))
}

pub fn eval_dir(out: &Path, variant: Variant) -> PathBuf {
    out.join(format!("eval-{variant}"))
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    cfg.override_with(cli.seed, cli.out.as_deref());
    let ctx = Context { cfg, force: cli.force };
    match &cli.command {
        Command::Simulate => ctx.simulate(),
        Command::Dataset => ctx.dataset(),
        Command::Train(args) => {
            let variant = args.variant.unwrap_or(ctx.cfg.variant);
            match ctx.cfg.model(variant).precision {
                DType::F32 => ctx.train::<f32>(variant),
                DType::F64 => ctx.train::<f64>(variant),
            }
        }
        Command::Eval(args) => {
            let variant = args.variant.variant.unwrap_or(ctx.cfg.variant);
            match ctx.cfg.model(variant).precision {
                DType::F32 => ctx.eval::<f32>(variant, args),
                DType::F64 => ctx.eval::<f64>(variant, args),
            }
        }
        Command::Compare => {
            let (s, i) = (ctx.cfg.standard.precision, ctx.cfg.improved.precision);
            match (s, i) {
                (DType::F32, DType::F32) => ctx.compare::<f32>(),
                (DType::F64, DType::F64) => ctx.compare::<f64>(),
                _ => Err(CliError::Config("compared models must use the same precision".into())),
            }
        }
        Command::Render(args) => ctx.render(args),
    }
}

struct Context {
    cfg: RunConfig,
    force: bool,
}

fn require(path: &Path, what: &'static str) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Missing {
            what,
            path: path.to_path_buf(),
        })
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Run(vortexcast::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn metrics_line(m: &MetricTriple) -> String {
    format!("MAE {:.6}  MSE {:.6}  SSIM {:.4}", m.mae, m.mse, m.ssim)
}

impl Context {
    /// Creates `dir`, refusing to touch a non-empty one unless `--force`.
    fn prepare(&self, dir: &Path) -> Result<(), CliError> {
        let occupied = dir.exists() && fs::read_dir(dir).map_or(true, |mut d| d.next().is_some());
        if occupied {
            if !self.force {
                return Err(CliError::Exists(dir.to_path_buf()));
            }
            fs::remove_dir_all(dir).map_err(|e| io_err(dir, e))?;
        }
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
    }

    /// Resolved config plus how it was invoked.
    fn write_manifest(&self, dir: &Path, command: &str, extra: &KvDoc) -> Result<(), CliError> {
        let mut doc = self.cfg.to_doc();
        doc.set_in("invocation", "command", command);
        doc.set_in(
            "invocation",
            "config",
            self.cfg
                .source
                .as_ref()
                .map_or("<defaults>".to_string(), |p| p.display().to_string()),
        );
        doc.set_in("invocation", "config_digest", self.cfg.digest());
        doc.set_in("invocation", "seed", self.cfg.seed);
        doc.set_in("invocation", "version", env!("CARGO_PKG_VERSION"));
        for section in extra.sections() {
            for (k, v) in extra.section_entries(section) {
                doc.set_in(section, k, v);
            }
        }
        doc.save(&dir.join(RUN_MANIFEST)).map_err(CliError::Run)
    }

    fn simulate(&self) -> Result<(), CliError> {
        let dir = self.cfg.out.join(SIMULATION_DIR);
        self.prepare(&dir)?;
        let solver = &self.cfg.solver;
        let mut sink = Progress {
            inner: SnapshotWriter::create(&dir, solver)?,
            forces: Vec::new(),
            steps: solver.n_steps,
            cylinders: solver.cylinders.len().max(1),
            next_report: (solver.n_steps / 10).max(1),
        };
        eprintln!(
            "simulating {} steps on a {}x{} grid (Re = {})",
            solver.n_steps,
            solver.nx,
            solver.ny,
            solver.reynolds().map_or("n/a".to_string(), |r| format!("{r:.0}"))
        );
        let stats = cfd::run_simulation_with(solver, &mut sink)?;

        let mut summary = KvDoc::new();
        summary.set_in("summary", "steps", stats.steps);
        summary.set_in("summary", "snapshots", stats.snapshots);
        summary.set_in("summary", "max_divergence", stats.max_divergence);
        summary.set_in("summary", "max_poisson_iterations", stats.max_iterations);
        println!("snapshots: {}  max divergence: {:.3e}", stats.snapshots, stats.max_divergence);
        let end = sink.forces.iter().map(|r| r.t).fold(0.0, f64::max);
        for c in 0..solver.cylinders.len() {
            let kept: Vec<&ForceRecord> = sink
                .forces
                .iter()
                .filter(|r| r.cylinder == c && r.t >= solver.transient_fraction * end)
                .collect();
            let mean_cd = kept.iter().map(|r| r.drag).sum::<f64>() / kept.len().max(1) as f64;
            let st = cfd::strouhal(&sink.forces, solver, c);
            let st_text = match &st {
                Ok(v) => format!("{v:.4}"),
                Err(e) => format!("n/a ({e})"),
            };
            println!("cylinder {c}: St = {st_text}  mean C_D = {mean_cd:.4}");
            summary.set_in("summary", &format!("cylinder{c}_strouhal"), st.map_or("none".into(), |v| v.to_string()));
            summary.set_in("summary", &format!("cylinder{c}_mean_drag"), mean_cd);
        }
        self.write_manifest(&dir, "simulate", &summary)
    }

    fn dataset(&self) -> Result<(), CliError> {
        for src in &self.cfg.dataset.sources {
            require(&src.join(cfd::MANIFEST), "snapshot directory (run `simulate` first)")?;
        }
        let dir = self.cfg.out.join(DATASET_DIR);
        self.prepare(&dir)?;
        let ds = build_dataset(&self.cfg.dataset)?;
        ds.save(&dir)?;
        let persistence = evaluate_persistence(&ds.test())?;
        println!(
            "samples: {} (train {}, val {}, test {})",
            ds.samples.len(),
            ds.split.train.len(),
            ds.split.val.len(),
            ds.split.test.len()
        );
        println!("persistence baseline on test: {}", metrics_line(&persistence));
        let mut extra = KvDoc::new();
        extra.set_in("summary", "samples", ds.samples.len());
        extra.set_in("summary", "dataset_digest", ds.fingerprint());
        self.write_manifest(&dir, "dataset", &extra)
    }

    fn load_dataset(&self) -> Result<Dataset, CliError> {
        let dir = self.cfg.out.join(DATASET_DIR);
        require(&dir.join(cfd::MANIFEST), "dataset (run `dataset` first)")?;
        Ok(Dataset::load(&dir)?)
    }

    fn options(&self) -> TrainOptions {
        TrainOptions {
            time_budget: self.cfg.train_budget_minutes.map(|m| Duration::from_secs_f64(m * 60.0)),
        }
    }

    fn train<T: Real>(&self, variant: Variant) -> Result<(), CliError> {
        let ds = self.load_dataset()?;
        let dir = train_dir(&self.cfg.out, variant);
        self.prepare(&dir)?;
        let cfg = self.cfg.model(variant);
        eprintln!("training {variant} model ({} parameters)", cfg.param_count());
        let (net, report) = train_with::<T>(cfg, &ds, &self.options(), print_epoch(variant))?;
        save_trained(&dir, cfg, &net, &report, &ds)?;
        match report.best() {
            Some(b) => println!("best epoch {} of {}: val {}", b.epoch, report.epochs.len(), metrics_line(&b.val)),
            None => println!("no epochs run; saved the initial weights"),
        }
        if let Some(reason) = &report.stop_reason {
            println!("stopped early: {reason}");
        }
        let mut extra = KvDoc::new();
        extra.set_in("summary", "wall_seconds", report.wall_seconds);
        self.write_manifest(&dir, &format!("train --variant {variant}"), &extra)
    }

    fn eval<T: Real>(&self, variant: Variant, args: &EvalArgs) -> Result<(), CliError> {
        if args.horizon < 1 {
            return Err(CliError::Usage("--horizon must be at least 1".into()));
        }
        let ds = self.load_dataset()?;
        let ckpt = train_dir(&self.cfg.out, variant).join(CHECKPOINT_DIR);
        require(&ckpt.join(checkpoint::MANIFEST), "checkpoint (run `train` first)")?;
        let (_, net, doc) = checkpoint::load::<T>(&ckpt)?;
        if let Some(d) = doc.get_in("checkpoint", "dataset_digest") {
            if d != ds.fingerprint() {
                return Err(CliError::Run(vortexcast::Error::DatasetMismatch(format!(
                    "checkpoint {} was trained on a different dataset",
                    ckpt.display()
                ))));
            }
        }
        let dir = eval_dir(&self.cfg.out, variant);
        self.prepare(&dir)?;
        let test = ds.test();
        let model = evaluate(&net, &test)?;
        let persistence = evaluate_persistence(&test)?;
        let mut csv = String::from("predictor,mae,mse,ssim\n");
        for (name, m) in [(variant.name(), &model), ("persistence", &persistence)] {
            let _ = writeln!(csv, "{name},{},{},{}", m.mae, m.mse, m.ssim);
        }
        write_text(&dir.join("metrics.csv"), &csv)?;
        println!("test {variant}:      {}", metrics_line(&model));
        println!("test persistence: {}", metrics_line(&persistence));

        let per_h = evaluate_rollout(&net, &ds, &test, args.horizon)?;
        let mut csv = String::from("horizon,mae,mse,ssim\n");
        for (h, m) in per_h.iter().enumerate() {
            let _ = writeln!(csv, "{},{},{},{}", h + 1, m.mae, m.mse, m.ssim);
        }
        write_text(&dir.join("horizon.csv"), &csv)?;
        println!(
            "rollout SSIM: {}",
            per_h.iter().map(|m| format!("{:.4}", m.ssim)).collect::<Vec<_>>().join(" ")
        );

        let pred_dir = dir.join("predictions");
        fs::create_dir_all(&pred_dir).map_err(|e| io_err(&pred_dir, e))?;
        let index = FrameIndex::new(&ds);
        let chosen = ds
            .split
            .test
            .iter()
            .copied()
            .filter(|&i| index.future(&ds.samples[i], ds.spec.t_in, args.horizon).is_some())
            .take(args.save_predictions);
        for i in chosen {
            let s = &ds.samples[i];
            let truth = index.future(s, ds.spec.t_in, args.horizon).expect("filtered");
            let pred = rollout(&net, &to_precision::<T>(&s.input), args.horizon)?;
            let stem = format!("sample_{i:06}");
            vten::write_as(&pred_dir.join(format!("{stem}_input.vten")), &s.input, DType::F32)?;
            vten::write_as(&pred_dir.join(format!("{stem}_truth.vten")), &truth, DType::F32)?;
            vten::write_as(&pred_dir.join(format!("{stem}_pred.vten")), &pred, DType::F32)?;
        }
        let mut extra = KvDoc::new();
        extra.set_in("summary", "horizon", args.horizon);
        extra.set_in("summary", "checkpoint", ckpt.display());
        self.write_manifest(&dir, &format!("eval --variant {variant} --horizon {}", args.horizon), &extra)
    }

    fn compare<T: Real>(&self) -> Result<(), CliError> {
        let ds = self.load_dataset()?;
        let dir = self.cfg.out.join(COMPARE_DIR);
        self.prepare(&dir)?;
        let run = compare::<T>(&self.cfg.standard, &self.cfg.improved, &ds, &self.options(), |v, e| {
            print_epoch(v)(e)
        })?;
        for ((net, report), cfg) in [(&run.standard, &self.cfg.standard), (&run.improved, &self.cfg.improved)] {
            save_trained(&dir.join(cfg.variant.name()), cfg, net, report, &ds)?;
        }
        write_text(&dir.join("table.csv"), &run.table.to_csv())?;
        let text = run.table.to_text();
        write_text(&dir.join("table.txt"), &text)?;
        print!("{text}");
        self.write_manifest(&dir, "compare", &KvDoc::new())
    }

    fn render(&self, args: &RenderArgs) -> Result<(), CliError> {
        let field = parse_field(&args.field)?;
        require(&args.input, "render input")?;
        let dir = self.cfg.out.join(RENDER_DIR);
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        let stem = args
            .input
            .file_stem()
            .map_or("input".to_string(), |s| s.to_string_lossy().into_owned());
        let mut images: Vec<(String, Image)> = Vec::new();

        if args.input.is_dir() {
            let snaps = SnapshotDir::open(&args.input)?;
            if snaps.frame_count() == 0 {
                return Err(CliError::Usage(format!("{} holds no snapshots", args.input.display())));
            }
            let k = args.frame.unwrap_or(snaps.frame_count() - 1);
            if k >= snaps.frame_count() {
                return Err(CliError::Usage(format!("--frame {k} out of range ({} snapshots)", snaps.frame_count())));
            }
            let snap: FlowSnapshot = snaps.load(k)?;
            images.push((format!("{stem}_frame{k:06}_{field}"), Image::from_field(&field.extract(&snap))?));
        } else {
            let tensor: Tensor<f64> = vten::read(&args.input)?;
            let frames = self.tensor_frames(&tensor, field, args.frame)?;
            let truth_path = sibling_truth(&args.input);
            let truth = match &truth_path {
                Some(p) if p.exists() => {
                    let t: Tensor<f64> = vten::read(p)?;
                    Some(self.tensor_frames(&t, field, args.frame)?)
                }
                _ => None,
            };
            for (k, plane) in &frames {
                images.push((format!("{stem}_t{k:03}_{field}"), Image::from_field(plane)?));
            }
            if let Some(truth) = truth {
                for ((k, p), (_, t)) in frames.iter().zip(&truth) {
                    images.push((format!("{stem}_t{k:03}_{field}_triptych"), triptych(t, p)?));
                }
            }
        }

        for (name, img) in &images {
            let mut targets = vec![(dir.join(format!("{name}.pgm")), false)];
            if args.color {
                targets.push((dir.join(format!("{name}.ppm")), true));
            }
            for (path, color) in targets {
                if path.exists() && !self.force {
                    return Err(CliError::Exists(path));
                }
                if color {
                    img.save_ppm(&path)?;
                } else {
                    img.save_pgm(&path)?;
                }
                println!("{}", path.display());
            }
        }
        Ok(())
    }

    /// `(frame index, (h, w) plane)` pairs of `field` from a tensor file.
    fn tensor_frames(&self, t: &Tensor<f64>, field: Field, frame: Option<usize>) -> Result<Vec<(usize, Tensor<f64>)>, CliError> {
        let channels = &self.cfg.dataset.channels;
        let pick = |chw: &Tensor<f64>| -> Result<Tensor<f64>, CliError> {
            let channel = |c: Channel| -> Result<Tensor<f64>, CliError> {
                let i = channels.iter().position(|&x| x == c).ok_or_else(|| {
                    CliError::Usage(format!("field {field} needs channel {c}, but the dataset has {channels:?}"))
                })?;
                if i >= chw.shape()[0] {
                    return Err(CliError::Usage(format!("tensor has no channel {i}")));
                }
                Ok(chw.index_axis0(i))
            };
            match field {
                Field::U => channel(Channel::U),
                Field::V => channel(Channel::V),
                Field::P => channel(Channel::P),
                Field::Magnitude => Ok(channel(Channel::U)?.zip_map(&channel(Channel::V)?, "magnitude", f64::hypot)?),
            }
        };
        match t.rank() {
            2 => Ok(vec![(0, t.clone())]),
            3 => Ok(vec![(0, pick(t)?)]),
            4 => {
                let n = t.shape()[0];
                let ks: Vec<usize> = match frame {
                    Some(k) if k < n => vec![k],
                    Some(k) => return Err(CliError::Usage(format!("--frame {k} out of range ({n} frames)"))),
                    None => (0..n).collect(),
                };
                ks.into_iter().map(|k| Ok((k, pick(&t.index_axis0(k))?))).collect()
            }
            r => Err(CliError::Usage(format!("cannot render a rank-{r} tensor"))),
        }
    }
}

fn sibling_truth(path: &Path) -> Option<PathBuf> {
    let name = path.file_name()?.to_str()?;
    let stem = name.strip_suffix("_pred.vten")?;
    Some(path.with_file_name(format!("{stem}_truth.vten")))
}

fn print_epoch(variant: Variant) -> impl Fn(&EpochRecord) {
    move |e: &EpochRecord| {
        eprintln!(
            "[{variant}] epoch {:>3}  loss {:.6}  val {}  ({:.1} s)",
            e.epoch,
            e.train_loss,
            metrics_line(&e.val),
            e.seconds
        )
    }
}

/// Checkpoint plus `history.csv` under `dir`.
fn save_trained<T: Real>(dir: &Path, cfg: &ModelConfig, net: &Network<T>, report: &TrainReport, ds: &Dataset) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut extra = KvDoc::new();
    extra.set_in("checkpoint", "best_epoch", report.best_epoch.map_or(0, |e| e));
    extra.set_in("checkpoint", "epochs_run", report.epochs.len());
    extra.set_in("checkpoint", "param_count", net.count_params());
    extra.set_in("checkpoint", "dataset_digest", ds.fingerprint());
    if let Some(b) = report.best() {
        extra.set_in("checkpoint", "val_mae", b.val.mae);
        extra.set_in("checkpoint", "val_mse", b.val.mse);
        extra.set_in("checkpoint", "val_ssim", b.val.ssim);
    }
    if let Some(r) = &report.stop_reason {
        extra.set_in("checkpoint", "stop_reason", r);
    }
    checkpoint::save(&dir.join(CHECKPOINT_DIR), cfg, net, &extra)?;
    let mut csv = String::from("epoch,train_loss,val_mae,val_mse,val_ssim,seconds\n");
    for e in &report.epochs {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{:.3}",
            e.epoch, e.train_loss, e.val.mae, e.val.mse, e.val.ssim, e.seconds
        );
    }
    write_text(&dir.join("history.csv"), &csv)
}

/// Forwards to the snapshot writer, keeps the force history and reports progress.
struct Progress {
    inner: SnapshotWriter,
    forces: Vec<ForceRecord>,
    steps: usize,
    cylinders: usize,
    next_report: usize,
}

impl SimulationSink for Progress {
    fn snapshot(&mut self, index: usize, snapshot: &FlowSnapshot) -> vortexcast::Result<()> {
        self.inner.snapshot(index, snapshot)
    }

    fn forces(&mut self, records: &[ForceRecord]) -> vortexcast::Result<()> {
        self.forces.extend_from_slice(records);
        let step = self.forces.len() / self.cylinders;
        if step >= self.next_report {
            eprintln!("step {step}/{}", self.steps);
            self.next_report += (self.steps / 10).max(1);
        }
        self.inner.forces(records)
    }

    fn finish(&mut self, stats: &RunStats) -> vortexcast::Result<()> {
        self.inner.finish(stats)
    }
}
