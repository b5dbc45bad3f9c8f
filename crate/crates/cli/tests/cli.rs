use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY: &str = "\
[run]
out = runs
[solver]
nx = 64
ny = 32
n_steps = 300
sample_interval = 0.005
[dataset]
out_height = 8
out_width = 16
t_in = 3
max_samples = 20
[model]
epochs = 2
batch_size = 4
precision = f64
[model.standard]
hidden = 4
[model.improved]
front_width = 4
se_ratio = 2
hidden = 4
";

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("tiny.conf"), TINY).unwrap();
        Workspace { dir }
    }

    fn root(&self) -> &Path {
        self.dir.path()
    }

    fn runs(&self) -> PathBuf {
        self.root().join("runs")
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_vortexcast"))
            .current_dir(self.root())
            .arg("--config")
            .arg("tiny.conf")
            .args(args)
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let out = self.run(args);
        assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
        String::from_utf8(out.stdout).unwrap()
    }

    fn prepared(self) -> Self {
        self.ok(&["simulate"]);
        self.ok(&["dataset"]);
        self
    }
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn missing_config_exits_2_and_names_the_path() {
    let out = Command::new(env!("CARGO_BIN_EXE_vortexcast"))
        .args(["--config", "/nonexistent/run.conf", "simulate"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("/nonexistent/run.conf"));
}

#[test]
fn unknown_config_key_exits_2() {
    let ws = Workspace::new();
    fs::write(ws.root().join("tiny.conf"), format!("{TINY}\n[solver]\nwarp = 9\n")).unwrap();
    assert_eq!(code(&ws.run(&["simulate"])), 2);
}

#[test]
fn rerun_without_force_is_refused() {
    let ws = Workspace::new();
    let first = ws.ok(&["simulate"]);
    assert!(first.contains("St = ") && first.contains("mean C_D"));
    let again = ws.run(&["simulate"]);
    assert_eq!(code(&again), 3);
    assert!(stderr(&again).contains("--force"));
    ws.ok(&["--force", "simulate"]);
}

#[test]
fn missing_upstream_artifacts_exit_4() {
    let ws = Workspace::new();
    let out = ws.run(&["dataset"]);
    assert_eq!(code(&out), 4);
    assert!(stderr(&out).contains("simulation"));
    for args in [&["train"][..], &["compare"], &["render", "nowhere.vten"]] {
        assert_eq!(code(&ws.run(args)), 4, "{args:?}");
    }
    ws.ok(&["simulate"]);
    ws.ok(&["dataset"]);
    let out = ws.run(&["eval", "--variant", "standard"]);
    assert_eq!(code(&out), 4);
    assert!(stderr(&out).contains("train-standard"));
}

#[test]
fn bad_flags_and_fields_exit_5() {
    let ws = Workspace::new();
    ws.ok(&["simulate"]);
    assert_eq!(code(&ws.run(&["render", "runs/simulation", "--field", "w"])), 5);
    assert_eq!(code(&ws.run(&["train", "--variant", "huge"])), 5);
    assert_eq!(code(&ws.run(&["frobnicate"])), 5);
}

#[test]
fn end_to_end_pipeline() {
    let ws = Workspace::new().prepared();
    let runs = ws.runs();
    let frames = fs::read_dir(runs.join("simulation"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().ends_with("_u.vten"))
        .count();
    assert_eq!(frames, 60);
    assert!(runs.join("simulation/forces.csv").exists());

    ws.ok(&["train", "--variant", "improved"]);
    let history = fs::read_to_string(runs.join("train-improved/history.csv")).unwrap();
    assert_eq!(history.lines().count(), 3);

    ws.ok(&["eval", "--variant", "improved", "--horizon", "4"]);
    let eval = runs.join("eval-improved");
    let horizon = fs::read_to_string(eval.join("horizon.csv")).unwrap();
    let lines: Vec<&str> = horizon.lines().collect();
    assert_eq!(lines[0], "horizon,mae,mse,ssim");
    assert_eq!(lines.len(), 5);
    for (h, line) in lines[1..].iter().enumerate() {
        assert!(line.starts_with(&format!("{},", h + 1)));
        let ssim: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!((-1.0..=1.0).contains(&ssim));
    }
    let metrics = fs::read_to_string(eval.join("metrics.csv")).unwrap();
    assert!(metrics.contains("\nimproved,") && metrics.contains("\npersistence,"));

    let pred = fs::read_dir(eval.join("predictions"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.to_string_lossy().ends_with("_pred.vten"))
        .unwrap();
    let listing = ws.ok(&["render", pred.to_str().unwrap(), "--field", "mag", "--color"]);
    let triptychs: Vec<&str> = listing.lines().filter(|l| l.ends_with("_triptych.pgm")).collect();
    assert_eq!(triptychs.len(), 4);
    let bytes = fs::read(triptychs[0]).unwrap();
    assert!(bytes.starts_with(format!("P5\n{} 8\n255\n", 3 * 16 + 4).as_bytes()));
    assert!(listing.lines().any(|l| l.ends_with(".ppm")));

    let out = ws.ok(&["compare"]);
    assert!(out.contains("Total params"));
    let table = fs::read_to_string(runs.join("compare/table.csv")).unwrap();
    let metrics: Vec<&str> = table.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(
        metrics,
        ["Total params", "Trainable params", "Training time (min)", "MAE", "MSE", "SSIM"]
    );
    assert!(runs.join("compare/table.txt").exists());
    for v in ["standard", "improved"] {
        assert!(runs.join(format!("compare/{v}/checkpoint/manifest.txt")).exists());
    }
}

#[test]
fn every_output_has_a_rerunnable_manifest() {
    let ws = Workspace::new().prepared();
    ws.ok(&["train"]);
    let manifest = ws.runs().join("train-improved/run.txt");
    let text = fs::read_to_string(&manifest).unwrap();
    assert!(text.contains("[invocation]") && text.contains("config_digest = ") && text.contains("seed = 0"));
    for dir in ["simulation", "dataset"] {
        assert!(ws.runs().join(dir).join("run.txt").exists(), "{dir}");
    }

    // The manifest is itself a config that reproduces the run from anywhere.
    let weights = || fs::read(ws.runs().join("train-improved/checkpoint/lstm0.input_kernel.vten")).unwrap();
    let before = weights();
    let elsewhere = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_vortexcast"))
        .current_dir(elsewhere.path())
        .arg("--config")
        .arg(&manifest)
        .args(["--force", "train"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(weights(), before);
}

#[test]
fn same_seed_gives_identical_checkpoints() {
    let ws = Workspace::new().prepared();
    let ckpt = || {
        let runs = ws.runs();
        let out = Command::new(env!("CARGO_BIN_EXE_vortexcast"))
            .current_dir(ws.root())
            .args(["--config", "tiny.conf", "--seed", "7", "--force", "train"])
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", stderr(&out));
        let src = runs.join("train-improved/checkpoint");
        let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(&src)
            .unwrap()
            .map(|e| {
                let p = e.unwrap().path();
                (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
            })
            .collect();
        files.sort();
        files
    };
    let a = ckpt();
    let b = ckpt();
    assert!(a.len() > 5);
    assert_eq!(a, b);
    let manifest = &a.iter().find(|(n, _)| n == "manifest.txt").unwrap().1;
    assert!(String::from_utf8_lossy(manifest).contains("seed = 7"));
}
