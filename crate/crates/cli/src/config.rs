//! Run configuration: one `key = value` file with `[run]`, `[solver]`,
//! `[dataset]`, `[model]`, `[model.standard]` and `[model.improved]` sections.

use std::path::{Path, PathBuf};

use vortexcast::cfd::SolverConfig;
use vortexcast::dataset::DatasetSpec;
use vortexcast::kv::KvDoc;
use vortexcast::model::{ModelConfig, Variant};

use crate::CliError;

pub const SECTIONS: [&str; 6] = ["run", "solver", "dataset", "model", "model.standard", "model.improved"];

/// Sections added to output manifests; ignored on load so a manifest can be
/// passed back as `--config`.
const RECORD_SECTIONS: [&str; 2] = ["invocation", "summary"];

/// Model keys owned by other sections.
const DERIVED_MODEL_KEYS: [(&str, &str); 5] = [
    ("variant", "is chosen per section / on the command line"),
    ("seed", "comes from [run] seed or --seed"),
    ("channels", "follows [dataset] channels"),
    ("t_in", "follows [dataset] t_in"),
    ("t_out", "follows [dataset] t_out"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Config file, if one was given.
    pub source: Option<PathBuf>,
    /// Root of every output directory.
    pub out: PathBuf,
    pub seed: u64,
    /// Variant used by `train` and `eval` when none is given.
    pub variant: Variant,
    /// Wall-clock cap per training run, in minutes.
    pub train_budget_minutes: Option<f64>,
    pub solver: SolverConfig,
    pub dataset: DatasetSpec,
    pub standard: ModelConfig,
    pub improved: ModelConfig,
}

impl RunConfig {
    /// Loads `path`, or the built-in defaults rooted at `./runs` without one.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Self::from_doc(&KvDoc::new(), Path::new("."), None);
        };
        if !path.is_file() {
            return Err(CliError::Config(format!("config file {} not found", path.display())));
        }
        let doc = KvDoc::load(path).map_err(|e| CliError::Config(e.to_string()))?;
        let base = path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf);
        Self::from_doc(&doc, &base, Some(path))
    }

    pub fn from_doc(doc: &KvDoc, base: &Path, source: Option<&Path>) -> Result<Self, CliError> {
        let origin = source.unwrap_or(Path::new("<defaults>"));
        let config_err = |e: vortexcast::Error| CliError::Config(e.to_string());
        for s in doc.sections() {
            if !SECTIONS.contains(&s) && !RECORD_SECTIONS.contains(&s) {
                let what = if s.is_empty() { "keys outside any section".to_string() } else { format!("section [{s}]") };
                return Err(CliError::Config(format!("{}: unknown {what}", origin.display())));
            }
        }

        let mut out = PathBuf::from("runs");
        let mut seed = 0;
        let mut variant = Variant::Improved;
        let mut budget = None;
        for (k, v) in doc.section_entries("run") {
            let bad = || CliError::Config(format!("{}: cannot parse [run] `{k} = {v}`", origin.display()));
            match k {
                "out" => out = PathBuf::from(v),
                "seed" => seed = v.parse().map_err(|_| bad())?,
                "variant" => variant = v.parse().map_err(|_| bad())?,
                "train_budget_minutes" => budget = if v == "none" { None } else { Some(v.parse().map_err(|_| bad())?) },
                _ => return Err(CliError::Config(format!("{}: unknown [run] key `{k}`", origin.display()))),
            }
        }
        let out = absolute(&base.join(out));

        let mut solver = SolverConfig::default();
        solver.apply(doc.section_entries("solver"), origin).map_err(config_err)?;
        solver.validate().map_err(config_err)?;

        let mut dataset = DatasetSpec {
            sources: vec![out.join(crate::SIMULATION_DIR)],
            ..DatasetSpec::default()
        };
        dataset.apply(doc.section_entries("dataset"), origin).map_err(config_err)?;
        if doc.get_in("dataset", "sources").is_some() {
            dataset.sources = dataset.sources.iter().map(|p| absolute(&base.join(p))).collect();
        }
        dataset.validate().map_err(config_err)?;

        for section in ["model", "model.standard", "model.improved"] {
            for (k, _) in doc.section_entries(section) {
                if let Some((_, why)) = DERIVED_MODEL_KEYS.iter().find(|(d, _)| *d == k) {
                    return Err(CliError::Config(format!(
                        "{}: [{section}] `{k}` cannot be set; it {why}",
                        origin.display()
                    )));
                }
            }
        }
        let model = |v: Variant, section: &str| -> Result<ModelConfig, CliError> {
            let mut cfg = ModelConfig::reference(v);
            cfg.apply(doc.section_entries("model"), origin).map_err(config_err)?;
            cfg.apply(doc.section_entries(section), origin).map_err(config_err)?;
            cfg.seed = seed;
            cfg.channels = dataset.channels.len();
            cfg.t_in = dataset.t_in;
            cfg.t_out = dataset.t_out;
            cfg.validate().map_err(config_err)?;
            Ok(cfg)
        };
        Ok(RunConfig {
            source: source.map(Path::to_path_buf),
            out,
            seed,
            variant,
            train_budget_minutes: budget,
            standard: model(Variant::Standard, "model.standard")?,
            improved: model(Variant::Improved, "model.improved")?,
            solver,
            dataset,
        })
    }

    /// Applies `--seed` and `--out`.
    pub fn override_with(&mut self, seed: Option<u64>, out: Option<&Path>) {
        if let Some(s) = seed {
            self.seed = s;
            self.standard.seed = s;
            self.improved.seed = s;
        }
        if let Some(o) = out {
            let default_source = self.out.join(crate::SIMULATION_DIR);
            self.out = absolute(o);
            if self.dataset.sources == [default_source] {
                self.dataset.sources = vec![self.out.join(crate::SIMULATION_DIR)];
            }
        }
    }

    pub fn model(&self, variant: Variant) -> &ModelConfig {
        match variant {
            Variant::Standard => &self.standard,
            Variant::Improved => &self.improved,
        }
    }

    /// Fully resolved configuration; loading it reproduces this run.
    pub fn to_doc(&self) -> KvDoc {
        let mut doc = KvDoc::new();
        doc.set_in("run", "out", self.out.display());
        doc.set_in("run", "seed", self.seed);
        doc.set_in("run", "variant", self.variant);
        doc.set_in(
            "run",
            "train_budget_minutes",
            self.train_budget_minutes.map_or("none".to_string(), |m| m.to_string()),
        );
        self.solver.write_kv(&mut doc, "solver");
        self.dataset.write_kv(&mut doc, "dataset");
        for (section, cfg) in [("model.standard", &self.standard), ("model.improved", &self.improved)] {
            let mut m = KvDoc::new();
            cfg.write_kv(&mut m, "");
            for (k, v) in m.section_entries("") {
                if !DERIVED_MODEL_KEYS.iter().any(|(d, _)| *d == k) {
                    doc.set_in(section, k, v);
                }
            }
        }
        doc
    }

    pub fn digest(&self) -> String {
        self.to_doc().digest()
    }
}

/// Absolute form of `p`, so written manifests can be reloaded from anywhere.
fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig, CliError> {
        let doc = KvDoc::parse(text, Path::new("test.conf")).unwrap();
        RunConfig::from_doc(&doc, Path::new("/base"), Some(Path::new("/base/test.conf")))
    }

    #[test]
    fn defaults_and_relative_paths() {
        let cfg = parse("[run]\nout = r1\nseed = 3\n[dataset]\nmax_samples = 20\n").unwrap();
        assert_eq!(cfg.out, Path::new("/base/r1"));
        assert_eq!(cfg.dataset.sources, vec![PathBuf::from("/base/r1/simulation")]);
        assert_eq!((cfg.standard.seed, cfg.improved.seed), (3, 3));
        let cfg = parse("[dataset]\nsources = a, /abs/b\n").unwrap();
        assert_eq!(cfg.dataset.sources, vec![PathBuf::from("/base/a"), PathBuf::from("/abs/b")]);
    }

    #[test]
    fn model_sections_layer() {
        let cfg = parse("[model]\nepochs = 3\n[model.standard]\nhidden = 8\n").unwrap();
        assert_eq!((cfg.standard.epochs, cfg.improved.epochs), (3, 3));
        assert_eq!(cfg.standard.hidden, vec![8]);
        assert_eq!(cfg.improved.hidden, vec![24]);
    }

    #[test]
    fn unknown_and_derived_keys_are_rejected() {
        for text in [
            "[run]\nspeed = 1\n",
            "[solver]\nnx2 = 4\n",
            "[dataset]\nfoo = 1\n",
            "[model.improved]\nseed = 4\n",
            "[model]\nt_in = 3\n",
            "[extras]\na = 1\n",
            "a = 1\n",
        ] {
            assert!(matches!(parse(text), Err(CliError::Config(_))), "{text}");
        }
    }

    #[test]
    fn resolved_doc_round_trips() {
        let cfg = parse("[run]\nseed = 5\n[solver]\nnx = 128\nny = 64\n[model.improved]\nepochs = 2\n").unwrap();
        let again = RunConfig::from_doc(&cfg.to_doc(), Path::new("/elsewhere"), cfg.source.as_deref()).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.digest(), cfg.digest());
    }
}
