//! Snapshot directories: `manifest.txt`, `frame_%06d_{u,v,p}.vten`, `forces.csv`.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use super::config::SolverConfig;
use super::solver::{FlowSnapshot, ForceRecord};
use super::{RunStats, SimulationSink};
use crate::error::{Error, Result};
use crate::kv::KvDoc;
use crate::tensor::{DType, Tensor};
use crate::vten;

pub const MANIFEST: &str = "manifest.txt";
pub const FORCES: &str = "forces.csv";
pub const FIELDS: [&str; 3] = ["u", "v", "p"];

pub fn frame_path(dir: &Path, index: usize, field: &str) -> PathBuf {
    dir.join(format!("frame_{index:06}_{field}.vten"))
}

/// Streams a run to disk; fields are stored in single precision.
pub struct SnapshotWriter {
    dir: PathBuf,
    cfg: SolverConfig,
    forces: BufWriter<File>,
    count: usize,
}

impl SnapshotWriter {
    /// `dir` must not exist yet or be empty.
    pub fn create(dir: &Path, cfg: &SolverConfig) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(FORCES);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut forces = BufWriter::new(file);
        writeln!(forces, "t,cyl_index,C_D,C_L").map_err(|e| Error::io(&path, e))?;
        Ok(SnapshotWriter {
            dir: dir.to_path_buf(),
            cfg: cfg.clone(),
            forces,
            count: 0,
        })
    }
}

impl SimulationSink for SnapshotWriter {
    fn snapshot(&mut self, index: usize, snap: &FlowSnapshot) -> Result<()> {
        for (name, field) in FIELDS.iter().zip([&snap.u, &snap.v, &snap.p]) {
            vten::write_as(&frame_path(&self.dir, index, name), field, DType::F32)?;
        }
        self.count = index + 1;
        Ok(())
    }

    fn forces(&mut self, records: &[ForceRecord]) -> Result<()> {
        let path = self.dir.join(FORCES);
        for r in records {
            writeln!(self.forces, "{},{},{},{}", r.t, r.cylinder, r.drag, r.lift).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    fn finish(&mut self, stats: &RunStats) -> Result<()> {
        let path = self.dir.join(FORCES);
        self.forces.flush().map_err(|e| Error::io(&path, e))?;
        let mut doc = KvDoc::new();
        self.cfg.write_kv(&mut doc, "");
        doc.set("snapshot_count", self.count);
        doc.set("grid_ny", self.cfg.ny);
        doc.set("grid_nx", self.cfg.nx);
        doc.set("sample_every", self.cfg.sample_every()?);
        doc.set("max_divergence", stats.max_divergence);
        doc.set("max_poisson_iterations_used", stats.max_iterations);
        doc.save(&self.dir.join(MANIFEST))
    }
}

/// Read side of a snapshot directory.
#[derive(Debug, Clone)]
pub struct SnapshotDir {
    pub dir: PathBuf,
    pub cfg: SolverConfig,
    pub count: usize,
    pub sample_every: usize,
}

impl SnapshotDir {
    pub fn open(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let doc = KvDoc::load(&path)?;
        let cfg = SolverConfig::from_kv(&doc, "", &path)?;
        Ok(SnapshotDir {
            dir: dir.to_path_buf(),
            cfg,
            count: doc.parse_value("snapshot_count", &path)?,
            sample_every: doc.parse_value("sample_every", &path)?,
        })
    }

    pub fn time(&self, index: usize) -> f64 {
        ((index + 1) * self.sample_every) as f64 * self.cfg.dt
    }

    pub fn load(&self, index: usize) -> Result<FlowSnapshot> {
        if index >= self.count {
            return Err(Error::invalid(format!(
                "frame {index} out of range ({} snapshots)",
                self.count
            )));
        }
        let mut fields: Vec<Tensor<f64>> = Vec::with_capacity(3);
        for name in FIELDS {
            let t: Tensor<f64> = vten::read(&frame_path(&self.dir, index, name))?;
            if t.shape() != [self.cfg.ny, self.cfg.nx] {
                return Err(Error::format(
                    frame_path(&self.dir, index, name),
                    format!("expected shape [{}, {}], got {:?}", self.cfg.ny, self.cfg.nx, t.shape()),
                ));
            }
            fields.push(t);
        }
        let p = fields.pop().unwrap();
        let v = fields.pop().unwrap();
        let u = fields.pop().unwrap();
        Ok(FlowSnapshot {
            t: self.time(index),
            u,
            v,
            p,
        })
    }

    pub fn forces(&self) -> Result<Vec<ForceRecord>> {
        read_forces(&self.dir.join(FORCES))
    }
}

pub fn read_forces(path: &Path) -> Result<Vec<ForceRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if n == 0 {
            if line.trim() != "t,cyl_index,C_D,C_L" {
                return Err(Error::format(path, "unexpected forces header"));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let bad = || Error::format(path, format!("line {}: malformed record", n + 1));
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 4 {
            return Err(bad());
        }
        out.push(ForceRecord {
            t: parts[0].parse().map_err(|_| bad())?,
            cylinder: parts[1].parse().map_err(|_| bad())?,
            drag: parts[2].parse().map_err(|_| bad())?,
            lift: parts[3].parse().map_err(|_| bad())?,
        });
    }
    Ok(out)
}
