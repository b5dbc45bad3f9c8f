//! Two-dimensional incompressible flow past cylinders.

mod config;
mod grid;
mod io;
mod poisson;
mod solver;
mod strouhal;

pub use config::{BoundaryMode, Cylinder, SolverConfig};
pub use io::{frame_path, read_forces, SnapshotDir, SnapshotWriter, FIELDS, FORCES, MANIFEST};
pub use solver::{FlowSnapshot, ForceRecord, Solver, StepStats};
pub use strouhal::{dominant_frequency, strouhal, MIN_PERIODS, PEAK_TO_MEDIAN};

use crate::error::{Error, Result};

/// Receives the output streams of a run as they are produced.
pub trait SimulationSink {
    fn snapshot(&mut self, index: usize, snapshot: &FlowSnapshot) -> Result<()>;
    /// One record per cylinder, every step.
    fn forces(&mut self, records: &[ForceRecord]) -> Result<()>;
    fn finish(&mut self, _stats: &RunStats) -> Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunStats {
    pub steps: usize,
    pub snapshots: usize,
    /// Largest post-projection divergence over all steps.
    pub max_divergence: f64,
    pub max_iterations: usize,
    pub total_iterations: usize,
}

impl RunStats {
    fn record(&mut self, s: &StepStats) {
        self.steps += 1;
        self.max_divergence = self.max_divergence.max(s.divergence);
        self.max_iterations = self.max_iterations.max(s.iterations);
        self.total_iterations += s.iterations;
    }
}

/// In-memory result of [`run_simulation`].
#[derive(Debug, Clone, Default)]
pub struct SimulationOutput {
    pub snapshots: Vec<FlowSnapshot>,
    pub forces: Vec<ForceRecord>,
    pub stats: RunStats,
}

impl SimulationSink for SimulationOutput {
    fn snapshot(&mut self, _index: usize, snapshot: &FlowSnapshot) -> Result<()> {
        self.snapshots.push(snapshot.clone());
        Ok(())
    }

    fn forces(&mut self, records: &[ForceRecord]) -> Result<()> {
        self.forces.extend_from_slice(records);
        Ok(())
    }

    fn finish(&mut self, stats: &RunStats) -> Result<()> {
        self.stats = *stats;
        Ok(())
    }
}

pub fn run_simulation(cfg: &SolverConfig) -> Result<SimulationOutput> {
    let mut out = SimulationOutput::default();
    run_simulation_with(cfg, &mut out)?;
    Ok(out)
}

/// Runs `cfg.n_steps` steps, emitting a snapshot every `sample_interval`
/// and force records every step.
pub fn run_simulation_with(cfg: &SolverConfig, sink: &mut dyn SimulationSink) -> Result<RunStats> {
    let every = cfg.sample_every()?;
    let mut solver = Solver::new(cfg)?;
    let mut stats = RunStats::default();
    for n in 1..=cfg.n_steps {
        let s = solver.step().map_err(|e| match e {
            Error::PoissonNotConverged { .. } | Error::NonFinite { .. } => e,
            other => Error::Simulation {
                step: n,
                source: Box::new(other),
            },
        })?;
        stats.record(&s);
        let t = solver.time();
        let records: Vec<ForceRecord> = solver
            .force_coefficients()
            .into_iter()
            .enumerate()
            .map(|(k, (drag, lift))| ForceRecord {
                t,
                cylinder: k,
                drag,
                lift,
            })
            .collect();
        sink.forces(&records)?;
        if n % every == 0 {
            sink.snapshot(stats.snapshots, &solver.snapshot())?;
            stats.snapshots += 1;
        }
    }
    sink.finish(&stats)?;
    Ok(stats)
}
