use std::path::Path;

use crate::error::{Error, Result};
use crate::kv::KvDoc;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cylinder {
    pub center_x: f64,
    pub center_y: f64,
    pub diameter: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryMode {
    /// Velocity inlet on the left, pressure outlet on the right, free-slip top and bottom.
    Channel,
    /// Doubly periodic box without inflow (Taylor–Green style tests).
    Periodic,
}

impl BoundaryMode {
    pub fn name(self) -> &'static str {
        match self {
            BoundaryMode::Channel => "channel",
            BoundaryMode::Periodic => "periodic",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "channel" => Some(BoundaryMode::Channel),
            "periodic" => Some(BoundaryMode::Periodic),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub nx: usize,
    pub ny: usize,
    /// Meters.
    pub domain_width: f64,
    pub domain_height: f64,
    /// Inlet speed `U` in m/s; the velocity scale in periodic mode.
    pub inlet_velocity: f64,
    pub density: f64,
    pub dynamic_viscosity: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub cylinders: Vec<Cylinder>,
    /// Target for `max |div u| * dx / U` after each projection.
    pub poisson_tolerance: f64,
    pub max_poisson_iterations: usize,
    /// `None` picks the textbook optimum for the grid.
    pub sor_omega: Option<f64>,
    pub sample_interval: f64,
    /// Fraction of the simulated time treated as start-up transient.
    pub transient_fraction: f64,
    /// Amplitude (relative to `U`) of the cross-stream kick placed behind
    /// each cylinder to break the mirror symmetry of the start-up flow.
    pub perturbation: f64,
    pub boundary: BoundaryMode,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            nx: 256,
            ny: 128,
            domain_width: 0.32,
            domain_height: 0.16,
            inlet_velocity: 0.3,
            density: 1.0,
            dynamic_viscosity: 1.5e-5,
            dt: 0.001,
            n_steps: 20_000,
            cylinders: vec![Cylinder {
                center_x: 0.08,
                center_y: 0.08,
                diameter: 0.01,
            }],
            poisson_tolerance: 1e-5,
            max_poisson_iterations: 10_000,
            sor_omega: None,
            sample_interval: 0.02,
            transient_fraction: 0.25,
            perturbation: 0.1,
            boundary: BoundaryMode::Channel,
        }
    }
}

const KEYS: &[&str] = &[
    "nx",
    "ny",
    "domain_width",
    "domain_height",
    "inlet_velocity",
    "density",
    "dynamic_viscosity",
    "dt",
    "n_steps",
    "cylinders",
    "poisson_tolerance",
    "max_poisson_iterations",
    "sor_omega",
    "sample_interval",
    "transient_fraction",
    "perturbation",
    "boundary",
];

impl SolverConfig {
    /// Two cylinders in line, the second `spacing` diameters downstream of the first.
    pub fn tandem(spacing: f64) -> Self {
        let mut cfg = Self::default();
        let first = cfg.cylinders[0];
        cfg.cylinders.push(Cylinder {
            center_x: first.center_x + spacing * first.diameter,
            ..first
        });
        cfg
    }

    /// Doubly periodic `L x L` box with `ν = mu / rho`, velocity scale `u0`.
    pub fn periodic_box(n: usize, length: f64, u0: f64, nu: f64, dt: f64, n_steps: usize) -> Self {
        SolverConfig {
            nx: n,
            ny: n,
            domain_width: length,
            domain_height: length,
            inlet_velocity: u0,
            density: 1.0,
            dynamic_viscosity: nu,
            dt,
            n_steps,
            cylinders: Vec::new(),
            sample_interval: dt,
            perturbation: 0.0,
            boundary: BoundaryMode::Periodic,
            ..Self::default()
        }
    }

    pub fn dx(&self) -> f64 {
        self.domain_width / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        self.domain_height / self.ny as f64
    }

    pub fn kinematic_viscosity(&self) -> f64 {
        self.dynamic_viscosity / self.density
    }

    /// `ρ U D / μ` of the first cylinder.
    pub fn reynolds(&self) -> Option<f64> {
        self.cylinders
            .first()
            .map(|c| self.density * self.inlet_velocity * c.diameter / self.dynamic_viscosity)
    }

    pub fn cfl(&self) -> f64 {
        self.inlet_velocity.abs() * self.dt / self.dx().min(self.dy())
    }

    pub fn total_time(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }

    /// Steps between snapshots.
    pub fn sample_every(&self) -> Result<usize> {
        let ratio = self.sample_interval / self.dt;
        let every = ratio.round();
        if !(every >= 1.0) || (ratio - every).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::invalid(format!(
                "sample_interval {} is not a positive integer multiple of dt {}",
                self.sample_interval, self.dt
            )));
        }
        Ok(every as usize)
    }

    pub fn omega(&self) -> f64 {
        self.sor_omega.unwrap_or_else(|| {
            // The slowest mode spans the box once (periodic) or a quarter
            // wave between the Neumann inlet and the Dirichlet outlet.
            let n = self.nx.max(self.ny) as f64;
            let waves = match self.boundary {
                BoundaryMode::Periodic => 1.0,
                BoundaryMode::Channel => 2.0,
            };
            2.0 / (1.0 + (std::f64::consts::PI / (waves * n)).sin())
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(m));
        if self.nx < 4 || self.ny < 4 {
            return bad(format!("grid must be at least 4x4, got {}x{}", self.nx, self.ny));
        }
        for (name, v) in [
            ("domain_width", self.domain_width),
            ("domain_height", self.domain_height),
            ("density", self.density),
            ("dynamic_viscosity", self.dynamic_viscosity),
            ("dt", self.dt),
            ("poisson_tolerance", self.poisson_tolerance),
            ("sample_interval", self.sample_interval),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if !self.inlet_velocity.is_finite() || self.inlet_velocity == 0.0 {
            return bad(format!("inlet_velocity must be finite and nonzero, got {}", self.inlet_velocity));
        }
        if !(0.0..1.0).contains(&self.transient_fraction) {
            return bad(format!("transient_fraction must lie in [0, 1), got {}", self.transient_fraction));
        }
        if !self.perturbation.is_finite() {
            return bad("perturbation must be finite".into());
        }
        if self.max_poisson_iterations == 0 {
            return bad("max_poisson_iterations must be positive".into());
        }
        if let Some(w) = self.sor_omega {
            if !(w > 0.0 && w < 2.0) {
                return bad(format!("sor_omega must lie in (0, 2), got {w}"));
            }
        }
        let cfl = self.cfl();
        if !(cfl < 1.0) {
            return bad(format!("CFL number U*dt/dx = {cfl:.3} must be below 1"));
        }
        self.sample_every()?;
        if self.boundary == BoundaryMode::Periodic {
            if !self.cylinders.is_empty() {
                return bad("periodic mode does not support cylinders".into());
            }
            if self.nx % 2 != 0 || self.ny % 2 != 0 {
                return bad("periodic mode needs even grid dimensions".into());
            }
        }
        for (i, c) in self.cylinders.iter().enumerate() {
            let r = c.diameter / 2.0;
            let inside = c.diameter > 0.0
                && c.center_x - r > 2.0 * self.dx()
                && c.center_x + r < self.domain_width - 2.0 * self.dx()
                && c.center_y - r > 2.0 * self.dy()
                && c.center_y + r < self.domain_height - 2.0 * self.dy();
            if !inside {
                return bad(format!("cylinder {i} does not fit inside the domain"));
            }
            if c.diameter < 2.0 * self.dx().max(self.dy()) {
                return bad(format!("cylinder {i} spans fewer than two cells"));
            }
        }
        Ok(())
    }

    /// Writes every field into `section` of `doc`.
    pub fn write_kv(&self, doc: &mut KvDoc, section: &str) {
        let cyl = self
            .cylinders
            .iter()
            .map(|c| format!("{}:{}:{}", c.center_x, c.center_y, c.diameter))
            .collect::<Vec<_>>()
            .join(",");
        let omega = self.sor_omega.map_or("auto".to_string(), |w| w.to_string());
        let values: [(&str, String); 17] = [
            ("nx", self.nx.to_string()),
            ("ny", self.ny.to_string()),
            ("domain_width", self.domain_width.to_string()),
            ("domain_height", self.domain_height.to_string()),
            ("inlet_velocity", self.inlet_velocity.to_string()),
            ("density", self.density.to_string()),
            ("dynamic_viscosity", self.dynamic_viscosity.to_string()),
            ("dt", self.dt.to_string()),
            ("n_steps", self.n_steps.to_string()),
            ("cylinders", cyl),
            ("poisson_tolerance", self.poisson_tolerance.to_string()),
            ("max_poisson_iterations", self.max_poisson_iterations.to_string()),
            ("sor_omega", omega),
            ("sample_interval", self.sample_interval.to_string()),
            ("transient_fraction", self.transient_fraction.to_string()),
            ("perturbation", self.perturbation.to_string()),
            ("boundary", self.boundary.name().to_string()),
        ];
        for (k, v) in values {
            doc.set_in(section, k, v);
        }
    }

    /// Overrides fields from the `(key, value)` pairs; unknown keys are an error.
    pub fn apply<'a>(&mut self, entries: impl IntoIterator<Item = (&'a str, &'a str)>, origin: &Path) -> Result<()> {
        fn num<V: std::str::FromStr>(key: &str, raw: &str, origin: &Path) -> Result<V> {
            raw.parse()
                .map_err(|_| Error::format(origin, format!("cannot parse `{key} = {raw}`")))
        }
        for (key, raw) in entries {
            match key {
                "nx" => self.nx = num(key, raw, origin)?,
                "ny" => self.ny = num(key, raw, origin)?,
                "domain_width" => self.domain_width = num(key, raw, origin)?,
                "domain_height" => self.domain_height = num(key, raw, origin)?,
                "inlet_velocity" => self.inlet_velocity = num(key, raw, origin)?,
                "density" => self.density = num(key, raw, origin)?,
                "dynamic_viscosity" => self.dynamic_viscosity = num(key, raw, origin)?,
                "dt" => self.dt = num(key, raw, origin)?,
                "n_steps" => self.n_steps = num(key, raw, origin)?,
                "poisson_tolerance" => self.poisson_tolerance = num(key, raw, origin)?,
                "max_poisson_iterations" => self.max_poisson_iterations = num(key, raw, origin)?,
                "sample_interval" => self.sample_interval = num(key, raw, origin)?,
                "transient_fraction" => self.transient_fraction = num(key, raw, origin)?,
                "perturbation" => self.perturbation = num(key, raw, origin)?,
                "sor_omega" => {
                    self.sor_omega = match raw {
                        "auto" => None,
                        _ => Some(num(key, raw, origin)?),
                    }
                }
                "boundary" => {
                    self.boundary = BoundaryMode::parse(raw)
                        .ok_or_else(|| Error::format(origin, format!("unknown boundary mode `{raw}`")))?
                }
                "cylinders" => {
                    self.cylinders = raw
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(|item| {
                            let parts: Vec<f64> = item
                                .split(':')
                                .map(|p| num("cylinders", p.trim(), origin))
                                .collect::<Result<_>>()?;
                            match parts[..] {
                                [x, y, d] => Ok(Cylinder {
                                    center_x: x,
                                    center_y: y,
                                    diameter: d,
                                }),
                                _ => Err(Error::format(
                                    origin,
                                    format!("cylinder `{item}` must be `x:y:diameter`"),
                                )),
                            }
                        })
                        .collect::<Result<_>>()?;
                }
                _ => return Err(Error::format(origin, format!("unknown solver key `{key}`"))),
            }
        }
        Ok(())
    }

    pub fn from_kv(doc: &KvDoc, section: &str, origin: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply(
            doc.section_entries(section).filter(|(k, _)| KEYS.contains(k)),
            origin,
        )?;
        Ok(cfg)
    }

    pub fn keys() -> &'static [&'static str] {
        KEYS
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_give_reynolds_200() {
        let cfg = SolverConfig::default();
        let re = cfg.reynolds().unwrap();
        assert!((re - 200.0).abs() <= 2.0, "Re = {re}");
        assert!(cfg.cfl() < 1.0);
        assert_eq!(cfg.sample_every().unwrap(), 20);
        cfg.validate().unwrap();
    }

    #[test]
    fn rejects_bad_configs() {
        let mut cfg = SolverConfig {
            dt: 0.01,
            ..SolverConfig::default()
        };
        assert!(cfg.validate().is_err(), "CFL 2.4 must fail");
        cfg.dt = 0.001;
        cfg.sample_interval = 0.0215;
        assert!(cfg.validate().is_err());
        cfg.sample_interval = 0.02;
        cfg.cylinders[0].center_y = 0.001;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn kv_round_trip() {
        let mut cfg = SolverConfig::tandem(3.0);
        cfg.sor_omega = Some(1.7);
        let mut doc = KvDoc::new();
        cfg.write_kv(&mut doc, "solver");
        let text = doc.render();
        let back = KvDoc::parse(&text, Path::new("x")).unwrap();
        assert_eq!(SolverConfig::from_kv(&back, "solver", Path::new("x")).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_rejected() {
        let mut cfg = SolverConfig::default();
        assert!(cfg.apply([("nxx", "3")], Path::new("c")).is_err());
        assert!(cfg.apply([("cylinders", "1:2")], Path::new("c")).is_err());
        cfg.apply([("cylinders", "")], Path::new("c")).unwrap();
        assert!(cfg.cylinders.is_empty());
    }
}
