//! Projection-method solver on a marker-and-cell grid.
//!
//! `u` lives on vertical faces (`(nx + 1) x ny`), `v` on horizontal faces
//! (`nx x (ny + 1)`), pressure at cell centres. Each step advances
//! momentum without the pressure gradient using three-stage SSP
//! Runge–Kutta (third-order upwind-biased advection in advective form,
//! five-point diffusion), then projects onto the discretely
//! divergence-free space with `φ = p dt / ρ`.
//!
//! Cylinders are rasterised onto the grid: a cell whose centre lies
//! inside a cylinder is solid, every face touching a solid cell carries
//! zero velocity, and solid cells drop out of the pressure equation.

use super::config::{BoundaryMode, SolverConfig};
use super::grid::{upwind3, Grid};
use super::poisson::{RedBlackSor, SorOutcome, Stencil};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSnapshot {
    pub t: f64,
    /// Cell-centred fields of shape `(ny, nx)`.
    pub u: Tensor<f64>,
    pub v: Tensor<f64>,
    pub p: Tensor<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForceRecord {
    pub t: f64,
    pub cylinder: usize,
    pub drag: f64,
    pub lift: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepStats {
    pub iterations: usize,
    /// `max |div u| * dx / U` after projection.
    pub divergence: f64,
}

pub struct Solver {
    cfg: SolverConfig,
    nx: usize,
    ny: usize,
    dx: f64,
    dy: f64,
    nu: f64,
    u: Grid,
    v: Grid,
    phi: Grid,
    phi_prev: Grid,
    /// 0 for fluid, `k + 1` for a cell inside cylinder `k`.
    solid: Vec<u8>,
    u_blocked: Vec<bool>,
    v_blocked: Vec<bool>,
    poisson: RedBlackSor,
    phi_flat: Vec<f64>,
    step: usize,
    // scratch
    u0: Grid,
    v0: Grid,
    ru: Grid,
    rv: Grid,
    rhs: Vec<f64>,
}

impl Solver {
    /// Channel mode starts from uniform inflow plus the symmetry-breaking
    /// kick; periodic mode starts from the Taylor–Green vortex.
    pub fn new(cfg: &SolverConfig) -> Result<Self> {
        match cfg.boundary {
            BoundaryMode::Channel => {
                let u_in = cfg.inlet_velocity;
                let eps = cfg.perturbation * u_in;
                let kicks: Vec<(f64, f64, f64)> = cfg
                    .cylinders
                    .iter()
                    .map(|c| (c.center_x + c.diameter, c.center_y, c.diameter / 2.0))
                    .collect();
                Self::with_initial(
                    cfg,
                    |_, _| u_in,
                    |x, y| {
                        kicks
                            .iter()
                            .map(|&(cx, cy, r)| eps * (-((x - cx).powi(2) + (y - cy).powi(2)) / (r * r)).exp())
                            .sum()
                    },
                )
            }
            BoundaryMode::Periodic => {
                let k = 2.0 * std::f64::consts::PI / cfg.domain_width;
                let ky = 2.0 * std::f64::consts::PI / cfg.domain_height;
                let a = cfg.inlet_velocity;
                Self::with_initial(
                    cfg,
                    |x, y| a * (k * x).sin() * (ky * y).cos(),
                    |x, y| -a * (k / ky) * (k * x).cos() * (ky * y).sin(),
                )
            }
        }
    }

    /// Samples `u0(x, y)` and `v0(x, y)` at the face centres, then projects.
    pub fn with_initial(
        cfg: &SolverConfig,
        u0: impl Fn(f64, f64) -> f64,
        v0: impl Fn(f64, f64) -> f64,
    ) -> Result<Self> {
        cfg.validate()?;
        let (nx, ny) = (cfg.nx, cfg.ny);
        let (dx, dy) = (cfg.dx(), cfg.dy());
        let mut solid = vec![0u8; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                let (x, y) = ((i as f64 + 0.5) * dx, (j as f64 + 0.5) * dy);
                if let Some(k) = cfg.cylinders.iter().position(|c| {
                    (x - c.center_x).powi(2) + (y - c.center_y).powi(2) <= (c.diameter / 2.0).powi(2)
                }) {
                    solid[j * nx + i] = (k + 1) as u8;
                }
            }
        }
        let is_solid = |i: usize, j: usize| solid[j * nx + i] != 0;
        let mut u_blocked = vec![false; (nx + 1) * ny];
        for j in 0..ny {
            for i in 0..=nx {
                u_blocked[j * (nx + 1) + i] = (i > 0 && is_solid(i - 1, j)) || (i < nx && is_solid(i, j));
            }
        }
        let mut v_blocked = vec![false; nx * (ny + 1)];
        for j in 0..=ny {
            for i in 0..nx {
                v_blocked[j * nx + i] = (j > 0 && is_solid(i, j - 1)) || (j < ny && is_solid(i, j));
            }
        }
        let poisson = RedBlackSor::new(
            nx,
            ny,
            cfg.boundary == BoundaryMode::Periodic,
            1.0 / (dx * dx),
            1.0 / (dy * dy),
            &pressure_stencil(cfg, &solid),
        );

        let mut u = Grid::new(nx + 1, ny);
        let mut v = Grid::new(nx, ny + 1);
        for j in 0..ny {
            for i in 0..=nx {
                u.set(i as isize, j as isize, u0(i as f64 * dx, (j as f64 + 0.5) * dy));
            }
        }
        for j in 0..=ny {
            for i in 0..nx {
                v.set(i as isize, j as isize, v0((i as f64 + 0.5) * dx, j as f64 * dy));
            }
        }
        let mut s = Solver {
            nx,
            ny,
            dx,
            dy,
            nu: cfg.kinematic_viscosity(),
            u0: u.clone(),
            v0: v.clone(),
            ru: u.clone(),
            rv: v.clone(),
            u,
            v,
            phi: Grid::new(nx, ny),
            phi_prev: Grid::new(nx, ny),
            solid,
            u_blocked,
            v_blocked,
            poisson,
            step: 0,
            rhs: vec![0.0; nx * ny],
            phi_flat: vec![0.0; nx * ny],
            cfg: cfg.clone(),
        };
        s.apply_boundaries(true);
        s.project()?;
        s.phi.data.fill(0.0);
        s.phi_prev.data.fill(0.0);
        Ok(s)
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.cfg.dt
    }

    fn periodic(&self) -> bool {
        self.cfg.boundary == BoundaryMode::Periodic
    }

    /// Row-major `(ny, nx)` mask, `true` inside a cylinder.
    pub fn solid_mask(&self) -> Vec<bool> {
        self.solid.iter().map(|&s| s != 0).collect()
    }

    /// Fills ghost layers, boundary faces and solid faces of `u`, `v`.
    ///
    /// With `extrapolate_outlet` the outlet face copies its upstream
    /// neighbour (predictor stages); otherwise it keeps the value the
    /// projection gave it.
    fn fill_boundaries(
        cfg: &SolverConfig,
        u: &mut Grid,
        v: &mut Grid,
        u_blocked: &[bool],
        v_blocked: &[bool],
        extrapolate_outlet: bool,
    ) {
        let (nx, ny) = (cfg.nx as isize, cfg.ny as isize);
        match cfg.boundary {
            BoundaryMode::Channel => {
                let u_in = cfg.inlet_velocity;
                for j in 0..ny {
                    u.set(0, j, u_in);
                    u.set(-1, j, u_in);
                    u.set(-2, j, u_in);
                    if extrapolate_outlet {
                        let upstream = u.at(nx - 1, j);
                        u.set(nx, j, upstream);
                    }
                    let out = u.at(nx, j);
                    for i in nx + 1..nx + 3 {
                        u.set(i, j, out);
                    }
                }
                for i in -2..nx + 3 {
                    for a in 1..=2 {
                        let lo = u.at(i, a - 1);
                        u.set(i, -a, lo);
                        let hi = u.at(i, ny - a);
                        u.set(i, ny - 1 + a, hi);
                    }
                }
                for i in 0..nx {
                    v.set(i, 0, 0.0);
                    v.set(i, ny, 0.0);
                }
                for j in 0..=ny {
                    for a in 1..=2 {
                        let inner = v.at(a - 1, j);
                        v.set(-a, j, -inner);
                    }
                    let out = v.at(nx - 1, j);
                    v.set(nx, j, out);
                    v.set(nx + 1, j, out);
                }
                for i in -2..nx + 2 {
                    for a in 1..=2 {
                        let lo = v.at(i, a);
                        v.set(i, -a, -lo);
                        let hi = v.at(i, ny - a);
                        v.set(i, ny + a, -hi);
                    }
                }
            }
            BoundaryMode::Periodic => {
                for j in 0..ny {
                    for a in 0..3 {
                        let w = u.at(a, j);
                        u.set(nx + a, j, w);
                    }
                    for a in 1..=2 {
                        let w = u.at(nx - a, j);
                        u.set(-a, j, w);
                    }
                }
                for i in -2..nx + 3 {
                    for a in 1..=2 {
                        let w = u.at(i, ny - a);
                        u.set(i, -a, w);
                        let w = u.at(i, a - 1);
                        u.set(i, ny - 1 + a, w);
                    }
                }
                for j in 0..ny {
                    for a in 0..2 {
                        let w = v.at(a, j);
                        v.set(nx + a, j, w);
                    }
                    for a in 1..=2 {
                        let w = v.at(nx - a, j);
                        v.set(-a, j, w);
                    }
                }
                for i in -2..nx + 2 {
                    for a in 0..3 {
                        let w = v.at(i, a);
                        v.set(i, ny + a, w);
                    }
                    for a in 1..=2 {
                        let w = v.at(i, ny - a);
                        v.set(i, -a, w);
                    }
                }
            }
        }
        let (nxu, nxv) = (cfg.nx + 1, cfg.nx);
        for (k, _) in u_blocked.iter().enumerate().filter(|(_, &b)| b) {
            u.set((k % nxu) as isize, (k / nxu) as isize, 0.0);
        }
        for (k, _) in v_blocked.iter().enumerate().filter(|(_, &b)| b) {
            v.set((k % nxv) as isize, (k / nxv) as isize, 0.0);
        }
    }

    fn apply_boundaries(&mut self, extrapolate_outlet: bool) {
        Self::fill_boundaries(
            &self.cfg,
            &mut self.u,
            &mut self.v,
            &self.u_blocked,
            &self.v_blocked,
            extrapolate_outlet,
        );
    }

    /// Faces advanced by the momentum equation: `(u_first, v_first)`.
    fn first_active(&self) -> (usize, usize) {
        if self.periodic() {
            (0, 0)
        } else {
            (1, 1)
        }
    }

    /// Momentum tendency without the pressure gradient.
    fn tendency(&mut self) {
        let (nx, ny) = (self.nx, self.ny);
        let (dx, dy, nu) = (self.dx, self.dy, self.nu);
        let (iu0, jv0) = self.first_active();
        let (idx2, idy2) = (1.0 / (dx * dx), 1.0 / (dy * dy));
        let u = &self.u;
        let v = &self.v;
        let (su, sv) = (u.stride, v.stride);
        for j in 0..ny {
            for i in iu0..nx {
                let k = u.idx(i as isize, j as isize);
                let d = &u.data;
                let c = d[k];
                let kv = v.idx(i as isize - 1, j as isize);
                let vv = 0.25 * (v.data[kv] + v.data[kv + 1] + v.data[kv + sv] + v.data[kv + sv + 1]);
                let ddx = upwind3(d[k - 2], d[k - 1], c, d[k + 1], d[k + 2], c) / dx;
                let ddy = upwind3(d[k - 2 * su], d[k - su], c, d[k + su], d[k + 2 * su], vv) / dy;
                let lap = (d[k + 1] - 2.0 * c + d[k - 1]) * idx2 + (d[k + su] - 2.0 * c + d[k - su]) * idy2;
                self.ru.data[k] = -(c * ddx + vv * ddy) + nu * lap;
            }
        }
        for j in jv0..ny {
            for i in 0..nx {
                let k = v.idx(i as isize, j as isize);
                let d = &v.data;
                let c = d[k];
                let ku = u.idx(i as isize, j as isize - 1);
                let uu = 0.25 * (u.data[ku] + u.data[ku + 1] + u.data[ku + su] + u.data[ku + su + 1]);
                let ddx = upwind3(d[k - 2], d[k - 1], c, d[k + 1], d[k + 2], uu) / dx;
                let ddy = upwind3(d[k - 2 * sv], d[k - sv], c, d[k + sv], d[k + 2 * sv], c) / dy;
                let lap = (d[k + 1] - 2.0 * c + d[k - 1]) * idx2 + (d[k + sv] - 2.0 * c + d[k - sv]) * idy2;
                self.rv.data[k] = -(uu * ddx + c * ddy) + nu * lap;
            }
        }
    }

    /// `x = a * x0 + b * (x + dt * r)` on the active faces.
    fn combine(&mut self, a: f64, b: f64) {
        let dt = self.cfg.dt;
        let (iu0, jv0) = self.first_active();
        for j in 0..self.ny {
            let row = self.u.idx(0, j as isize);
            for k in row + iu0..row + self.nx {
                self.u.data[k] = a * self.u0.data[k] + b * (self.u.data[k] + dt * self.ru.data[k]);
            }
        }
        for j in jv0..self.ny {
            let row = self.v.idx(0, j as isize);
            for k in row..row + self.nx {
                self.v.data[k] = a * self.v0.data[k] + b * (self.v.data[k] + dt * self.rv.data[k]);
            }
        }
    }

    /// Advances one time step.
    pub fn step(&mut self) -> Result<StepStats> {
        self.step += 1;
        self.u0.data.copy_from_slice(&self.u.data);
        self.v0.data.copy_from_slice(&self.v.data);
        for (a, b) in [(0.0, 1.0), (0.75, 0.25), (1.0 / 3.0, 2.0 / 3.0)] {
            self.tendency();
            self.combine(a, b);
            self.apply_boundaries(true);
        }
        let stats = self.project()?;
        if !(self.u.all_finite() && self.v.all_finite() && self.phi.all_finite()) {
            return Err(Error::NonFinite { step: self.step });
        }
        Ok(stats)
    }

    fn divergence_into(&self, out: &mut [f64]) {
        let (nx, ny) = (self.nx, self.ny);
        for j in 0..ny {
            for i in 0..nx {
                let c = j * nx + i;
                out[c] = if self.solid[c] != 0 {
                    0.0
                } else {
                    let (ii, jj) = (i as isize, j as isize);
                    (self.u.at(ii + 1, jj) - self.u.at(ii, jj)) / self.dx
                        + (self.v.at(ii, jj + 1) - self.v.at(ii, jj)) / self.dy
                };
            }
        }
    }

    fn residual_scale(&self) -> f64 {
        self.dx.min(self.dy) / self.cfg.inlet_velocity.abs()
    }

    /// Dimensionless `max |div u| * dx / U` over fluid cells.
    pub fn max_divergence(&self) -> f64 {
        let mut div = vec![0.0; self.nx * self.ny];
        self.divergence_into(&mut div);
        div.iter().fold(0.0f64, |m, d| m.max(d.abs())) * self.residual_scale()
    }

    fn project(&mut self) -> Result<StepStats> {
        let mut rhs = std::mem::take(&mut self.rhs);
        self.divergence_into(&mut rhs);
        if self.periodic() {
            let mean = rhs.iter().sum::<f64>() / rhs.len() as f64;
            rhs.iter_mut().for_each(|r| *r -= mean);
        }
        // Warm start from the linear extrapolation of the last two solutions.
        for (cur, prev) in self.phi.data.iter_mut().zip(self.phi_prev.data.iter_mut()) {
            let guess = 2.0 * *cur - *prev;
            *prev = *cur;
            *cur = guess;
        }
        let result = self.solve_poisson(&rhs);
        self.rhs = rhs;
        let iterations = result?;

        let (nx, ny) = (self.nx as isize, self.ny as isize);
        let (dx, dy) = (self.dx, self.dy);
        let periodic = self.periodic();
        let phi = &self.phi;
        for j in 0..ny {
            let (istart, iend) = if periodic { (0, nx) } else { (1, nx) };
            for i in istart..iend {
                if !self.u_blocked[(j * (nx + 1) + i) as usize] {
                    let il = if i == 0 { nx - 1 } else { i - 1 };
                    let k = self.u.idx(i, j);
                    self.u.data[k] -= (phi.at(i, j) - phi.at(il, j)) / dx;
                }
            }
            if !periodic && !self.u_blocked[(j * (nx + 1) + nx) as usize] {
                let k = self.u.idx(nx, j);
                self.u.data[k] += 2.0 * phi.at(nx - 1, j) / dx;
            }
        }
        let (jstart, jend) = if periodic { (0, ny) } else { (1, ny) };
        for j in jstart..jend {
            let jl = if j == 0 { ny - 1 } else { j - 1 };
            for i in 0..nx {
                if !self.v_blocked[(j * nx + i) as usize] {
                    let k = self.v.idx(i, j);
                    self.v.data[k] -= (phi.at(i, j) - phi.at(i, jl)) / dy;
                }
            }
        }
        self.apply_boundaries(false);
        Ok(StepStats {
            iterations,
            divergence: self.max_divergence(),
        })
    }

    /// Red-black SOR on the fluid cells; returns the iteration count.
    fn solve_poisson(&mut self, rhs: &[f64]) -> Result<usize> {
        let (nx, ny) = (self.nx, self.ny);
        let scale = self.residual_scale();
        for j in 0..ny {
            for i in 0..nx {
                self.phi_flat[j * nx + i] = self.phi.at(i as isize, j as isize);
            }
        }
        let outcome = self.poisson.solve(
            &mut self.phi_flat,
            rhs,
            self.cfg.omega(),
            self.cfg.poisson_tolerance / scale,
            self.cfg.max_poisson_iterations,
        );
        let iterations = match outcome {
            SorOutcome::Converged { iterations } => iterations,
            SorOutcome::Stalled { residual, .. } if !residual.is_finite() => {
                return Err(Error::NonFinite { step: self.step })
            }
            SorOutcome::Stalled { iterations, residual } => {
                return Err(Error::PoissonNotConverged {
                    step: self.step,
                    iterations,
                    residual: residual * scale,
                })
            }
        };
        if self.periodic() {
            let mean = self.phi_flat.iter().sum::<f64>() / (nx * ny) as f64;
            self.phi_flat.iter_mut().for_each(|p| *p -= mean);
        }
        for j in 0..ny {
            for i in 0..nx {
                self.phi.set(i as isize, j as isize, self.phi_flat[j * nx + i]);
            }
        }
        if self.periodic() {
            wrap_cells(&mut self.phi);
        }
        Ok(iterations)
    }

    /// Integrated surface forces on each cylinder as `(C_D, C_L)`.
    pub fn force_coefficients(&self) -> Vec<(f64, f64)> {
        let n = self.cfg.cylinders.len();
        let mut fx = vec![0.0; n];
        let mut fy = vec![0.0; n];
        let (nx, ny) = (self.nx, self.ny);
        let (dx, dy) = (self.dx, self.dy);
        let mu = self.cfg.dynamic_viscosity;
        let p_scale = self.cfg.density / self.cfg.dt;
        for j in 0..ny {
            for i in 0..nx {
                if self.solid[j * nx + i] != 0 {
                    continue;
                }
                let (ii, jj) = (i as isize, j as isize);
                let p = self.phi.at(ii, jj) * p_scale;
                let uc = 0.5 * (self.u.at(ii, jj) + self.u.at(ii + 1, jj));
                let vc = 0.5 * (self.v.at(ii, jj) + self.v.at(ii, jj + 1));
                let mut touch = |ni: usize, nj: usize, normal: (f64, f64)| {
                    let s = self.solid[nj * nx + ni];
                    if s == 0 {
                        return;
                    }
                    let k = (s - 1) as usize;
                    if normal.0 != 0.0 {
                        fx[k] += normal.0 * p * dy;
                        fy[k] += mu * vc / (0.5 * dx) * dy;
                    } else {
                        fy[k] += normal.1 * p * dx;
                        fx[k] += mu * uc / (0.5 * dy) * dx;
                    }
                };
                if i + 1 < nx {
                    touch(i + 1, j, (1.0, 0.0));
                }
                if i > 0 {
                    touch(i - 1, j, (-1.0, 0.0));
                }
                if j + 1 < ny {
                    touch(i, j + 1, (0.0, 1.0));
                }
                if j > 0 {
                    touch(i, j - 1, (0.0, -1.0));
                }
            }
        }
        let u = self.cfg.inlet_velocity;
        self.cfg
            .cylinders
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let q = 0.5 * self.cfg.density * u * u * c.diameter;
                (fx[k] / q, fy[k] / q)
            })
            .collect()
    }

    /// `0.5 * Σ (u² + v²) dx dy` over the independent faces.
    pub fn kinetic_energy(&self) -> f64 {
        let (nx, ny) = (self.nx, self.ny);
        let (iu, jv) = if self.periodic() { (nx, ny) } else { (nx + 1, ny + 1) };
        let mut e = 0.0;
        for j in 0..ny {
            for i in 0..iu {
                e += self.u.at(i as isize, j as isize).powi(2);
            }
        }
        for j in 0..jv {
            for i in 0..nx {
                e += self.v.at(i as isize, j as isize).powi(2);
            }
        }
        0.5 * e * self.dx * self.dy
    }

    /// Face velocities: `u` as `(ny, nx + 1)`, `v` as `(ny + 1, nx)`.
    pub fn face_velocities(&self) -> (Tensor<f64>, Tensor<f64>) {
        let (nx, ny) = (self.nx, self.ny);
        let u = Tensor::from_fn(&[ny, nx + 1], |k| self.u.at((k % (nx + 1)) as isize, (k / (nx + 1)) as isize));
        let v = Tensor::from_fn(&[ny + 1, nx], |k| self.v.at((k % nx) as isize, (k / nx) as isize));
        (u, v)
    }

    /// Cell-centred view of the current state.
    pub fn snapshot(&self) -> FlowSnapshot {
        let (nx, ny) = (self.nx, self.ny);
        let p_scale = self.cfg.density / self.cfg.dt;
        let shape = [ny, nx];
        let at = |k: usize| ((k % nx) as isize, (k / nx) as isize);
        FlowSnapshot {
            t: self.time(),
            u: Tensor::from_fn(&shape, |k| {
                let (i, j) = at(k);
                0.5 * (self.u.at(i, j) + self.u.at(i + 1, j))
            }),
            v: Tensor::from_fn(&shape, |k| {
                let (i, j) = at(k);
                0.5 * (self.v.at(i, j) + self.v.at(i, j + 1))
            }),
            p: Tensor::from_fn(&shape, |k| {
                let (i, j) = at(k);
                self.phi.at(i, j) * p_scale
            }),
        }
    }
}

fn wrap_cells(phi: &mut Grid) {
    let (w, h) = (phi.w as isize, phi.h as isize);
    for j in 0..h {
        let a = phi.at(0, j);
        let b = phi.at(w - 1, j);
        phi.set(w, j, a);
        phi.set(-1, j, b);
    }
    for i in -1..=w {
        let a = phi.at(i, 0);
        let b = phi.at(i, h - 1);
        phi.set(i, h, a);
        phi.set(i, -1, b);
    }
}

/// Five-point operator on fluid cells; solid neighbours and walls are
/// Neumann, the outlet face holds `φ = 0` half a cell past the last centre.
fn pressure_stencil(cfg: &SolverConfig, solid: &[u8]) -> Stencil {
    let (nx, ny) = (cfg.nx, cfg.ny);
    let (ax, ay) = (1.0 / cfg.dx().powi(2), 1.0 / cfg.dy().powi(2));
    let periodic = cfg.boundary == BoundaryMode::Periodic;
    let n = nx * ny;
    let mut st = Stencil {
        east: vec![0.0; n],
        west: vec![0.0; n],
        north: vec![0.0; n],
        south: vec![0.0; n],
        diag: vec![0.0; n],
    };
    let fluid = |i: usize, j: usize| solid[j * nx + i] == 0;
    let link = |ok: bool, a: f64| if ok { a } else { 0.0 };
    for j in 0..ny {
        for i in 0..nx {
            let c = j * nx + i;
            if !fluid(i, j) {
                continue;
            }
            st.east[c] = link(if i + 1 < nx { fluid(i + 1, j) } else { periodic }, ax);
            st.west[c] = link(if i > 0 { fluid(i - 1, j) } else { periodic }, ax);
            st.north[c] = link(if j + 1 < ny { fluid(i, j + 1) } else { periodic }, ay);
            st.south[c] = link(if j > 0 { fluid(i, j - 1) } else { periodic }, ay);
            let outlet = if !periodic && i + 1 == nx { 2.0 * ax } else { 0.0 };
            st.diag[c] = st.east[c] + st.west[c] + st.north[c] + st.south[c] + outlet;
        }
    }
    st
}
