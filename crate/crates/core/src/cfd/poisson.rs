//! Red-black SOR for the masked five-point pressure equation.
//!
//! Cells are split by colour `(i + j) & 1` into two padded planes so that
//! each half-sweep is a unit-stride loop over one plane reading the other.
//! In colour `c`, row `j`, the cell `(i, j)` sits at column `i / 2 + 1`;
//! its east and west neighbours in the other plane are at offsets
//! `((j + c) & 1)` and `((j + c) & 1) - 1`, north and south one row away.

#[derive(Debug, Clone)]
struct Plane {
    east: Vec<f64>,
    west: Vec<f64>,
    north: Vec<f64>,
    south: Vec<f64>,
    diag: Vec<f64>,
    inv_diag: Vec<f64>,
    phi: Vec<f64>,
    rhs: Vec<f64>,
    /// `rhs / d` with `d` the interior diagonal.
    rhs_scaled: Vec<f64>,
    /// Cells whose stencil differs from the interior one.
    special: Vec<usize>,
    saved: Vec<f64>,
}

impl Plane {
    fn new(n: usize) -> Self {
        let z = vec![0.0; n];
        Plane {
            east: z.clone(),
            west: z.clone(),
            north: z.clone(),
            south: z.clone(),
            diag: z.clone(),
            inv_diag: z.clone(),
            phi: z.clone(),
            rhs: z.clone(),
            rhs_scaled: z,
            special: Vec::new(),
            saved: Vec::new(),
        }
    }
}

/// Natural-order operator description: per cell, the four link weights
/// and the diagonal (links plus any Dirichlet contribution).
#[derive(Debug, Clone)]
pub(crate) struct Stencil {
    pub east: Vec<f64>,
    pub west: Vec<f64>,
    pub north: Vec<f64>,
    pub south: Vec<f64>,
    pub diag: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct RedBlackSor {
    nx: usize,
    ny: usize,
    /// Padded row length of each plane.
    row: usize,
    periodic: bool,
    planes: [Plane; 2],
    /// Interior link weights divided by the interior diagonal.
    cx: f64,
    cy: f64,
    interior_diag: f64,
}

pub(crate) enum SorOutcome {
    Converged { iterations: usize },
    Stalled { iterations: usize, residual: f64 },
}

impl RedBlackSor {
    /// `ax`, `ay` are the interior link weights `1 / dx^2`, `1 / dy^2`.
    pub fn new(nx: usize, ny: usize, periodic: bool, ax: f64, ay: f64, stencil: &Stencil) -> Self {
        let row = (nx + 1) / 2 + 2;
        let n = row * (ny + 2);
        let mut planes = [Plane::new(n), Plane::new(n)];
        for j in 0..ny {
            for i in 0..nx {
                let c = j * nx + i;
                let (color, k) = Self::locate(row, i, j);
                let p = &mut planes[color];
                p.east[k] = stencil.east[c];
                p.west[k] = stencil.west[c];
                p.north[k] = stencil.north[c];
                p.south[k] = stencil.south[c];
                p.diag[k] = stencil.diag[c];
                p.inv_diag[k] = if stencil.diag[c] > 0.0 { 1.0 / stencil.diag[c] } else { 0.0 };
            }
        }
        let interior_diag = 2.0 * ax + 2.0 * ay;
        for (color, p) in planes.iter_mut().enumerate() {
            for j in 0..ny {
                for q in 1..row - 1 {
                    let k = (j + 1) * row + q;
                    let i = 2 * (q - 1) + ((j + color) & 1);
                    let regular = i < nx
                        && p.east[k] == ax
                        && p.west[k] == ax
                        && p.north[k] == ay
                        && p.south[k] == ay
                        && p.diag[k] == interior_diag;
                    if !regular {
                        p.special.push(k);
                    }
                }
            }
            p.saved = vec![0.0; p.special.len()];
        }
        RedBlackSor {
            nx,
            ny,
            row,
            periodic,
            planes,
            cx: ax / interior_diag,
            cy: ay / interior_diag,
            interior_diag,
        }
    }

    #[inline(always)]
    fn locate(row: usize, i: usize, j: usize) -> (usize, usize) {
        ((i + j) & 1, (j + 1) * row + (i >> 1) + 1)
    }

    fn scatter_in(&mut self, phi: &[f64], rhs: &[f64]) {
        for j in 0..self.ny {
            for i in 0..self.nx {
                let c = j * self.nx + i;
                let (color, k) = Self::locate(self.row, i, j);
                let p = &mut self.planes[color];
                p.phi[k] = if p.diag[k] > 0.0 { phi[c] } else { 0.0 };
                p.rhs[k] = if p.diag[k] > 0.0 { rhs[c] } else { 0.0 };
                p.rhs_scaled[k] = p.rhs[k] / self.interior_diag;
            }
        }
    }

    fn gather_out(&self, phi: &mut [f64]) {
        for j in 0..self.ny {
            for i in 0..self.nx {
                let (color, k) = Self::locate(self.row, i, j);
                phi[j * self.nx + i] = self.planes[color].phi[k];
            }
        }
    }

    /// Copies wrapped interior values into the ghost ring of `color`.
    fn wrap(&mut self, color: usize) {
        let (nx, ny, row) = (self.nx as isize, self.ny as isize, self.row);
        let value = |planes: &[Plane; 2], i: isize, j: isize| {
            let (i, j) = (i.rem_euclid(nx) as usize, j.rem_euclid(ny) as usize);
            let (c, k) = Self::locate(row, i, j);
            debug_assert_eq!(c, color);
            planes[c].phi[k]
        };
        for r in 0..(ny + 2) {
            let j = r - 1;
            let par = ((j + color as isize).rem_euclid(2)) as isize;
            let qs: Vec<usize> = if r == 0 || r == ny + 1 {
                (0..row).collect()
            } else {
                vec![0, row - 1]
            };
            for q in qs {
                let i = 2 * (q as isize - 1) + par;
                let v = value(&self.planes, i, j);
                self.planes[color].phi[r as usize * row + q] = v;
            }
        }
    }

    fn residual(&self) -> f64 {
        let row = self.row;
        let mut res = 0.0f64;
        let mut nan = false;
        for color in 0..2 {
            let (p, o) = (&self.planes[color], &self.planes[1 - color].phi);
            for j in 0..self.ny {
                let par = (j + color) & 1;
                let base = (j + 1) * row;
                for k in base + 1..base + row - 1 {
                    let lap = p.east[k] * o[k + par] + p.west[k] * o[k + par - 1] + p.north[k] * o[k + row]
                        + p.south[k] * o[k - row]
                        - p.diag[k] * p.phi[k];
                    let r = (p.rhs[k] - lap).abs();
                    nan |= r.is_nan();
                    res = res.max(r);
                }
            }
        }
        if nan {
            f64::NAN
        } else {
            res
        }
    }

    fn sweep(&mut self, color: usize, omega: f64) {
        let row = self.row;
        let (cx, cy) = (self.cx, self.cy);
        let (a, b) = self.planes.split_at_mut(1);
        let (p, o) = if color == 0 { (&mut a[0], &b[0].phi) } else { (&mut b[0], &a[0].phi) };
        for (slot, &k) in p.saved.iter_mut().zip(&p.special) {
            *slot = p.phi[k];
        }
        // Interior stencil everywhere, then redo the irregular cells.
        for j in 0..self.ny {
            let par = (j + color) & 1;
            let base = (j + 1) * row + 1;
            let n = row - 2;
            let oe = &o[base + par..base + par + n];
            let ow = &o[base + par - 1..base + par - 1 + n];
            let on = &o[base + row..base + row + n];
            let os = &o[base - row..base - row + n];
            let rhs = &p.rhs_scaled[base..base + n];
            let phi = &mut p.phi[base..base + n];
            for q in 0..n {
                let gs = cx * (oe[q] + ow[q]) + cy * (on[q] + os[q]) - rhs[q];
                phi[q] += omega * (gs - phi[q]);
            }
        }
        for (&old, &k) in p.saved.iter().zip(&p.special) {
            let par = (k / row - 1 + color) & 1;
            let gs = (p.east[k] * o[k + par] + p.west[k] * o[k + par - 1] + p.north[k] * o[k + row]
                + p.south[k] * o[k - row]
                - p.rhs[k])
                * p.inv_diag[k];
            p.phi[k] = old + omega * (gs - old);
        }
    }

    /// Solves `L phi = rhs` from the initial guess in `phi` until the
    /// max-norm residual falls to `tol`.
    pub fn solve(&mut self, phi: &mut [f64], rhs: &[f64], omega: f64, tol: f64, max_iterations: usize) -> SorOutcome {
        self.scatter_in(phi, rhs);
        let check_every = 8;
        let mut iter = 0;
        let outcome = loop {
            if self.periodic {
                self.wrap(0);
                self.wrap(1);
            }
            if iter % check_every == 0 {
                let residual = self.residual();
                if residual <= tol {
                    break SorOutcome::Converged { iterations: iter };
                }
                if iter >= max_iterations || !residual.is_finite() {
                    break SorOutcome::Stalled {
                        iterations: iter,
                        residual,
                    };
                }
            }
            self.sweep(0, omega);
            if self.periodic {
                self.wrap(0);
            }
            self.sweep(1, omega);
            iter += 1;
        };
        self.gather_out(phi);
        outcome
    }
}
