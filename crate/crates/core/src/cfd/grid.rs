//! Padded storage for staggered fields.

/// Ghost layers on every side; the advection stencil reaches two cells.
pub(crate) const G: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Grid {
    /// Interior extent.
    pub w: usize,
    pub h: usize,
    pub stride: usize,
    pub data: Vec<f64>,
}

impl Grid {
    pub fn new(w: usize, h: usize) -> Self {
        let stride = w + 2 * G;
        Grid {
            w,
            h,
            stride,
            data: vec![0.0; stride * (h + 2 * G)],
        }
    }

    #[inline(always)]
    pub fn idx(&self, i: isize, j: isize) -> usize {
        ((j + G as isize) as usize) * self.stride + (i + G as isize) as usize
    }

    #[inline(always)]
    pub fn at(&self, i: isize, j: isize) -> f64 {
        self.data[self.idx(i, j)]
    }

    #[inline(always)]
    pub fn set(&mut self, i: isize, j: isize, value: f64) {
        let k = self.idx(i, j);
        self.data[k] = value;
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Third-order upwind-biased first derivative (times the spacing).
#[inline(always)]
pub(crate) fn upwind3(m2: f64, m1: f64, c: f64, p1: f64, p2: f64, velocity: f64) -> f64 {
    if velocity >= 0.0 {
        (2.0 * p1 + 3.0 * c - 6.0 * m1 + m2) / 6.0
    } else {
        (-p2 + 6.0 * p1 - 3.0 * c - 2.0 * m1) / 6.0
    }
}
