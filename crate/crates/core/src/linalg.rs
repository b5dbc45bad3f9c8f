//! Matrix products and the patch-matrix transforms behind the convolutions.

use crate::tensor::Real;

/// Strided read-only view of a row-major buffer as an `rows x cols` matrix.
#[derive(Clone, Copy)]
pub struct MatRef<'a, T> {
    pub data: &'a [T],
    pub rows: usize,
    pub cols: usize,
    pub row_stride: usize,
    pub col_stride: usize,
}

impl<'a, T: Real> MatRef<'a, T> {
    pub fn new(data: &'a [T], rows: usize, cols: usize) -> Self {
        MatRef {
            data,
            rows,
            cols,
            row_stride: cols,
            col_stride: 1,
        }
    }

    pub fn t(self) -> Self {
        MatRef {
            data: self.data,
            rows: self.cols,
            cols: self.rows,
            row_stride: self.col_stride,
            col_stride: self.row_stride,
        }
    }

    fn fits(&self) -> bool {
        self.rows == 0
            || self.cols == 0
            || (self.rows - 1) * self.row_stride + (self.cols - 1) * self.col_stride < self.data.len()
    }
}

/// `c = alpha * a * b + beta * c`, with `c` a dense row-major `a.rows x b.cols` buffer.
pub fn gemm<T: Real>(alpha: T, a: MatRef<'_, T>, b: MatRef<'_, T>, beta: T, c: &mut [T]) {
    assert_eq!(a.cols, b.rows, "inner dimensions differ");
    assert!(a.fits() && b.fits(), "matrix view exceeds its buffer");
    assert!(c.len() >= a.rows * b.cols, "output buffer too small");
    if a.rows == 0 || b.cols == 0 {
        return;
    }
    // SAFETY: the bounds of all three views were checked above.
    unsafe {
        T::gemm_raw(
            a.rows,
            a.cols,
            b.cols,
            alpha,
            a.data.as_ptr(),
            a.row_stride as isize,
            a.col_stride as isize,
            b.data.as_ptr(),
            b.row_stride as isize,
            b.col_stride as isize,
            beta,
            c.as_mut_ptr(),
            b.cols as isize,
            1,
        )
    }
}

/// Patch matrix of a `(channels, height, width)` image for a `k x k`
/// "same" cross-correlation: row `(c * k + ky) * k + kx`, column `y * width + x`
/// holds `x[c, y + ky - k/2, x + kx - k/2]` (zero outside the image).
pub fn im2col<T: Real>(x: &[T], channels: usize, height: usize, width: usize, k: usize, cols: &mut [T]) {
    let pad = k / 2;
    let plane = height * width;
    debug_assert_eq!(x.len(), channels * plane);
    debug_assert_eq!(cols.len(), channels * k * k * plane);
    for c in 0..channels {
        let src = &x[c * plane..(c + 1) * plane];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let dst = &mut cols[row * plane..(row + 1) * plane];
                let (x_lo, x_hi) = valid_range(width, kx, pad);
                for y in 0..height {
                    let line = &mut dst[y * width..(y + 1) * width];
                    let sy = y as isize + ky as isize - pad as isize;
                    if sy < 0 || sy >= height as isize || x_lo >= x_hi {
                        line.fill(T::zero());
                        continue;
                    }
                    let sy = sy as usize;
                    line[..x_lo].fill(T::zero());
                    line[x_hi..].fill(T::zero());
                    let sx0 = x_lo + kx - pad;
                    line[x_lo..x_hi].copy_from_slice(&src[sy * width + sx0..sy * width + sx0 + (x_hi - x_lo)]);
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-adds a patch matrix back into an image.
pub fn col2im<T: Real>(cols: &[T], channels: usize, height: usize, width: usize, k: usize, x: &mut [T]) {
    let pad = k / 2;
    let plane = height * width;
    debug_assert_eq!(x.len(), channels * plane);
    for c in 0..channels {
        let dst = &mut x[c * plane..(c + 1) * plane];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let src = &cols[row * plane..(row + 1) * plane];
                let (x_lo, x_hi) = valid_range(width, kx, pad);
                if x_lo >= x_hi {
                    continue;
                }
                for y in 0..height {
                    let sy = y as isize + ky as isize - pad as isize;
                    if sy < 0 || sy >= height as isize {
                        continue;
                    }
                    let sy = sy as usize;
                    let sx0 = x_lo + kx - pad;
                    let out = &mut dst[sy * width + sx0..sy * width + sx0 + (x_hi - x_lo)];
                    let inp = &src[y * width + x_lo..y * width + x_hi];
                    out.iter_mut().zip(inp).for_each(|(o, &v)| *o += v);
                }
            }
        }
    }
}

/// Output columns `[lo, hi)` whose tap `kx` lands inside the image.
fn valid_range(width: usize, kx: usize, pad: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(kx);
    let hi = (width + pad).saturating_sub(kx).min(width);
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                c[i * n + j] = (0..k).map(|p| a[i * k + p] * b[p * n + j]).sum();
            }
        }
        c
    }

    #[test]
    fn gemm_matches_naive_including_transposes() {
        let mut rng = crate::rng::Rng::new(5);
        let (m, k, n) = (3, 4, 5);
        let a: Vec<f64> = (0..m * k).map(|_| rng.next_f64()).collect();
        let b: Vec<f64> = (0..k * n).map(|_| rng.next_f64()).collect();
        let expect = naive_matmul(&a, &b, m, k, n);
        let mut c = vec![0.0; m * n];
        gemm(1.0, MatRef::new(&a, m, k), MatRef::new(&b, k, n), 0.0, &mut c);
        for (x, y) in c.iter().zip(&expect) {
            assert!((x - y).abs() < 1e-12);
        }
        // (b^T a^T)^T == a b
        let mut ct = vec![0.0; n * m];
        gemm(1.0, MatRef::new(&b, k, n).t(), MatRef::new(&a, m, k).t(), 0.0, &mut ct);
        for i in 0..m {
            for j in 0..n {
                assert!((ct[j * m + i] - expect[i * n + j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), y> == <x, col2im(y)>
        let mut rng = crate::rng::Rng::new(11);
        let (c, h, w) = (2, 4, 5);
        for k in [1, 3, 5] {
            let x: Vec<f64> = (0..c * h * w).map(|_| rng.next_f64() - 0.5).collect();
            let y: Vec<f64> = (0..c * k * k * h * w).map(|_| rng.next_f64() - 0.5).collect();
            let mut cols = vec![0.0; y.len()];
            im2col(&x, c, h, w, k, &mut cols);
            let mut back = vec![0.0; x.len()];
            col2im(&y, c, h, w, k, &mut back);
            let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
            let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-12, "k={k}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn im2col_center_tap_is_image() {
        let x: Vec<f64> = (0..12).map(|v| v as f64).collect();
        let mut cols = vec![0.0; 9 * 12];
        im2col(&x, 1, 3, 4, 3, &mut cols);
        assert_eq!(&cols[4 * 12..5 * 12], &x[..]);
        // Tap (0, 0) reads the up-left neighbour.
        assert_eq!(cols[5], x[0]);
        assert_eq!(cols[0], 0.0);
    }
}
