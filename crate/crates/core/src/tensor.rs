//! Dense row-major tensors over `f32` or `f64`.
//!
//! Every numeric field in the crate (flow fields, activations, weights and
//! gradients) is carried by [`Tensor`]. The element type is abstracted by
//! [`Real`] so gradient checks can run in 64-bit while training runs in
//! 32-bit with the same code.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive};

use crate::error::{Error, Result};

/// Element type code used by the binary tensor format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F64 = 0,
    F32 = 1,
}

impl DType {
    pub fn from_code(code: u8) -> Option<DType> {
        match code {
            0 => Some(DType::F64),
            1 => Some(DType::F32),
            _ => None,
        }
    }

    pub fn size(self) -> usize {
        match self {
            DType::F64 => 8,
            DType::F32 => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DType::F64 => "f64",
            DType::F32 => "f32",
        }
    }
}

pub trait Real:
    Float
    + FromPrimitive
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + 'static
{
    const DTYPE: DType;

    fn of(x: f64) -> Self;

    fn as_f64(self) -> f64;

    fn put_le(self, out: &mut Vec<u8>);

    fn get_le(bytes: &[u8]) -> Self;

    /// `c = alpha * a * b + beta * c` with arbitrary (row, column) strides.
    ///
    /// # Safety
    /// Callers must guarantee that every addressed element lies inside the
    /// backing buffers; [`crate::linalg::gemm`] is the checked entry point.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

impl Real for f64 {
    const DTYPE: DType = DType::F64;

    fn of(x: f64) -> Self {
        x
    }

    fn as_f64(self) -> f64 {
        self
    }

    fn put_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn get_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes[..8].try_into().unwrap())
    }

    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Real for f32 {
    const DTYPE: DType = DType::F32;

    fn of(x: f64) -> Self {
        x as f32
    }

    fn as_f64(self) -> f64 {
        self as f64
    }

    fn put_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn get_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes[..4].try_into().unwrap())
    }

    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// Numerically stable logistic function.
#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[inline]
pub fn relu<T: Real>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        T::zero()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementwiseOp {
    Add,
    Sub,
    Mul,
    Sigmoid,
    Tanh,
    Relu,
}

impl ElementwiseOp {
    pub fn is_binary(self) -> bool {
        matches!(self, ElementwiseOp::Add | ElementwiseOp::Sub | ElementwiseOp::Mul)
    }
}

#[derive(Clone, PartialEq)]
pub struct Tensor<T = f64> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> Debug for Tensor<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        const PREVIEW: usize = 8;
        write!(f, "Tensor<{}>{:?} ", T::DTYPE.name(), self.shape)?;
        let head = &self.data[..self.data.len().min(PREVIEW)];
        write!(f, "{head:?}")?;
        if self.data.len() > PREVIEW {
            write!(f, "..")?;
        }
        Ok(())
    }
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if let Some(pos) = shape.iter().position(|&d| d == 0) {
        return Err(Error::invalid(format!(
            "tensor dimensions must be positive, got {shape:?} (axis {pos})"
        )));
    }
    Ok(shape.iter().product())
}

pub fn strides_for(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for axis in (0..shape.len().saturating_sub(1)).rev() {
        strides[axis] = strides[axis + 1] * shape[axis + 1];
    }
    strides
}

impl<T: Real> Tensor<T> {
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<T>) -> Result<Self> {
        let shape = shape.into();
        let len = check_shape(&shape)?;
        if len != data.len() {
            return Err(Error::invalid(format!(
                "shape {shape:?} holds {len} values but {} were supplied",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    /// Panics on a zero dimension; shapes built in code are trusted.
    pub fn full(shape: &[usize], value: T) -> Self {
        let len = check_shape(shape).expect("invalid tensor shape");
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, T::one())
    }

    pub fn zeros_like(other: &Tensor<T>) -> Self {
        Self::zeros(&other.shape)
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> T) -> Self {
        let len = check_shape(shape).expect("invalid tensor shape");
        Tensor {
            shape: shape.to_vec(),
            data: (0..len).map(&mut f).collect(),
        }
    }

    pub fn scalar(value: T) -> Self {
        Tensor {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn strides(&self) -> Vec<usize> {
        strides_for(&self.shape)
    }

    pub fn ravel_index(&self, index: &[usize]) -> Result<usize> {
        if index.len() != self.shape.len() {
            return Err(Error::invalid(format!(
                "index of rank {} for tensor of rank {}",
                index.len(),
                self.shape.len()
            )));
        }
        let mut flat = 0;
        for (axis, (&i, &dim)) in index.iter().zip(&self.shape).enumerate() {
            if i >= dim {
                return Err(Error::invalid(format!(
                    "index {i} out of bounds for axis {axis} of size {dim}"
                )));
            }
            flat = flat * dim + i;
        }
        Ok(flat)
    }

    pub fn unravel_index(&self, mut flat: usize) -> Result<Vec<usize>> {
        if flat >= self.len() {
            return Err(Error::invalid(format!(
                "flat index {flat} out of bounds for {} elements",
                self.len()
            )));
        }
        let mut index = vec![0; self.shape.len()];
        for axis in (0..self.shape.len()).rev() {
            index[axis] = flat % self.shape[axis];
            flat /= self.shape[axis];
        }
        Ok(index)
    }

    pub fn get(&self, index: &[usize]) -> Result<T> {
        Ok(self.data[self.ravel_index(index)?])
    }

    pub fn reshape(self, shape: impl Into<Vec<usize>>) -> Result<Self> {
        Tensor::new(shape, self.data)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor<T>, op: &'static str, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.expect_same_shape(other, op)?;
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn expect_same_shape(&self, other: &Tensor<T>, op: &'static str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                op,
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        Ok(())
    }

    pub fn elementwise(op: ElementwiseOp, a: &Tensor<T>, b: Option<&Tensor<T>>) -> Result<Self> {
        match (op.is_binary(), b) {
            (true, None) => Err(Error::invalid(format!("{op:?} requires two operands"))),
            (false, Some(_)) => Err(Error::invalid(format!("{op:?} takes a single operand"))),
            (true, Some(b)) => match op {
                ElementwiseOp::Add => a.zip_map(b, "add", |x, y| x + y),
                ElementwiseOp::Sub => a.zip_map(b, "sub", |x, y| x - y),
                _ => a.zip_map(b, "mul", |x, y| x * y),
            },
            (false, None) => Ok(match op {
                ElementwiseOp::Sigmoid => a.map(sigmoid),
                ElementwiseOp::Tanh => a.map(T::tanh),
                _ => a.map(relu),
            }),
        }
    }

    pub fn add(&self, other: &Tensor<T>) -> Result<Self> {
        Self::elementwise(ElementwiseOp::Add, self, Some(other))
    }

    pub fn sub(&self, other: &Tensor<T>) -> Result<Self> {
        Self::elementwise(ElementwiseOp::Sub, self, Some(other))
    }

    /// Hadamard product.
    pub fn mul(&self, other: &Tensor<T>) -> Result<Self> {
        Self::elementwise(ElementwiseOp::Mul, self, Some(other))
    }

    pub fn sigmoid(&self) -> Self {
        self.map(sigmoid)
    }

    pub fn tanh(&self) -> Self {
        self.map(T::tanh)
    }

    pub fn relu(&self) -> Self {
        self.map(relu)
    }

    pub fn scale(&self, factor: T) -> Self {
        self.map(|x| x * factor)
    }

    pub fn add_assign(&mut self, other: &Tensor<T>) -> Result<()> {
        self.expect_same_shape(other, "add_assign")?;
        self.data.iter_mut().zip(&other.data).for_each(|(a, &b)| *a += b);
        Ok(())
    }

    /// In-place `self += factor * other`.
    pub fn axpy(&mut self, factor: T, other: &Tensor<T>) -> Result<()> {
        self.expect_same_shape(other, "axpy")?;
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, &b)| *a += factor * b);
        Ok(())
    }

    pub fn fill(&mut self, value: T) {
        self.data.iter_mut().for_each(|x| *x = value);
    }

    /// Sequential sum in storage order, so results never depend on scheduling.
    pub fn sum(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &x| acc + x)
    }

    pub fn mean(&self) -> T {
        self.sum() / T::of(self.len() as f64)
    }

    pub fn min(&self) -> T {
        self.data.iter().fold(T::infinity(), |m, &x| m.min(x))
    }

    pub fn max(&self) -> T {
        self.data.iter().fold(T::neg_infinity(), |m, &x| m.max(x))
    }

    pub fn max_abs_diff(&self, other: &Tensor<T>) -> Result<T> {
        self.expect_same_shape(other, "max_abs_diff")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs())))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Mean over `axes`; the reduced axes are removed from the shape.
    pub fn reduce_mean(&self, axes: &[usize]) -> Result<Self> {
        let rank = self.rank();
        let mut reduced = vec![false; rank];
        for &axis in axes {
            if axis >= rank {
                return Err(Error::AxisOutOfRange { axis, rank });
            }
            reduced[axis] = true;
        }
        if axes.is_empty() {
            return Ok(self.clone());
        }
        let out_shape: Vec<usize> = (0..rank)
            .filter(|&a| !reduced[a])
            .map(|a| self.shape[a])
            .collect();
        let out_strides = strides_for(&out_shape);
        // Stride of each input axis inside the output (0 for reduced axes).
        let mut in_to_out = vec![0; rank];
        let mut k = 0;
        for a in 0..rank {
            if !reduced[a] {
                in_to_out[a] = out_strides[k];
                k += 1;
            }
        }
        let out_len: usize = out_shape.iter().product();
        let mut sums = vec![T::zero(); out_len];
        let mut index = vec![0usize; rank];
        for &x in &self.data {
            let o: usize = index.iter().zip(&in_to_out).map(|(i, s)| i * s).sum();
            sums[o] += x;
            for a in (0..rank).rev() {
                index[a] += 1;
                if index[a] < self.shape[a] {
                    break;
                }
                index[a] = 0;
            }
        }
        let count = T::of((self.len() / out_len) as f64);
        sums.iter_mut().for_each(|s| *s /= count);
        Ok(Tensor {
            shape: out_shape,
            data: sums,
        })
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| U::of(x.as_f64())).collect(),
        }
    }

    /// Contiguous slab `i` along the leading axis.
    pub fn slab(&self, i: usize) -> &[T] {
        let n = self.slab_len();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn slab_mut(&mut self, i: usize) -> &mut [T] {
        let n = self.slab_len();
        &mut self.data[i * n..(i + 1) * n]
    }

    fn slab_len(&self) -> usize {
        self.shape.iter().skip(1).product()
    }

    /// Copy of slab `i` along the leading axis as its own tensor.
    pub fn index_axis0(&self, i: usize) -> Tensor<T> {
        Tensor {
            shape: self.shape[1..].to_vec(),
            data: self.slab(i).to_vec(),
        }
    }

    /// Stack equally shaped tensors along a new leading axis.
    pub fn stack(items: &[Tensor<T>]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::invalid("cannot stack an empty list"))?;
        let mut shape = vec![items.len()];
        shape.extend_from_slice(&first.shape);
        let mut data = Vec::with_capacity(first.len() * items.len());
        for item in items {
            first.expect_same_shape(item, "stack")?;
            data.extend_from_slice(&item.data);
        }
        Ok(Tensor { shape, data })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn hadamard_product() {
        let out = t(&[2], &[1.0, 2.0]).mul(&t(&[2], &[3.0, 4.0])).unwrap();
        assert_eq!(out.data(), &[3.0, 8.0]);
    }

    #[test]
    fn sigmoid_of_zero_is_half() {
        let out = Tensor::<f64>::zeros(&[2, 2]).sigmoid();
        assert!(out.data().iter().all(|&x| x == 0.5));
    }

    #[test]
    fn add_zero_is_identity() {
        let x = t(&[3], &[1.5, -2.0, 7.25]);
        assert_eq!(x.add(&Tensor::zeros(&[3])).unwrap(), x);
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let err = t(&[2], &[1.0, 2.0]).add(&t(&[3], &[1.0, 2.0, 3.0])).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2]") && msg.contains("[3]"), "{msg}");
    }

    #[test]
    fn elementwise_operand_count() {
        let x = t(&[1], &[1.0]);
        assert!(Tensor::elementwise(ElementwiseOp::Add, &x, None).is_err());
        assert!(Tensor::elementwise(ElementwiseOp::Relu, &x, Some(&x)).is_err());
        let r = Tensor::elementwise(ElementwiseOp::Relu, &t(&[2], &[-1.0, 2.0]), None).unwrap();
        assert_eq!(r.data(), &[0.0, 2.0]);
    }

    #[test]
    fn zero_dimension_rejected() {
        assert!(Tensor::<f64>::new(vec![2, 0], vec![]).is_err());
        assert!(Tensor::<f64>::new(vec![2, 2], vec![1.0; 3]).is_err());
    }

    #[test]
    fn mean_examples() {
        let x = t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let all = x.reduce_mean(&[0, 1]).unwrap();
        assert_eq!(all.shape(), &[] as &[usize]);
        assert_eq!(all.data(), &[2.5]);
        assert_eq!(x.reduce_mean(&[0]).unwrap().data(), &[2.0, 3.0]);
        assert_eq!(x.reduce_mean(&[1]).unwrap().data(), &[1.5, 3.5]);
        assert_eq!(x.reduce_mean(&[]).unwrap(), x);

        let sevens = Tensor::<f64>::full(&[3, 4, 5], 7.0);
        for axes in [&[0usize][..], &[1, 2], &[0, 1, 2], &[2]] {
            assert!(sevens.reduce_mean(axes).unwrap().data().iter().all(|&v| v == 7.0));
        }
        assert!(matches!(
            x.reduce_mean(&[2]),
            Err(Error::AxisOutOfRange { axis: 2, rank: 2 })
        ));
    }

    #[test]
    fn stack_and_slab() {
        let a = t(&[2], &[1.0, 2.0]);
        let b = t(&[2], &[3.0, 4.0]);
        let s = Tensor::stack(&[a.clone(), b]).unwrap();
        assert_eq!(s.shape(), &[2, 2]);
        assert_eq!(s.index_axis0(0), a);
        assert_eq!(s.slab(1), &[3.0, 4.0]);
    }

    fn shape_strategy() -> impl Strategy<Value = Vec<usize>> {
        prop::collection::vec(1usize..5, 1..5)
    }

    proptest! {
        #[test]
        fn hadamard_commutes_with_ones_identity(
            data in prop::collection::vec(-1e3f64..1e3, 1..40)
        ) {
            let n = data.len();
            let a = Tensor::new(vec![n], data.clone()).unwrap();
            let b = Tensor::new(vec![n], data.iter().rev().copied().collect()).unwrap();
            prop_assert_eq!(a.mul(&b).unwrap(), b.mul(&a).unwrap());
            prop_assert_eq!(a.mul(&Tensor::ones(&[n])).unwrap(), a);
        }

        #[test]
        fn global_mean_matches_sum_over_len(
            shape in shape_strategy(),
            seed in any::<u64>()
        ) {
            let mut rng = crate::rng::Rng::new(seed);
            let x = crate::rng::random_uniform::<f64>(&mut rng, &shape, -10.0, 10.0).unwrap();
            let axes: Vec<usize> = (0..shape.len()).collect();
            let mean = x.reduce_mean(&axes).unwrap().data()[0];
            let expect = x.data().iter().sum::<f64>() / x.len() as f64;
            prop_assert!((mean - expect).abs() <= 1e-12 * expect.abs().max(1e-300));
        }

        #[test]
        fn flat_index_round_trip(shape in shape_strategy(), pick in any::<usize>()) {
            let x = Tensor::<f64>::zeros(&shape);
            let flat = pick % x.len();
            let multi = x.unravel_index(flat).unwrap();
            prop_assert_eq!(x.ravel_index(&multi).unwrap(), flat);
            let strides = x.strides();
            let via_strides: usize = multi.iter().zip(&strides).map(|(i, s)| i * s).sum();
            prop_assert_eq!(via_strides, flat);
            prop_assert_eq!(*strides.last().unwrap(), 1);
        }
    }
}
