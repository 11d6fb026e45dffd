//! Dense tensors and a tape-based reverse-mode differentiation engine.
//!
//! The engine supplies exactly the operations the classifier needs. Values
//! live in [`Tensor`]s; a [`Tape`] records every operation applied to them
//! and replays the chain rule backwards from a scalar loss.
//!
//! Two storage precisions exist. `f32` is the training precision; `f64` is
//! used for finite-difference gradient checks. Both accumulate reductions
//! in `f64` and round once when the result is stored.

mod activation;
mod conv;
pub mod gradcheck;
mod heap;
mod loss;
mod norm;
pub mod reference;
mod shape_ops;
mod tape;

use std::borrow::Cow;
use std::fmt;

pub use norm::{BatchMoments, BN_EPS, BN_MOMENTUM, LN_EPS};
pub use heap::retain_heap;
pub use tape::{Tape, Var};

pub use activation::{gelu_scalar, GELU_CUBIC};

use crate::error::{invalid, Result};

/// Maximum supported tensor rank.
pub const MAX_RANK: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Precision {
    F32,
    F64,
}

/// Train/eval switch for batch norm and dropout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Train,
    Eval,
}

/// Floating-point storage type of a tensor.
pub trait Element:
    Copy + Default + PartialEq + PartialOrd + fmt::Debug + fmt::Display + Send + Sync + 'static
{
    const PRECISION: Precision;

    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;

    /// View a slice as `f64`, copying only when the storage type differs.
    fn slice_to_f64(s: &[Self]) -> Cow<'_, [f64]>;

    fn is_finite(self) -> bool {
        self.to_f64().is_finite()
    }
}

impl Element for f32 {
    const PRECISION: Precision = Precision::F32;

    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }

    fn slice_to_f64(s: &[Self]) -> Cow<'_, [f64]> {
        Cow::Owned(s.iter().map(|&v| v as f64).collect())
    }
}

impl Element for f64 {
    const PRECISION: Precision = Precision::F64;

    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }

    #[inline]
    fn to_f64(self) -> f64 {
        self
    }

    fn slice_to_f64(s: &[Self]) -> Cow<'_, [f64]> {
        Cow::Borrowed(s)
    }
}

/// Sum of `f(x)` over `xs` using eight interleaved partial sums, so the loop
/// vectorizes. The order is fixed, so results stay reproducible.
#[inline]
pub(crate) fn lane_sum<T: Copy>(xs: &[T], f: impl Fn(T) -> f64) -> f64 {
    let mut acc = [0.0f64; 8];
    let chunks = xs.chunks_exact(8);
    let rest = chunks.remainder();
    for c in chunks {
        for i in 0..8 {
            acc[i] += f(c[i]);
        }
    }
    let mut total = ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
    for &v in rest {
        total += f(v);
    }
    total
}

/// [`lane_sum`] over two slices of equal length.
#[inline]
pub(crate) fn lane_dot<A: Copy, B: Copy>(a: &[A], b: &[B], f: impl Fn(A, B) -> f64) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 8];
    let split = n - n % 8;
    for (ca, cb) in a[..split].chunks_exact(8).zip(b[..split].chunks_exact(8)) {
        for i in 0..8 {
            acc[i] += f(ca[i], cb[i]);
        }
    }
    let mut total = ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
    for i in split..n {
        total += f(a[i], b[i]);
    }
    total
}

pub(crate) fn store<E: Element>(values: Vec<f64>) -> Vec<E> {
    values.into_iter().map(E::from_f64).collect()
}

/// Row-major dense array of rank at most four.
#[derive(Clone, PartialEq)]
pub struct Tensor<E> {
    shape: Vec<usize>,
    data: Vec<E>,
}

impl<E: Element> Tensor<E> {
    pub fn new(shape: &[usize], data: Vec<E>) -> Result<Self> {
        check_rank(shape)?;
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(invalid(format!(
                "shape {shape:?} holds {numel} values but {} were supplied",
                data.len()
            )));
        }
        Ok(Self { shape: shape.to_vec(), data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::filled(shape, E::default())
    }

    pub fn filled(shape: &[usize], value: E) -> Self {
        check_rank(shape).expect("tensor rank");
        let numel = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![value; numel] }
    }

    pub fn from_f64(shape: &[usize], values: &[f64]) -> Result<Self> {
        Self::new(shape, values.iter().map(|&v| E::from_f64(v)).collect())
    }

    pub fn scalar(value: f64) -> Self {
        Self { shape: vec![1], data: vec![E::from_f64(value)] }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[E] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [E] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<E> {
        self.data
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.to_f64()).collect()
    }

    /// Same values under a new shape with the same element count.
    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        check_rank(shape)?;
        let numel: usize = shape.iter().product();
        if numel != self.data.len() {
            return Err(invalid(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// Convert to another storage precision, rounding if narrowing.
    pub fn cast<F: Element>(&self) -> Tensor<F> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| F::from_f64(v.to_f64())).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl<E: Element> fmt::Debug for Tensor<E> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const PREVIEW: usize = 8;
        write!(f, "Tensor{:?}[", self.shape)?;
        for (i, v) in self.data.iter().take(PREVIEW).enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}")?;
        }
        if self.data.len() > PREVIEW {
            write!(f, ", ...")?;
        }
        write!(f, "]")
    }
}

fn check_rank(shape: &[usize]) -> Result<()> {
    if shape.is_empty() || shape.len() > MAX_RANK {
        return Err(invalid(format!(
            "tensor rank must be in 1..={MAX_RANK}, got shape {shape:?}"
        )));
    }
    Ok(())
}
