//! Dense NCHW tensors and the kernels built on them.
//!
//! Every operation here is a pure function: it reads its inputs and returns
//! freshly allocated outputs (gradients included). Layout is fixed to
//! row-major `(batch, channels, height, width)`.

pub(crate) mod conv;
mod dense;
pub mod format;
mod gradcheck;
mod pool;
mod resize;

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Axis, Error, Result};

pub use conv::{
    conv2d_backward, conv2d_forward, conv_output_len, same_padding, ConvGeometry, ConvGrads,
    ConvKernel,
};
pub use dense::{linear, linear_backward, relu, relu_backward, softmax, softmax_backward, Dense, DenseGrads};
pub use gradcheck::{grad_check, GradCheckReport};
pub use pool::{adaptive_avg_pool, adaptive_avg_pool_backward, avg_pool, avg_pool_backward, PoolSpec};
pub use resize::{resize_bilinear, resize_nearest};

/// Floating-point element type. `f32` is used for training runs, `f64` for
/// gradient and oracle checks.
pub trait Real:
    Float
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + 'static
{
    /// Precision flag written to the tensor file header.
    const PRECISION_FLAG: u8;
    const BYTES: usize;

    fn cast(v: f64) -> Self;
    fn as_f64(self) -> f64;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

impl Real for f32 {
    const PRECISION_FLAG: u8 = 0;
    const BYTES: usize = 4;

    fn cast(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }
}

impl Real for f64 {
    const PRECISION_FLAG: u8 = 1;
    const BYTES: usize = 8;

    fn cast(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub batch: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Dims {
    pub const fn new(batch: usize, channels: usize, height: usize, width: usize) -> Self {
        Dims {
            batch,
            channels,
            height,
            width,
        }
    }

    pub const fn len(&self) -> usize {
        self.batch * self.channels * self.height * self.width
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Elements in one batch item.
    pub const fn sample_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub const fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub const fn with_batch(self, batch: usize) -> Self {
        Dims { batch, ..self }
    }

    pub fn as_array(&self) -> [usize; 4] {
        [self.batch, self.channels, self.height, self.width]
    }

    pub(crate) fn expect_eq(&self, other: &Dims, op: &'static str) -> Result<()> {
        let pairs = [
            (Axis::Batch, self.batch, other.batch),
            (Axis::Channels, self.channels, other.channels),
            (Axis::Height, self.height, other.height),
            (Axis::Width, self.width, other.width),
        ];
        for (axis, expected, found) in pairs {
            if expected != found {
                return Err(Error::Shape {
                    op,
                    axis,
                    expected,
                    found,
                });
            }
        }
        Ok(())
    }
}

impl std::fmt::Display for Dims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}x{}x{}x{}",
            self.batch, self.channels, self.height, self.width
        )
    }
}

/// Dense 4-D array with an optional gradient slot of the same shape.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    dims: Dims,
    values: Vec<T>,
    grad: Option<Vec<T>>,
}

impl<T: Real> Tensor<T> {
    pub fn new(dims: Dims, values: Vec<T>) -> Result<Self> {
        if values.len() != dims.len() {
            return Err(Error::InvalidArgument(format!(
                "tensor {dims} needs {} values, got {}",
                dims.len(),
                values.len()
            )));
        }
        Ok(Tensor {
            dims,
            values,
            grad: None,
        })
    }

    pub fn zeros(dims: Dims) -> Self {
        Self::full(dims, T::zero())
    }

    pub fn full(dims: Dims, value: T) -> Self {
        Tensor {
            dims,
            values: vec![value; dims.len()],
            grad: None,
        }
    }

    /// Builds a tensor from `f(n, c, y, x)`.
    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize, usize) -> T) -> Self {
        let mut values = Vec::with_capacity(dims.len());
        for n in 0..dims.batch {
            for c in 0..dims.channels {
                for y in 0..dims.height {
                    for x in 0..dims.width {
                        values.push(f(n, c, y, x));
                    }
                }
            }
        }
        Tensor {
            dims,
            values,
            grad: None,
        }
    }

    /// Convenience constructor for a single-channel, single-image grid.
    pub fn from_rows(rows: &[&[T]]) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::InvalidArgument("ragged rows".into()));
        }
        let values = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::new(Dims::new(1, 1, height, width), values)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn grad(&self) -> Option<&[T]> {
        self.grad.as_deref()
    }

    pub fn set_grad(&mut self, grad: Vec<T>) -> Result<()> {
        if grad.len() != self.values.len() {
            return Err(Error::InvalidArgument(format!(
                "gradient length {} does not match tensor {}",
                grad.len(),
                self.dims
            )));
        }
        self.grad = Some(grad);
        Ok(())
    }

    pub fn with_grad(mut self, grad: Vec<T>) -> Result<Self> {
        self.set_grad(grad)?;
        Ok(self)
    }

    pub fn take_grad(&mut self) -> Option<Vec<T>> {
        self.grad.take()
    }

    #[inline]
    pub fn offset(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.dims.channels + c) * self.dims.height + y) * self.dims.width + x
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> T {
        self.values[self.offset(n, c, y, x)]
    }

    pub fn set(&mut self, n: usize, c: usize, y: usize, x: usize, v: T) {
        let i = self.offset(n, c, y, x);
        self.values[i] = v;
    }

    /// Values of batch item `n`.
    pub fn sample_values(&self, n: usize) -> &[T] {
        let len = self.dims.sample_len();
        &self.values[n * len..(n + 1) * len]
    }

    /// Copies batch item `n` into a standalone single-image tensor.
    pub fn sample(&self, n: usize) -> Tensor<T> {
        Tensor {
            dims: self.dims.with_batch(1),
            values: self.sample_values(n).to_vec(),
            grad: None,
        }
    }

    /// Concatenates tensors along the batch axis.
    pub fn stack(parts: &[Tensor<T>]) -> Result<Tensor<T>> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("cannot stack zero tensors".into()))?;
        let item = first.dims;
        let mut values = Vec::with_capacity(parts.iter().map(|t| t.len()).sum());
        let mut batch = 0;
        for t in parts {
            item.with_batch(t.dims.batch)
                .expect_eq(&t.dims, "stack")?;
            values.extend_from_slice(&t.values);
            batch += t.dims.batch;
        }
        Tensor::new(item.with_batch(batch), values)
    }

    /// Same values under new dims with equal element count.
    pub fn reshape(self, dims: Dims) -> Result<Tensor<T>> {
        Tensor::new(dims, self.values)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Tensor<T> {
        Tensor {
            dims: self.dims,
            values: self.values.iter().map(|&v| f(v)).collect(),
            grad: None,
        }
    }

    pub fn zip_map(&self, other: &Tensor<T>, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        self.dims.expect_eq(&other.dims, "zip_map")?;
        Ok(Tensor {
            dims: self.dims,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            grad: None,
        })
    }

    pub fn scale(&self, k: T) -> Tensor<T> {
        self.map(|v| v * k)
    }

    pub fn add(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
            && self
                .grad
                .as_ref()
                .is_none_or(|g| g.iter().all(|v| v.is_finite()))
    }

    pub fn sum(&self) -> T {
        self.values.iter().copied().sum()
    }

    pub fn mean(&self) -> T {
        self.sum() / T::cast(self.len() as f64)
    }

    pub fn max_abs_diff(&self, other: &Tensor<T>) -> Result<f64> {
        self.dims.expect_eq(&other.dims, "max_abs_diff")?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a.as_f64() - b.as_f64()).abs())
            .fold(0.0, f64::max))
    }

    /// Max elementwise difference relative to the larger tensor's max magnitude.
    pub fn rel_err(&self, other: &Tensor<T>) -> Result<f64> {
        let diff = self.max_abs_diff(other)?;
        let scale = self
            .values
            .iter()
            .chain(&other.values)
            .map(|v| v.as_f64().abs())
            .fold(0.0, f64::max);
        Ok(if scale == 0.0 { diff } else { diff / scale })
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            dims: self.dims,
            values: self.values.iter().map(|v| U::cast(v.as_f64())).collect(),
            grad: self
                .grad
                .as_ref()
                .map(|g| g.iter().map(|v| U::cast(v.as_f64())).collect()),
        }
    }
}
