//! Dense tensors: a flat buffer plus shape, with an optional gradient slot.

use crate::error::{Error, Result};
use num_traits::{Float, FromPrimitive};
use std::fmt::{Debug, Display};
use std::ops::{AddAssign, MulAssign, SubAssign};

/// Element type of the numeric backbone. `f32` is the working precision,
/// `f64` is used by the verification (finite-difference) mode.
pub trait Scalar:
    Float
    + FromPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from f64 (named to avoid clashing with
    /// `FromPrimitive::from_f64`).
    fn of_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    #[inline(always)]
    fn of_f64(v: f64) -> Self {
        v as f32
    }
    #[inline(always)]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline(always)]
    fn of_f64(v: f64) -> Self {
        v
    }
    #[inline(always)]
    fn as_f64(self) -> f64 {
        self
    }
}

/// Working precision of the networks and trainer.
pub type Real = f32;

/// Dense n-dimensional array. `product(shape) == data.len()` always holds;
/// `grad`, when present, matches `data` in length.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<F: Scalar> {
    shape: Vec<usize>,
    data: Vec<F>,
    pub requires_grad: bool,
    pub grad: Option<Vec<F>>,
}

impl<F: Scalar> Tensor<F> {
    pub fn new(shape: Vec<usize>, data: Vec<F>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::InvalidArgument(format!(
                "tensor extents must be positive, got {shape:?}"
            )));
        }
        if numel != data.len() {
            return Err(Error::InvalidArgument(format!(
                "shape {shape:?} implies {numel} elements, buffer has {}",
                data.len()
            )));
        }
        Ok(Tensor {
            shape,
            data,
            requires_grad: false,
            grad: None,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel: usize = shape.iter().product();
        Tensor {
            shape,
            data: vec![F::zero(); numel],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn scalar(v: F) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![v],
            requires_grad: false,
            grad: None,
        }
    }

    /// Marks the tensor as a trainable parameter.
    pub fn param(shape: Vec<usize>, data: Vec<F>) -> Result<Self> {
        let mut t = Tensor::new(shape, data)?;
        t.requires_grad = true;
        Ok(t)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Value of a one-element tensor.
    pub fn item(&self) -> F {
        debug_assert_eq!(self.numel(), 1);
        self.data[0]
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Compact shape used inside the tape; ranks up to 4 (conv2d weights).
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub(crate) struct Dims {
    d: [usize; 4],
    rank: u8,
}

impl Dims {
    pub fn from_slice(s: &[usize]) -> Self {
        debug_assert!(s.len() <= 4, "rank > 4 unsupported");
        let mut d = [0usize; 4];
        d[..s.len()].copy_from_slice(s);
        Dims {
            d,
            rank: s.len() as u8,
        }
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.d[..self.rank as usize]
    }

    pub fn numel(&self) -> usize {
        self.as_slice().iter().product()
    }

    pub fn to_vec(self) -> Vec<usize> {
        self.as_slice().to_vec()
    }
}
