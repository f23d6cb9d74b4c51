//! Scalar traits shared by the jet engine and the geometry pipeline.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::Neg;

use num_traits::{Float, FromPrimitive, Num, NumAssign};

use crate::metricdef::expr::ExprScalar;

/// Coefficient type of a [`Jet`](crate::jets::Jet).
///
/// Only field operations are required, so exact types such as
/// `num_rational::Ratio<i64>` work for polynomial arithmetic.
pub trait Coeff: Clone + Num + Neg<Output = Self> + FromPrimitive + Debug + Send + Sync + 'static {}

impl<T> Coeff for T where T: Clone + Num + Neg<Output = T> + FromPrimitive + Debug + Send + Sync + 'static {}

/// Floating point scalar: `f32` or `f64`.
pub trait Real: Float + Coeff + NumAssign + Display + Default + Sum + Copy + ExprScalar {}

impl Real for f32 {}
impl Real for f64 {}

/// Converts an `f64` literal into `T`.
#[inline]
pub(crate) fn lit<T: FromPrimitive>(v: f64) -> T {
    T::from_f64(v).expect("literal not representable")
}

#[inline]
pub(crate) fn to_f64<T: Real>(v: T) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}
