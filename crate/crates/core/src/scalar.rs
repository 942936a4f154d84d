use std::fmt::{Debug, Display, LowerExp};

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point type the simulator can run on.
///
/// Transcendental functions come from [`RealField`]; conversions from
/// num-traits. Constants are written as `f64` literals and converted with
/// [`Scalar::of`].
pub trait Scalar:
    RealField
    + Copy
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Display
    + LowerExp
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Machine epsilon.
    const EPS: Self;

    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant representable in scalar type")
    }

    fn of_usize(x: usize) -> Self {
        Self::from_usize(x).expect("count representable in scalar type")
    }

    fn f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }

    /// `tol` as a tolerance, but never tighter than a few hundred ulps of 1.
    fn tol(tol: f64) -> Self {
        Self::of(tol.max(Self::EPS.f64() * 256.0))
    }
}

impl Scalar for f64 {
    const EPS: Self = f64::EPSILON;
}

impl Scalar for f32 {
    const EPS: Self = f32::EPSILON;
}

/// Unnormalized cardinal sine `sin(x)/x` with `sinc(0) = 1`.
pub fn sinc<T: Scalar>(x: T) -> T {
    if x.abs() < T::of(1e-4) {
        let x2 = x * x;
        T::one() - x2 / T::of(6.0) + x2 * x2 / T::of(120.0)
    } else {
        x.sin() / x
    }
}
