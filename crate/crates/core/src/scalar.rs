//! Scalar abstraction for the real-valued algebra (potentials, derived
//! constants, characteristic roots). Both `f32` and `f64` satisfy it.

use num_traits::{Float, FloatConst, FromPrimitive};
use std::fmt::{Debug, Display};

pub trait Scalar:
    Float + FloatConst + FromPrimitive + Debug + Display + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Scalar for T where
    T: Float + FloatConst + FromPrimitive + Debug + Display + Send + Sync + 'static
{
}

pub fn sech<T: Scalar>(x: T) -> T {
    // 2/(e^x + e^-x) overflows for |x| > 710 in f64; use the decaying branch.
    let ax = x.abs();
    let e = (-ax).exp();
    T::lit(2.0) * e / (T::one() + e * e)
}
