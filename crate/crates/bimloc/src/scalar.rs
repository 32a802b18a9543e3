//! Scalar abstraction: every geometric routine in this crate is generic over
//! [`Real`], instantiated as `f32` or `f64`.
//!
//! The crate root exports concrete aliases (`Point3f64`, `Posef32`, ...) so
//! downstream code that does not care about genericity can stay monomorphic.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point scalar usable for all geometry in this crate.
///
/// `RealField` brings the trigonometry and linear-algebra surface needed by
/// `nalgebra`; the `num_traits` conversions let generic code absorb `f64`
/// constants (tolerances, config values) and report metrics back as `f64`.
pub trait Real: RealField + FromPrimitive + ToPrimitive + Copy {
    /// Machine epsilon of the concrete type.
    const EPS: Self;

    /// Convert an `f64` constant into this scalar type.
    ///
    /// Panics if the value is not representable; every constant fed through
    /// this path is a small configuration number, so that never fires.
    #[inline]
    fn of(value: f64) -> Self {
        Self::from_f64(value).expect("constant not representable in scalar type")
    }

    /// Convert a count into this scalar type.
    #[inline]
    fn of_usize(value: usize) -> Self {
        Self::from_usize(value).expect("count not representable in scalar type")
    }

    /// Lossy widening back to `f64` for reporting and serialization.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar not convertible to f64")
    }
}

impl Real for f32 {
    const EPS: Self = f32::EPSILON;
}

impl Real for f64 {
    const EPS: Self = f64::EPSILON;
}
