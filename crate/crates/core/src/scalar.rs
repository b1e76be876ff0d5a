//! Floating point bound shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar used for features, weights, probabilities and losses.
///
/// Implemented for `f32` and `f64`. Everything that leaves the crate as a
/// report (metrics, checkpoints) is converted to `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + LinalgScalar
    + ScalarOperand
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`; used for constants and parsed values.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 is representable in every Scalar")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Probability clamp applied before every logarithm.
    ///
    /// `1e-12` for `f64`. Types whose machine epsilon is coarser than that
    /// (`f32`) use their own epsilon so that `1 - eps` stays below one.
    fn prob_eps() -> Self {
        let fixed = Self::of(1e-12);
        if fixed > Self::epsilon() {
            fixed
        } else {
            Self::epsilon()
        }
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Logistic function, evaluated without overflow for large `|t|`.
///
/// The result is kept strictly inside (0, 1): saturated values are pinned to
/// the nearest representable neighbours of 0 and 1.
pub fn sigmoid<T: Scalar>(t: T) -> T {
    let p = if t >= T::zero() {
        T::one() / (T::one() + (-t).exp())
    } else {
        let e = t.exp();
        e / (T::one() + e)
    };
    let upper = T::one() - T::epsilon() / T::of(2.0);
    p.max(T::min_positive_value()).min(upper)
}
