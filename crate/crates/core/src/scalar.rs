//! Floating-point abstraction shared by the numerical modules.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Real scalar used throughout the numerical core (`f32` or `f64`).
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Smallest probability the logistic mean is allowed to take.
    ///
    /// `1e-10` in double precision. In single precision `1 - 1e-10` rounds to
    /// one, so the floor widens to a few machine epsilons.
    fn prob_floor() -> Self;

    /// Converts an `f64` literal; infallible for the supported types.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    fn to_f64_lossless(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }
}

impl Scalar for f64 {
    fn prob_floor() -> Self {
        1e-10
    }
}

impl Scalar for f32 {
    fn prob_floor() -> Self {
        4.0 * f32::EPSILON
    }
}

/// Mean computed as `x[0] + Σ(x - x[0]) / n` so that a run of identical values
/// reproduces that value bit-for-bit.
pub(crate) fn shifted_mean<S: Scalar>(values: impl IntoIterator<Item = (S, S)>) -> Option<S> {
    let mut iter = values.into_iter();
    let (first, w0) = iter.next()?;
    let mut total_w = w0;
    let mut acc = S::zero();
    for (v, w) in iter {
        acc += w * (v - first);
        total_w += w;
    }
    if total_w <= S::zero() {
        return None;
    }
    Some(first + acc / total_w)
}
