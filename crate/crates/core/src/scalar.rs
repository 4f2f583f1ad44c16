use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point scalar the numerical core is written against: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable in every Scalar")
    }

    #[inline]
    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("count is representable in every Scalar")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Bound on the sigmoid argument; `exp(500)` is finite in f64 and the
/// clamped tail is already saturated in both precisions.
const SIGMOID_CLAMP: f64 = 500.0;

/// Logistic function `1 / (1 + e^{-z})`, branch-evaluated so that extreme
/// arguments saturate instead of producing NaN.
pub fn sigmoid<F: Scalar>(z: F) -> F {
    let bound = F::of(SIGMOID_CLAMP);
    let z = z.max(-bound).min(bound);
    if z >= F::zero() {
        F::one() / (F::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (F::one() + e)
    }
}
