//! Scalar abstraction shared by every geometric routine.
//!
//! All mesh, curvature and flow code is written against [`Real`], so the same
//! stencils run in `f32`, `f64` and in [`Dual`](crate::dual::Dual) arithmetic.
//! The dual instantiation is what gives exact directional derivatives of the
//! discrete energies.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FloatConst, FromPrimitive};

pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
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
    /// Converts an `f64` literal into this scalar.
    fn cst(x: f64) -> Self;

    /// Value part as `f64` (drops derivative information for dual numbers).
    fn value(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn cst(x: f64) -> Self {
        x as f32
    }

    #[inline]
    fn value(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn cst(x: f64) -> Self {
        x
    }

    #[inline]
    fn value(self) -> f64 {
        self
    }
}

/// Kahan-compensated sum, used wherever a reduction feeds an energy value.
pub fn compensated_sum<T: Real, I: IntoIterator<Item = T>>(iter: I) -> T {
    let mut sum = T::zero();
    let mut carry = T::zero();
    for x in iter {
        let y = x - carry;
        let t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_beats_naive_on_cancellation() {
        let mut xs = vec![1.0e16_f64];
        xs.extend(std::iter::repeat(1.0).take(1000));
        xs.push(-1.0e16);
        let naive: f64 = xs.iter().copied().sum();
        let kahan = compensated_sum(xs.iter().copied());
        assert_eq!(kahan, 1000.0);
        assert_ne!(naive, 1000.0);
    }

    #[test]
    fn cst_round_trips() {
        assert_eq!(<f64 as Real>::cst(0.25).value(), 0.25);
        assert_eq!(<f32 as Real>::cst(0.5).value(), 0.5);
    }
}
