//! Scalar abstraction shared by every estimand computation.
//!
//! All population and identification math is written against [`Scalar`] so
//! the same code runs in `f64` (the default, used by the CLI and the
//! simulator) and in `f32` for memory-bound sweeps.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point type usable for probabilities, ratios and log-ratios.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Tolerance for "sums to one" checks on probability masses.
    const MASS_TOLERANCE: f64;

    /// Bisection tolerance on probabilities when inverting curves.
    const SOLVE_TOLERANCE: f64;

    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    #[inline]
    fn from_count(n: u64) -> Self {
        Self::from_u64(n).expect("count representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    const MASS_TOLERANCE: f64 = 1e-12;
    const SOLVE_TOLERANCE: f64 = 1e-10;
}

impl Scalar for f32 {
    const MASS_TOLERANCE: f64 = 1e-5;
    const SOLVE_TOLERANCE: f64 = 1e-6;
}

/// Sum with Neumaier compensation; mixtures of many small atoms otherwise
/// drift past the mass tolerance.
pub fn compensated_sum<T: Scalar, I: IntoIterator<Item = T>>(values: I) -> T {
    let mut sum = T::zero();
    let mut comp = T::zero();
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp = comp + ((sum - t) + v);
        } else {
            comp = comp + ((v - t) + sum);
        }
        sum = t;
    }
    sum + comp
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_beats_naive_on_tiny_terms() {
        let mut v = vec![1.0f64];
        v.extend(std::iter::repeat_n(1e-16, 10_000));
        let s = compensated_sum(v.iter().copied());
        assert!((s - (1.0 + 1e-12)).abs() < 1e-15);
    }

    #[test]
    fn literals_round_trip() {
        assert_eq!(f32::lit(0.25), 0.25f32);
        assert_eq!(f64::from_count(10_000), 10_000.0);
    }
}
