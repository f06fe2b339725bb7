//! Scalar abstraction shared by every numeric routine in the crate.
//!
//! Coalition enumeration, the Shapley and Shapley-Taylor sums, and the
//! synthetic generators only need field arithmetic, so they are written
//! against [`Scalar`] and run unchanged on `f32`, `f64` and
//! [`Rational64`]. Routines that need a square root (standard deviations,
//! standard errors, boosting) additionally require [`num_traits::Float`].

use std::fmt::{Debug, Display};
use std::str::FromStr;

use num_rational::Rational64;
use num_traits::{FromPrimitive, Num, NumAssign, Signed, ToPrimitive};

pub trait Scalar:
    Num
    + NumAssign
    + Signed
    + Copy
    + PartialOrd
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + FromStr
    + Send
    + Sync
    + 'static
{
    /// `num / den` with a single rounding step for floating types.
    ///
    /// Returns `None` when the ratio is not representable (rational overflow).
    fn ratio(num: u128, den: u128) -> Option<Self>;

    fn from_count(n: usize) -> Self;

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    fn ratio(num: u128, den: u128) -> Option<Self> {
        Some(num as f64 / den as f64)
    }

    fn from_count(n: usize) -> Self {
        n as f64
    }
}

impl Scalar for f32 {
    fn ratio(num: u128, den: u128) -> Option<Self> {
        Some(num as f32 / den as f32)
    }

    fn from_count(n: usize) -> Self {
        n as f32
    }
}

impl Scalar for Rational64 {
    fn ratio(num: u128, den: u128) -> Option<Self> {
        let num = i64::try_from(num).ok()?;
        let den = i64::try_from(den).ok()?;
        if den == 0 {
            return None;
        }
        Some(Rational64::new(num, den))
    }

    fn from_count(n: usize) -> Self {
        Rational64::from_integer(n as i64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_is_exact_for_rationals() {
        let third = Rational64::ratio(2, 6).unwrap();
        assert_eq!(third, Rational64::new(1, 3));
        assert!(Rational64::ratio(u128::from(u64::MAX), 1).is_none());
    }

    #[test]
    fn ratio_rounds_once_for_floats() {
        assert_eq!(f64::ratio(1, 3).unwrap(), 1.0 / 3.0);
        assert_eq!(f32::ratio(1, 4).unwrap(), 0.25);
    }
}
