//! Exact rational arithmetic.
//!
//! Learning coefficients are rational numbers with small denominators, but the
//! intermediate formula terms (products of layer widths) can be large, so all
//! arithmetic goes through 128-bit intermediates and reports overflow instead
//! of wrapping.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum RationalError {
    #[error("rational denominator is zero")]
    ZeroDenominator,
    #[error("rational magnitude exceeds the 64-bit range after reduction")]
    Overflow,
}

/// A fraction kept in canonical form: `den > 0` and `gcd(|num|, den) == 1`.
///
/// Canonical form makes equality, hashing and serialization unambiguous; the
/// fields are private so no non-canonical value can be constructed.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rational {
    num: i64,
    den: i64,
}

const fn gcd_u128(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

impl Rational {
    pub const ZERO: Rational = Rational { num: 0, den: 1 };
    pub const ONE: Rational = Rational { num: 1, den: 1 };

    /// Builds `num/den` in canonical form. Fails on a zero denominator or if
    /// the reduced fraction does not fit in `i64`.
    pub fn new(num: i64, den: i64) -> Result<Rational, RationalError> {
        Rational::from_i128(num as i128, den as i128)
    }

    /// Same as [`Rational::new`] but from 128-bit parts, so callers can pass
    /// unreduced intermediates that only fit after cancellation.
    pub fn from_i128(num: i128, den: i128) -> Result<Rational, RationalError> {
        if den == 0 {
            return Err(RationalError::ZeroDenominator);
        }
        if num == 0 {
            return Ok(Rational::ZERO);
        }
        let negative = (num < 0) != (den < 0);
        let n = num.unsigned_abs();
        let d = den.unsigned_abs();
        let g = gcd_u128(n, d);
        let (n, d) = (n / g, d / g);
        let max_num = if negative {
            1u128 << 63
        } else {
            (1u128 << 63) - 1
        };
        if n > max_num || d > (1u128 << 63) - 1 {
            return Err(RationalError::Overflow);
        }
        let num = if negative {
            (n as i128).wrapping_neg() as i64
        } else {
            n as i64
        };
        Ok(Rational { num, den: d as i64 })
    }

    pub const fn from_integer(n: i64) -> Rational {
        Rational { num: n, den: 1 }
    }

    pub const fn num(&self) -> i64 {
        self.num
    }

    pub const fn den(&self) -> i64 {
        self.den
    }

    pub fn checked_add(self, rhs: Rational) -> Result<Rational, RationalError> {
        let num = self.num as i128 * rhs.den as i128 + rhs.num as i128 * self.den as i128;
        Rational::from_i128(num, self.den as i128 * rhs.den as i128)
    }

    pub fn checked_sub(self, rhs: Rational) -> Result<Rational, RationalError> {
        self.checked_add(-rhs)
    }

    pub fn checked_mul(self, rhs: Rational) -> Result<Rational, RationalError> {
        Rational::from_i128(
            self.num as i128 * rhs.num as i128,
            self.den as i128 * rhs.den as i128,
        )
    }

    pub fn checked_div(self, rhs: Rational) -> Result<Rational, RationalError> {
        if rhs.num == 0 {
            return Err(RationalError::ZeroDenominator);
        }
        Rational::from_i128(
            self.num as i128 * rhs.den as i128,
            self.den as i128 * rhs.num as i128,
        )
    }

    pub fn is_negative(&self) -> bool {
        self.num < 0
    }

    pub fn to_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl Neg for Rational {
    type Output = Rational;
    fn neg(self) -> Rational {
        // num == i64::MIN cannot occur: canonical positives are capped at i64::MAX.
        Rational {
            num: -self.num,
            den: self.den,
        }
    }
}

macro_rules! panicking_op {
    ($trait:ident, $method:ident, $checked:ident) => {
        impl $trait for Rational {
            type Output = Rational;
            fn $method(self, rhs: Rational) -> Rational {
                self.$checked(rhs)
                    .unwrap_or_else(|e| panic!("rational {}: {e}", stringify!($method)))
            }
        }
    };
}

panicking_op!(Add, add, checked_add);
panicking_op!(Sub, sub, checked_sub);
panicking_op!(Mul, mul, checked_mul);
panicking_op!(Div, div, checked_div);

impl PartialOrd for Rational {
    fn partial_cmp(&self, other: &Rational) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Rational {
    fn cmp(&self, other: &Rational) -> Ordering {
        // Denominators are positive, so cross-multiplication preserves order;
        // i64 * i64 always fits in i128.
        let lhs = self.num as i128 * other.den as i128;
        let rhs = other.num as i128 * self.den as i128;
        lhs.cmp(&rhs)
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl fmt::Debug for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Rational({self})")
    }
}

#[derive(Serialize, Deserialize)]
struct RationalRepr {
    num: i64,
    den: i64,
}

impl Serialize for Rational {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        RationalRepr {
            num: self.num,
            den: self.den,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Rational {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Rational, D::Error> {
        let repr = RationalRepr::deserialize(deserializer)?;
        Rational::new(repr.num, repr.den).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonicalizes_sign_and_common_factors() {
        let r = Rational::new(6, -4).unwrap();
        assert_eq!((r.num(), r.den()), (-3, 2));
        assert_eq!(r, Rational::new(-3, 2).unwrap());
        assert_eq!(Rational::new(0, -7).unwrap(), Rational::ZERO);
    }

    #[test]
    fn rejects_zero_denominator() {
        assert_eq!(Rational::new(1, 0), Err(RationalError::ZeroDenominator));
    }

    #[test]
    fn arithmetic_is_exact() {
        let half = Rational::new(1, 2).unwrap();
        let third = Rational::new(1, 3).unwrap();
        assert_eq!(half + third, Rational::new(5, 6).unwrap());
        assert_eq!(half - third, Rational::new(1, 6).unwrap());
        assert_eq!(half * third, Rational::new(1, 6).unwrap());
        assert_eq!(half / third, Rational::new(3, 2).unwrap());
        assert_eq!(-half, Rational::new(-1, 2).unwrap());
    }

    #[test]
    fn large_intermediates_reduce_back_into_range() {
        // (a/b) * (b/a) = 1 even when a*b would overflow i64 before reduction.
        let a = Rational::new(i64::MAX, 3).unwrap();
        let b = Rational::new(3, i64::MAX).unwrap();
        assert_eq!(a.checked_mul(b).unwrap(), Rational::ONE);
        // But a genuinely out-of-range result is reported, not wrapped.
        assert_eq!(a.checked_mul(a), Err(RationalError::Overflow));
    }

    #[test]
    fn ordering_matches_real_numbers() {
        let mut values = [
            Rational::new(3, 2).unwrap(),
            Rational::new(-1, 2).unwrap(),
            Rational::ZERO,
            Rational::new(7, 5).unwrap(),
        ];
        values.sort();
        let as_f64: Vec<f64> = values.iter().map(Rational::to_f64).collect();
        assert_eq!(as_f64, vec![-0.5, 0.0, 1.4, 1.5]);
    }

    #[test]
    fn serde_round_trip_uses_num_den_fields() {
        let r = Rational::new(-3, 2).unwrap();
        let json = serde_json::to_string(&r).unwrap();
        assert_eq!(json, r#"{"num":-3,"den":2}"#);
        let back: Rational = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
        // Non-canonical input is accepted as a value and canonicalized.
        let canon: Rational = serde_json::from_str(r#"{"num":2,"den":4}"#).unwrap();
        assert_eq!(canon, Rational::new(1, 2).unwrap());
        assert!(serde_json::from_str::<Rational>(r#"{"num":1,"den":0}"#).is_err());
    }

    #[test]
    fn display_omits_unit_denominator() {
        assert_eq!(Rational::new(4, 2).unwrap().to_string(), "2");
        assert_eq!(Rational::new(-7, 4).unwrap().to_string(), "-7/4");
    }
}
