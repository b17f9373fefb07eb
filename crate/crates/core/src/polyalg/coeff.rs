use std::fmt::Debug;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

/// Exact rational scalar used by all symbolic computations.
pub type Rational = BigRational;

/// Coefficient ring for polynomials and vector fields.
///
/// Implemented for exact rationals and for `f64`; the latter is only used at
/// evaluation and optimization boundaries.
pub trait Coeff:
    Clone
    + Debug
    + PartialEq
    + Zero
    + One
    + Neg<Output = Self>
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Send
    + Sync
    + 'static
{
    fn from_rational(q: &Rational) -> Self;
    fn from_i64(n: i64) -> Self;
    /// Division by a positive integer (used for factorials in Lie series).
    fn div_u64(&self, n: u64) -> Self;
    fn to_f64(&self) -> f64;
}

impl Coeff for Rational {
    fn from_rational(q: &Rational) -> Self {
        q.clone()
    }

    fn from_i64(n: i64) -> Self {
        Rational::from_integer(BigInt::from(n))
    }

    fn div_u64(&self, n: u64) -> Self {
        self / Rational::from_integer(BigInt::from(n))
    }

    fn to_f64(&self) -> f64 {
        rational_to_f64(self)
    }
}

impl Coeff for f64 {
    fn from_rational(q: &Rational) -> Self {
        rational_to_f64(q)
    }

    fn from_i64(n: i64) -> Self {
        n as f64
    }

    fn div_u64(&self, n: u64) -> Self {
        self / n as f64
    }

    fn to_f64(&self) -> f64 {
        *self
    }
}

/// Nearest `f64` to a rational (falls back to a ratio of floats for huge parts).
pub fn rational_to_f64(q: &Rational) -> f64 {
    if let Some(v) = num_traits::ToPrimitive::to_f64(q) {
        return v;
    }
    let n = q.numer().to_f64().unwrap_or(f64::NAN);
    let d = q.denom().to_f64().unwrap_or(f64::NAN);
    n / d
}

/// Exact rational value of a finite `f64`.
pub fn f64_to_rational(x: f64) -> Option<Rational> {
    Rational::from_float(x)
}

pub fn rat(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

pub fn rint(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// `eps^k` for an integer exponent of either sign.
pub fn rational_pow(eps: &Rational, k: i64) -> Rational {
    let base = if k < 0 { eps.recip() } else { eps.clone() };
    let mut acc = Rational::one();
    for _ in 0..k.unsigned_abs() {
        acc *= &base;
    }
    acc
}
