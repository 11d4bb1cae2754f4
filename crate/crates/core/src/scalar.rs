//! Numeric backends.
//!
//! Every algebraic quantity in the crate (averages, martingale differences,
//! packing sums, decomposition identities) is written once against [`Scalar`]
//! and evaluated either in `f64` or in exact big rationals. Quantities that need
//! square roots or eigenvalues are always computed in `f64`.

use std::fmt::{Debug, Display};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Num, Signed, ToPrimitive, Zero};

use crate::error::{HaarError, Result};

/// Exact rational backend.
pub type Rational = BigRational;

pub trait Scalar:
    Clone + Debug + Display + PartialOrd + Num + Signed + Send + Sync + 'static
{
    /// `true` for the rational backend.
    const EXACT: bool;

    /// Exact conversion for the rational backend (every finite `f64` is a
    /// dyadic rational).
    fn from_f64(x: f64) -> Self;

    fn to_f64(&self) -> f64;

    fn from_ratio(num: i64, den: i64) -> Self;

    /// Parses `"3/4"`, `"0.01"`, `"1e-3"`. Decimal strings are read exactly by
    /// the rational backend.
    fn parse(text: &str) -> Result<Self>;

    /// Equality up to relative tolerance `rel` (exact equality for rationals).
    fn close_to(&self, other: &Self, rel: f64) -> bool {
        if Self::EXACT {
            return self == other;
        }
        let (a, b) = (self.to_f64(), other.to_f64());
        (a - b).abs() <= rel * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
    }

    fn from_usize(n: usize) -> Self {
        Self::from_ratio(n as i64, 1)
    }

    fn max_of(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }

    fn min_of(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }
}

impl Scalar for f64 {
    const EXACT: bool = false;

    fn from_f64(x: f64) -> Self {
        x
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn from_ratio(num: i64, den: i64) -> Self {
        num as f64 / den as f64
    }

    fn parse(text: &str) -> Result<Self> {
        let t = text.trim();
        if let Some((n, d)) = t.split_once('/') {
            let n: f64 = n.trim().parse().map_err(|_| HaarError::Parse(t.to_string()))?;
            let d: f64 = d.trim().parse().map_err(|_| HaarError::Parse(t.to_string()))?;
            return Ok(n / d);
        }
        t.parse().map_err(|_| HaarError::Parse(t.to_string()))
    }
}

impl Scalar for BigRational {
    const EXACT: bool = true;

    fn from_f64(x: f64) -> Self {
        <BigRational as FromPrimitive>::from_f64(x).expect("finite float")
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or_else(|| {
            // Huge numerators/denominators: fall back to a scaled division.
            let n = self.numer().to_f64().unwrap_or(f64::NAN);
            let d = self.denom().to_f64().unwrap_or(f64::NAN);
            n / d
        })
    }

    fn from_ratio(num: i64, den: i64) -> Self {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }

    fn parse(text: &str) -> Result<Self> {
        let t = text.trim();
        let bad = || HaarError::Parse(t.to_string());
        if let Some((n, d)) = t.split_once('/') {
            let n = BigInt::from_str(n.trim()).map_err(|_| bad())?;
            let d = BigInt::from_str(d.trim()).map_err(|_| bad())?;
            if d.is_zero() {
                return Err(bad());
            }
            return Ok(BigRational::new(n, d));
        }
        parse_decimal(t).ok_or_else(bad)
    }
}

/// Exact value of a decimal literal such as `-1.25e-3`.
fn parse_decimal(t: &str) -> Option<BigRational> {
    let (mantissa, exponent) = match t.find(['e', 'E']) {
        Some(i) => (&t[..i], t[i + 1..].parse::<i32>().ok()?),
        None => (t, 0),
    };
    let (negative, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    let all: String = format!("{int_part}{frac_part}");
    if !all.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    let mut value = BigRational::from_integer(BigInt::from_str(&all).ok()?);
    let scale = exponent - frac_part.len() as i32;
    let ten = BigRational::from_integer(BigInt::from(10));
    let pow = num_traits::pow(ten, scale.unsigned_abs() as usize);
    if scale >= 0 {
        value *= pow;
    } else {
        value /= pow;
    }
    Some(if negative { -value } else { value })
}

/// Sum of an iterator of scalars.
pub fn sum<S: Scalar, I: IntoIterator<Item = S>>(items: I) -> S {
    items.into_iter().fold(S::zero(), |acc, x| acc + x)
}

/// Exact rational from a float through its shortest decimal representation,
/// so `0.01` becomes `1/100` rather than the nearest dyadic.
pub fn rational_from_decimal_f64(x: f64) -> Rational {
    parse_decimal(&format!("{x:e}")).unwrap_or_else(|| <Rational as Scalar>::from_f64(x))
}

/// Renders a rational as `[num, den]` when both fit in `i64`, else as `"num/den"`.
pub fn rational_to_json(x: &Rational) -> serde_json::Value {
    match (x.numer().to_i64(), x.denom().to_i64()) {
        (Some(n), Some(d)) => serde_json::json!([n, d]),
        _ => serde_json::Value::String(format!("{}/{}", x.numer(), x.denom())),
    }
}
