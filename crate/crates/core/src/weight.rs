//! Exact non-negative rational weights.
//!
//! Every cost in the system is a `Weight`. All arithmetic is exact; floats
//! never appear on any cost path, so two runs of the same experiment produce
//! bit-identical ledgers and ratio comparisons like `cost <= k * opt` are
//! decided exactly.

use std::cmp::Ordering;
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Mul, Sub};
use std::str::FromStr;

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// An exact non-negative rational, stored in lowest terms.
///
/// Addition, subtraction, and ordering special-case dyadic values (powers of
/// two in the denominator): aligning them needs only shifts, where the
/// generic rational paths would multiply numbers the size of the whole
/// denominator. Adversarial instances push denominators to hundreds of
/// kilobits, so this is the difference between seconds and hours.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct Weight(BigRational);

/// The exponent k when `d` = 2^k.
fn pow2_exp(d: &BigInt) -> Option<u64> {
    let (sign, mag) = (d.sign(), d.magnitude());
    if sign != num::bigint::Sign::Plus {
        return None;
    }
    let tz = mag.trailing_zeros()?;
    if mag.bits() == tz + 1 {
        Some(tz)
    } else {
        None
    }
}

/// Numerators aligned to the common denominator 2^max(x, y).
fn align_dyadic(a: &Weight, b: &Weight) -> Option<(BigInt, BigInt, u64)> {
    let x = pow2_exp(a.0.denom())?;
    let y = pow2_exp(b.0.denom())?;
    let top = x.max(y);
    let an = a.0.numer() << (top - x);
    let bn = b.0.numer() << (top - y);
    Some((an, bn, top))
}

/// numer / 2^exp reduced to lowest terms by stripping shared twos.
fn dyadic_ratio(numer: BigInt, exp: u64) -> BigRational {
    if numer.is_zero() {
        return BigRational::zero();
    }
    let strip = numer
        .magnitude()
        .trailing_zeros()
        .unwrap_or(0)
        .min(exp);
    BigRational::new_raw(numer >> strip, BigInt::one() << (exp - strip))
}

impl Ord for Weight {
    fn cmp(&self, other: &Self) -> Ordering {
        match align_dyadic(self, other) {
            Some((a, b, _)) => a.cmp(&b),
            None => self.0.cmp(&other.0),
        }
    }
}

impl PartialOrd for Weight {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn add_weights(a: &Weight, b: &Weight) -> Weight {
    match align_dyadic(a, b) {
        Some((an, bn, exp)) => Weight(dyadic_ratio(an + bn, exp)),
        None => Weight(&a.0 + &b.0),
    }
}

fn sub_weights(a: &Weight, b: &Weight) -> Weight {
    match align_dyadic(a, b) {
        Some((an, bn, exp)) => Weight(dyadic_ratio(an - bn, exp)),
        None => Weight(&a.0 - &b.0),
    }
}

impl Weight {
    pub fn zero() -> Self {
        Weight(BigRational::zero())
    }

    pub fn one() -> Self {
        Weight(BigRational::one())
    }

    pub fn from_u64(n: u64) -> Self {
        Weight(BigRational::from_integer(BigInt::from(n)))
    }

    /// Builds `numer/denom`. Errors on a zero denominator or a negative value.
    pub fn from_ratio(numer: i64, denom: i64) -> Result<Self> {
        if denom == 0 {
            return Err(Error::Validation("weight denominator is zero".into()));
        }
        let r = BigRational::new(BigInt::from(numer), BigInt::from(denom));
        Self::from_rational(r)
    }

    pub fn from_rational(r: BigRational) -> Result<Self> {
        if r.is_negative() {
            return Err(Error::Validation(format!("weight {} is negative", r)));
        }
        Ok(Weight(r))
    }

    pub fn as_rational(&self) -> &BigRational {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    /// `self - other`, or `None` when the result would be negative.
    pub fn checked_sub(&self, other: &Weight) -> Option<Weight> {
        if self < other {
            None
        } else {
            Some(sub_weights(self, other))
        }
    }

    /// `max(self - other, 0)`.
    pub fn saturating_sub(&self, other: &Weight) -> Weight {
        self.checked_sub(other).unwrap_or_else(Weight::zero)
    }

    /// `self * 2^exp` for `exp` possibly negative. Exact.
    pub fn shl2(&self, exp: i64) -> Weight {
        let two = BigInt::from(2);
        if exp >= 0 {
            Weight(&self.0 * BigRational::from_integer(two.pow(exp as u32)))
        } else {
            Weight(&self.0 / BigRational::from_integer(two.pow((-exp) as u32)))
        }
    }

    /// `self^exp` for a non-negative integer exponent.
    pub fn pow(&self, exp: u64) -> Weight {
        let mut acc = BigRational::one();
        let mut base = self.0.clone();
        let mut e = exp;
        while e > 0 {
            if e & 1 == 1 {
                acc *= &base;
            }
            e >>= 1;
            if e > 0 {
                base = &base * &base;
            }
        }
        Weight(acc)
    }

    pub fn mul_u64(&self, n: u64) -> Weight {
        Weight(&self.0 * BigRational::from_integer(BigInt::from(n)))
    }

    /// Exact ratio `self / other`; errors on division by zero.
    pub fn div(&self, other: &Weight) -> Result<Weight> {
        if other.is_zero() {
            return Err(Error::Validation("division of weight by zero".into()));
        }
        Ok(Weight(&self.0 / &other.0))
    }

    /// Decimal rendering with `sig` significant digits. Approximate, for
    /// reports only; the rational string is authoritative.
    pub fn to_decimal(&self, sig: usize) -> String {
        if self.0.is_zero() {
            return "0".to_string();
        }
        let numer = self.0.numer().clone();
        let denom = self.0.denom().clone();
        // Scale so the integer division carries `sig` significant digits.
        let digits_n = numer.to_string().len() as i64;
        let digits_d = denom.to_string().len() as i64;
        let shift = (sig as i64 + 1) - (digits_n - digits_d);
        let ten = BigInt::from(10);
        let (scaled, exp10) = if shift > 0 {
            (numer * ten.pow(shift as u32), -shift)
        } else {
            (numer, 0)
        };
        let q = scaled / denom;
        let mut s = q.to_string();
        let mut exp = exp10;
        // Round away the guard digit.
        while s.len() > sig {
            let last = s.pop().unwrap();
            exp += 1;
            if last >= '5' {
                let bumped: BigInt = BigInt::from_str(&s).unwrap() + 1;
                s = bumped.to_string();
            }
        }
        let mantissa: BigInt = BigInt::from_str(&s).unwrap();
        if exp == 0 {
            return mantissa.to_string();
        }
        if exp > 0 {
            return format!("{}{}", mantissa, "0".repeat(exp as usize));
        }
        let digits = mantissa.to_string();
        let point = digits.len() as i64 + exp;
        if point > 0 {
            let (int_part, frac) = digits.split_at(point as usize);
            let frac = frac.trim_end_matches('0');
            if frac.is_empty() {
                int_part.to_string()
            } else {
                format!("{}.{}", int_part, frac)
            }
        } else {
            let frac = format!("{}{}", "0".repeat((-point) as usize), digits);
            format!("0.{}", frac.trim_end_matches('0'))
        }
    }
}

impl fmt::Display for Weight {
    /// Canonical form: `p` for integers, `p/q` otherwise.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.denom().is_one() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl fmt::Debug for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self)
    }
}

impl FromStr for Weight {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let r = match s.split_once('/') {
            Some((p, q)) => {
                let p = BigInt::from_str(p.trim())
                    .map_err(|_| Error::Validation(format!("bad weight numerator in {:?}", s)))?;
                let q = BigInt::from_str(q.trim())
                    .map_err(|_| Error::Validation(format!("bad weight denominator in {:?}", s)))?;
                if q.is_zero() {
                    return Err(Error::Validation(format!("zero denominator in {:?}", s)));
                }
                BigRational::new(p, q)
            }
            None => {
                let p = BigInt::from_str(s.trim())
                    .map_err(|_| Error::Validation(format!("bad weight {:?}", s)))?;
                BigRational::from_integer(p)
            }
        };
        Weight::from_rational(r)
    }
}

impl Add for Weight {
    type Output = Weight;
    fn add(self, rhs: Weight) -> Weight {
        add_weights(&self, &rhs)
    }
}

impl<'a> Add<&'a Weight> for Weight {
    type Output = Weight;
    fn add(self, rhs: &'a Weight) -> Weight {
        add_weights(&self, rhs)
    }
}

impl AddAssign<&Weight> for Weight {
    fn add_assign(&mut self, rhs: &Weight) {
        *self = add_weights(self, rhs);
    }
}

impl AddAssign for Weight {
    fn add_assign(&mut self, rhs: Weight) {
        *self = add_weights(self, &rhs);
    }
}

impl Sub for Weight {
    type Output = Weight;
    /// Panics if the result would be negative; use `checked_sub` where that
    /// can legitimately happen.
    fn sub(self, rhs: Weight) -> Weight {
        self.checked_sub(&rhs)
            .expect("weight subtraction went negative")
    }
}

impl Mul for Weight {
    type Output = Weight;
    fn mul(self, rhs: Weight) -> Weight {
        Weight(self.0 * rhs.0)
    }
}

impl<'a> Mul<&'a Weight> for &Weight {
    type Output = Weight;
    fn mul(self, rhs: &'a Weight) -> Weight {
        Weight(&self.0 * &rhs.0)
    }
}

impl Sum for Weight {
    fn sum<I: Iterator<Item = Weight>>(iter: I) -> Weight {
        let mut acc = Weight::zero();
        for w in iter {
            acc += w;
        }
        acc
    }
}

impl PartialEq<u64> for Weight {
    fn eq(&self, other: &u64) -> bool {
        *self == Weight::from_u64(*other)
    }
}

impl PartialOrd<u64> for Weight {
    fn partial_cmp(&self, other: &u64) -> Option<Ordering> {
        Some(self.cmp(&Weight::from_u64(*other)))
    }
}

impl Serialize for Weight {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Weight {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Weight::from_str(&s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display_round_trip() {
        for s in ["0", "3", "3/7", "1048576", "1/1048576"] {
            let w: Weight = s.parse().unwrap();
            assert_eq!(w.to_string(), s);
        }
    }

    #[test]
    fn fraction_reduces_to_lowest_terms() {
        let w: Weight = "6/4".parse().unwrap();
        assert_eq!(w.to_string(), "3/2");
    }

    #[test]
    fn negative_rejected() {
        assert!(Weight::from_str("-1").is_err());
        assert!(Weight::from_ratio(-3, 7).is_err());
    }

    #[test]
    fn exact_sums() {
        let third: Weight = "1/3".parse().unwrap();
        let sum: Weight = (0..3).map(|_| third.clone()).sum();
        assert_eq!(sum, Weight::one());
    }

    #[test]
    fn pow_and_shift() {
        let eps = Weight::from_ratio(1, 16).unwrap();
        assert_eq!(eps.pow(3).to_string(), "1/4096");
        assert_eq!(Weight::one().shl2(18), Weight::from_u64(262144));
        assert_eq!(Weight::from_u64(8).shl2(-3), Weight::one());
    }

    #[test]
    fn decimal_rendering() {
        let w: Weight = "102".parse().unwrap();
        assert_eq!(w.to_decimal(12), "102");
        let r: Weight = "51/2".parse().unwrap();
        assert_eq!(r.to_decimal(12), "25.5");
        let t: Weight = "1/3".parse().unwrap();
        assert_eq!(t.to_decimal(5), "0.33333");
    }
}
