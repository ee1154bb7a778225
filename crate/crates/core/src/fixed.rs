//! Exact fixed-point numbers on the unit square.
//!
//! Coordinates are dyadic rationals with 62 fractional bits. Every value the
//! algorithms produce (grid lines, simplification corners, payments) is a
//! coordinate or a difference of coordinates, so sums of profits are exact
//! integers and can be compared for equality.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Neg, Sub, SubAssign};
use std::str::FromStr;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub const FRAC_BITS: u32 = 62;
const ONE_RAW: u64 = 1 << FRAC_BITS;
const FRAC_MASK: u128 = (1u128 << FRAC_BITS) - 1;

/// A coordinate in `[0, 1]`, stored as a multiple of `2^-62`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Coord(u64);

impl Coord {
    pub const ZERO: Coord = Coord(0);
    pub const ONE: Coord = Coord(ONE_RAW);
    pub const HALF: Coord = Coord(ONE_RAW / 2);
    /// Smallest positive increment.
    pub const ULP: Coord = Coord(1);

    pub fn from_raw(raw: u64) -> Result<Coord> {
        if raw > ONE_RAW {
            return Err(Error::OutOfUnitInterval(format!("raw {raw}")));
        }
        Ok(Coord(raw))
    }

    pub const fn raw(self) -> u64 {
        self.0
    }

    /// `num / 2^log2_den`.
    pub fn dyadic(num: u64, log2_den: u32) -> Result<Coord> {
        if log2_den > FRAC_BITS {
            return Err(Error::BadPrecision(log2_den));
        }
        let raw = (num as u128) << (FRAC_BITS - log2_den);
        if raw > ONE_RAW as u128 {
            return Err(Error::OutOfUnitInterval(format!("{num}/2^{log2_den}")));
        }
        Ok(Coord(raw as u64))
    }

    /// Nearest coordinate to `x`.
    pub fn from_f64(x: f64) -> Result<Coord> {
        if !x.is_finite() || !(0.0..=1.0).contains(&x) {
            return Err(Error::OutOfUnitInterval(x.to_string()));
        }
        Ok(Coord((x * ONE_RAW as f64).round() as u64))
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / ONE_RAW as f64
    }

    pub fn to_rational(self) -> BigRational {
        BigRational::new(BigInt::from(self.0), BigInt::from(ONE_RAW))
    }

    /// Largest coordinate not exceeding `r`.
    pub fn floor_rational(r: &BigRational) -> Result<Coord> {
        let scaled = r * BigRational::from_integer(BigInt::from(ONE_RAW));
        Self::from_scaled(scaled.floor().to_integer(), r)
    }

    /// Smallest coordinate not below `r`.
    pub fn ceil_rational(r: &BigRational) -> Result<Coord> {
        let scaled = r * BigRational::from_integer(BigInt::from(ONE_RAW));
        Self::from_scaled(scaled.ceil().to_integer(), r)
    }

    /// Nearest coordinate to `r`, ties rounding up.
    pub fn round_rational(r: &BigRational) -> Result<Coord> {
        let scaled = r * BigRational::from_integer(BigInt::from(ONE_RAW));
        let half = BigRational::new(BigInt::one(), BigInt::from(2));
        Self::from_scaled((scaled + half).floor().to_integer(), r)
    }

    fn from_scaled(v: BigInt, orig: &BigRational) -> Result<Coord> {
        if v.is_negative() || v > BigInt::from(ONE_RAW) {
            return Err(Error::OutOfUnitInterval(orig.to_string()));
        }
        Ok(Coord(v.to_u64().expect("bounded")))
    }

    /// Whether the coordinate is an integer multiple of `2^-h`.
    pub fn is_multiple_of_pow2(self, h: u32) -> bool {
        h <= FRAC_BITS && self.0.is_multiple_of(1u64 << (FRAC_BITS - h))
    }

    pub fn checked_add(self, other: Coord) -> Option<Coord> {
        let raw = self.0.checked_add(other.0)?;
        (raw <= ONE_RAW).then_some(Coord(raw))
    }

    pub fn checked_sub(self, other: Coord) -> Option<Coord> {
        self.0.checked_sub(other.0).map(Coord)
    }

    pub fn saturating_add(self, other: Coord) -> Coord {
        Coord(self.0.saturating_add(other.0).min(ONE_RAW))
    }

    pub fn saturating_sub(self, other: Coord) -> Coord {
        Coord(self.0.saturating_sub(other.0))
    }

    pub fn as_amount(self) -> Amount {
        Amount(self.0 as i128)
    }
}

impl Sub for Coord {
    type Output = Amount;
    fn sub(self, rhs: Coord) -> Amount {
        Amount(self.0 as i128 - rhs.0 as i128)
    }
}

impl fmt::Display for Coord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_exact(f, false, self.0 as u128)
    }
}

impl FromStr for Coord {
    type Err = Error;
    fn from_str(s: &str) -> Result<Coord> {
        let r = parse_rational(s)?;
        Coord::round_rational(&r)
    }
}

impl Serialize for Coord {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Coord {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Coord, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        let parsed = match &v {
            serde_json::Value::String(s) => s.parse(),
            serde_json::Value::Number(n) => n.to_string().parse(),
            _ => Err(Error::InvalidNumber(v.to_string())),
        };
        parsed.map_err(serde::de::Error::custom)
    }
}

/// A signed quantity at the same scale as [`Coord`]: payments, profits and
/// their sums.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Amount(i128);

impl Amount {
    pub const ZERO: Amount = Amount(0);
    pub const ONE: Amount = Amount(ONE_RAW as i128);

    pub const fn from_raw(raw: i128) -> Amount {
        Amount(raw)
    }

    pub const fn raw(self) -> i128 {
        self.0
    }

    pub fn times(self, n: u64) -> Amount {
        Amount(self.0 * n as i128)
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / ONE_RAW as f64
    }

    pub fn to_rational(self) -> BigRational {
        BigRational::new(BigInt::from(self.0), BigInt::from(ONE_RAW))
    }

    pub fn from_f64(x: f64) -> Amount {
        Amount((x * ONE_RAW as f64).round() as i128)
    }
}

impl Add for Amount {
    type Output = Amount;
    fn add(self, rhs: Amount) -> Amount {
        Amount(self.0 + rhs.0)
    }
}

impl Sub for Amount {
    type Output = Amount;
    fn sub(self, rhs: Amount) -> Amount {
        Amount(self.0 - rhs.0)
    }
}

impl Neg for Amount {
    type Output = Amount;
    fn neg(self) -> Amount {
        Amount(-self.0)
    }
}

impl AddAssign for Amount {
    fn add_assign(&mut self, rhs: Amount) {
        self.0 += rhs.0;
    }
}

impl SubAssign for Amount {
    fn sub_assign(&mut self, rhs: Amount) {
        self.0 -= rhs.0;
    }
}

impl Sum for Amount {
    fn sum<I: Iterator<Item = Amount>>(iter: I) -> Amount {
        iter.fold(Amount::ZERO, |a, b| a + b)
    }
}

impl fmt::Display for Amount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_exact(f, self.0 < 0, self.0.unsigned_abs())
    }
}

impl FromStr for Amount {
    type Err = Error;
    fn from_str(s: &str) -> Result<Amount> {
        let r = parse_rational(s)? * BigRational::from_integer(BigInt::from(ONE_RAW));
        let half = BigRational::new(BigInt::one(), BigInt::from(2));
        (r + half)
            .floor()
            .to_integer()
            .to_i128()
            .map(Amount)
            .ok_or_else(|| Error::InvalidNumber(s.to_string()))
    }
}

impl Serialize for Amount {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Amount {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Amount, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

// Terminating decimal expansion of raw / 2^62.
fn write_exact(f: &mut fmt::Formatter<'_>, negative: bool, raw: u128) -> fmt::Result {
    let int = raw >> FRAC_BITS;
    let mut frac = raw & FRAC_MASK;
    let mut out = String::new();
    if negative && raw != 0 {
        out.push('-');
    }
    out.push_str(&int.to_string());
    if frac != 0 {
        out.push('.');
        while frac != 0 {
            frac *= 10;
            out.push(char::from(b'0' + (frac >> FRAC_BITS) as u8));
            frac &= FRAC_MASK;
        }
    }
    f.write_str(&out)
}

/// Parses `"0.375"`, `"3/8"`, `"-1.5"`, `"2.5e-3"` into an exact rational.
pub fn parse_rational(text: &str) -> Result<BigRational> {
    let bad = || Error::InvalidNumber(text.to_string());
    let t = text.trim();
    if t.is_empty() {
        return Err(bad());
    }
    if let Some((n, d)) = t.split_once('/') {
        let n = parse_rational(n)?;
        let d = parse_rational(d)?;
        if d.is_zero() {
            return Err(bad());
        }
        return Ok(n / d);
    }
    let (mantissa, exp) = match t.find(['e', 'E']) {
        Some(i) => (&t[..i], t[i + 1..].parse::<i32>().map_err(|_| bad())?),
        None => (t, 0),
    };
    let (neg, body) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let digits = format!("{int_part}{frac_part}");
    let num = BigUint::parse_bytes(digits.as_bytes(), 10).unwrap_or_default();
    let scale = exp - frac_part.len() as i32;
    let ten = BigUint::from(10u32);
    let (n, d) = if scale >= 0 {
        (num * ten.pow(scale as u32), BigUint::one())
    } else {
        (num, ten.pow((-scale) as u32))
    };
    let mut r = BigRational::new(BigInt::from(n), BigInt::from(d));
    if neg {
        r = -r;
    }
    Ok(r)
}

/// Exact rational from a probability-like decimal or fraction, kept as
/// `u64` ratio components after reduction.
pub fn rational_to_u64_pair(r: &BigRational) -> Option<(u64, u64)> {
    let g = r.numer().gcd(r.denom());
    let n = (r.numer() / &g).to_u64()?;
    let d = (r.denom() / &g).to_u64()?;
    Some((n, d))
}
