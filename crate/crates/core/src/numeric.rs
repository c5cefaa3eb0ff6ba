//! Dual-mode opinion scalar: exact rationals or binary64 floats.
//!
//! All values taking part in one simulation share a [`Mode`]. Mixing modes in
//! arithmetic or comparisons is a programming error and panics.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Neg, Sub};
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::HkError;

/// Slack added to the unit confidence radius in float mode, 2^-40.
pub const FLOAT_SLACK: f64 = 1.0 / 1_099_511_627_776.0;

/// Default size limit, in bits, for numerators and denominators.
pub const DEFAULT_BIT_BUDGET: u64 = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Rational,
    Float64,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Rational => "rational",
            Mode::Float64 => "float64",
        }
    }
}

impl FromStr for Mode {
    type Err = HkError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rational" => Ok(Mode::Rational),
            "float64" | "float" => Ok(Mode::Float64),
            other => Err(HkError::Parse(format!("unknown numeric mode `{other}`"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// An opinion value. Rationals are kept in lowest terms with a positive
/// denominator (guaranteed by `BigRational`); floats compare by bit pattern.
#[derive(Clone, Debug)]
pub enum Num {
    Rational(BigRational),
    Float(f64),
}

impl Num {
    pub fn int(v: i64, mode: Mode) -> Num {
        match mode {
            Mode::Rational => Num::Rational(BigRational::from_integer(BigInt::from(v))),
            Mode::Float64 => Num::Float(v as f64),
        }
    }

    /// `numer / denom`; panics if `denom == 0`.
    pub fn ratio(numer: i64, denom: i64, mode: Mode) -> Num {
        assert!(denom != 0, "zero denominator");
        match mode {
            Mode::Rational => Num::Rational(BigRational::new(numer.into(), denom.into())),
            Mode::Float64 => Num::Float(numer as f64 / denom as f64),
        }
    }

    pub fn zero(mode: Mode) -> Num {
        Num::int(0, mode)
    }

    pub fn one(mode: Mode) -> Num {
        Num::int(1, mode)
    }

    /// Converts a rational into the given mode (rounding when the target is float).
    pub fn from_rational(r: &BigRational, mode: Mode) -> Num {
        match mode {
            Mode::Rational => Num::Rational(r.clone()),
            Mode::Float64 => Num::Float(rational_to_f64(r)),
        }
    }

    pub fn mode(&self) -> Mode {
        match self {
            Num::Rational(_) => Mode::Rational,
            Num::Float(_) => Mode::Float64,
        }
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            Num::Rational(r) => rational_to_f64(r),
            Num::Float(f) => *f,
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Num::Rational(r) => r.is_zero(),
            Num::Float(f) => *f == 0.0,
        }
    }

    pub fn abs(&self) -> Num {
        match self {
            Num::Rational(r) => Num::Rational(r.abs()),
            Num::Float(f) => Num::Float(f.abs()),
        }
    }

    pub fn mul_int(&self, k: i64) -> Num {
        match self {
            Num::Rational(r) => Num::Rational(r * BigInt::from(k)),
            Num::Float(f) => Num::Float(f * k as f64),
        }
    }

    /// Division by a positive integer count.
    pub fn div_int(&self, k: u64) -> Num {
        assert!(k > 0, "division by zero count");
        match self {
            Num::Rational(r) => Num::Rational(r / BigInt::from(k)),
            Num::Float(f) => Num::Float(f / k as f64),
        }
    }

    pub fn add_int(&self, k: i64) -> Num {
        match self {
            Num::Rational(r) => Num::Rational(r + BigInt::from(k)),
            Num::Float(f) => Num::Float(f + k as f64),
        }
    }

    /// Smallest integer not below the value.
    pub fn ceil_int(&self) -> i64 {
        match self {
            Num::Rational(r) => r.ceil().to_integer().to_i64().expect("ceil fits in i64"),
            Num::Float(f) => f.ceil() as i64,
        }
    }

    /// Larger of the numerator and denominator bit lengths (0 for floats).
    pub fn bits(&self) -> u64 {
        match self {
            Num::Rational(r) => r.numer().bits().max(r.denom().bits()),
            Num::Float(_) => 0,
        }
    }

    /// `|self - other| <= 1`, with [`FLOAT_SLACK`] added in float mode.
    pub fn within_unit(&self, other: &Num) -> bool {
        match (self, other) {
            (Num::Rational(a), Num::Rational(b)) => (a - b).abs() <= BigRational::one(),
            (Num::Float(a), Num::Float(b)) => (a - b).abs() <= 1.0 + FLOAT_SLACK,
            _ => mixed(),
        }
    }

    pub fn as_rational(&self) -> Option<&BigRational> {
        match self {
            Num::Rational(r) => Some(r),
            Num::Float(_) => None,
        }
    }

    /// Parses `p/q`, an integer, or (float mode only) a decimal literal.
    pub fn parse(s: &str, mode: Mode) -> Result<Num, HkError> {
        let s = s.trim();
        match mode {
            Mode::Rational => parse_rational(s).map(Num::Rational),
            Mode::Float64 => {
                if s.contains('/') {
                    parse_rational(s).map(|r| Num::Float(rational_to_f64(&r)))
                } else {
                    s.parse::<f64>()
                        .map(Num::Float)
                        .map_err(|e| HkError::Parse(format!("bad float `{s}`: {e}")))
                }
            }
        }
    }
}

fn mixed() -> ! {
    panic!("mixed numeric modes in one computation")
}

pub fn parse_rational(s: &str) -> Result<BigRational, HkError> {
    let bad = |what: &str| HkError::Parse(format!("bad rational `{s}`: {what}"));
    let (p, q) = match s.split_once('/') {
        Some((p, q)) => (p.trim(), q.trim()),
        None => (s, "1"),
    };
    let p: BigInt = p.parse().map_err(|_| bad("numerator"))?;
    let q: BigInt = q.parse().map_err(|_| bad("denominator"))?;
    if q.is_zero() {
        return Err(bad("zero denominator"));
    }
    Ok(BigRational::new(p, q))
}

pub fn rational_to_f64(r: &BigRational) -> f64 {
    // Shift to keep ~64 significant bits before the lossy conversion.
    let n = r.numer();
    let d = r.denom();
    let shift = d.bits() as i64 - n.bits() as i64 + 64;
    let q = if shift >= 0 {
        (n << shift as usize).div_floor(d)
    } else {
        n.div_floor(&(d << (-shift) as usize))
    };
    q.to_f64().unwrap_or(f64::NAN) * 2f64.powi(-shift as i32)
}

impl PartialEq for Num {
    fn eq(&self, other: &Num) -> bool {
        match (self, other) {
            (Num::Rational(a), Num::Rational(b)) => a == b,
            (Num::Float(a), Num::Float(b)) => a.to_bits() == b.to_bits(),
            _ => false,
        }
    }
}

impl Eq for Num {}

impl PartialOrd for Num {
    fn partial_cmp(&self, other: &Num) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Num {
    fn cmp(&self, other: &Num) -> Ordering {
        match (self, other) {
            (Num::Rational(a), Num::Rational(b)) => a.cmp(b),
            (Num::Float(a), Num::Float(b)) => a.total_cmp(b),
            _ => mixed(),
        }
    }
}

impl<'a> Add<&'a Num> for &'a Num {
    type Output = Num;
    fn add(self, rhs: &'a Num) -> Num {
        match (self, rhs) {
            (Num::Rational(a), Num::Rational(b)) => Num::Rational(a + b),
            (Num::Float(a), Num::Float(b)) => Num::Float(a + b),
            _ => mixed(),
        }
    }
}

impl<'a> Sub<&'a Num> for &'a Num {
    type Output = Num;
    fn sub(self, rhs: &'a Num) -> Num {
        match (self, rhs) {
            (Num::Rational(a), Num::Rational(b)) => Num::Rational(a - b),
            (Num::Float(a), Num::Float(b)) => Num::Float(a - b),
            _ => mixed(),
        }
    }
}

impl Add for Num {
    type Output = Num;
    fn add(self, rhs: Num) -> Num {
        &self + &rhs
    }
}

impl Sub for Num {
    type Output = Num;
    fn sub(self, rhs: Num) -> Num {
        &self - &rhs
    }
}

impl Neg for Num {
    type Output = Num;
    fn neg(self) -> Num {
        match self {
            Num::Rational(r) => Num::Rational(-r),
            Num::Float(f) => Num::Float(-f),
        }
    }
}

impl fmt::Display for Num {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Num::Rational(r) => write!(f, "{}/{}", r.numer(), r.denom()),
            Num::Float(v) => write!(f, "{v:?}"),
        }
    }
}

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Num::Rational(_) => s.serialize_str(&self.to_string()),
            Num::Float(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for Num {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Num, D::Error> {
        struct NumVisitor;

        impl Visitor<'_> for NumVisitor {
            type Value = Num;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a \"p/q\" string or a JSON number")
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Num, E> {
                parse_rational(v).map(Num::Rational).map_err(E::custom)
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Num, E> {
                Ok(Num::Float(v))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Num, E> {
                Ok(Num::Float(v as f64))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Num, E> {
                Ok(Num::Float(v as f64))
            }
        }

        d.deserialize_any(NumVisitor)
    }
}

/// A non-negative rational exponent `num/den`, used for powers `n^alpha`.
///
/// Integer parts of powers are computed exactly with big integers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Exponent {
    num: u32,
    den: u32,
}

impl Exponent {
    pub fn new(num: u32, den: u32) -> Result<Exponent, HkError> {
        if den == 0 {
            return Err(HkError::InvalidParam("exponent denominator is zero".into()));
        }
        let g = num.gcd(&den).max(1);
        Ok(Exponent {
            num: num / g,
            den: den / g,
        })
    }

    pub fn num(self) -> u32 {
        self.num
    }

    pub fn den(self) -> u32 {
        self.den
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// `(1 - self) / 3`; requires `self <= 1`.
    pub fn one_minus_over_three(self) -> Result<Exponent, HkError> {
        if self.num > self.den {
            return Err(HkError::InvalidParam(format!("exponent {self} exceeds 1")));
        }
        Exponent::new(self.den - self.num, 3 * self.den)
    }

    /// Largest integer `k` with `k <= n^self`.
    pub fn floor_pow(self, n: u64) -> u64 {
        largest_root_below(&(BigInt::from(n).pow(self.num)), self.den)
    }

    /// Smallest integer `k` with `k >= n^self`.
    pub fn ceil_pow(self, n: u64) -> u64 {
        let target = BigInt::from(n).pow(self.num);
        let k = largest_root_below(&target, self.den);
        if BigInt::from(k).pow(self.den) == target {
            k
        } else {
            k + 1
        }
    }

    /// `n^self` rounded down to a multiple of 2^-20.
    pub fn approx_pow(self, n: u64) -> BigRational {
        let scale = BigInt::from(1u64 << 20);
        let target = BigInt::from(n).pow(self.num) * scale.pow(self.den);
        let k = largest_root_below(&target, self.den);
        BigRational::new(BigInt::from(k), scale)
    }
}

fn largest_root_below(target: &BigInt, den: u32) -> u64 {
    // binary search for the largest k with k^den <= target
    let (mut lo, mut hi) = (0u64, 1u64);
    while BigInt::from(hi).pow(den) <= *target {
        lo = hi;
        hi = hi.checked_mul(2).expect("power fits in u64");
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if BigInt::from(mid).pow(den) <= *target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

impl FromStr for Exponent {
    type Err = HkError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || HkError::Parse(format!("bad exponent `{s}`, expected p/q"));
        let (p, q) = match s.trim().split_once('/') {
            Some((p, q)) => (p.trim(), q.trim()),
            None => (s.trim(), "1"),
        };
        Exponent::new(p.parse().map_err(|_| bad())?, q.parse().map_err(|_| bad())?)
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl Serialize for Exponent {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Exponent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Exponent, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(de::Error::custom)
    }
}
