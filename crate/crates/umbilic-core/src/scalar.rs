//! Exact-or-floating scalars and the tolerance policy for zero tests.
//!
//! Classification hinges on equalities (a = b, chi = 0, ...) that are only
//! decidable exactly or with an explicit tolerance. [`Scalar`] keeps exact
//! rationals exact for as long as every operand is exact and demotes to `f64`
//! on first contact with floating data. All floating zero tests go through
//! [`ToleranceContext`], scaled by a homogeneity weight so they are invariant
//! under jet rescaling.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::str::FromStr;

/// A scalar in EXACT (arbitrary-precision rational) or FLOAT (`f64`) mode.
///
/// Arithmetic between two exact values stays exact; any operation involving a
/// float demotes the result to float.
#[derive(Clone, Debug)]
pub enum Scalar {
    Exact(BigRational),
    Float(f64),
}

impl Scalar {
    pub fn zero() -> Self {
        Scalar::Exact(BigRational::zero())
    }

    pub fn one() -> Self {
        Scalar::from_int(1)
    }

    pub fn from_int(n: i64) -> Self {
        Scalar::Exact(BigRational::from_integer(BigInt::from(n)))
    }

    /// Exact rational `num/den`. Panics when `den == 0`.
    pub fn ratio(num: i64, den: i64) -> Self {
        assert!(den != 0, "rational with zero denominator");
        Scalar::Exact(BigRational::new(BigInt::from(num), BigInt::from(den)))
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Scalar::Exact(_))
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            Scalar::Exact(r) => r.to_f64().unwrap_or(f64::NAN),
            Scalar::Float(x) => *x,
        }
    }

    /// True when the value is zero with no tolerance involved
    /// (exact zero, or a float that is literally `0.0`).
    pub fn is_zero_strict(&self) -> bool {
        match self {
            Scalar::Exact(r) => r.is_zero(),
            Scalar::Float(x) => *x == 0.0,
        }
    }

    /// Sign as -1/0/+1 with no tolerance involved.
    pub fn signum_strict(&self) -> i8 {
        match self {
            Scalar::Exact(r) => {
                if r.is_zero() {
                    0
                } else if r.is_positive() {
                    1
                } else {
                    -1
                }
            }
            Scalar::Float(x) => {
                if *x == 0.0 {
                    0
                } else if *x > 0.0 {
                    1
                } else {
                    -1
                }
            }
        }
    }

    /// Zero test against a homogeneous threshold: exact values compare
    /// exactly, floats compare as `|x| <= eps_zero * scale`.
    pub fn is_zero_scaled(&self, scale: f64, tol: &ToleranceContext) -> bool {
        match self {
            Scalar::Exact(r) => r.is_zero(),
            Scalar::Float(x) => x.abs() <= tol.eps_zero * scale,
        }
    }

    /// Tolerance-aware sign: 0 when within the scaled zero band.
    pub fn signum_scaled(&self, scale: f64, tol: &ToleranceContext) -> i8 {
        if self.is_zero_scaled(scale, tol) {
            0
        } else {
            self.signum_strict()
        }
    }

    /// Square root. Exact when the operand is a perfect rational square,
    /// float otherwise. Panics on negative input.
    pub fn sqrt(&self) -> Scalar {
        match self {
            Scalar::Exact(r) => {
                assert!(!r.is_negative(), "sqrt of negative scalar");
                let ns = r.numer().sqrt();
                let ds = r.denom().sqrt();
                if &ns * &ns == *r.numer() && &ds * &ds == *r.denom() {
                    Scalar::Exact(BigRational::new(ns, ds))
                } else {
                    Scalar::Float(self.to_f64().sqrt())
                }
            }
            Scalar::Float(x) => Scalar::Float(x.sqrt()),
        }
    }

    pub fn abs(&self) -> Scalar {
        match self {
            Scalar::Exact(r) => Scalar::Exact(r.abs()),
            Scalar::Float(x) => Scalar::Float(x.abs()),
        }
    }

    pub fn powi(&self, n: u32) -> Scalar {
        let mut acc = Scalar::one();
        for _ in 0..n {
            acc = &acc * self;
        }
        acc
    }

    /// Reciprocal; panics on a strict zero.
    pub fn recip(&self) -> Scalar {
        match self {
            Scalar::Exact(r) => {
                assert!(!r.is_zero(), "reciprocal of zero");
                Scalar::Exact(r.recip())
            }
            Scalar::Float(x) => Scalar::Float(1.0 / x),
        }
    }

    fn parse_exact(s: &str) -> Result<Scalar, String> {
        let s = s.trim();
        let (num, den) = match s.split_once('/') {
            Some((n, d)) => (n.trim(), Some(d.trim())),
            None => (s, None),
        };
        let n = BigInt::from_str(num).map_err(|e| format!("bad integer {num:?}: {e}"))?;
        let d = match den {
            Some(d) => {
                let d = BigInt::from_str(d).map_err(|e| format!("bad integer {d:?}: {e}"))?;
                if d.is_zero() {
                    return Err("zero denominator".into());
                }
                d
            }
            None => BigInt::from(1),
        };
        Ok(Scalar::Exact(BigRational::new(n, d)))
    }
}

impl Default for Scalar {
    fn default() -> Self {
        Scalar::zero()
    }
}

impl From<i64> for Scalar {
    fn from(n: i64) -> Self {
        Scalar::from_int(n)
    }
}

impl From<f64> for Scalar {
    fn from(x: f64) -> Self {
        Scalar::Float(x)
    }
}

impl From<BigRational> for Scalar {
    fn from(r: BigRational) -> Self {
        Scalar::Exact(r)
    }
}

impl PartialEq for Scalar {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Scalar::Exact(a), Scalar::Exact(b)) => a == b,
            _ => self.to_f64() == other.to_f64(),
        }
    }
}

macro_rules! scalar_binop {
    ($trait:ident, $method:ident, $op:tt) => {
        impl $trait for &Scalar {
            type Output = Scalar;
            fn $method(self, rhs: &Scalar) -> Scalar {
                match (self, rhs) {
                    (Scalar::Exact(a), Scalar::Exact(b)) => Scalar::Exact(a $op b),
                    _ => Scalar::Float(self.to_f64() $op rhs.to_f64()),
                }
            }
        }
        impl $trait for Scalar {
            type Output = Scalar;
            fn $method(self, rhs: Scalar) -> Scalar {
                (&self).$method(&rhs)
            }
        }
    };
}

scalar_binop!(Add, add, +);
scalar_binop!(Sub, sub, -);
scalar_binop!(Mul, mul, *);

impl Div for &Scalar {
    type Output = Scalar;
    fn div(self, rhs: &Scalar) -> Scalar {
        match (self, rhs) {
            (Scalar::Exact(a), Scalar::Exact(b)) => {
                assert!(!b.is_zero(), "exact division by zero");
                Scalar::Exact(a / b)
            }
            _ => Scalar::Float(self.to_f64() / rhs.to_f64()),
        }
    }
}

impl Div for Scalar {
    type Output = Scalar;
    fn div(self, rhs: Scalar) -> Scalar {
        &self / &rhs
    }
}

impl Neg for &Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        match self {
            Scalar::Exact(r) => Scalar::Exact(-r),
            Scalar::Float(x) => Scalar::Float(-x),
        }
    }
}

impl Neg for Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        -&self
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Exact(r) => write!(f, "{r}"),
            Scalar::Float(x) => write!(f, "{x}"),
        }
    }
}

impl Serialize for Scalar {
    fn serialize<S: Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        match self {
            Scalar::Exact(r) => {
                if r.is_integer() {
                    if let Some(n) = r.numer().to_i64() {
                        return ser.serialize_i64(n);
                    }
                }
                ser.serialize_str(&format!("{}/{}", r.numer(), r.denom()))
            }
            Scalar::Float(x) => ser.serialize_f64(*x),
        }
    }
}

struct ScalarVisitor;

impl Visitor<'_> for ScalarVisitor {
    type Value = Scalar;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str("a number or a rational string \"p/q\"")
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<Scalar, E> {
        Ok(Scalar::from_int(v))
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<Scalar, E> {
        Ok(Scalar::Exact(BigRational::from_integer(BigInt::from(v))))
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> Result<Scalar, E> {
        Ok(Scalar::Float(v))
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<Scalar, E> {
        Scalar::parse_exact(v).map_err(de::Error::custom)
    }
}

impl<'de> Deserialize<'de> for Scalar {
    fn deserialize<D: Deserializer<'de>>(de: D) -> Result<Scalar, D::Error> {
        de.deserialize_any(ScalarVisitor)
    }
}

/// Thresholds for floating-point comparisons.
///
/// `eps_zero` is applied to homogeneously rescaled quantities (an invariant of
/// homogeneity weight w on a jet of scale lambda is compared against
/// `eps_zero * lambda^w`), so decisions are invariant under jet scaling.
/// `eps_eig` compares numerically computed eigenvalues against closed forms
/// and `eps_residual` bounds the curvature-line-equation residual along
/// traced solutions.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceContext {
    pub eps_zero: f64,
    pub eps_eig: f64,
    pub eps_residual: f64,
}

impl Default for ToleranceContext {
    fn default() -> Self {
        ToleranceContext {
            eps_zero: 1e-9,
            eps_eig: 1e-6,
            eps_residual: 1e-8,
        }
    }
}

impl ToleranceContext {
    pub fn validate(&self) -> Result<(), String> {
        if self.eps_zero > 0.0 && self.eps_eig > 0.0 && self.eps_residual > 0.0 {
            Ok(())
        } else {
            Err("tolerances must be strictly positive".into())
        }
    }
}
