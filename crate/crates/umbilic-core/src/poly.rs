//! Sparse multivariate polynomials over a generic coefficient ring.
//!
//! Used for the height polynomial and the L/M/N expansions (two variables),
//! the Lie-Cartan implicit surfaces and fields (three variables), and the
//! weighted blow-up (four variables). Coefficients are typically [`Scalar`],
//! so a polynomial built from an exact jet admits exact evaluation,
//! differentiation, and composition.
//!
//! [`Scalar`]: crate::scalar::Scalar

use crate::scalar::Scalar;
use serde::ser::SerializeSeq;
use serde::{Serialize, Serializer};
use std::collections::BTreeMap;
use std::fmt;

/// Coefficient ring requirements. Implemented for `f64` and [`Scalar`].
///
/// [`Scalar`]: crate::scalar::Scalar
pub trait Ring: Clone + PartialEq {
    fn zero() -> Self;
    fn one() -> Self;
    fn is_zero(&self) -> bool;
    fn add(&self, rhs: &Self) -> Self;
    fn sub(&self, rhs: &Self) -> Self;
    fn mul(&self, rhs: &Self) -> Self;
    fn neg(&self) -> Self;
}

impl Ring for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn add(&self, rhs: &Self) -> Self {
        self + rhs
    }
    fn sub(&self, rhs: &Self) -> Self {
        self - rhs
    }
    fn mul(&self, rhs: &Self) -> Self {
        self * rhs
    }
    fn neg(&self) -> Self {
        -self
    }
}

impl Ring for Scalar {
    fn zero() -> Self {
        Scalar::zero()
    }
    fn one() -> Self {
        Scalar::one()
    }
    fn is_zero(&self) -> bool {
        self.is_zero_strict()
    }
    fn add(&self, rhs: &Self) -> Self {
        self + rhs
    }
    fn sub(&self, rhs: &Self) -> Self {
        self - rhs
    }
    fn mul(&self, rhs: &Self) -> Self {
        self * rhs
    }
    fn neg(&self) -> Self {
        -self
    }
}

/// Sparse polynomial in `N` variables with exponent vectors as keys.
/// Zero coefficients are never stored.
#[derive(Clone, PartialEq)]
pub struct MPoly<T, const N: usize> {
    terms: BTreeMap<[u16; N], T>,
}

impl<T: Ring, const N: usize> MPoly<T, N> {
    pub fn zero() -> Self {
        MPoly {
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(c: T) -> Self {
        let mut p = Self::zero();
        p.add_term([0; N], c);
        p
    }

    pub fn one() -> Self {
        Self::constant(T::one())
    }

    /// The coordinate polynomial `x_i`.
    pub fn var(i: usize) -> Self {
        assert!(i < N);
        let mut e = [0u16; N];
        e[i] = 1;
        Self::monomial(e, T::one())
    }

    pub fn monomial(exps: [u16; N], c: T) -> Self {
        let mut p = Self::zero();
        p.add_term(exps, c);
        p
    }

    pub fn add_term(&mut self, exps: [u16; N], c: T) {
        if c.is_zero() {
            return;
        }
        match self.terms.get_mut(&exps) {
            Some(cur) => {
                *cur = cur.add(&c);
                if cur.is_zero() {
                    self.terms.remove(&exps);
                }
            }
            None => {
                self.terms.insert(exps, c);
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, exps: [u16; N]) -> T {
        self.terms.get(&exps).cloned().unwrap_or_else(T::zero)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[u16; N], &T)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn total_degree(&self) -> u16 {
        self.terms
            .keys()
            .map(|e| e.iter().sum::<u16>())
            .max()
            .unwrap_or(0)
    }

    pub fn add(&self, rhs: &Self) -> Self {
        let mut out = self.clone();
        for (e, c) in &rhs.terms {
            out.add_term(*e, c.clone());
        }
        out
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        let mut out = self.clone();
        for (e, c) in &rhs.terms {
            out.add_term(*e, c.neg());
        }
        out
    }

    pub fn neg(&self) -> Self {
        let mut out = Self::zero();
        for (e, c) in &self.terms {
            out.add_term(*e, c.neg());
        }
        out
    }

    pub fn scale(&self, s: &T) -> Self {
        let mut out = Self::zero();
        for (e, c) in &self.terms {
            out.add_term(*e, c.mul(s));
        }
        out
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        self.mul_trunc(rhs, u16::MAX)
    }

    /// Product with terms above total degree `max_deg` discarded.
    pub fn mul_trunc(&self, rhs: &Self, max_deg: u16) -> Self {
        let mut out = Self::zero();
        for (ea, ca) in &self.terms {
            let da: u16 = ea.iter().sum();
            for (eb, cb) in &rhs.terms {
                let db: u16 = eb.iter().sum();
                if da + db > max_deg {
                    continue;
                }
                let mut e = [0u16; N];
                for i in 0..N {
                    e[i] = ea[i] + eb[i];
                }
                out.add_term(e, ca.mul(cb));
            }
        }
        out
    }

    pub fn pow(&self, n: u32) -> Self {
        let mut acc = Self::one();
        for _ in 0..n {
            acc = acc.mul(self);
        }
        acc
    }

    /// Discard all terms of total degree greater than `max_deg`.
    pub fn truncate(&self, max_deg: u16) -> Self {
        let mut out = Self::zero();
        for (e, c) in &self.terms {
            if e.iter().sum::<u16>() <= max_deg {
                out.add_term(*e, c.clone());
            }
        }
        out
    }

    /// Partial derivative with respect to variable `i`.
    pub fn deriv(&self, i: usize) -> Self {
        assert!(i < N);
        let mut out = Self::zero();
        for (e, c) in &self.terms {
            if e[i] == 0 {
                continue;
            }
            let mut k = T::zero();
            for _ in 0..e[i] {
                k = k.add(&T::one());
            }
            let mut e2 = *e;
            e2[i] -= 1;
            out.add_term(e2, c.mul(&k));
        }
        out
    }

    pub fn eval(&self, x: &[T; N]) -> T {
        let max = {
            let mut m = [0u16; N];
            for e in self.terms.keys() {
                for i in 0..N {
                    m[i] = m[i].max(e[i]);
                }
            }
            m
        };
        // Power tables avoid repeated exponentiation of big rationals.
        let mut pows: Vec<Vec<T>> = Vec::with_capacity(N);
        for i in 0..N {
            let mut col = Vec::with_capacity(max[i] as usize + 1);
            col.push(T::one());
            for k in 1..=max[i] as usize {
                let prev = col[k - 1].clone();
                col.push(prev.mul(&x[i]));
            }
            pows.push(col);
        }
        let mut acc = T::zero();
        for (e, c) in &self.terms {
            let mut t = c.clone();
            for i in 0..N {
                t = t.mul(&pows[i][e[i] as usize]);
            }
            acc = acc.add(&t);
        }
        acc
    }

    /// Substitute polynomials for the variables: `self(subs[0], ..., subs[N-1])`,
    /// truncating intermediate products above `max_deg`.
    pub fn compose<const M: usize>(&self, subs: &[MPoly<T, M>; N], max_deg: u16) -> MPoly<T, M> {
        let maxe = {
            let mut m = [0u16; N];
            for e in self.terms.keys() {
                for i in 0..N {
                    m[i] = m[i].max(e[i]);
                }
            }
            m
        };
        let mut pows: Vec<Vec<MPoly<T, M>>> = Vec::with_capacity(N);
        for i in 0..N {
            let mut col = Vec::with_capacity(maxe[i] as usize + 1);
            col.push(MPoly::<T, M>::one());
            for k in 1..=maxe[i] as usize {
                let prev = col[k - 1].clone();
                col.push(prev.mul_trunc(&subs[i], max_deg));
            }
            pows.push(col);
        }
        let mut acc = MPoly::<T, M>::zero();
        for (e, c) in &self.terms {
            let mut t = MPoly::<T, M>::constant(c.clone());
            for i in 0..N {
                t = t.mul_trunc(&pows[i][e[i] as usize], max_deg);
            }
            acc = acc.add(&t);
        }
        acc
    }

    /// Split into `(quotient, remainder)` under division by `x_i^k`:
    /// terms with exponent >= k in variable `i` are shifted down into the
    /// quotient, the rest form the remainder.
    pub fn div_var(&self, i: usize, k: u16) -> (Self, Self) {
        assert!(i < N);
        let mut q = Self::zero();
        let mut r = Self::zero();
        for (e, c) in &self.terms {
            if e[i] >= k {
                let mut e2 = *e;
                e2[i] -= k;
                q.add_term(e2, c.clone());
            } else {
                r.add_term(*e, c.clone());
            }
        }
        (q, r)
    }

    pub fn map_coeffs<U: Ring>(&self, f: impl Fn(&T) -> U) -> MPoly<U, N> {
        let mut out = MPoly::<U, N>::zero();
        for (e, c) in &self.terms {
            out.add_term(*e, f(c));
        }
        out
    }
}

impl<const N: usize> MPoly<Scalar, N> {
    pub fn to_f64(&self) -> MPoly<f64, N> {
        self.map_coeffs(|c| c.to_f64())
    }

    pub fn eval_f64(&self, x: &[f64; N]) -> f64 {
        let xs: [Scalar; N] = std::array::from_fn(|i| Scalar::Float(x[i]));
        self.eval(&xs).to_f64()
    }
}

impl<T: Ring + Serialize, const N: usize> Serialize for MPoly<T, N> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Term<'a, T> {
            exponents: &'a [u16],
            coefficient: &'a T,
        }
        let mut seq = serializer.serialize_seq(Some(self.num_terms()))?;
        for (exps, coeff) in self.terms() {
            seq.serialize_element(&Term {
                exponents: &exps[..],
                coefficient: coeff,
            })?;
        }
        seq.end()
    }
}

impl<T: Ring + fmt::Display, const N: usize> fmt::Debug for MPoly<T, N> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        let names = ["u", "v", "p", "r", "x4", "x5"];
        let mut first = true;
        for (e, c) in &self.terms {
            if !first {
                f.write_str(" + ")?;
            }
            first = false;
            write!(f, "({c})")?;
            for i in 0..N {
                match e[i] {
                    0 => {}
                    1 => write!(f, "*{}", names[i])?,
                    k => write!(f, "*{}^{}", names[i], k)?,
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type P2 = MPoly<Scalar, 2>;

    fn s(n: i64) -> Scalar {
        Scalar::from_int(n)
    }

    #[test]
    fn arithmetic_and_eval() {
        // p = (u + 2v)^2 = u^2 + 4uv + 4v^2
        let p = P2::var(0).add(&P2::var(1).scale(&s(2))).pow(2);
        assert_eq!(p.coeff([2, 0]), s(1));
        assert_eq!(p.coeff([1, 1]), s(4));
        assert_eq!(p.coeff([0, 2]), s(4));
        assert_eq!(p.eval(&[s(1), s(3)]), s(49));
    }

    #[test]
    fn derivative() {
        // d/du (u^3 v) = 3 u^2 v
        let p = P2::monomial([3, 1], s(1));
        let d = p.deriv(0);
        assert_eq!(d.coeff([2, 1]), s(3));
        assert_eq!(d.num_terms(), 1);
    }

    #[test]
    fn truncated_multiplication() {
        let p = P2::one().add(&P2::var(0));
        let q = p.mul_trunc(&p, 1);
        assert_eq!(q.coeff([0, 0]), s(1));
        assert_eq!(q.coeff([1, 0]), s(2));
        assert_eq!(q.coeff([2, 0]), s(0));
    }

    #[test]
    fn composition_matches_direct_substitution() {
        // f(u,v) = u^2 + v, with u -> x+y, v -> xy
        let f = P2::monomial([2, 0], s(1)).add(&P2::var(1));
        let sub0 = P2::var(0).add(&P2::var(1));
        let sub1 = P2::monomial([1, 1], s(1));
        let g = f.compose(&[sub0, sub1], 10);
        for (x, y) in [(1i64, 2i64), (-3, 5), (0, 7)] {
            let direct = (x + y) * (x + y) + x * y;
            assert_eq!(g.eval(&[s(x), s(y)]), s(direct));
        }
    }

    #[test]
    fn variable_power_division() {
        // u^2 v + u^3 = u^2 (v + u), remainder-free at k = 2
        let p = P2::monomial([2, 1], s(1)).add(&P2::monomial([3, 0], s(1)));
        let (q, r) = p.div_var(0, 2);
        assert!(r.is_zero());
        assert_eq!(q.coeff([0, 1]), s(1));
        assert_eq!(q.coeff([1, 0]), s(1));
    }
}
