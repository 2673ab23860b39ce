//! Dense truncated power series over `f64`.
//!
//! A [`TruncatedSeries`] of order `J` stores the coefficients `c_0..=c_J` of
//! `sum c_k s^k`; everything past `s^J` is discarded by every operation.
//! [`ShiftedCoeffs`] holds the generating-function components whose expansion
//! starts at a fixed power of `s` (`T` at `s^1`, `U` at `s^2`, `V` at `s^3`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Truncation order used when callers do not pick one.
pub const DEFAULT_ORDER: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncatedSeries {
    coeffs: Vec<f64>,
}

impl TruncatedSeries {
    /// Series with the given coefficients; the order is `coeffs.len() - 1`.
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::InvalidArgument(
                "a truncated series needs at least one coefficient".into(),
            ));
        }
        Ok(Self { coeffs })
    }

    /// Pads with zeros or cuts so that the result has exactly `order + 1` coefficients.
    pub fn from_coeffs(coeffs: &[f64], order: usize) -> Self {
        let mut c = vec![0.0; order + 1];
        for (dst, src) in c.iter_mut().zip(coeffs) {
            *dst = *src;
        }
        Self { coeffs: c }
    }

    pub fn zero(order: usize) -> Self {
        Self {
            coeffs: vec![0.0; order + 1],
        }
    }

    pub fn one(order: usize) -> Self {
        let mut s = Self::zero(order);
        s.coeffs[0] = 1.0;
        s
    }

    /// `c * s^power`, truncated.
    pub fn monomial(c: f64, power: usize, order: usize) -> Self {
        let mut s = Self::zero(order);
        if power <= order {
            s.coeffs[power] = c;
        }
        s
    }

    /// Maclaurin series of `exp`.
    pub fn exp(order: usize) -> Self {
        let mut c = Vec::with_capacity(order + 1);
        let mut term = 1.0;
        for k in 0..=order {
            if k > 0 {
                term /= k as f64;
            }
            c.push(term);
        }
        Self { coeffs: c }
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    /// Index of the first nonzero coefficient, or `order + 1` for the zero series.
    pub fn valuation(&self) -> usize {
        self.coeffs.iter().position(|&c| c != 0.0).unwrap_or(self.coeffs.len())
    }

    pub fn is_zero(&self) -> bool {
        self.valuation() > self.order()
    }

    pub fn truncate(&self, order: usize) -> Self {
        Self::from_coeffs(&self.coeffs, order)
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|c| c * factor).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_order(other)?;
        Ok(Self {
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect(),
        })
    }

    /// Cauchy product truncated to the common order.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check_order(other)?;
        Ok(self.mul_truncated(other))
    }

    fn mul_truncated(&self, other: &Self) -> Self {
        let order = self.order();
        let mut out = vec![0.0; order + 1];
        // iterate only over the nonzero terms of the right factor; the
        // generating-function components are short polynomials
        let nonzero: Vec<(usize, f64)> = other
            .coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(i, c)| (i, *c))
            .collect();
        for (i, &a) in self.coeffs.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for &(k, b) in &nonzero {
                if i + k > order {
                    break;
                }
                out[i + k] += a * b;
            }
        }
        Self { coeffs: out }
    }

    /// `outer(inner(s))` truncated to the order of `inner`.
    ///
    /// `inner` must have a zero constant term; then `inner^k` starts at
    /// `s^(k * valuation)` and only finitely many outer coefficients
    /// contribute below the truncation order. Coefficients of `outer` past
    /// its own order are treated as zero.
    pub fn compose(&self, inner: &Self) -> Result<Self> {
        if inner.coeffs[0] != 0.0 {
            return Err(Error::CompositionDomain {
                constant: inner.coeffs[0],
            });
        }
        let order = inner.order();
        let v = inner.valuation();
        if v > order {
            return Ok(Self::monomial(self.coeffs[0], 0, order));
        }
        let top = (order / v).min(self.order());
        // Horner in the composed variable
        let mut acc = Self::monomial(self.coeffs[top], 0, order);
        for k in (0..top).rev() {
            acc = acc.mul_truncated(inner);
            acc.coeffs[0] += self.coeffs[k];
        }
        Ok(acc)
    }

    /// Horner evaluation of the stored polynomial.
    pub fn eval(&self, t: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * t + c)
    }

    /// Formal derivative, order drops by one (order 0 gives the zero series of order 0).
    pub fn derivative(&self) -> Self {
        if self.order() == 0 {
            return Self::zero(0);
        }
        Self {
            coeffs: self
                .coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, c)| k as f64 * c)
                .collect(),
        }
    }

    fn check_order(&self, other: &Self) -> Result<()> {
        if self.order() != other.order() {
            return Err(Error::OrderMismatch {
                left: self.order(),
                right: other.order(),
            });
        }
        Ok(())
    }
}

/// Value and first two derivatives at `s = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UnitDerivatives {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

/// Value, first and second derivative at `s = 1` of `sum c_j s^(j + shift)`,
/// where `a` stores the `c_j`.
pub fn derivatives_at_one(a: &TruncatedSeries, shift: u32) -> UnitDerivatives {
    unit_derivatives(a.coeffs(), shift)
}

fn unit_derivatives(coeffs: &[f64], shift: u32) -> UnitDerivatives {
    let mut out = UnitDerivatives::default();
    for (j, &c) in coeffs.iter().enumerate() {
        let p = (j + shift as usize) as f64;
        out.value += c;
        out.d1 += p * c;
        out.d2 += p * (p - 1.0) * c;
    }
    out
}

/// Coefficients of a component whose expansion starts at `s^shift`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftedCoeffs {
    coeffs: Vec<f64>,
    shift: u32,
}

impl ShiftedCoeffs {
    pub fn new(coeffs: Vec<f64>, shift: u32) -> Self {
        Self { coeffs, shift }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn shift(&self) -> u32 {
        self.shift
    }

    /// Highest power of `s` with a stored coefficient (`None` when nothing is stored).
    pub fn degree(&self) -> Option<usize> {
        let last = self.coeffs.iter().rposition(|&c| c != 0.0)?;
        Some(last + self.shift as usize)
    }

    pub fn at_one(&self) -> UnitDerivatives {
        unit_derivatives(&self.coeffs, self.shift)
    }

    pub fn eval(&self, t: f64) -> f64 {
        let poly = self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * t + c);
        poly * t.powi(self.shift as i32)
    }

    /// Unshifted series `sum c_j s^(j + shift)` truncated at `order`.
    pub fn to_series(&self, order: usize) -> TruncatedSeries {
        let mut s = TruncatedSeries::zero(order);
        for (j, &c) in self.coeffs.iter().enumerate() {
            let p = j + self.shift as usize;
            if p > order {
                break;
            }
            s.coeffs[p] = c;
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(c: &[f64]) -> TruncatedSeries {
        TruncatedSeries::new(c.to_vec()).unwrap()
    }

    #[test]
    fn binomial_square() {
        let a = series(&[1.0, 1.0, 0.0]);
        assert_eq!(a.mul(&a).unwrap().coeffs(), &[1.0, 2.0, 1.0]);
    }

    #[test]
    fn multiplying_by_one_is_identity() {
        let a = series(&[0.3, -1.5, 2.0, 7.0]);
        assert_eq!(a.mul(&TruncatedSeries::one(3)).unwrap(), a);
    }

    #[test]
    fn exp_times_exp_negative() {
        let e = TruncatedSeries::exp(6);
        let neg: Vec<f64> = e
            .coeffs()
            .iter()
            .enumerate()
            .map(|(k, c)| if k % 2 == 1 { -c } else { *c })
            .collect();
        let prod = e.mul(&series(&neg)).unwrap();
        assert!((prod.coeffs()[0] - 1.0).abs() < 1e-15);
        for c in &prod.coeffs()[1..] {
            assert!(c.abs() < 1e-15, "{c}");
        }
    }

    #[test]
    fn mismatched_orders_are_rejected() {
        let err = series(&[1.0, 2.0]).mul(&series(&[1.0])).unwrap_err();
        assert!(matches!(err, Error::OrderMismatch { left: 1, right: 0 }));
    }

    #[test]
    fn exp_of_half_square() {
        // e^{s^2/2} = 1 + s^2/2 + s^4/8 + ...
        let inner = TruncatedSeries::monomial(0.5, 2, 4);
        let out = TruncatedSeries::exp(4).compose(&inner).unwrap();
        let expect = [1.0, 0.0, 0.5, 0.0, 0.125];
        for (a, b) in out.coeffs().iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn compose_with_zero_gives_constant() {
        let outer = series(&[2.5, 1.0, -3.0]);
        let out = outer.compose(&TruncatedSeries::zero(5)).unwrap();
        assert_eq!(out.coeffs(), &[2.5, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn compose_identity_outer() {
        let inner = series(&[0.0, 0.7, -0.2, 1.3]);
        let id = series(&[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(id.compose(&inner).unwrap(), inner);
    }

    #[test]
    fn compose_rejects_constant_term() {
        let err = TruncatedSeries::exp(3)
            .compose(&series(&[0.1, 1.0, 0.0, 0.0]))
            .unwrap_err();
        assert!(matches!(err, Error::CompositionDomain { .. }));
    }

    #[test]
    fn eval_exp_at_one() {
        let e = TruncatedSeries::exp(20).eval(1.0);
        assert!((e - std::f64::consts::E).abs() < 1e-12);
    }

    #[test]
    fn eval_at_zero_and_monomial() {
        assert_eq!(series(&[4.0, 3.0, 2.0]).eval(0.0), 4.0);
        assert_eq!(TruncatedSeries::monomial(0.5, 2, 2).eval(1.0), 0.5);
    }

    #[test]
    fn shifted_derivatives() {
        let u = derivatives_at_one(&series(&[0.5]), 2);
        assert_eq!((u.value, u.d1, u.d2), (0.5, 1.0, 1.0));
        let v = derivatives_at_one(&series(&[1.0 / 6.0]), 3);
        assert!((v.value - 1.0 / 6.0).abs() < 1e-16);
        assert!((v.d1 - 0.5).abs() < 1e-16);
        assert!((v.d2 - 1.0).abs() < 1e-16);
        let z = derivatives_at_one(&TruncatedSeries::zero(4), 1);
        assert_eq!((z.value, z.d1, z.d2), (0.0, 0.0, 0.0));
    }

    #[test]
    fn shifted_coeffs_expand() {
        let v = ShiftedCoeffs::new(vec![1.0 / 6.0, 2.0], 3);
        let s = v.to_series(5);
        assert_eq!(s.coeffs(), &[0.0, 0.0, 0.0, 1.0 / 6.0, 2.0, 0.0]);
        assert_eq!(v.degree(), Some(4));
        assert!((v.eval(0.5) - s.eval(0.5)).abs() < 1e-15);
        assert_eq!(ShiftedCoeffs::new(vec![], 1).degree(), None);
    }

    #[test]
    fn valuation_of_zero_series() {
        assert_eq!(TruncatedSeries::zero(3).valuation(), 4);
        assert_eq!(series(&[0.0, 0.0, 1.0]).valuation(), 2);
    }
}
