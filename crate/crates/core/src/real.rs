//! Scalar abstraction used by every pointwise pipeline in the crate.
//!
//! All geometric quantities are computed by code generic over [`Real`]. Plain
//! `f64` gives values; [`Dual<f64>`] gives one directional derivative; the
//! nested `Dual<Dual<f64>>` gives a mixed second derivative. Derivatives of
//! Christoffel symbols (needed for curvature and the Jacobi equation) are
//! obtained by evaluating the Christoffel pipeline at a dual point.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

pub trait Real:
    Copy
    + Debug
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + 'static
{
    fn cst(v: f64) -> Self;
    /// Primal part, with all infinitesimal parts dropped.
    fn re(self) -> f64;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn powi(self, n: i32) -> Self;
    /// True when every component (primal and infinitesimal) is finite.
    fn all_finite(self) -> bool;

    #[inline]
    fn zero() -> Self {
        Self::cst(0.0)
    }

    #[inline]
    fn scale(self, s: f64) -> Self {
        self * Self::cst(s)
    }
}

impl Real for f64 {
    #[inline]
    fn cst(v: f64) -> Self {
        v
    }
    #[inline]
    fn re(self) -> f64 {
        self
    }
    #[inline]
    fn sin(self) -> Self {
        f64::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        f64::cos(self)
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
    #[inline]
    fn all_finite(self) -> bool {
        self.is_finite()
    }
    #[inline]
    fn scale(self, s: f64) -> Self {
        self * s
    }
}

/// A first-order dual number `re + eps·ε` with `ε² = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual<T> {
    pub re: T,
    pub eps: T,
}

impl<T: Real> Dual<T> {
    #[inline]
    pub fn new(re: T, eps: T) -> Self {
        Self { re, eps }
    }

    #[inline]
    pub fn constant(re: T) -> Self {
        Self { re, eps: T::zero() }
    }

    /// Lift a point `x` into the dual point `x + ε·v`.
    pub fn seed(x: &[T], v: &[T]) -> Vec<Self> {
        x.iter().zip(v).map(|(&a, &b)| Self::new(a, b)).collect()
    }

    /// Lift `x` into `x + ε·e_axis`.
    pub fn seed_axis(x: &[T], axis: usize) -> Vec<Self> {
        x.iter()
            .enumerate()
            .map(|(i, &a)| Self::new(a, if i == axis { T::cst(1.0) } else { T::zero() }))
            .collect()
    }
}

impl<T: Real> Add for Dual<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(self.re + o.re, self.eps + o.eps)
    }
}

impl<T: Real> Sub for Dual<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self::new(self.re - o.re, self.eps - o.eps)
    }
}

impl<T: Real> Mul for Dual<T> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        Self::new(self.re * o.re, self.re * o.eps + self.eps * o.re)
    }
}

impl<T: Real> Div for Dual<T> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let q = self.re / o.re;
        Self::new(q, (self.eps - q * o.eps) / o.re)
    }
}

impl<T: Real> Neg for Dual<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.re, -self.eps)
    }
}

impl<T: Real> AddAssign for Dual<T> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        self.re += o.re;
        self.eps += o.eps;
    }
}

impl<T: Real> SubAssign for Dual<T> {
    #[inline]
    fn sub_assign(&mut self, o: Self) {
        self.re -= o.re;
        self.eps -= o.eps;
    }
}

impl<T: Real> MulAssign for Dual<T> {
    #[inline]
    fn mul_assign(&mut self, o: Self) {
        *self = *self * o;
    }
}

impl<T: Real> Real for Dual<T> {
    #[inline]
    fn cst(v: f64) -> Self {
        Self::constant(T::cst(v))
    }
    #[inline]
    fn re(self) -> f64 {
        self.re.re()
    }
    #[inline]
    fn sin(self) -> Self {
        Self::new(self.re.sin(), self.eps * self.re.cos())
    }
    #[inline]
    fn cos(self) -> Self {
        Self::new(self.re.cos(), -(self.eps * self.re.sin()))
    }
    #[inline]
    fn exp(self) -> Self {
        let e = self.re.exp();
        Self::new(e, self.eps * e)
    }
    #[inline]
    fn ln(self) -> Self {
        Self::new(self.re.ln(), self.eps / self.re)
    }
    #[inline]
    fn sqrt(self) -> Self {
        let s = self.re.sqrt();
        Self::new(s, self.eps / s.scale(2.0))
    }
    #[inline]
    fn powi(self, n: i32) -> Self {
        match n {
            0 => Self::cst(1.0),
            1 => self,
            _ => Self::new(
                self.re.powi(n),
                self.eps * self.re.powi(n - 1).scale(f64::from(n)),
            ),
        }
    }
    #[inline]
    fn all_finite(self) -> bool {
        self.re.all_finite() && self.eps.all_finite()
    }
    #[inline]
    fn scale(self, s: f64) -> Self {
        Self::new(self.re.scale(s), self.eps.scale(s))
    }
}

/// Value and directional derivative of a scalar function along `v` at `x`.
pub fn directional<F>(f: F, x: &[f64], v: &[f64]) -> (f64, f64)
where
    F: FnOnce(&[Dual<f64>]) -> Dual<f64>,
{
    let out = f(&Dual::seed(x, v));
    (out.re, out.eps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule() {
        let x = Dual::new(3.0, 1.0);
        let y = x * x * x;
        assert_eq!(y.re, 27.0);
        assert_eq!(y.eps, 27.0);
    }

    #[test]
    fn nested_gives_second_derivative() {
        // d²/dx² sin(x) at 0.3
        let x = Dual::new(Dual::new(0.3, 1.0), Dual::new(1.0, 0.0));
        let y = x.sin();
        assert!((y.eps.eps + 0.3f64.sin()).abs() < 1e-15);
    }

    #[test]
    fn powi_negative() {
        let x = Dual::new(2.0, 1.0);
        let y = x.powi(-2);
        assert!((y.re - 0.25).abs() < 1e-15);
        assert!((y.eps + 0.25).abs() < 1e-15);
    }

    #[test]
    fn quotient_rule() {
        let x = Dual::new(2.0, 1.0);
        let y = Dual::cst(1.0) / x;
        assert_eq!(y.eps, -0.25);
    }
}
