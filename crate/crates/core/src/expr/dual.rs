//! Forward-mode dual numbers.
//!
//! `Dual<T>` carries a value and one directional derivative. Because `Dual<T>`
//! is itself a [`Scalar`], nesting (`Dual<Dual<f64>>`) yields exact mixed
//! second derivatives without any symbolic rewriting.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Arithmetic surface needed to evaluate an expression tree.
pub trait Scalar:
    Copy
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn constant(v: f64) -> Self;
    /// The underlying real value (innermost component for nested duals).
    fn real(&self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn sqrt(self) -> Self;
    /// `self^k` for a constant real exponent.
    fn powf(self, k: f64) -> Self;
    fn powi(self, k: i32) -> Self;
    /// True when every carried component is finite.
    fn is_finite(&self) -> bool;
}

impl Scalar for f64 {
    fn constant(v: f64) -> Self {
        v
    }
    fn real(&self) -> f64 {
        *self
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn powf(self, k: f64) -> Self {
        f64::powf(self, k)
    }
    fn powi(self, k: i32) -> Self {
        f64::powi(self, k)
    }
    fn is_finite(&self) -> bool {
        f64::is_finite(*self)
    }
}

/// `re + eps·ε` with `ε² = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual<T> {
    pub re: T,
    pub eps: T,
}

impl<T: Scalar> Dual<T> {
    pub fn new(re: T, eps: T) -> Self {
        Self { re, eps }
    }

    /// A seeded variable: derivative one along the active direction.
    pub fn variable(re: T) -> Self {
        Self {
            re,
            eps: T::constant(1.0),
        }
    }
}

impl<T: Scalar> Add for Dual<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.re + o.re, self.eps + o.eps)
    }
}

impl<T: Scalar> Sub for Dual<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.re - o.re, self.eps - o.eps)
    }
}

impl<T: Scalar> Mul for Dual<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Self::new(self.re * o.re, self.eps * o.re + self.re * o.eps)
    }
}

impl<T: Scalar> Div for Dual<T> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let inv = T::constant(1.0) / o.re;
        let quot = self.re * inv;
        Self::new(quot, (self.eps - quot * o.eps) * inv)
    }
}

impl<T: Scalar> Neg for Dual<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.re, -self.eps)
    }
}

impl<T: Scalar> Scalar for Dual<T> {
    fn constant(v: f64) -> Self {
        Self::new(T::constant(v), T::constant(0.0))
    }
    fn real(&self) -> f64 {
        self.re.real()
    }
    fn exp(self) -> Self {
        let expv = self.re.exp();
        Self::new(expv, self.eps * expv)
    }
    fn ln(self) -> Self {
        Self::new(self.re.ln(), self.eps / self.re)
    }
    fn sin(self) -> Self {
        Self::new(self.re.sin(), self.eps * self.re.cos())
    }
    fn cos(self) -> Self {
        Self::new(self.re.cos(), -(self.eps * self.re.sin()))
    }
    fn sqrt(self) -> Self {
        let root = self.re.sqrt();
        Self::new(root, self.eps / (T::constant(2.0) * root))
    }
    fn powf(self, k: f64) -> Self {
        if k == 0.0 {
            return Self::constant(1.0);
        }
        let d = T::constant(k) * self.re.powf(k - 1.0);
        Self::new(self.re.powf(k), self.eps * d)
    }
    fn powi(self, k: i32) -> Self {
        if k == 0 {
            return Self::constant(1.0);
        }
        let d = T::constant(k as f64) * self.re.powi(k - 1);
        Self::new(self.re.powi(k), self.eps * d)
    }
    fn is_finite(&self) -> bool {
        self.re.is_finite() && self.eps.is_finite()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule() {
        let var = Dual::variable(3.0);
        let poly = var * var + Dual::constant(2.0) * var;
        assert_eq!(poly.re, 15.0);
        assert_eq!(poly.eps, 8.0);
    }

    #[test]
    fn nested_duals_give_second_derivative() {
        // f(x) = x^3 at 2: f'' = 6x = 12
        let var: Dual<Dual<f64>> = Dual::new(Dual::variable(2.0), Dual::constant(1.0));
        let poly = var.powi(3);
        assert_eq!(poly.re.re, 8.0);
        assert_eq!(poly.re.eps, 12.0);
        assert_eq!(poly.eps.re, 12.0);
        assert_eq!(poly.eps.eps, 12.0);
    }

    #[test]
    fn transcendental_derivatives() {
        let var = Dual::variable(0.7_f64);
        assert!((var.sin().eps - 0.7_f64.cos()).abs() < 1e-15);
        assert!((var.cos().eps + 0.7_f64.sin()).abs() < 1e-15);
        assert!((var.exp().eps - 0.7_f64.exp()).abs() < 1e-15);
        assert!((var.ln().eps - 1.0 / 0.7).abs() < 1e-15);
        assert!((var.sqrt().eps - 0.5 / 0.7_f64.sqrt()).abs() < 1e-15);
        assert!((var.powf(2.5).eps - 2.5 * 0.7_f64.powf(1.5)).abs() < 1e-15);
    }
}
