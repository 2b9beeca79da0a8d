//! Scalar fields on a coordinate space: anything that yields a value and its
//! exact gradient at a point. Expressions are the common case; the combinators
//! build conformal factors such as `e^f` or `1/H` without re-parsing text.

use std::fmt::Debug;
use std::sync::Arc;

use super::{Expr, ExprError};

pub trait ScalarField: Send + Sync + Debug {
    /// Number of coordinates the field is defined over.
    fn dim(&self) -> usize;

    fn value_grad(&self, point: &[f64]) -> Result<(f64, Vec<f64>), ExprError>;

    fn value(&self, point: &[f64]) -> Result<f64, ExprError> {
        self.value_grad(point).map(|(v, _)| v)
    }
}

pub type SharedField = Arc<dyn ScalarField>;

impl ScalarField for Expr {
    fn dim(&self) -> usize {
        self.vars().len()
    }

    fn value_grad(&self, point: &[f64]) -> Result<(f64, Vec<f64>), ExprError> {
        self.value_grad_slice(point)
    }

    fn value(&self, point: &[f64]) -> Result<f64, ExprError> {
        self.eval_slice(point)
    }
}

#[derive(Debug, Clone)]
pub struct ConstantField {
    pub dim: usize,
    pub value: f64,
}

impl ScalarField for ConstantField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value_grad(&self, point: &[f64]) -> Result<(f64, Vec<f64>), ExprError> {
        Ok((self.value, vec![0.0; point.len()]))
    }
}

/// Pointwise product `a·b`.
#[derive(Debug, Clone)]
pub struct ProductField(pub SharedField, pub SharedField);

impl ScalarField for ProductField {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn value_grad(&self, point: &[f64]) -> Result<(f64, Vec<f64>), ExprError> {
        let (left_v, da) = self.0.value_grad(point)?;
        let (right_v, db) = self.1.value_grad(point)?;
        let grad = da
            .iter()
            .zip(&db)
            .map(|(dl, dr)| dl * right_v + left_v * dr)
            .collect();
        Ok((left_v * right_v, grad))
    }
}

/// Pointwise reciprocal `1/a`; zero is a domain error.
#[derive(Debug, Clone)]
pub struct ReciprocalField(pub SharedField);

impl ScalarField for ReciprocalField {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn value_grad(&self, point: &[f64]) -> Result<(f64, Vec<f64>), ExprError> {
        let (value, da) = self.0.value_grad(point)?;
        if value == 0.0 {
            return Err(ExprError::Domain("reciprocal of zero".into()));
        }
        let inv = 1.0 / value;
        Ok((inv, da.iter().map(|d| -d * inv * inv).collect()))
    }
}

/// Pointwise exponential `e^a`.
#[derive(Debug, Clone)]
pub struct ExpField(pub SharedField);

impl ScalarField for ExpField {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn value_grad(&self, point: &[f64]) -> Result<(f64, Vec<f64>), ExprError> {
        let (value, da) = self.0.value_grad(point)?;
        let expv = value.exp();
        if !expv.is_finite() {
            return Err(ExprError::Domain("exponential overflow".into()));
        }
        Ok((expv, da.iter().map(|d| d * expv).collect()))
    }
}

/// A field over a subset of the coordinates, lifted to `dim` coordinates.
#[derive(Debug, Clone)]
pub struct SubsetField {
    pub inner: SharedField,
    /// `coords[i]` is the ambient index of the inner field's `i`-th variable.
    pub coords: Vec<usize>,
    pub dim: usize,
}

impl ScalarField for SubsetField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value_grad(&self, point: &[f64]) -> Result<(f64, Vec<f64>), ExprError> {
        let local: Vec<f64> = self.coords.iter().map(|&i| point[i]).collect();
        let (v, local_grad) = self.inner.value_grad(&local)?;
        let mut grad = vec![0.0; point.len()];
        for (&i, gv) in self.coords.iter().zip(local_grad) {
            grad[i] += gv;
        }
        Ok((v, grad))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field(text: &str) -> SharedField {
        Arc::new(Expr::parse(text, &["x", "y"]).unwrap())
    }

    #[test]
    fn combinators_follow_calculus_rules() {
        let point = [0.4, -1.2];
        let prod = ProductField(field("x*y"), field("sin(x)"));
        let (v, grad) = prod.value_grad(&point).unwrap();
        let direct = Expr::parse("x*y*sin(x)", &["x", "y"]).unwrap();
        let (dv, dg) = direct.value_grad_slice(&point).unwrap();
        assert!((v - dv).abs() < 1e-15);
        assert!(grad
            .iter()
            .zip(&dg)
            .all(|(lhs, rhs)| (lhs - rhs).abs() < 1e-14));

        let (v, grad) = ReciprocalField(field("1 + x^2 - y"))
            .value_grad(&point)
            .unwrap();
        let d = 1.0 + 0.16 + 1.2;
        assert!((v - 1.0 / d).abs() < 1e-14);
        assert!((grad[0] + 0.8 / (d * d)).abs() < 1e-12);
        assert!((grad[1] - 1.0 / (d * d)).abs() < 1e-12);

        let (v, grad) = ExpField(field("x - y")).value_grad(&point).unwrap();
        assert!((v - 1.6_f64.exp()).abs() < 1e-14);
        assert!((grad[1] + v).abs() < 1e-14);
    }

    #[test]
    fn subset_field_scatters_gradient() {
        let lifted = SubsetField {
            inner: field("x*y"),
            coords: vec![2, 0],
            dim: 3,
        };
        let (v, grad) = lifted.value_grad(&[2.0, 7.0, 3.0]).unwrap();
        assert_eq!(v, 6.0);
        assert_eq!(grad, vec![3.0, 0.0, 2.0]);
    }

    #[test]
    fn reciprocal_of_zero_is_rejected() {
        assert!(ReciprocalField(field("x")).value_grad(&[0.0, 1.0]).is_err());
    }
}
