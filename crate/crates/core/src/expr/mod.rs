//! Scalar expressions over named variables with exact forward-mode derivatives.

mod dual;
mod field;
mod parse;

use std::collections::{BTreeSet, HashMap};
use std::fmt;

pub use dual::{Dual, Scalar};
pub use field::{
    ConstantField, ExpField, ProductField, ReciprocalField, ScalarField, SharedField, SubsetField,
};

/// Variable name to value.
pub type Binding = HashMap<String, f64>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExprError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier '{name}' at offset {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("unbound variable '{0}'")]
    Unbound(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("expected {expected} values, got {got}")]
    Arity { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum UnaryOp {
    Neg,
    Exp,
    Log,
    Sin,
    Cos,
    Sqrt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Node {
    Const(f64),
    Var(usize),
    Unary(UnaryOp, Box<Node>),
    Binary(BinaryOp, Box<Node>, Box<Node>),
}

impl Node {
    pub(crate) fn binary(op: BinaryOp, lhs: Node, rhs: Node) -> Node {
        Node::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    fn has_vars(&self) -> bool {
        match self {
            Node::Const(_) => false,
            Node::Var(_) => true,
            Node::Unary(_, arg) => arg.has_vars(),
            Node::Binary(_, left, right) => left.has_vars() || right.has_vars(),
        }
    }

    fn collect_vars(&self, out: &mut BTreeSet<usize>) {
        match self {
            Node::Const(_) => {}
            Node::Var(i) => {
                out.insert(*i);
            }
            Node::Unary(_, arg) => arg.collect_vars(out),
            Node::Binary(_, left, right) => {
                left.collect_vars(out);
                right.collect_vars(out);
            }
        }
    }

    fn eval<T: Scalar>(&self, vals: &[T]) -> Result<T, ExprError> {
        Ok(match self {
            Node::Const(value) => T::constant(*value),
            Node::Var(i) => vals[*i],
            Node::Unary(op, arg) => {
                let arg = arg.eval(vals)?;
                match op {
                    UnaryOp::Neg => -arg,
                    UnaryOp::Exp => arg.exp(),
                    UnaryOp::Log => {
                        if arg.real() <= 0.0 {
                            return Err(ExprError::Domain(format!(
                                "log of non-positive value {}",
                                arg.real()
                            )));
                        }
                        arg.ln()
                    }
                    UnaryOp::Sin => arg.sin(),
                    UnaryOp::Cos => arg.cos(),
                    UnaryOp::Sqrt => {
                        if arg.real() < 0.0 {
                            return Err(ExprError::Domain(format!(
                                "sqrt of negative value {}",
                                arg.real()
                            )));
                        }
                        arg.sqrt()
                    }
                }
            }
            Node::Binary(BinaryOp::Pow, base, exponent) => {
                let base_v = base.eval(vals)?;
                if !exponent.has_vars() {
                    let k = exponent.eval::<f64>(&[])?;
                    return pow_const(base_v, k);
                }
                if base_v.real() <= 0.0 {
                    return Err(ExprError::Domain(format!(
                        "variable exponent needs a positive base, got {}",
                        base_v.real()
                    )));
                }
                let exponent_v = exponent.eval(vals)?;
                (exponent_v * base_v.ln()).exp()
            }
            Node::Binary(op, lhs, rhs) => {
                let left = lhs.eval(vals)?;
                let right = rhs.eval(vals)?;
                match op {
                    BinaryOp::Add => left + right,
                    BinaryOp::Sub => left - right,
                    BinaryOp::Mul => left * right,
                    BinaryOp::Div => {
                        if right.real() == 0.0 {
                            return Err(ExprError::Domain("division by zero".into()));
                        }
                        left / right
                    }
                    BinaryOp::Pow => unreachable!(),
                }
            }
        })
    }

    fn fmt_with(&self, names: &[String], fmtr: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Const(value) if *value < 0.0 => write!(fmtr, "(-{:?})", -value),
            Node::Const(value) => write!(fmtr, "{value:?}"),
            Node::Var(i) => fmtr.write_str(&names[*i]),
            Node::Unary(UnaryOp::Neg, arg) => {
                fmtr.write_str("(-")?;
                arg.fmt_with(names, fmtr)?;
                fmtr.write_str(")")
            }
            Node::Unary(op, arg) => {
                let name = match op {
                    UnaryOp::Exp => "exp",
                    UnaryOp::Log => "log",
                    UnaryOp::Sin => "sin",
                    UnaryOp::Cos => "cos",
                    UnaryOp::Sqrt => "sqrt",
                    UnaryOp::Neg => unreachable!(),
                };
                write!(fmtr, "{name}(")?;
                arg.fmt_with(names, fmtr)?;
                fmtr.write_str(")")
            }
            Node::Binary(op, left, right) => {
                let sym = match op {
                    BinaryOp::Add => " + ",
                    BinaryOp::Sub => " - ",
                    BinaryOp::Mul => " * ",
                    BinaryOp::Div => " / ",
                    BinaryOp::Pow => "^",
                };
                fmtr.write_str("(")?;
                left.fmt_with(names, fmtr)?;
                fmtr.write_str(sym)?;
                right.fmt_with(names, fmtr)?;
                fmtr.write_str(")")
            }
        }
    }
}

fn pow_const<T: Scalar>(base: T, k: f64) -> Result<T, ExprError> {
    let integral = k.fract() == 0.0 && k.abs() <= i32::MAX as f64;
    if integral {
        if base.real() == 0.0 && k < 0.0 {
            return Err(ExprError::Domain("division by zero in power".into()));
        }
        return Ok(base.powi(k as i32));
    }
    if base.real() < 0.0 {
        return Err(ExprError::Domain(format!(
            "non-integer power {k} of negative value {}",
            base.real()
        )));
    }
    Ok(base.powf(k))
}

fn finite<T: Scalar>(v: T) -> Result<T, ExprError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ExprError::Domain("non-finite result".into()))
    }
}

/// A parsed expression together with its declared variable list.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    root: Node,
    vars: Vec<String>,
}

/// Value, gradient and Hessian rows.
pub type ValueGradHessian = (f64, Vec<f64>, Vec<Vec<f64>>);

impl Expr {
    /// Parse `text`, resolving identifiers against `vars`.
    pub fn parse<S: AsRef<str>>(text: &str, vars: &[S]) -> Result<Self, ExprError> {
        let vars: Vec<String> = vars.iter().map(|v| v.as_ref().to_string()).collect();
        let root = parse::parse_node(text, &vars)?;
        Ok(Self { root, vars })
    }

    pub fn constant(value: f64, vars: &[String]) -> Self {
        Self {
            root: Node::Const(value),
            vars: vars.to_vec(),
        }
    }

    /// Declared variables, in evaluation order.
    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    /// Names of the variables that actually occur in the tree.
    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut idx = BTreeSet::new();
        self.root.collect_vars(&mut idx);
        idx.into_iter().map(|i| self.vars[i].clone()).collect()
    }

    pub fn is_constant(&self) -> bool {
        !self.root.has_vars()
    }

    fn values_from(&self, right: &Binding) -> Result<Vec<f64>, ExprError> {
        let used = {
            let mut vars = BTreeSet::new();
            self.root.collect_vars(&mut vars);
            vars
        };
        self.vars
            .iter()
            .enumerate()
            .map(|(i, name)| match right.get(name) {
                Some(v) => Ok(*v),
                None if !used.contains(&i) => Ok(0.0),
                None => Err(ExprError::Unbound(name.clone())),
            })
            .collect()
    }

    fn check_arity(&self, values: &[f64]) -> Result<(), ExprError> {
        if values.len() != self.vars.len() {
            return Err(ExprError::Arity {
                expected: self.vars.len(),
                got: values.len(),
            });
        }
        Ok(())
    }

    pub fn eval(&self, right: &Binding) -> Result<f64, ExprError> {
        self.eval_slice(&self.values_from(right)?)
    }

    /// Evaluate with values given in declared-variable order.
    pub fn eval_slice(&self, values: &[f64]) -> Result<f64, ExprError> {
        self.check_arity(values)?;
        finite(self.root.eval(values)?)
    }

    /// Partial derivatives with respect to `wrt`, in that order. Names that are
    /// not declared variables get a zero entry.
    pub fn grad<S: AsRef<str>>(&self, wrt: &[S], right: &Binding) -> Result<Vec<f64>, ExprError> {
        let values = self.values_from(right)?;
        let (_, full) = self.value_grad_slice(&values)?;
        Ok(wrt
            .iter()
            .map(|name| {
                self.vars
                    .iter()
                    .position(|v| v == name.as_ref())
                    .map_or(0.0, |i| full[i])
            })
            .collect())
    }

    /// Value and full gradient in declared-variable order, one dual pass per variable.
    pub fn value_grad_slice(&self, values: &[f64]) -> Result<(f64, Vec<f64>), ExprError> {
        self.check_arity(values)?;
        let n = values.len();
        if n == 0 || !self.root.has_vars() {
            return Ok((self.eval_slice(values)?, vec![0.0; n]));
        }
        let mut seeded: Vec<Dual<f64>> = values.iter().map(|&v| Dual::new(v, 0.0)).collect();
        let mut grad = vec![0.0; n];
        let mut value = 0.0;
        for i in 0..n {
            seeded[i].eps = 1.0;
            let out = finite(self.root.eval(&seeded)?)?;
            seeded[i].eps = 0.0;
            value = out.re;
            grad[i] = out.eps;
        }
        Ok((value, grad))
    }

    /// Value, gradient and Hessian by nested dual numbers.
    pub fn hessian_slice(&self, values: &[f64]) -> Result<ValueGradHessian, ExprError> {
        self.check_arity(values)?;
        let n = values.len();
        let (value, grad) = self.value_grad_slice(values)?;
        let mut hess = vec![vec![0.0; n]; n];
        if !self.root.has_vars() {
            return Ok((value, grad, hess));
        }
        let zero = Dual::new(0.0, 0.0);
        let mut seeded: Vec<Dual<Dual<f64>>> = values
            .iter()
            .map(|&v| Dual::new(Dual::new(v, 0.0), zero))
            .collect();
        for i in 0..n {
            seeded[i].eps.re = 1.0;
            for j in i..n {
                seeded[j].re.eps = 1.0;
                let out = finite(self.root.eval(&seeded)?)?;
                seeded[j].re.eps = 0.0;
                hess[i][j] = out.eps.eps;
                hess[j][i] = out.eps.eps;
            }
            seeded[i].eps.re = 0.0;
        }
        Ok((value, grad, hess))
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, fmtr: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.root.fmt_with(&self.vars, fmtr)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bind(pairs: &[(&str, f64)]) -> Binding {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn oscillator_hamiltonian_value_and_gradient() {
        let expr = Expr::parse("(p^2 + q^2)/2 - 0.5*s", &["q", "p", "s"]).unwrap();
        let right = bind(&[("q", 1.0), ("p", 0.0), ("s", 0.0)]);
        assert_eq!(expr.eval(&right).unwrap(), 0.5);
        assert_eq!(
            expr.grad(&["q", "p", "s"], &right).unwrap(),
            vec![1.0, 0.0, -0.5]
        );
        let free: Vec<_> = expr.free_vars().into_iter().collect();
        assert_eq!(free, ["p", "q", "s"]);
    }

    #[test]
    fn constants_and_empty_var_lists() {
        let zero = Expr::parse::<&str>("0", &[]).unwrap();
        assert_eq!(zero.eval(&Binding::new()).unwrap(), 0.0);
        let one = Expr::parse::<&str>("1", &[]).unwrap();
        assert_eq!(one.eval(&Binding::new()).unwrap(), 1.0);
        let value = Expr::parse("3.5", &["x"]).unwrap();
        assert_eq!(value.grad(&["x"], &bind(&[("x", 2.0)])).unwrap(), vec![0.0]);
    }

    #[test]
    fn syntax_error_reports_offset() {
        let err = Expr::parse("x +", &["x"]).unwrap_err();
        assert!(
            matches!(err, ExprError::Syntax { offset: 3, .. }),
            "{err:?}"
        );
        let err = Expr::parse("2 * y", &["x"]).unwrap_err();
        assert!(matches!(
            err,
            ExprError::UnknownIdentifier { offset: 4, .. }
        ));
        assert!(Expr::parse("sin x", &["x"]).is_err());
        assert!(Expr::parse("(x", &["x"]).is_err());
        assert!(Expr::parse("x)", &["x"]).is_err());
    }

    #[test]
    fn domain_errors_are_reported() {
        let expr = Expr::parse("1/x", &["x"]).unwrap();
        assert!(matches!(
            expr.eval(&bind(&[("x", 0.0)])),
            Err(ExprError::Domain(_))
        ));
        let expr = Expr::parse("log(x)", &["x"]).unwrap();
        assert!(expr.eval(&bind(&[("x", -1.0)])).is_err());
        let expr = Expr::parse("x^0.5", &["x"]).unwrap();
        assert!(expr.eval(&bind(&[("x", -4.0)])).is_err());
        assert_eq!(expr.eval(&bind(&[("x", 4.0)])).unwrap(), 2.0);
        let expr = Expr::parse("exp(x)", &["x"]).unwrap();
        assert!(expr.eval(&bind(&[("x", 1e4)])).is_err());
    }

    #[test]
    fn precedence_and_associativity() {
        let expr = Expr::parse("2^3^2", &[""; 0]).unwrap();
        assert_eq!(expr.eval_slice(&[]).unwrap(), 512.0);
        let expr = Expr::parse("-2^2", &[""; 0]).unwrap();
        assert_eq!(expr.eval_slice(&[]).unwrap(), -4.0);
        let expr = Expr::parse("2^-1", &[""; 0]).unwrap();
        assert_eq!(expr.eval_slice(&[]).unwrap(), 0.5);
        let expr = Expr::parse("1 - 2 - 3", &[""; 0]).unwrap();
        assert_eq!(expr.eval_slice(&[]).unwrap(), -4.0);
        let expr = Expr::parse("8 / 2 / 2", &[""; 0]).unwrap();
        assert_eq!(expr.eval_slice(&[]).unwrap(), 2.0);
        let expr = Expr::parse("1.5e-3 * 2E2", &[""; 0]).unwrap();
        assert!((expr.eval_slice(&[]).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn unbound_variable_is_an_error() {
        let expr = Expr::parse("x + y", &["x", "y"]).unwrap();
        assert!(matches!(
            expr.eval(&bind(&[("x", 1.0)])),
            Err(ExprError::Unbound(_))
        ));
    }

    #[test]
    fn hessian_matches_hand_computation() {
        let expr = Expr::parse("x^2*y + sin(y)", &["x", "y"]).unwrap();
        let (v, grad, hess) = expr.hessian_slice(&[1.5, 0.3]).unwrap();
        assert!((v - (2.25 * 0.3 + 0.3_f64.sin())).abs() < 1e-15);
        assert!((grad[0] - 2.0 * 1.5 * 0.3).abs() < 1e-15);
        assert!((grad[1] - (2.25 + 0.3_f64.cos())).abs() < 1e-15);
        assert!((hess[0][0] - 0.6).abs() < 1e-15);
        assert!((hess[0][1] - 3.0).abs() < 1e-15);
        assert!((hess[1][0] - 3.0).abs() < 1e-15);
        assert!((hess[1][1] + 0.3_f64.sin()).abs() < 1e-15);
    }

    /// Random expression text over x, y, z that stays finite on the sampling box.
    fn arb_expr() -> impl Strategy<Value = String> {
        let leaf = prop_oneof![
            Just("x".to_string()),
            Just("y".to_string()),
            Just("z".to_string()),
            (-2.0f64..2.0).prop_map(|value| format!("{value:.4}")),
        ];
        leaf.prop_recursive(4, 24, 2, |inner| {
            prop_oneof![
                (inner.clone(), inner.clone())
                    .prop_map(|(left, right)| format!("({left} + {right})")),
                (inner.clone(), inner.clone())
                    .prop_map(|(left, right)| format!("({left} - {right})")),
                (inner.clone(), inner.clone())
                    .prop_map(|(left, right)| format!("({left} * {right})")),
                (inner.clone(), inner.clone())
                    .prop_map(|(left, right)| format!("{left} / (2 + {right}^2)")),
                (inner.clone(), 1u32..4).prop_map(|(left, k)| format!("(sin({left}) + 0.5)^{k}")),
                inner.clone().prop_map(|left| format!("sin({left})")),
                inner.clone().prop_map(|left| format!("cos({left})")),
                inner.clone().prop_map(|left| format!("exp(0.1*{left})")),
                inner
                    .clone()
                    .prop_map(|left| format!("log(1 + ({left})^2)")),
                inner
                    .clone()
                    .prop_map(|left| format!("sqrt(1 + ({left})^2)")),
                inner.prop_map(|left| format!("-{left}")),
            ]
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn gradient_matches_central_differences(
            text in arb_expr(),
            pt in proptest::array::uniform3(-1.0f64..1.0),
        ) {
            let expr = Expr::parse(&text, &["x", "y", "z"]).unwrap();
            if let Ok((_, grad)) = expr.value_grad_slice(&pt) {
                let step = 1e-6;
                for i in 0..3 {
                    let mut up = pt;
                    let mut dn = pt;
                    up[i] += step;
                    dn[i] -= step;
                    let fd = (expr.eval_slice(&up).unwrap() - expr.eval_slice(&dn).unwrap()) / (2.0 * step);
                    let err = (grad[i] - fd).abs() / (1.0 + grad[i].abs());
                    prop_assert!(err < 1e-6, "{text}: d/d{i} ad={} fd={fd}", grad[i]);
                }
            }
        }

        #[test]
        fn print_then_parse_evaluates_identically(
            text in arb_expr(),
            pts in proptest::collection::vec(proptest::array::uniform3(-1.0f64..1.0), 100),
        ) {
            let expr = Expr::parse(&text, &["x", "y", "z"]).unwrap();
            let printed = expr.to_string();
            let back = Expr::parse(&printed, &["x", "y", "z"]).unwrap();
            for pt in &pts {
                match (expr.eval_slice(pt), back.eval_slice(pt)) {
                    (Ok(left), Ok(right)) => prop_assert_eq!(left.to_bits(), right.to_bits(), "{} vs {}", text, printed),
                    (Err(_), Err(_)) => {}
                    (left, right) => prop_assert!(false, "{text}: {left:?} vs {right:?}"),
                }
            }
        }
    }
}
