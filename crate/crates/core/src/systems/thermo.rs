//! Thermodynamic-type systems
//! `H = a⁰(z − Φ) + a^j(x)(y_j + ∂_jΦ)` with the family
//! `Σ(x, λ) = (x, e^{−f}λ^k∇g_k − ∇Φ, Φ + λ⁰e^{−f})`, `λ = (λ⁰, λ¹, …, λⁿ)`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{ExpField, Expr, ExprError, ScalarField, SharedField, SubsetField};
use crate::geometry::{ContactSystem, DarbouxChart};
use crate::hje::{BoxDomain, CompleteSolution, Fibration, SolutionFamily};
use crate::linalg;

/// Inputs of a thermodynamic system; all expressions are over `x1..xn`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermoSpec {
    pub n: usize,
    pub a0: f64,
    pub drift: Vec<String>,
    pub phi: String,
    pub exponent: String,
    pub integrals: Vec<String>,
    pub rates: Vec<f64>,
    pub base_lower: Vec<f64>,
    pub base_upper: Vec<f64>,
    pub param_lower: Vec<f64>,
    pub param_upper: Vec<f64>,
}

/// A shipped instance with constant `a^i = 2^{1−i}` on `[−1, 1]ⁿ`.
///
/// `u_k = a_{k+1}x_k − a_k x_{k+1}` are annihilated by `X̂ = a^i∂_i`, so
/// `g_k = x_k + 0.3 sin u_k` (`k < n`), `g_n = x_n + 0.2u₁²` give `c_k = a_k`, and
/// `f = −a⁰(a·x)/|a|² + 0.1 sin u₁` gives `X̂(f) = −a⁰`.
pub fn instance(n: usize, a0: f64) -> ThermoSpec {
    let drift: Vec<f64> = (0..n).map(|i| 0.5f64.powi(i as i32)).collect();
    let invariant = |k: usize| {
        format!(
            "({:?}*x{} - {:?}*x{})",
            drift[k + 1],
            k + 1,
            drift[k],
            k + 2
        )
    };
    let mut integrals: Vec<String> = (0..n.saturating_sub(1))
        .map(|k| format!("x{} + 0.3*sin({})", k + 1, invariant(k)))
        .collect();
    if n >= 2 {
        integrals.push(format!("x{n} + 0.2*{}^2", invariant(0)));
    } else {
        integrals.push("x1".into());
    }
    let norm2: f64 = drift.iter().map(|v| v * v).sum();
    let ax = (0..n)
        .map(|i| format!("{:?}*x{}", drift[i], i + 1))
        .collect::<Vec<_>>()
        .join(" + ");
    let mut exponent = format!("-({a0:?})*({ax})/{norm2:?}");
    if n >= 2 {
        exponent.push_str(&format!(" + 0.1*sin({})", invariant(0)));
    }
    if a0 == 0.0 {
        exponent = "0".into();
    }
    let mut phi: Vec<String> = (1..=n).map(|i| format!("0.5*x{i}^2")).collect();
    phi.extend((1..n).map(|i| format!("0.3*x{i}*x{}", i + 1)));
    phi.push(format!("0.2*sin(x{n})"));
    ThermoSpec {
        n,
        a0,
        drift: drift.iter().map(|v| format!("{v:?}")).collect(),
        phi: phi.join(" + "),
        exponent,
        integrals,
        rates: drift.clone(),
        base_lower: vec![-1.0; n],
        base_upper: vec![1.0; n],
        param_lower: vec![-1.0; n + 1],
        param_upper: vec![1.0; n + 1],
    }
}

#[derive(Debug, Clone)]
struct Parsed {
    drift: Vec<Expr>,
    phi: Expr,
    exponent: Expr,
    integrals: Vec<Expr>,
}

impl Parsed {
    fn new(spec: &ThermoSpec) -> Result<Self> {
        let n = spec.n;
        if n == 0 || spec.drift.len() != n || spec.integrals.len() != n || spec.rates.len() != n {
            return Err(Error::Config(
                "thermo spec needs n ≥ 1 and n entries in a, g and c".into(),
            ));
        }
        let names: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
        let parse = |text: &str| Expr::parse(text, &names);
        Ok(Self {
            drift: spec
                .drift
                .iter()
                .map(|text| parse(text))
                .collect::<std::result::Result<_, _>>()?,
            phi: parse(&spec.phi)?,
            exponent: parse(&spec.exponent)?,
            integrals: spec
                .integrals
                .iter()
                .map(|text| parse(text))
                .collect::<std::result::Result<_, _>>()?,
        })
    }
}

/// `H = a⁰(z − Φ) + a^j(y_j + ∂_jΦ)`; the gradient uses the Hessian of `Φ`.
#[derive(Debug, Clone)]
pub struct ThermoHamiltonian {
    n: usize,
    a0: f64,
    drift: Vec<Expr>,
    phi: Expr,
}

impl ScalarField for ThermoHamiltonian {
    fn dim(&self) -> usize {
        2 * self.n + 1
    }

    fn value_grad(&self, point: &[f64]) -> std::result::Result<(f64, Vec<f64>), ExprError> {
        let n = self.n;
        let (xs, ys, zv) = (&point[..n], &point[n..2 * n], point[2 * n]);
        let (phi, dphi, hphi) = self.phi.hessian_slice(xs)?;
        let mut ham = self.a0 * (zv - phi);
        let mut grad = vec![0.0; 2 * n + 1];
        for i in 0..n {
            grad[i] = -self.a0 * dphi[i];
        }
        for j in 0..n {
            let (aj, daj) = self.drift[j].value_grad_slice(xs)?;
            let shifted = ys[j] + dphi[j];
            ham += aj * shifted;
            for i in 0..n {
                grad[i] += daj[i] * shifted + aj * hphi[i][j];
            }
            grad[n + j] = aj;
        }
        grad[2 * n] = self.a0;
        Ok((ham, grad))
    }
}

#[derive(Debug, Clone)]
pub struct ThermoFamily {
    fibration: Fibration,
    parsed: Parsed,
}

impl SolutionFamily for ThermoFamily {
    fn fibration(&self) -> &Fibration {
        &self.fibration
    }

    fn param_dim(&self) -> usize {
        self.parsed.integrals.len() + 1
    }

    fn jacobian(&self, base: &[f64], params: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
        let n = base.len();
        let parsed = &self.parsed;
        let (phi, dphi, hphi) = parsed.phi.hessian_slice(base)?;
        let (exponent, df) = parsed.exponent.value_grad_slice(base)?;
        let ef = (-exponent).exp();
        let mut point = vec![0.0; 2 * n + 1];
        let mut jac = DMatrix::zeros(2 * n + 1, 2 * n + 1);
        point[..n].copy_from_slice(base);
        for i in 0..n {
            jac[(i, i)] = 1.0;
        }
        // s_j = λ^k ∂_j g_k and its x-derivatives.
        let mut weighted = vec![0.0; n];
        let mut ds = vec![vec![0.0; n]; n];
        for (k, integral) in parsed.integrals.iter().enumerate() {
            let lk = params[k + 1];
            let (_, dg, hg) = integral.hessian_slice(base)?;
            for j in 0..n {
                weighted[j] += lk * dg[j];
                jac[(n + j, n + 1 + k)] = ef * dg[j];
                for i in 0..n {
                    ds[j][i] += lk * hg[j][i];
                }
            }
        }
        for j in 0..n {
            point[n + j] = ef * weighted[j] - dphi[j];
            for i in 0..n {
                jac[(n + j, i)] = ef * (ds[j][i] - df[i] * weighted[j]) - hphi[j][i];
            }
        }
        point[2 * n] = phi + params[0] * ef;
        for i in 0..n {
            jac[(2 * n, i)] = dphi[i] - params[0] * ef * df[i];
        }
        jac[(2 * n, n)] = ef;
        Ok((point, jac))
    }
}

/// Per-equation residuals of the spec.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermoSpecReport {
    /// `max |X̂(f) + a⁰|`.
    pub lxf: f64,
    /// `max |X̂(g_k) − c_k|`.
    pub ck: f64,
    /// `min |det DG|`.
    pub min_abs_det_dg: f64,
}

pub const SPEC_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct ThermoModel {
    pub spec: ThermoSpec,
    /// `H` with the Darboux form.
    pub system: ContactSystem,
    pub solution: CompleteSolution,
    /// `g = e^f` on phase space.
    pub conformal: SharedField,
    pub report: ThermoSpecReport,
    parsed: Parsed,
}

fn check_spec(
    spec: &ThermoSpec,
    parsed: &Parsed,
    samples: usize,
    seed: u64,
) -> Result<ThermoSpecReport> {
    let base = BoxDomain::new(spec.base_lower.clone(), spec.base_upper.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = ThermoSpecReport {
        lxf: 0.0,
        ck: 0.0,
        min_abs_det_dg: f64::INFINITY,
    };
    let mut probes = vec![base.center()];
    probes.extend((0..samples).map(|_| base.sample(&mut rng)));
    for probe in &probes {
        let drift: Vec<f64> = parsed
            .drift
            .iter()
            .map(|expr| expr.eval_slice(probe))
            .collect::<std::result::Result<_, _>>()?;
        let along = |expr: &Expr| -> Result<f64> {
            let (_, d) = expr.value_grad_slice(probe)?;
            Ok(d.iter().zip(&drift).map(|(lhs, rhs)| lhs * rhs).sum())
        };
        report.lxf = report.lxf.max((along(&parsed.exponent)? + spec.a0).abs());
        let mut dg = DMatrix::zeros(spec.n, spec.n);
        for (k, integral) in parsed.integrals.iter().enumerate() {
            report.ck = report.ck.max((along(integral)? - spec.rates[k]).abs());
            let (_, d) = integral.value_grad_slice(probe)?;
            for (i, v) in d.into_iter().enumerate() {
                dg[(k, i)] = v;
            }
        }
        report.min_abs_det_dg = report.min_abs_det_dg.min(dg.determinant().abs());
    }
    Ok(report)
}

/// Build the system and family after verifying the spec on samples of the base box.
pub fn thermo_system(spec: &ThermoSpec, samples: usize, seed: u64) -> Result<ThermoModel> {
    let parsed = Parsed::new(spec)?;
    let n = spec.n;
    let report = check_spec(spec, &parsed, samples, seed)?;
    let mut failures = Vec::new();
    if report.lxf > SPEC_TOL {
        failures.push(format!("X̂(f) = −a⁰ violated by {:.3e}", report.lxf));
    }
    if report.ck > SPEC_TOL {
        failures.push(format!("X̂(g_k) = c_k violated by {:.3e}", report.ck));
    }
    if report.min_abs_det_dg < linalg::RANK_THRESHOLD {
        failures.push("the g_k are not independent (DG singular)".into());
    }
    if !failures.is_empty() {
        return Err(Error::Precondition(failures.join("; ")));
    }
    let chart = DarbouxChart::new(n)?;
    let hamiltonian = ThermoHamiltonian {
        n,
        a0: spec.a0,
        drift: parsed.drift.clone(),
        phi: parsed.phi.clone(),
    };
    let system = ContactSystem::new(chart.clone(), Arc::new(hamiltonian))?;
    let family = ThermoFamily {
        fibration: Fibration::x_projection(&chart),
        parsed: parsed.clone(),
    };
    let solution = CompleteSolution::new(
        Arc::new(family),
        BoxDomain::new(spec.base_lower.clone(), spec.base_upper.clone())?,
        BoxDomain::new(spec.param_lower.clone(), spec.param_upper.clone())?,
    )?;
    let conformal: SharedField = Arc::new(ExpField(Arc::new(SubsetField {
        inner: Arc::new(parsed.exponent.clone()),
        coords: (0..n).collect(),
        dim: 2 * n + 1,
    })));
    Ok(ThermoModel {
        spec: spec.clone(),
        system,
        solution,
        conformal,
        report,
        parsed,
    })
}

impl ThermoModel {
    /// The system carrying `e^f η` when `a⁰ ≠ 0`, the plain one otherwise.
    pub fn effective_system(&self) -> Result<ContactSystem> {
        if self.spec.a0 == 0.0 {
            Ok(self.system.clone())
        } else {
            self.system.clone().with_conformal(self.conformal.clone())
        }
    }

    /// `h(λ) = a⁰λ⁰ + λ^k c_k`.
    pub fn h_formula(&self, params: &[f64]) -> f64 {
        self.spec.a0 * params[0]
            + params[1..]
                .iter()
                .zip(&self.spec.rates)
                .map(|(lambda, rate)| lambda * rate)
                .sum::<f64>()
    }

    pub fn exponent(&self, base: &[f64]) -> Result<f64> {
        Ok(self.parsed.exponent.eval_slice(base)?)
    }

    pub fn integral(&self, k: usize, base: &[f64]) -> Result<f64> {
        Ok(self.parsed.integrals[k].eval_slice(base)?)
    }

    pub fn phi(&self, base: &[f64]) -> Result<f64> {
        Ok(self.parsed.phi.eval_slice(base)?)
    }

    /// `X̂ = a^i(x)∂_i`.
    pub fn x_hat(&self, base: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .parsed
            .drift
            .iter()
            .map(|expr| expr.eval_slice(base))
            .collect::<std::result::Result<_, _>>()?)
    }

    /// `g_i − (c_i/c₁)g₁` for `i = 2..n`; first integrals of `X̂` when `c₁ ≠ 0`.
    pub fn g_first_integrals(&self, base: &[f64]) -> Result<Vec<f64>> {
        let c1 = self.spec.rates[0];
        if c1 == 0.0 {
            return Err(Error::Precondition("c₁ = 0".into()));
        }
        let g1 = self.integral(0, base)?;
        (1..self.spec.n)
            .map(|i| Ok(self.integral(i, base)? - self.spec.rates[i] / c1 * g1))
            .collect()
    }

    /// `σ_λ*η − e^{−f}d(−λ⁰f + λ^k g_k)` at a base point, max-norm.
    pub fn pullback_identity_residual(&self, base: &[f64], params: &[f64]) -> Result<f64> {
        let n = self.spec.n;
        let (point, jac) = self.solution.family.jacobian(base, params)?;
        let form = self.system.chart.darboux_form(&point);
        let pulled = jac.columns(0, n).transpose() * &form.theta;
        let (exponent, df) = self.parsed.exponent.value_grad_slice(base)?;
        let mut expect = DVector::from_iterator(n, df.iter().map(|d| -params[0] * d));
        for (k, integral) in self.parsed.integrals.iter().enumerate() {
            let (_, dg) = integral.value_grad_slice(base)?;
            for i in 0..n {
                expect[i] += params[k + 1] * dg[i];
            }
        }
        Ok((pulled - expect * (-exponent).exp()).amax())
    }

    /// Closed-form `λ = F(x, y, z)`: `λ⁰ = e^f(z − Φ)`, `λ = e^f DG^{−T}(y + ∇Φ)`.
    pub fn closed_form_inverse(&self, point: &[f64]) -> Result<Vec<f64>> {
        let n = self.spec.n;
        let base = &point[..n];
        let (phi, dphi) = self.parsed.phi.value_grad_slice(base)?;
        let ef = self.exponent(base)?.exp();
        let mut dg_t = DMatrix::zeros(n, n);
        for (k, integral) in self.parsed.integrals.iter().enumerate() {
            let (_, d) = integral.value_grad_slice(base)?;
            for i in 0..n {
                dg_t[(i, k)] = d[i];
            }
        }
        let rhs = DVector::from_iterator(n, (0..n).map(|i| ef * (point[n + i] + dphi[i])));
        let lam = linalg::solve(&dg_t, &rhs)?;
        let mut out = vec![ef * (point[2 * n] - phi)];
        out.extend(lam.iter());
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry;
    use crate::hje;

    #[test]
    fn shipped_instance_passes_its_own_checks() {
        for n in 1..=3 {
            for a0 in [0.0, 0.7] {
                let model = thermo_system(&instance(n, a0), 50, 7).unwrap();
                assert!(
                    model.report.lxf < 1e-12 && model.report.ck < 1e-12,
                    "{:?}",
                    model.report
                );
            }
        }
    }

    #[test]
    fn hamiltonian_gradient_matches_expression() {
        let spec = instance(2, 0.7);
        let model = thermo_system(&spec, 5, 1).unwrap();
        let chart = DarbouxChart::new(2).unwrap();
        let text = "0.7*(z - (0.5*x1^2 + 0.5*x2^2 + 0.3*x1*x2 + 0.2*sin(x2))) \
                    + 1*(y1 + x1 + 0.3*x2) + 0.5*(y2 + x2 + 0.3*x1 + 0.2*cos(x2))";
        let direct = Expr::parse(text, chart.names()).unwrap();
        let p = [0.3, -0.4, 1.1, 0.2, -0.7];
        let (v, integrals) = model.system.hamiltonian.value_grad(&p).unwrap();
        let (dv, dg) = direct.value_grad_slice(&p).unwrap();
        assert!((v - dv).abs() < 1e-14);
        assert!(integrals
            .iter()
            .zip(&dg)
            .all(|(drift, b)| (drift - b).abs() < 1e-14));
    }

    #[test]
    fn family_jacobian_matches_finite_differences() {
        let model = thermo_system(&instance(2, 0.7), 5, 1).unwrap();
        let fam = &model.solution.family;
        let (base, l) = ([0.2, -0.3], [0.4, -0.6, 0.9]);
        let (_, jac) = fam.jacobian(&base, &l).unwrap();
        let args: Vec<f64> = base.iter().chain(&l).copied().collect();
        let h = 1e-6;
        for rates in 0..args.len() {
            let shift = |s: f64| {
                let mut drift = args.clone();
                drift[rates] += s;
                fam.eval(&drift[..2], &drift[2..]).unwrap()
            };
            let (up, down) = (shift(h), shift(-h));
            for r in 0..5 {
                let fd = (up[r] - down[r]) / (2.0 * h);
                assert!(
                    (fd - jac[(r, rates)]).abs() < 1e-8,
                    "({r},{rates}) {fd} {}",
                    jac[(r, rates)]
                );
            }
        }
    }

    #[test]
    fn hand_instance_one_dimension() {
        let spec = ThermoSpec {
            n: 1,
            a0: 0.0,
            drift: vec!["1".into()],
            phi: "0".into(),
            exponent: "0".into(),
            integrals: vec!["x1".into()],
            rates: vec![1.0],
            base_lower: vec![-1.0],
            base_upper: vec![1.0],
            param_lower: vec![-1.0; 2],
            param_upper: vec![1.0; 2],
        };
        let model = thermo_system(&spec, 5, 1).unwrap();
        assert_eq!(
            model.solution.family.eval(&[0.3], &[0.5, -0.2]).unwrap(),
            vec![0.3, -0.2, 0.5]
        );
        let r = hje::pseudo_isotropy_residual(&model.solution, &[0.5, -0.2], &[0.3]).unwrap();
        assert!(r < 1e-15);
    }

    #[test]
    fn sections_are_legendrian_at_zero_and_drift_along_x_hat() {
        let model = thermo_system(&instance(2, 0.7), 5, 1).unwrap();
        let base = [0.3, -0.5];
        let p = model.solution.family.eval(&base, &[0.0; 3]).unwrap();
        let (phi, dphi) = model.parsed.phi.value_grad_slice(&base).unwrap();
        assert!((p[2] + dphi[0]).abs() < 1e-15 && (p[3] + dphi[1]).abs() < 1e-15);
        assert!((p[4] - phi).abs() < 1e-15);
        // X_H^σ projects to X̂ for any section.
        let q = model
            .solution
            .family
            .eval(&base, &[0.3, -0.2, 0.8])
            .unwrap();
        let field = geometry::contact_field(&model.system, &q).unwrap();
        let xh = model.x_hat(&base).unwrap();
        assert!((field[0] - xh[0]).abs() < 1e-14 && (field[1] - xh[1]).abs() < 1e-14);
    }

    #[test]
    fn pullback_identity_and_inverse() {
        let model = thermo_system(&instance(2, 0.7), 5, 1).unwrap();
        let (base, l) = ([0.2, 0.6], [0.4, -0.6, 0.9]);
        assert!(model.pullback_identity_residual(&base, &l).unwrap() < 1e-12);
        let p = model.solution.family.eval(&base, &l).unwrap();
        let back = model.closed_form_inverse(&p).unwrap();
        assert!(
            back.iter()
                .zip(&l)
                .all(|(drift, b)| (drift - b).abs() < 1e-12),
            "{back:?}"
        );
    }

    #[test]
    fn conformal_factor_is_certified() {
        let model = thermo_system(&instance(3, -0.4), 5, 1).unwrap();
        let p = [0.1, 0.2, -0.3, 0.5, 0.4, -0.2, 0.9];
        let r = geometry::conformal_condition(&model.system, model.conformal.as_ref(), &p).unwrap();
        assert!(r.abs() < 1e-12);
    }

    #[test]
    fn bad_spec_is_reported_per_equation() {
        let mut spec = instance(2, 0.7);
        spec.rates[1] = 0.4;
        let err = thermo_system(&spec, 5, 1).unwrap_err().to_string();
        assert!(err.contains("c_k") && !err.contains("a⁰ violated"), "{err}");
    }
}
