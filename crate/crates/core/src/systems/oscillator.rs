//! The damped oscillator `H = (p² + q²)/2 − αs` with `η = p dq + ds` on `(q, p, s)`.
//!
//! Sections over `q` are `σ(q) = (q, φ(q), χ(q))` with `φ′φ = −q − αφ` and
//! `χ′φ = (q² − φ²)/2 − αχ`. Writing `u = φ/q`, the first equation integrates to
//! `ln q + ρ(u) = ln λ₁` with `ρ′(u) = u/(u² + αu + 1)`, and the second to
//! `χ = (q² + φ²)/(2α) + λ₂ exp(−α∫_{q_a}^q dr/φ)`.
//!
//! `φ` is found by bracketed Newton on a sector of `u` where `ρ` is monotone;
//! the integral is taken in `u`, where `dr/φ = −du/(u² + αu + 1)`.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::geometry::{shared, ContactSystem, DarbouxChart};
use crate::hje::{BoxDomain, CompleteSolution, Fibration, SolutionFamily};
use crate::quad::{self, QuadSettings};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillatorSpec {
    pub alpha: f64,
    /// Open interval of `u = p/q` holding the branch; defaults per regime.
    #[serde(default)]
    pub sector: Option<(f64, f64)>,
    /// Lower limit `q_a` of the `∫dr/φ` quadrature.
    pub anchor: f64,
    pub base_lower: f64,
    pub base_upper: f64,
    pub param_lower: [f64; 2],
    pub param_upper: [f64; 2],
}

impl Default for OscillatorSpec {
    fn default() -> Self {
        Self {
            alpha: 2.5,
            sector: None,
            anchor: 1.0,
            base_lower: 0.2,
            base_upper: 1.5,
            param_lower: [0.5, -1.0],
            param_upper: [2.5, 1.0],
        }
    }
}

/// Factorisation of `u² + αu + 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regime {
    /// `|α| > 2`: roots `a₊ > a₋`, `ρ = b₊ln|u − a₊| − b₋ln|u − a₋|` with
    /// `b± = a±/√(α² − 4)`.
    Real {
        a_plus: f64,
        a_minus: f64,
        b_plus: f64,
        b_minus: f64,
    },
    /// `|α| < 2`: `ρ = ½ln(u² + αu + 1) − (α/2β)atan((u + α/2)/β)`, `β = √(1 − α²/4)`.
    Complex { beta: f64 },
    /// `|α| = 2`: double root `r = −α/2`, `ρ = ln|u − r| − r/(u − r)`.
    Double { root: f64 },
}

impl Regime {
    pub fn new(alpha: f64) -> Self {
        let disc = alpha * alpha / 4.0 - 1.0;
        if disc > 0.0 {
            let root_disc = disc.sqrt();
            let (a_plus, a_minus) = (-alpha / 2.0 + root_disc, -alpha / 2.0 - root_disc);
            let spread = (alpha * alpha - 4.0).sqrt();
            Regime::Real {
                a_plus,
                a_minus,
                b_plus: a_plus / spread,
                b_minus: a_minus / spread,
            }
        } else if disc < 0.0 {
            Regime::Complex {
                beta: (-disc).sqrt(),
            }
        } else {
            Regime::Double { root: -alpha / 2.0 }
        }
    }

    fn singular_points(&self) -> Vec<f64> {
        match *self {
            Regime::Real {
                a_plus, a_minus, ..
            } => vec![a_minus, a_plus],
            Regime::Complex { .. } => vec![],
            Regime::Double { root } => vec![root],
        }
    }
}

#[derive(Debug, Clone)]
pub struct OscillatorFamily {
    alpha: f64,
    regime: Regime,
    sector: (f64, f64),
    anchor: f64,
    fibration: Fibration,
}

/// Stand-in for infinite sector ends.
const FAR: f64 = 1e10;

impl OscillatorFamily {
    pub fn new(spec: &OscillatorSpec) -> Result<Self> {
        let alpha = spec.alpha;
        if alpha == 0.0 || !alpha.is_finite() {
            return Err(Error::Config("oscillator needs a finite α ≠ 0".into()));
        }
        if !(spec.anchor > 0.0) {
            return Err(Error::Config("quadrature anchor must be positive".into()));
        }
        let regime = Regime::new(alpha);
        let sector = spec.sector.unwrap_or(match regime {
            Regime::Real {
                a_plus, a_minus, ..
            } => (a_minus, a_plus),
            Regime::Complex { .. } => (-f64::INFINITY, 0.0),
            Regime::Double { root } => (root.min(0.0), root.max(0.0)),
        });
        let mut cuts = regime.singular_points();
        cuts.push(0.0);
        if !(sector.0 < sector.1) || cuts.iter().any(|&cut| sector.0 < cut && cut < sector.1) {
            return Err(Error::Config(format!(
                "sector {sector:?} must lie between consecutive points of {cuts:?}"
            )));
        }
        let chart = oscillator_chart();
        Ok(Self {
            alpha,
            regime,
            sector,
            anchor: spec.anchor,
            fibration: Fibration::x_projection(&chart),
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn sector(&self) -> (f64, f64) {
        self.sector
    }

    fn quadratic(&self, ratio: f64) -> f64 {
        ratio * ratio + self.alpha * ratio + 1.0
    }

    pub fn rho(&self, ratio: f64) -> f64 {
        match self.regime {
            Regime::Real {
                a_plus,
                a_minus,
                b_plus,
                b_minus,
            } => b_plus * (ratio - a_plus).abs().ln() - b_minus * (ratio - a_minus).abs().ln(),
            Regime::Complex { beta } => {
                0.5 * self.quadratic(ratio).ln()
                    - self.alpha / (2.0 * beta) * ((ratio + self.alpha / 2.0) / beta).atan()
            }
            Regime::Double { root } => (ratio - root).abs().ln() - root / (ratio - root),
        }
    }

    fn rho_prime(&self, ratio: f64) -> f64 {
        ratio / self.quadratic(ratio)
    }

    /// `u = φ/q` on the sector with `ln q + ρ(u) = ln λ₁`.
    pub fn solve_ratio(&self, position: f64, lambda1: f64) -> Result<f64> {
        if !(position > 0.0) || !(lambda1 > 0.0) {
            return Err(Error::Precondition(format!(
                "oscillator family needs q > 0 and λ₁ > 0 (q = {position}, λ₁ = {lambda1})"
            )));
        }
        let target = lambda1.ln() - position.ln();
        let inset = |edge: f64, dir: f64| {
            if edge.is_infinite() {
                dir * -FAR
            } else {
                edge + dir * 1e-14 * edge.abs().max(1.0)
            }
        };
        let (mut lo, mut hi) = (inset(self.sector.0, 1.0), inset(self.sector.1, -1.0));
        let mismatch = |ratio: f64| self.rho(ratio) - target;
        let (glo, ghi) = (mismatch(lo), mismatch(hi));
        if glo.signum() == ghi.signum() {
            return Err(Error::Convergence(format!(
                "branch lost: no φ on the sector {:?} at q = {position}, λ₁ = {lambda1} (φ − a±q → 0)",
                self.sector
            )));
        }
        let rising = ghi > glo;
        let mut ratio = 0.5 * (lo + hi);
        for _ in 0..300 {
            let gu = mismatch(ratio);
            if gu == 0.0 {
                return Ok(ratio);
            }
            if (gu > 0.0) == rising {
                hi = ratio;
            } else {
                lo = ratio;
            }
            let newton = ratio - gu / self.rho_prime(ratio);
            let next = if newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if (next - ratio).abs() <= 4.0 * f64::EPSILON * ratio.abs().max(1.0) {
                return Ok(next);
            }
            ratio = next;
        }
        Err(Error::Convergence(format!(
            "φ solve did not converge at q = {position}"
        )))
    }

    pub fn phi(&self, position: f64, lambda1: f64) -> Result<f64> {
        Ok(self.solve_ratio(position, lambda1)? * position)
    }

    /// `∫_{q_a}^q dr/φ(r) = −∫_{u_a}^{u} du/(u² + αu + 1)` by quadrature.
    pub fn inverse_phi_integral(&self, position: f64, lambda1: f64) -> Result<f64> {
        let ratio = self.solve_ratio(position, lambda1)?;
        let ua = self.solve_ratio(self.anchor, lambda1)?;
        let settings = QuadSettings {
            tol: 1e-13,
            ..QuadSettings::default()
        };
        Ok(-quad::integrate_scalar(
            |v| Ok(1.0 / self.quadratic(v)),
            ua,
            ratio,
            settings,
        )?)
    }

    /// `E = exp(−α∫_{q_a}^q dr/φ)`.
    pub fn homogeneous_factor(&self, position: f64, lambda1: f64) -> Result<f64> {
        Ok((-self.alpha * self.inverse_phi_integral(position, lambda1)?).exp())
    }

    /// `∂/∂λ₁ (φ²) = 2φ·∂φ/∂λ₁`.
    pub fn phi_sq_lambda_derivative(&self, position: f64, lambda1: f64) -> Result<f64> {
        let ratio = self.solve_ratio(position, lambda1)?;
        Ok(2.0 * position * position * self.quadratic(ratio) / lambda1)
    }

    /// `(λ₁, λ₂)` through a phase point, in closed form.
    pub fn first_integrals(&self, point: &[f64]) -> Result<[f64; 2]> {
        let (position, momentum, action) = (point[0], point[1], point[2]);
        if !(position > 0.0) {
            return Err(Error::Precondition("q must be positive".into()));
        }
        let ratio = momentum / position;
        if !(self.sector.0 < ratio && ratio < self.sector.1) {
            return Err(Error::Precondition(format!(
                "p/q = {ratio} lies outside the sector {:?}",
                self.sector
            )));
        }
        let lambda1 = position * self.rho(ratio).exp();
        let decay = self.homogeneous_factor(position, lambda1)?;
        Ok([
            lambda1,
            (action - (position * position + momentum * momentum) / (2.0 * self.alpha)) / decay,
        ])
    }
}

impl SolutionFamily for OscillatorFamily {
    fn fibration(&self) -> &Fibration {
        &self.fibration
    }

    fn param_dim(&self) -> usize {
        2
    }

    fn jacobian(&self, base: &[f64], params: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
        let (position, l1, l2) = (base[0], params[0], params[1]);
        let alpha = self.alpha;
        let ratio = self.solve_ratio(position, l1)?;
        let ua = self.solve_ratio(self.anchor, l1)?;
        let phi = ratio * position;
        let phi_q = -(position + alpha * phi) / phi;
        let phi_l1 = position * self.quadratic(ratio) / (l1 * ratio);
        let decay = self.homogeneous_factor(position, l1)?;
        let di_l1 = -(1.0 / ratio - 1.0 / ua) / l1;
        let chi = (position * position + phi * phi) / (2.0 * alpha) + l2 * decay;
        let chi_q = -phi - alpha * l2 * decay / phi;
        let chi_l1 = phi * phi_l1 / alpha - alpha * l2 * decay * di_l1;
        let jac = DMatrix::from_row_slice(
            3,
            3,
            &[1.0, 0.0, 0.0, phi_q, phi_l1, 0.0, chi_q, chi_l1, decay],
        );
        Ok((vec![position, phi, chi], jac))
    }
}

pub fn oscillator_chart() -> DarbouxChart {
    DarbouxChart::with_names(1, vec!["q".into(), "p".into(), "s".into()]).expect("three names")
}

#[derive(Debug, Clone)]
pub struct OscillatorModel {
    pub spec: OscillatorSpec,
    pub system: ContactSystem,
    pub solution: CompleteSolution,
    pub family: Arc<OscillatorFamily>,
}

pub fn damped_oscillator(spec: &OscillatorSpec) -> Result<OscillatorModel> {
    let family = Arc::new(OscillatorFamily::new(spec)?);
    let chart = oscillator_chart();
    let ham = Expr::parse(
        &format!("(p^2 + q^2)/2 - ({:?})*s", spec.alpha),
        chart.names(),
    )?;
    let system = ContactSystem::new(chart, shared(ham))?;
    let solution = CompleteSolution::new(
        family.clone(),
        BoxDomain::new(vec![spec.base_lower], vec![spec.base_upper])?,
        BoxDomain::new(spec.param_lower.to_vec(), spec.param_upper.to_vec())?,
    )?;
    Ok(OscillatorModel {
        spec: spec.clone(),
        system,
        solution,
        family,
    })
}

impl OscillatorModel {
    /// `ζ(q, p) = (p² + q²)/(2α)`, the `s` of `H⁻¹(0)`.
    pub fn level_zero_action(&self, position: f64, momentum: f64) -> f64 {
        (momentum * momentum + position * position) / (2.0 * self.spec.alpha)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hje;

    fn family(alpha: f64) -> OscillatorFamily {
        OscillatorFamily::new(&OscillatorSpec {
            alpha,
            ..OscillatorSpec::default()
        })
        .unwrap()
    }

    #[test]
    fn real_regime_constants() {
        match Regime::new(2.5) {
            Regime::Real {
                a_plus,
                a_minus,
                b_plus,
                b_minus,
            } => {
                assert!((a_plus + 0.5).abs() < 1e-15 && (a_minus + 2.0).abs() < 1e-15);
                assert!((b_plus + 1.0 / 3.0).abs() < 1e-15 && (b_minus + 4.0 / 3.0).abs() < 1e-15);
            }
            r => panic!("{r:?}"),
        }
    }

    fn ode_residuals(fam: &OscillatorFamily, position: f64, l1: f64, l2: f64) -> (f64, f64) {
        let alpha = fam.alpha;
        let at = |position: f64| fam.eval(&[position], &[l1, l2]).unwrap();
        let step = 1e-5;
        let (up, dn, center) = (at(position + step), at(position - step), at(position));
        let dphi = (up[1] - dn[1]) / (2.0 * step);
        let dchi = (up[2] - dn[2]) / (2.0 * step);
        let (phi, chi) = (center[1], center[2]);
        (
            (dphi * phi + position + alpha * phi).abs(),
            (dchi * phi - ((position * position - phi * phi) / 2.0 - alpha * chi)).abs(),
        )
    }

    #[test]
    fn sections_solve_the_defining_equations() {
        for (alpha, l1) in [(2.5, 1.3), (-3.0, 0.8), (0.5, 2.0), (2.0, 5.0)] {
            let fam = family(alpha);
            for position in [0.4, 0.9, 1.3] {
                let (r1, r2) = ode_residuals(&fam, position, l1, 0.6);
                assert!(
                    r1 < 1e-7 && r2 < 1e-7,
                    "α = {alpha}, q = {position}: {r1:.2e} {r2:.2e}"
                );
            }
        }
    }

    #[test]
    fn level_zero_for_vanishing_lambda2() {
        let model = damped_oscillator(&OscillatorSpec::default()).unwrap();
        for position in [0.3, 0.8, 1.4] {
            let point = model
                .solution
                .family
                .eval(&[position], &[1.2, 0.0])
                .unwrap();
            assert!(model.system.hamiltonian.value(&point).unwrap().abs() < 1e-14);
        }
    }

    #[test]
    fn sections_solve_hje() {
        let model = damped_oscillator(&OscillatorSpec::default()).unwrap();
        let section = model.solution.section(&[1.2, 0.4]);
        for i in 0..=10 {
            let position = 0.3 + 0.1 * i as f64;
            let r = hje::hje_residual(&section, &model.system, &[position]).unwrap();
            assert!(r.amax() < 1e-7, "q = {position}: {r}");
        }
    }

    #[test]
    fn quadrature_matches_closed_form() {
        let fam = family(2.5);
        let (position, l1) = (0.6, 1.3);
        let ratio = fam.solve_ratio(position, l1).unwrap();
        let ua = fam.solve_ratio(1.0, l1).unwrap();
        // ∫du/((u + 0.5)(u + 2)) = (1/1.5) ln|(u + 0.5)/(u + 2)|
        let prim = |v: f64| ((v + 0.5) / (v + 2.0)).abs().ln() / 1.5;
        let expect = -(prim(ratio) - prim(ua));
        assert!((fam.inverse_phi_integral(position, l1).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        for alpha in [2.5, 0.5] {
            let fam = family(alpha);
            let (position, lambdas) = (0.7, [1.6, -0.3]);
            let (_, jac) = fam.jacobian(&[position], &lambdas).unwrap();
            let args = [position, lambdas[0], lambdas[1]];
            let step = 1e-6;
            for col in 0..3 {
                let shift = |offset: f64| {
                    let mut shifted = args;
                    shifted[col] += offset;
                    fam.eval(&shifted[..1], &shifted[1..]).unwrap()
                };
                let (up, dn) = (shift(step), shift(-step));
                for r in 0..3 {
                    let fd = (up[r] - dn[r]) / (2.0 * step);
                    assert!(
                        (fd - jac[(r, col)]).abs() < 1e-7,
                        "α {alpha} ({r},{col}) {fd} {}",
                        jac[(r, col)]
                    );
                }
            }
        }
    }

    #[test]
    fn first_integrals_round_trip() {
        let fam = family(2.5);
        let point = fam.eval(&[0.8], &[1.4, 0.25]).unwrap();
        let [l1, l2] = fam.first_integrals(&point).unwrap();
        assert!((l1 - 1.4).abs() < 1e-12 && (l2 - 0.25).abs() < 1e-12);
    }

    #[test]
    fn invalid_inputs() {
        assert!(OscillatorFamily::new(&OscillatorSpec {
            alpha: 0.0,
            ..OscillatorSpec::default()
        })
        .is_err());
        assert!(OscillatorFamily::new(&OscillatorSpec {
            sector: Some((-3.0, -1.0)),
            ..OscillatorSpec::default()
        })
        .is_err());
        assert!(family(2.5).solve_ratio(-0.5, 1.0).is_err());
    }
}
