//! Integration by quadratures from a pseudo-isotropic complete solution.
//!
//! With `α = Σ*η′` on `N × Λ` and base point `p₀`:
//!
//! * `W(p, λ) = ∫₀¹ α(p₀ + t(p − p₀), λ)·(p − p₀, 0) dt`
//! * `φ_j(p, λ) = ∂W/∂λ_j − α(p, λ)(e_j)`, evaluated through Cartan's formula as
//!   `∫₀¹ dα(e_j, (p − p₀, 0)) dt − α(p₀, λ)(e_j)`, which only needs first
//!   derivatives of `Σ`
//! * `h(λ) = H′(Σ(p₀, λ))`
//!
//! Trajectories solve `φ(γ(t)) = φ(γ(0)) + t·dh`, `W(γ(t)) = W(γ(0)) + t·h`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::expr::{ReciprocalField, SharedField};
use crate::geometry::{self, ContactSystem, EffectiveData};
use crate::hje::{self, CompleteSolution};
use crate::linalg;
use crate::quad::{self, QuadSettings};
use crate::refint::{Trajectory, TrajectoryMeta};

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructConfig {
    /// Anchor of `W`; defaults to the origin (or center) of the base box.
    pub base_point: Option<Vec<f64>>,
    pub quad: QuadSettings,
    /// Tolerance for the pseudo-isotropy, `ξ′(H′) = 0` and constancy checks.
    pub precondition_tol: f64,
    /// Gauss–Newton acceptance threshold on the residual norm.
    pub solver_tol: f64,
    pub samples: usize,
    pub seed: u64,
    /// Restrict precondition sampling to these parameters instead of the whole box.
    pub check_params: Option<Vec<f64>>,
}

impl Default for ReconstructConfig {
    fn default() -> Self {
        Self {
            base_point: None,
            quad: QuadSettings::default(),
            precondition_tol: 1e-8,
            solver_tol: 1e-9,
            samples: 20,
            seed: 42,
            check_params: None,
        }
    }
}

/// Pulled-back form data at `(p, λ)`.
struct Local {
    point: Vec<f64>,
    eff: EffectiveData,
    jac: DMatrix<f64>,
    /// `Σ*η′` on the `m + k` coordinate directions.
    alpha: DVector<f64>,
    /// `Σ*dη′` as an `(m + k)²` antisymmetric matrix.
    two: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct ReconstructionTables {
    system: ContactSystem,
    solution: CompleteSolution,
    base_point: Vec<f64>,
    config: ReconstructConfig,
    has_phi: bool,
    has_h: bool,
    /// Largest `|H′∘σ_λ − h(λ)|` seen while building `h`.
    pub h_constancy: f64,
    /// Largest pseudo-isotropy residual seen while building `W`.
    pub isotropy_residual: f64,
}

fn sample_params(
    solution: &CompleteSolution,
    config: &ReconstructConfig,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    match &config.check_params {
        Some(fixed) => fixed.clone(),
        None => solution.param_box.sample(rng),
    }
}

/// Build the `W` stage, after checking pseudo-isotropy of the effective form on samples.
pub fn build_w(
    solution: &CompleteSolution,
    system: &ContactSystem,
    config: ReconstructConfig,
) -> Result<ReconstructionTables> {
    let base_point = config
        .base_point
        .clone()
        .unwrap_or_else(|| solution.base_box.origin_or_center());
    if base_point.len() != solution.family.base_dim() {
        return Err(Error::Precondition(
            "base point has the wrong dimension".into(),
        ));
    }
    let mut tables = ReconstructionTables {
        system: system.clone(),
        solution: solution.clone(),
        base_point,
        config,
        has_phi: false,
        has_h: false,
        h_constancy: 0.0,
        isotropy_residual: 0.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(tables.config.seed);
    let base_dim = solution.family.base_dim();
    for _ in 0..tables.config.samples {
        let base_pt = solution.base_box.sample(&mut rng);
        let param_pt = sample_params(solution, &tables.config, &mut rng);
        let local = tables.local(&base_pt, &param_pt)?;
        let r = local.two.view((0, 0), (base_dim, base_dim)).amax();
        tables.isotropy_residual = tables.isotropy_residual.max(r);
    }
    if tables.isotropy_residual > tables.config.precondition_tol {
        return Err(Error::Precondition(format!(
            "solution is not pseudo-isotropic for the effective form (residual {:.3e})",
            tables.isotropy_residual
        )));
    }
    Ok(tables)
}

/// Enable `φ`.
pub fn build_phi(mut tables: ReconstructionTables) -> ReconstructionTables {
    tables.has_phi = true;
    tables
}

/// Enable `h`, after checking `ξ′(H′) = 0` and constancy of `H′∘σ_λ` on samples.
pub fn build_h(mut tables: ReconstructionTables) -> Result<ReconstructionTables> {
    let mut rng = ChaCha8Rng::seed_from_u64(tables.config.seed ^ 0x5eed);
    let tol = tables.config.precondition_tol;
    let mut worst_xi: f64 = 0.0;
    for _ in 0..tables.config.samples {
        let base_pt = tables.solution.base_box.sample(&mut rng);
        let param_pt = sample_params(&tables.solution, &tables.config, &mut rng);
        let point = tables.solution.family.eval(&base_pt, &param_pt)?;
        worst_xi = worst_xi.max(geometry::xi_of_h(&tables.system, &point)?.abs());
        let level = tables.reduced_hamiltonian(&param_pt)?;
        let here = tables.system.effective_at(&point)?.ham;
        tables.h_constancy = tables.h_constancy.max((here - level).abs());
    }
    if worst_xi > tol {
        return Err(Error::Precondition(format!(
            "effective Hamiltonian has ξ′(H′) = {worst_xi:.3e}, expected 0"
        )));
    }
    if tables.h_constancy > tol {
        return Err(Error::Precondition(format!(
            "H′∘σ_λ is not constant on the base (deviation {:.3e})",
            tables.h_constancy
        )));
    }
    tables.has_h = true;
    Ok(tables)
}

/// All three stages.
pub fn build_tables(
    solution: &CompleteSolution,
    system: &ContactSystem,
    config: ReconstructConfig,
) -> Result<ReconstructionTables> {
    build_h(build_phi(build_w(solution, system, config)?))
}

impl ReconstructionTables {
    pub fn base_point(&self) -> &[f64] {
        &self.base_point
    }

    pub fn system(&self) -> &ContactSystem {
        &self.system
    }

    pub fn solution(&self) -> &CompleteSolution {
        &self.solution
    }

    fn require_phi(&self) -> Result<()> {
        if self.has_phi {
            Ok(())
        } else {
            Err(Error::Precondition("φ stage not built".into()))
        }
    }

    fn require_h(&self) -> Result<()> {
        self.require_phi()?;
        if self.has_h {
            Ok(())
        } else {
            Err(Error::Precondition("h stage not built".into()))
        }
    }

    fn local(&self, base: &[f64], params: &[f64]) -> Result<Local> {
        let (point, jac) = self.solution.family.jacobian(base, params)?;
        let eff = self.system.effective_at(&point)?;
        let alpha = hje::pullback_one_form(&eff.form, &jac);
        let two = hje::pullback_two_form(&eff.form, &jac);
        Ok(Local {
            point,
            eff,
            jac,
            alpha,
            two,
        })
    }

    /// `Σ*η′` at `(p, λ)` on all `m + k` directions.
    pub fn pulled_form(&self, base: &[f64], params: &[f64]) -> Result<DVector<f64>> {
        Ok(self.local(base, params)?.alpha)
    }

    fn integrate(
        &self,
        base: &[f64],
        params: &[f64],
        with_phi: bool,
        quad: QuadSettings,
    ) -> Result<Vec<f64>> {
        let base_dim = self.solution.family.base_dim();
        let k = self.solution.family.param_dim();
        let dp: Vec<f64> = base
            .iter()
            .zip(&self.base_point)
            .map(|(lhs, rhs)| lhs - rhs)
            .collect();
        quad::integrate(
            |time| {
                let seg: Vec<f64> = self
                    .base_point
                    .iter()
                    .zip(&dp)
                    .map(|(origin, delta)| origin + time * delta)
                    .collect();
                let local = self.local(&seg, params)?;
                let mut out = Vec::with_capacity(1 + k);
                out.push((0..base_dim).map(|i| local.alpha[i] * dp[i]).sum());
                if with_phi {
                    for j in 0..k {
                        out.push(
                            (0..base_dim)
                                .map(|i| local.two[(base_dim + j, i)] * dp[i])
                                .sum(),
                        );
                    }
                }
                Ok(out)
            },
            0.0,
            1.0,
            quad,
        )
    }

    pub fn generating_function(&self, base: &[f64], params: &[f64]) -> Result<f64> {
        Ok(self.integrate(base, params, false, self.config.quad)?[0])
    }

    /// `W` with an explicit quadrature setting.
    pub fn w_with(&self, base: &[f64], params: &[f64], quad: QuadSettings) -> Result<f64> {
        Ok(self.integrate(base, params, false, quad)?[0])
    }

    /// `W` integrated along a polyline `p₀ → vertices… → p` instead of the segment.
    pub fn w_along(&self, vertices: &[Vec<f64>], params: &[f64]) -> Result<f64> {
        let base_dim = self.solution.family.base_dim();
        let mut total = 0.0;
        let mut from = self.base_point.clone();
        for to in vertices {
            let dp: Vec<f64> = to.iter().zip(&from).map(|(lhs, rhs)| lhs - rhs).collect();
            total += quad::integrate_scalar(
                |time| {
                    let seg: Vec<f64> = from
                        .iter()
                        .zip(&dp)
                        .map(|(origin, delta)| origin + time * delta)
                        .collect();
                    let local = self.local(&seg, params)?;
                    Ok((0..base_dim).map(|i| local.alpha[i] * dp[i]).sum())
                },
                0.0,
                1.0,
                self.config.quad,
            )?;
            from = to.clone();
        }
        Ok(total)
    }

    fn phi_offset(&self, params: &[f64]) -> Result<DVector<f64>> {
        let base_dim = self.solution.family.base_dim();
        let k = self.solution.family.param_dim();
        let local = self.local(&self.base_point, params)?;
        Ok(local.alpha.rows(base_dim, k).into_owned())
    }

    /// `(W, φ)` from a single vector quadrature.
    pub fn w_phi(&self, base: &[f64], params: &[f64]) -> Result<(f64, DVector<f64>)> {
        self.require_phi()?;
        let v = self.integrate(base, params, true, self.config.quad)?;
        let phi = DVector::from_column_slice(&v[1..]) - self.phi_offset(params)?;
        Ok((v[0], phi))
    }

    pub fn phi(&self, base: &[f64], params: &[f64]) -> Result<DVector<f64>> {
        Ok(self.w_phi(base, params)?.1)
    }

    /// Jacobian of `(φ_λ, W_λ)` in the base variables: rows `∂φ_j/∂p = dα(e_j, ·)`
    /// followed by `∂W/∂p = α` on base directions.
    pub fn w_phi_jacobian(&self, base: &[f64], params: &[f64]) -> Result<DMatrix<f64>> {
        self.require_phi()?;
        let base_dim = self.solution.family.base_dim();
        let k = self.solution.family.param_dim();
        let local = self.local(base, params)?;
        let mut jac = DMatrix::zeros(k + 1, base_dim);
        for i in 0..base_dim {
            for j in 0..k {
                jac[(j, i)] = local.two[(base_dim + j, i)];
            }
            jac[(k, i)] = local.alpha[i];
        }
        Ok(jac)
    }

    /// `h(λ) = H′(σ_λ(p₀))`.
    pub fn reduced_hamiltonian(&self, params: &[f64]) -> Result<f64> {
        let point = self.solution.family.eval(&self.base_point, params)?;
        Ok(self.system.effective_at(&point)?.ham)
    }

    /// `dh(λ)` by the chain rule through `Σ(p₀, ·)`.
    pub fn dh(&self, params: &[f64]) -> Result<DVector<f64>> {
        let base_dim = self.solution.family.base_dim();
        let k = self.solution.family.param_dim();
        let local = self.local(&self.base_point, params)?;
        Ok(local.jac.columns(base_dim, k).transpose() * &local.eff.dh)
    }

    /// Phase point `Σ(p, λ)`.
    pub fn phase_point(&self, base: &[f64], params: &[f64]) -> Result<Vec<f64>> {
        self.solution.family.eval(base, params)
    }

    /// Point where the pulled-back data was last assembled; exposed for diagnostics.
    pub fn effective_hamiltonian(&self, base: &[f64], params: &[f64]) -> Result<f64> {
        let local = self.local(base, params)?;
        debug_assert_eq!(local.point.len(), self.solution.family.phase_dim());
        Ok(local.eff.ham)
    }
}

/// Numerical rank of the Jacobian of `(φ_λ, W_λ)` at a base point.
pub fn immersion_rank(
    tables: &ReconstructionTables,
    params: &[f64],
    base: &[f64],
) -> Result<usize> {
    Ok(linalg::rank(&tables.w_phi_jacobian(base, params)?))
}

/// `|⟨(φ, W)*η_Λ − Σ*η′, v⟩|` with `η_Λ = dw − φ_j dλ^j` on `T*Λ × ℝ`, for a
/// tangent vector `v` of `N × Λ` (base components first).
///
/// `dW` is taken from a fourth-order central difference of the `W` quadrature
/// (tightened to 1e-13), so the check does not reuse the closed-form
/// derivatives the pipeline relies on.
pub fn antimorphism_residual(
    tables: &ReconstructionTables,
    base: &[f64],
    params: &[f64],
    v: &[f64],
) -> Result<f64> {
    let base_dim = tables.solution.family.base_dim();
    let k = tables.solution.family.param_dim();
    if v.len() != base_dim + k {
        return Err(Error::Precondition(
            "tangent vector has the wrong dimension".into(),
        ));
    }
    let fine = QuadSettings {
        tol: 1e-13,
        ..tables.config.quad
    };
    let step = 1e-3;
    let w_at = |offset: f64| -> Result<f64> {
        let base_pt: Vec<f64> = base
            .iter()
            .zip(&v[..base_dim])
            .map(|(b, d)| b + offset * d)
            .collect();
        let param_pt: Vec<f64> = params
            .iter()
            .zip(&v[base_dim..])
            .map(|(b, d)| b + offset * d)
            .collect();
        tables.w_with(&base_pt, &param_pt, fine)
    };
    let dw = (8.0 * (w_at(step)? - w_at(-step)?) - (w_at(2.0 * step)? - w_at(-2.0 * step)?))
        / (12.0 * step);
    let phi = tables.phi(base, params)?;
    let alpha = tables.pulled_form(base, params)?;
    let eta_lambda = dw - (0..k).map(|j| phi[j] * v[base_dim + j]).sum::<f64>();
    let pulled: f64 = (0..base_dim + k).map(|i| alpha[i] * v[i]).sum();
    Ok((eta_lambda - pulled).abs())
}

/// Damped Gauss–Newton for `(φ, W)(γ) = target`; returns the point and residual norm.
fn gauss_newton(
    tables: &ReconstructionTables,
    params: &[f64],
    guess: &[f64],
    target: &DVector<f64>,
) -> Result<(Vec<f64>, f64)> {
    let k = tables.solution.family.param_dim();
    let residual = |base_pt: &[f64]| -> Result<DVector<f64>> {
        let (gen_value, phi) = tables.w_phi(base_pt, params)?;
        let mut r = DVector::zeros(k + 1);
        r.rows_mut(0, k).copy_from(&(phi - target.rows(0, k)));
        r[k] = gen_value - target[k];
        Ok(r)
    };
    let mut current = guess.to_vec();
    let mut r = residual(&current)?;
    for _ in 0..40 {
        let norm = r.norm();
        if norm < tables.config.solver_tol {
            return Ok((current, norm));
        }
        let jac = tables.w_phi_jacobian(&current, params)?;
        let step = jac
            .svd(true, true)
            .solve(&(-&r), 1e-14)
            .map_err(|err| Error::Convergence(format!("least-squares step failed: {err}")))?;
        let mut scale = 1.0;
        loop {
            let trial: Vec<f64> = current
                .iter()
                .zip(step.iter())
                .map(|(coord, dir)| coord + scale * dir)
                .collect();
            if let Ok(tr) = residual(&trial) {
                if tr.norm() < norm {
                    current = trial;
                    r = tr;
                    break;
                }
            }
            scale *= 0.5;
            if scale < 1e-8 {
                return Err(Error::Convergence(format!(
                    "Gauss–Newton stalled at residual {norm:.3e}"
                )));
            }
        }
    }
    let norm = r.norm();
    if norm < tables.config.solver_tol {
        Ok((current, norm))
    } else {
        Err(Error::Convergence(format!(
            "Gauss–Newton did not converge, residual {norm:.3e}"
        )))
    }
}

/// Solve the algebraic system for `γ(t)` on the time grid and map through `Σ`.
pub fn reconstruct_trajectory(
    tables: &ReconstructionTables,
    params: &[f64],
    start: &[f64],
    times: &[f64],
) -> Result<Trajectory> {
    tables.require_h()?;
    let base_dim = tables.solution.family.base_dim();
    let k = tables.solution.family.param_dim();
    let rank = immersion_rank(tables, params, start)?;
    if rank < base_dim {
        return Err(Error::Precondition(format!(
            "(φ_λ, W_λ) is not an immersion at the start (rank {rank} < {base_dim})"
        )));
    }
    let (w0, phi0) = tables.w_phi(start, params)?;
    let energy = tables.reduced_hamiltonian(params)?;
    let dh = tables.dh(params)?;
    let t0 = times[0];
    let target_at = |time: f64| -> DVector<f64> {
        let mut v = DVector::zeros(k + 1);
        v.rows_mut(0, k).copy_from(&(&phi0 + &dh * (time - t0)));
        v[k] = w0 + energy * (time - t0);
        v
    };

    let mut path = vec![start.to_vec()];
    let mut residuals = vec![0.0];
    for i in 1..times.len() {
        let prev = &path[i - 1];
        let guess: Vec<f64> = if i >= 2 {
            let ratio = (times[i] - times[i - 1]) / (times[i - 1] - times[i - 2]);
            prev.iter()
                .zip(&path[i - 2])
                .map(|(newer, older)| newer + ratio * (newer - older))
                .collect()
        } else {
            prev.clone()
        };
        let solved = match gauss_newton(tables, params, &guess, &target_at(times[i])) {
            Ok(v) => v,
            Err(_) => {
                // Retry with eight substeps from the last accepted point.
                let mut current = prev.clone();
                let mut last = Err(Error::Convergence("no substeps".into()));
                for sub in 1..=8 {
                    let time = times[i - 1] + (times[i] - times[i - 1]) * sub as f64 / 8.0;
                    last = gauss_newton(tables, params, &current, &target_at(time));
                    match &last {
                        Ok((solved, _)) => current = solved.clone(),
                        Err(err) => {
                            return Err(Error::Convergence(format!("at t = {time}: {err}")));
                        }
                    }
                }
                last?
            }
        };
        path.push(solved.0);
        residuals.push(solved.1);
    }
    let points = path
        .iter()
        .map(|base_pt| tables.phase_point(base_pt, params))
        .collect::<Result<Vec<_>>>()?;
    Trajectory::new(
        times.to_vec(),
        points,
        TrajectoryMeta {
            method: "reconstruct".into(),
            residuals,
        },
    )
}

/// How the conformal factor of the rescaled pipeline is chosen.
#[derive(Debug, Clone)]
pub enum GMode {
    /// A user factor that must satisfy `X_H(g) + g·ξ(H) = 0`.
    Explicit(SharedField),
    /// `g = 1/H`, valid where `H` does not vanish.
    ReciprocalH,
}

/// Run the pipeline for `(η′ = gη, H′ = gH)` and return a trajectory of `X_H`.
pub fn reconstruct_rescaled(
    system: &ContactSystem,
    solution: &CompleteSolution,
    mode: &GMode,
    params: &[f64],
    start: &[f64],
    times: &[f64],
    config: ReconstructConfig,
) -> Result<Trajectory> {
    let base_system = system.unscaled();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut probe = vec![start.to_vec()];
    probe.extend((0..config.samples).map(|_| solution.base_box.sample(&mut rng)));
    let factor: SharedField = match mode {
        GMode::Explicit(factor) => {
            for base_pt in &probe {
                let point = solution.family.eval(base_pt, params)?;
                let r = geometry::conformal_condition(&base_system, factor.as_ref(), &point)?;
                if r.abs() > config.precondition_tol {
                    return Err(Error::Precondition(format!(
                        "conformal factor violates X_H(g) + g·ξ(H) = 0 (residual {r:.3e})"
                    )));
                }
            }
            factor.clone()
        }
        GMode::ReciprocalH => {
            for base_pt in &probe {
                let point = solution.family.eval(base_pt, params)?;
                if system.hamiltonian.value(&point)?.abs() < config.precondition_tol {
                    return Err(Error::Precondition(
                        "H vanishes on the sampled region; the 1/H rescaling is undefined".into(),
                    ));
                }
            }
            std::sync::Arc::new(ReciprocalField(system.hamiltonian.clone()))
        }
    };
    let scaled = base_system.with_conformal(factor)?;
    let config = ReconstructConfig {
        check_params: Some(params.to_vec()),
        ..config
    };
    let tables = build_tables(solution, &scaled, config)?;
    let mut tr = reconstruct_trajectory(&tables, params, start, times)?;
    tr.meta.method = "reconstruct-rescaled".into();
    Ok(tr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::ConstantField;
    use crate::geometry::{shared, DarbouxChart};
    use crate::hje::{BoxDomain, ExprFamily, Fibration};
    use std::sync::Arc;

    fn reeb() -> (ContactSystem, CompleteSolution) {
        let chart = DarbouxChart::new(1).unwrap();
        let sys = ContactSystem::new(chart.clone(), shared(ConstantField { dim: 3, value: 1.0 }))
            .unwrap();
        let fib = Fibration::coordinates(&chart, vec![1, 2]).unwrap();
        let fam = ExprFamily::new(&chart, fib, vec!["l".into()], &["l"]).unwrap();
        let sol = CompleteSolution::new(
            Arc::new(fam),
            BoxDomain::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap(),
            BoxDomain::new(vec![-1.0], vec![1.0]).unwrap(),
        )
        .unwrap();
        (sys, sol)
    }

    #[test]
    fn reeb_tables_by_hand() {
        let (sys, sol) = reeb();
        let tables = build_tables(&sol, &sys, ReconstructConfig::default()).unwrap();
        let (gen_value, phi) = tables.w_phi(&[0.4, 0.7], &[0.2]).unwrap();
        assert!((gen_value - 0.7).abs() < 1e-14);
        assert!((phi[0] + 0.4).abs() < 1e-14);
        assert_eq!(tables.reduced_hamiltonian(&[0.2]).unwrap(), 1.0);
        assert_eq!(tables.dh(&[0.2]).unwrap()[0], 0.0);
        assert_eq!(immersion_rank(&tables, &[0.2], &[0.4, 0.7]).unwrap(), 2);
    }

    #[test]
    fn reeb_trajectory_advances_z() {
        let (sys, sol) = reeb();
        let tables = build_tables(&sol, &sys, ReconstructConfig::default()).unwrap();
        let times: Vec<f64> = (0..=10).map(|i| i as f64 * 0.1).collect();
        let tr = reconstruct_trajectory(&tables, &[0.3], &[-0.2, 0.1], &times).unwrap();
        for (time, point) in tr.times.iter().zip(&tr.points) {
            assert!((point[0] - 0.3).abs() < 1e-12);
            assert!((point[1] + 0.2).abs() < 1e-9);
            assert!((point[2] - (0.1 + time)).abs() < 1e-9);
        }
    }

    #[test]
    fn reeb_morphism_residual_vanishes() {
        let (sys, sol) = reeb();
        let tables = build_tables(&sol, &sys, ReconstructConfig::default()).unwrap();
        let r = antimorphism_residual(&tables, &[0.3, -0.5], &[0.6], &[0.2, -0.7, 1.1]).unwrap();
        assert!(r < 1e-10, "{r}");
    }

    #[test]
    fn stages_must_be_built_in_order() {
        let (sys, sol) = reeb();
        let w_only = build_w(&sol, &sys, ReconstructConfig::default()).unwrap();
        assert!(w_only.generating_function(&[0.1, 0.2], &[0.0]).is_ok());
        assert!(w_only.phi(&[0.1, 0.2], &[0.0]).is_err());
        let no_h = build_phi(w_only);
        assert!(reconstruct_trajectory(&no_h, &[0.0], &[0.0, 0.0], &[0.0, 0.1]).is_err());
    }

    #[test]
    fn non_isotropic_family_is_rejected() {
        let chart = DarbouxChart::new(2).unwrap();
        let ham = crate::expr::Expr::parse("y1 + y2", chart.names()).unwrap();
        let sys = ContactSystem::new(chart.clone(), shared(ham)).unwrap();
        let fib = Fibration::x_projection(&chart);
        let fam = ExprFamily::new(
            &chart,
            fib,
            vec!["l0".into(), "l1".into()],
            &["l1*x2", "0", "l0"],
        )
        .unwrap();
        let sol = CompleteSolution::new(
            Arc::new(fam),
            BoxDomain::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap(),
            BoxDomain::new(vec![0.5, 0.5], vec![1.0, 1.0]).unwrap(),
        )
        .unwrap();
        assert!(matches!(
            build_w(&sol, &sys, ReconstructConfig::default()),
            Err(Error::Precondition(_))
        ));
    }
}
