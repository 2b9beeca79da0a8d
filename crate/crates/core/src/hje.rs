//! Fibrations, sections and complete solutions of the contact
//! Hamilton–Jacobi equation, and the residuals of every solution condition.

use std::fmt::Debug;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::expr::{Expr, ScalarField};
use crate::geometry::{self, ContactSystem, DarbouxChart, FormData};
use crate::linalg;

/// A coordinate projection `Π: M → N` keeping the listed phase coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fibration {
    retained: Vec<usize>,
    phase_dim: usize,
}

impl Fibration {
    /// `(x, y, z) ↦ x`.
    pub fn x_projection(chart: &DarbouxChart) -> Self {
        Self {
            retained: (0..chart.n()).map(|i| chart.x_index(i)).collect(),
            phase_dim: chart.dim(),
        }
    }

    /// `(x, y, z) ↦ (x, z)`.
    pub fn xz_projection(chart: &DarbouxChart) -> Self {
        let mut retained: Vec<usize> = (0..chart.n()).map(|i| chart.x_index(i)).collect();
        retained.push(chart.z_index());
        Self {
            retained,
            phase_dim: chart.dim(),
        }
    }

    /// Projection onto an arbitrary set of phase coordinates.
    pub fn coordinates(chart: &DarbouxChart, mut retained: Vec<usize>) -> Result<Self> {
        retained.sort_unstable();
        retained.dedup();
        if retained.is_empty() || retained.len() >= chart.dim() {
            return Err(Error::Precondition(
                "a fibration must keep at least one and drop at least one coordinate".into(),
            ));
        }
        if retained.iter().any(|&i| i >= chart.dim()) {
            return Err(Error::Precondition(
                "retained coordinate out of range".into(),
            ));
        }
        Ok(Self {
            retained,
            phase_dim: chart.dim(),
        })
    }

    pub fn base_dim(&self) -> usize {
        self.retained.len()
    }

    pub fn phase_dim(&self) -> usize {
        self.phase_dim
    }

    pub fn retained(&self) -> &[usize] {
        &self.retained
    }

    /// Phase coordinates dropped by the projection, in increasing order.
    pub fn fiber(&self) -> Vec<usize> {
        (0..self.phase_dim)
            .filter(|i| !self.retained.contains(i))
            .collect()
    }

    pub fn project(&self, point: &[f64]) -> Vec<f64> {
        self.retained.iter().map(|&i| point[i]).collect()
    }

    /// Push a phase vector forward: `Π_* v`.
    pub fn push_forward(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.retained.len(), self.retained.iter().map(|&i| v[i]))
    }
}

/// A family `Σ: N × Λ → M` with `Π∘Σ = p_N`.
pub trait SolutionFamily: Send + Sync + Debug {
    fn fibration(&self) -> &Fibration;

    fn param_dim(&self) -> usize;

    fn eval(&self, base: &[f64], params: &[f64]) -> Result<Vec<f64>> {
        Ok(self.jacobian(base, params)?.0)
    }

    /// Phase point and the `d × (m + k)` Jacobian, base columns first.
    fn jacobian(&self, base: &[f64], params: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)>;

    fn base_dim(&self) -> usize {
        self.fibration().base_dim()
    }

    fn phase_dim(&self) -> usize {
        self.fibration().phase_dim()
    }
}

pub type SharedFamily = Arc<dyn SolutionFamily>;

/// Family given by one expression per fiber coordinate over `(base, params)`.
#[derive(Debug, Clone)]
pub struct ExprFamily {
    fibration: Fibration,
    param_names: Vec<String>,
    components: Vec<Expr>,
}

impl ExprFamily {
    /// `components[j]` gives fiber coordinate `fibration.fiber()[j]`; the
    /// variables are the retained chart names followed by `param_names`.
    pub fn new(
        chart: &DarbouxChart,
        fibration: Fibration,
        param_names: Vec<String>,
        components: &[&str],
    ) -> Result<Self> {
        let fiber = fibration.fiber();
        if components.len() != fiber.len() {
            return Err(Error::Precondition(format!(
                "need {} fiber components, got {}",
                fiber.len(),
                components.len()
            )));
        }
        let vars = Self::variable_names(chart, &fibration, &param_names);
        let components = components
            .iter()
            .map(|text| Expr::parse(text, &vars))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(Self {
            fibration,
            param_names,
            components,
        })
    }

    pub fn variable_names(
        chart: &DarbouxChart,
        fibration: &Fibration,
        param_names: &[String],
    ) -> Vec<String> {
        fibration
            .retained()
            .iter()
            .map(|&i| chart.names()[i].clone())
            .chain(param_names.iter().cloned())
            .collect()
    }

    pub fn param_names(&self) -> &[String] {
        &self.param_names
    }
}

impl SolutionFamily for ExprFamily {
    fn fibration(&self) -> &Fibration {
        &self.fibration
    }

    fn param_dim(&self) -> usize {
        self.param_names.len()
    }

    fn eval(&self, base: &[f64], params: &[f64]) -> Result<Vec<f64>> {
        let args: Vec<f64> = base.iter().chain(params).copied().collect();
        let mut point = vec![0.0; self.fibration.phase_dim()];
        for (&i, v) in self.fibration.retained().iter().zip(base) {
            point[i] = *v;
        }
        for (&i, component) in self.fibration.fiber().iter().zip(&self.components) {
            point[i] = component.eval_slice(&args)?;
        }
        Ok(point)
    }

    fn jacobian(&self, base: &[f64], params: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
        let args: Vec<f64> = base.iter().chain(params).copied().collect();
        let d = self.fibration.phase_dim();
        let mut point = vec![0.0; d];
        let mut jac = DMatrix::zeros(d, args.len());
        for (col, (&i, v)) in self.fibration.retained().iter().zip(base).enumerate() {
            point[i] = *v;
            jac[(i, col)] = 1.0;
        }
        for (&i, component) in self.fibration.fiber().iter().zip(&self.components) {
            let (v, grad) = component.value_grad_slice(&args)?;
            point[i] = v;
            for (col, gv) in grad.into_iter().enumerate() {
                jac[(i, col)] = gv;
            }
        }
        Ok((point, jac))
    }
}

/// Axis-aligned box.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxDomain {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.iter().zip(&upper).any(|(lo, hi)| !(lo < hi)) {
            return Err(Error::Precondition(
                "box bounds must satisfy lower < upper".into(),
            ));
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, probe: &[f64]) -> bool {
        probe
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (lo, hi))| *lo <= *v && *v <= *hi)
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| 0.5 * (lo + hi))
            .collect()
    }

    /// The coordinate origin when it lies in the box, else the center.
    pub fn origin_or_center(&self) -> Vec<f64> {
        let origin = vec![0.0; self.dim()];
        if self.contains(&origin) {
            origin
        } else {
            self.center()
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| rng.random_range(*lo..*hi))
            .collect()
    }
}

/// A solution family certified on a base box and a parameter box.
#[derive(Debug, Clone)]
pub struct CompleteSolution {
    pub family: SharedFamily,
    pub base_box: BoxDomain,
    pub param_box: BoxDomain,
}

impl CompleteSolution {
    pub fn new(family: SharedFamily, base_box: BoxDomain, param_box: BoxDomain) -> Result<Self> {
        if base_box.dim() != family.base_dim() || param_box.dim() != family.param_dim() {
            return Err(Error::Precondition(
                "box dimensions do not match the family".into(),
            ));
        }
        Ok(Self {
            family,
            base_box,
            param_box,
        })
    }

    pub fn section(&self, params: &[f64]) -> Section {
        Section {
            family: self.family.clone(),
            params: params.to_vec(),
        }
    }

    /// Seeded random `(base, params)` samples from the two boxes.
    pub fn sample_points<R: Rng>(&self, count: usize, rng: &mut R) -> Vec<(Vec<f64>, Vec<f64>)> {
        (0..count)
            .map(|_| (self.base_box.sample(rng), self.param_box.sample(rng)))
            .collect()
    }
}

/// The partial solution `σ_λ = Σ(·, λ)`.
#[derive(Debug, Clone)]
pub struct Section {
    pub family: SharedFamily,
    pub params: Vec<f64>,
}

impl Section {
    pub fn eval(&self, base: &[f64]) -> Result<Vec<f64>> {
        self.family.eval(base, &self.params)
    }

    /// Phase point and `σ_*` (base columns only).
    pub fn jacobian(&self, base: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
        let (point, jac) = self.family.jacobian(base, &self.params)?;
        let base_dim = self.family.base_dim();
        Ok((point, jac.columns(0, base_dim).into_owned()))
    }
}

fn darboux_for(family: &dyn SolutionFamily) -> DarbouxChart {
    DarbouxChart::new((family.phase_dim() - 1) / 2).expect("phase dimension is odd and >= 3")
}

/// `Jᵀ Ω J`: a two-form pulled back along a Jacobian.
pub fn pullback_two_form(form: &FormData, jac: &DMatrix<f64>) -> DMatrix<f64> {
    jac.transpose() * &form.omega * jac
}

/// `Jᵀ θ`: a one-form pulled back along a Jacobian.
pub fn pullback_one_form(form: &FormData, jac: &DMatrix<f64>) -> DVector<f64> {
    jac.transpose() * &form.theta
}

/// `σ_*(X^σ) − X∘σ` with `X^σ = Π_*∘X∘σ`.
pub fn hje_residual(
    section: &Section,
    system: &ContactSystem,
    base: &[f64],
) -> Result<DVector<f64>> {
    let (point, jac) = section.jacobian(base)?;
    let field = geometry::contact_field(system, &point)?;
    let xs = section.family.fibration().push_forward(&field);
    Ok(jac * xs - field)
}

/// Residuals of the weak form: the base-basis max of
/// `i_{X^σ}σ*dη′ − σ*(ξ′(H′)η′ − dH′)` and `|i_{X^σ}σ*η′ − H′∘σ|`.
pub fn weak_hje_residual(
    section: &Section,
    system: &ContactSystem,
    base: &[f64],
) -> Result<(f64, f64)> {
    let (point, jac) = section.jacobian(base)?;
    let eff = system.effective_at(&point)?;
    let field = geometry::contact_field(system, &point)?;
    let xs = section.family.fibration().push_forward(&field);
    let xi = geometry::xi_of_h(system, &point)?;
    let two = pullback_two_form(&eff.form, &jac);
    let one = pullback_one_form(&eff.form, &jac);
    let dh = jac.transpose() * &eff.dh;
    let vector = two.transpose() * &xs - (one.clone() * xi - dh);
    Ok((vector.amax(), (one.dot(&xs) - eff.ham).abs()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FibrationReport {
    /// `Ker Π_* ∩ Ker η ⊆ (Ker Π_*)^⊥`
    pub preisotropy: bool,
    /// `(Im σ_*)^⊥ ∩ Ker η ⊆ Im σ_*`, when a section was supplied.
    pub coisotropy_of_section: Option<bool>,
}

fn small(block: &DMatrix<f64>, scale: f64) -> bool {
    block.is_empty() || block.amax() <= linalg::RANK_THRESHOLD * scale.max(1.0)
}

/// Pre-isotropy of the fibration at a phase point, and co-isotropy of the
/// section image when `section` (with its base point) is given.
pub fn fibration_condition(
    fibration: &Fibration,
    system: &ContactSystem,
    point: &[f64],
    section: Option<(&Section, &[f64])>,
) -> Result<FibrationReport> {
    let form = system.form_at(point)?;
    let d = fibration.phase_dim();
    let fiber = fibration.fiber();
    let mut kernel = DMatrix::zeros(d, fiber.len());
    for (j, &i) in fiber.iter().enumerate() {
        kernel[(i, j)] = 1.0;
    }
    let eta_on_kernel = DMatrix::from_row_slice(
        1,
        fiber.len(),
        (form.theta.transpose() * &kernel).as_slice(),
    );
    let inter = &kernel * linalg::nullspace(&eta_on_kernel);
    let pairing = inter.transpose() * &form.omega * &kernel;
    let preisotropy = small(&pairing, form.omega.amax());

    let coisotropy_of_section = match section {
        None => None,
        Some((sec, base)) => {
            let (spoint, jac) = sec.jacobian(base)?;
            let sform = system.form_at(&spoint)?;
            let ncols = jac.ncols();
            let mut rows = DMatrix::zeros(ncols + 1, d);
            rows.view_mut((0, 0), (ncols, d))
                .copy_from(&(jac.transpose() * sform.omega.transpose()));
            rows.row_mut(ncols).copy_from(&sform.theta.transpose());
            let perp = linalg::nullspace(&rows);
            let mut joined = DMatrix::zeros(d, ncols + perp.ncols());
            joined.view_mut((0, 0), (d, ncols)).copy_from(&jac);
            joined
                .view_mut((0, ncols), (d, perp.ncols()))
                .copy_from(&perp);
            Some(linalg::rank(&joined) == linalg::rank(&jac))
        }
    };
    Ok(FibrationReport {
        preisotropy,
        coisotropy_of_section,
    })
}

/// `max |σ_λ*dη|` over the base basis, Darboux form.
pub fn pseudo_isotropy_residual(
    solution: &CompleteSolution,
    params: &[f64],
    base: &[f64],
) -> Result<f64> {
    let section = solution.section(params);
    let (point, jac) = section.jacobian(base)?;
    let form = darboux_for(solution.family.as_ref()).darboux_form(&point);
    Ok(pullback_two_form(&form, &jac).amax())
}

/// `(max |σ_λ*d(gη)|, |X_H(g) + g·ξ(H)|)` at `σ_λ(p)`.
pub fn g_pseudo_isotropy_residual(
    solution: &CompleteSolution,
    system: &ContactSystem,
    factor: &dyn ScalarField,
    params: &[f64],
    base: &[f64],
) -> Result<(f64, f64)> {
    let section = solution.section(params);
    let (point, jac) = section.jacobian(base)?;
    let (gv, dg) = factor.value_grad(&point)?;
    let form = system.chart.darboux_form(&point).rescaled(gv, &dg);
    let matrix = pullback_two_form(&form, &jac).amax();
    let scalar = geometry::conformal_condition(&system.unscaled(), factor, &point)?.abs();
    Ok((matrix, scalar))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompleteSolutionReport {
    pub samples: usize,
    pub min_abs_det: f64,
    /// First sample whose Jacobian is singular.
    pub singular_at: Option<(Vec<f64>, Vec<f64>)>,
    pub max_hje: f64,
    pub max_contact_matrix: f64,
    pub max_contact_scalar: f64,
    pub passed: bool,
}

/// Aggregate check over samples: nonsingular `JΣ`, each `σ_λ` solves the HJE,
/// and `X^Σ` is a contact field of `Σ*η′` with Hamiltonian `H′∘Σ`.
pub fn complete_solution_check(
    solution: &CompleteSolution,
    system: &ContactSystem,
    samples: &[(Vec<f64>, Vec<f64>)],
    tol: f64,
    det_threshold: f64,
) -> Result<CompleteSolutionReport> {
    let mut report = CompleteSolutionReport {
        samples: samples.len(),
        min_abs_det: f64::INFINITY,
        singular_at: None,
        max_hje: 0.0,
        max_contact_matrix: 0.0,
        max_contact_scalar: 0.0,
        passed: true,
    };
    for (base, params) in samples {
        let (point, jac) = solution.family.jacobian(base, params)?;
        if !jac.is_square() {
            return Err(Error::Precondition(format!(
                "family Jacobian is {}x{}; needs n + 1 parameters",
                jac.nrows(),
                jac.ncols()
            )));
        }
        let det = jac.determinant().abs();
        report.min_abs_det = report.min_abs_det.min(det);
        let field = geometry::contact_field(system, &point)?;
        let lifted = if det > det_threshold {
            linalg::solve(&jac, &field).ok()
        } else {
            None
        };
        let Some(lifted) = lifted else {
            if report.singular_at.is_none() {
                report.singular_at = Some((base.clone(), params.clone()));
            }
            continue;
        };
        let hje = hje_residual(&solution.section(params), system, base)?;
        report.max_hje = report.max_hje.max(hje.amax());

        let eff = system.effective_at(&point)?;
        let xi = geometry::xi_of_h(system, &point)?;
        let two = pullback_two_form(&eff.form, &jac);
        let one = pullback_one_form(&eff.form, &jac);
        let dh = jac.transpose() * &eff.dh;
        let vector = two.transpose() * &lifted - (one.clone() * xi - dh);
        report.max_contact_matrix = report.max_contact_matrix.max(vector.amax());
        report.max_contact_scalar = report
            .max_contact_scalar
            .max((one.dot(&lifted) - eff.ham).abs());
    }
    report.passed = report.singular_at.is_none()
        && report.max_hje < tol
        && report.max_contact_matrix < tol
        && report.max_contact_scalar < tol;
    Ok(report)
}

/// Settings for inverting `Σ` along the fiber.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonSettings {
    pub max_iter: usize,
    pub step_tol: f64,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        Self {
            max_iter: 50,
            step_tol: 1e-12,
        }
    }
}

fn fiber_residual(
    family: &dyn SolutionFamily,
    base: &[f64],
    params: &[f64],
    target: &[f64],
    fiber: &[usize],
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let (point, jac) = family.jacobian(base, params)?;
    let base_dim = family.base_dim();
    let k = family.param_dim();
    let r = DVector::from_iterator(fiber.len(), fiber.iter().map(|&i| point[i] - target[i]));
    let mut jl = DMatrix::zeros(fiber.len(), k);
    for (row, &i) in fiber.iter().enumerate() {
        for pc in 0..k {
            jl[(row, pc)] = jac[(i, base_dim + pc)];
        }
    }
    Ok((r, jl))
}

/// `F = p_Λ∘Σ⁻¹`: the parameters `λ` with `Σ(Π(m), λ) = m`, by damped Newton.
/// Without a guess, the best point of a coarse grid over the parameter box is used.
pub fn first_integrals_from_solution(
    solution: &CompleteSolution,
    point: &[f64],
    guess: Option<&[f64]>,
    settings: NewtonSettings,
) -> Result<Vec<f64>> {
    let family = solution.family.as_ref();
    let fibration = family.fibration();
    let base = fibration.project(point);
    let fiber = fibration.fiber();
    let norm = |r: &DVector<f64>| r.norm();
    let mut params = match guess {
        Some(given) => given.to_vec(),
        None => grid_guess(solution, &base, point, &fiber),
    };
    let (mut r, mut jl) = fiber_residual(family, &base, &params, point, &fiber)?;
    for _ in 0..settings.max_iter {
        if norm(&r) == 0.0 {
            return Ok(params);
        }
        let step = linalg::solve(&jl, &(-&r))?;
        let mut scale = 1.0;
        loop {
            let trial: Vec<f64> = params
                .iter()
                .zip(step.iter())
                .map(|(value, delta)| value + scale * delta)
                .collect();
            if let Ok((tr, tj)) = fiber_residual(family, &base, &trial, point, &fiber) {
                if norm(&tr) < norm(&r) || scale < 1e-6 {
                    params = trial;
                    r = tr;
                    jl = tj;
                    break;
                }
            }
            scale *= 0.5;
            if scale < 1e-10 {
                return Err(Error::Convergence(format!(
                    "inversion line search failed, residual {:.3e}",
                    norm(&r)
                )));
            }
        }
        let size = params
            .iter()
            .fold(1.0f64, |acc, param| acc.max(param.abs()));
        if scale * step.norm() < settings.step_tol * size {
            return Ok(params);
        }
    }
    Err(Error::Convergence(format!(
        "inversion did not converge in {} iterations, residual {:.3e}",
        settings.max_iter,
        norm(&r)
    )))
}

fn grid_guess(
    solution: &CompleteSolution,
    base: &[f64],
    target: &[f64],
    fiber: &[usize],
) -> Vec<f64> {
    let k = solution.param_box.dim();
    let per_axis: usize = match k {
        0 => return Vec::new(),
        1 => 33,
        2 => 9,
        3 => 5,
        _ => return solution.param_box.center(),
    };
    let bx = &solution.param_box;
    let mut best = (f64::INFINITY, bx.center());
    let total = per_axis.pow(k as u32);
    for idx in 0..total {
        let mut rem = idx;
        let params: Vec<f64> = (0..k)
            .map(|axis| {
                let i = rem % per_axis;
                rem /= per_axis;
                let frac = (i as f64 + 0.5) / per_axis as f64;
                bx.lower[axis] + frac * (bx.upper[axis] - bx.lower[axis])
            })
            .collect();
        if let Ok(point) = solution.family.eval(base, &params) {
            let r: f64 = fiber.iter().map(|&i| (point[i] - target[i]).powi(2)).sum();
            if r < best.0 {
                best = (r, params);
            }
        }
    }
    best.1
}

/// `F_*` at `Σ(p, λ)`: the parameter rows of `JΣ⁻¹`.
pub fn first_integrals_differential(
    solution: &CompleteSolution,
    base: &[f64],
    params: &[f64],
) -> Result<DMatrix<f64>> {
    let (_, jac) = solution.family.jacobian(base, params)?;
    let d = jac.nrows();
    let base_dim = solution.family.base_dim();
    let k = solution.family.param_dim();
    let mut out = DMatrix::zeros(k, d);
    for col_idx in 0..d {
        let mut unit = DVector::zeros(d);
        unit[col_idx] = 1.0;
        let col = linalg::solve(&jac, &unit)?;
        for r in 0..k {
            out[(r, col_idx)] = col[base_dim + r];
        }
    }
    Ok(out)
}

/// `max |F_*·(σ_λ)_*·v|` over base basis vectors `v`.
pub fn kernel_image_residual(
    solution: &CompleteSolution,
    base: &[f64],
    params: &[f64],
) -> Result<f64> {
    let differential = first_integrals_differential(solution, base, params)?;
    let (_, jac) = solution.section(params).jacobian(base)?;
    Ok((differential * jac).amax())
}

/// `max |dη|` restricted to an orthonormal basis of `Ker F_*` at `Σ(p, λ)`.
pub fn leaf_isotropy_residual(
    solution: &CompleteSolution,
    base: &[f64],
    params: &[f64],
) -> Result<f64> {
    let differential = first_integrals_differential(solution, base, params)?;
    let leaf = linalg::nullspace(&differential);
    let point = solution.family.eval(base, params)?;
    let form = darboux_for(solution.family.as_ref()).darboux_form(&point);
    Ok((leaf.transpose() * &form.omega * &leaf).amax())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::ConstantField;
    use crate::geometry::shared;

    fn reeb_system(chart: &DarbouxChart) -> ContactSystem {
        ContactSystem::new(
            chart.clone(),
            shared(ConstantField {
                dim: chart.dim(),
                value: 1.0,
            }),
        )
        .unwrap()
    }

    fn reeb_solution() -> (DarbouxChart, CompleteSolution) {
        let chart = DarbouxChart::new(1).unwrap();
        let fib = Fibration::coordinates(&chart, vec![1, 2]).unwrap();
        let fam = ExprFamily::new(&chart, fib, vec!["l".into()], &["l"]).unwrap();
        let sol = CompleteSolution::new(
            Arc::new(fam),
            BoxDomain::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap(),
            BoxDomain::new(vec![-1.0], vec![1.0]).unwrap(),
        )
        .unwrap();
        (chart, sol)
    }

    #[test]
    fn projections_and_fibers() {
        let chart = DarbouxChart::new(2).unwrap();
        let x_fib = Fibration::x_projection(&chart);
        assert_eq!(x_fib.retained(), &[0, 1]);
        assert_eq!(x_fib.fiber(), vec![2, 3, 4]);
        let xz = Fibration::xz_projection(&chart);
        assert_eq!(xz.retained(), &[0, 1, 4]);
        assert_eq!(xz.project(&[1.0, 2.0, 3.0, 4.0, 5.0]), vec![1.0, 2.0, 5.0]);
        assert!(DarbouxChart::new(0).is_err());
    }

    #[test]
    fn preisotropy_of_coordinate_projections() {
        let chart = DarbouxChart::new(1).unwrap();
        let sys = reeb_system(&chart);
        let point = [0.3, 0.7, -0.2];
        let xz =
            fibration_condition(&Fibration::xz_projection(&chart), &sys, &point, None).unwrap();
        assert!(xz.preisotropy);
        let x_fib =
            fibration_condition(&Fibration::x_projection(&chart), &sys, &point, None).unwrap();
        assert!(x_fib.preisotropy);
        assert_eq!(x_fib.coisotropy_of_section, None);
    }

    #[test]
    fn reeb_flow_solution_is_pseudo_isotropic() {
        let (chart, sol) = reeb_solution();
        let sys = reeb_system(&chart);
        for lambda in [-0.5, 0.0, 0.9] {
            assert_eq!(
                pseudo_isotropy_residual(&sol, &[lambda], &[0.3, -0.4]).unwrap(),
                0.0
            );
            let r = hje_residual(&sol.section(&[lambda]), &sys, &[0.3, -0.4]).unwrap();
            assert_eq!(r.amax(), 0.0);
        }
        let samples = vec![(vec![0.1, 0.2], vec![0.3]), (vec![-0.5, 0.9], vec![-0.7])];
        let rep = complete_solution_check(&sol, &sys, &samples, 1e-9, 1e-10).unwrap();
        assert!(rep.passed, "{rep:?}");
    }

    #[test]
    fn zero_hamiltonian_makes_every_section_a_solution() {
        let chart = DarbouxChart::new(1).unwrap();
        let sys = ContactSystem::new(chart.clone(), shared(ConstantField { dim: 3, value: 0.0 }))
            .unwrap();
        let fib = Fibration::x_projection(&chart);
        let fam = ExprFamily::new(&chart, fib, vec![], &["sin(x1)", "x1^3"]).unwrap();
        let sec = Section {
            family: Arc::new(fam),
            params: vec![],
        };
        assert_eq!(hje_residual(&sec, &sys, &[0.4]).unwrap().amax(), 0.0);
    }

    #[test]
    fn duplicated_parameter_is_singular() {
        let chart = DarbouxChart::new(1).unwrap();
        let sys = reeb_system(&chart);
        let fib = Fibration::x_projection(&chart);
        let fam = ExprFamily::new(
            &chart,
            fib,
            vec!["a".into(), "b".into()],
            &["a + b", "a + b"],
        )
        .unwrap();
        let sol = CompleteSolution::new(
            Arc::new(fam),
            BoxDomain::new(vec![-1.0], vec![1.0]).unwrap(),
            BoxDomain::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap(),
        )
        .unwrap();
        let rep = complete_solution_check(&sol, &sys, &[(vec![0.2], vec![0.1, 0.3])], 1e-9, 1e-10)
            .unwrap();
        assert!(!rep.passed);
        assert!(rep.singular_at.is_some());
    }

    #[test]
    fn inversion_recovers_parameters() {
        let (_, sol) = reeb_solution();
        let point = sol.family.eval(&[0.2, 0.5], &[0.37]).unwrap();
        let integrals =
            first_integrals_from_solution(&sol, &point, None, NewtonSettings::default()).unwrap();
        assert!((integrals[0] - 0.37).abs() < 1e-12);
        assert!(kernel_image_residual(&sol, &[0.2, 0.5], &[0.37]).unwrap() < 1e-14);
    }
}
