//! Systems with `ξ(H) ≠ 0`: the invariant level set `M₀ = H⁻¹(0)` is
//! integrated by a single quadrature, the open set `M₁ = {H ≠ 0}` through the
//! `η/H` rescaling, and the interior of `{ξ(H) = 0}` by the plain pipeline.

use std::collections::HashMap;
use std::sync::Mutex;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, ContactSystem};
use crate::hje::{self, BoxDomain, CompleteSolution, NewtonSettings};
use crate::linalg;
use crate::quad::{self, QuadSettings};
use crate::reconstruct::{self, GMode, ReconstructConfig};
use crate::refint::{Trajectory, TrajectoryMeta};

/// `|H∘Σ|` allowed on a restriction to `M₀`.
pub const MEMBERSHIP_TOL: f64 = 1e-10;

/// Parametrisation of `M₀` by `(x, y)`, with `z = ζ(x, y)` solving `H = 0`.
#[derive(Debug)]
pub struct LevelSetChart {
    system: ContactSystem,
    domain: BoxDomain,
    z_guess: f64,
    cache: Mutex<HashMap<Vec<u64>, f64>>,
}

impl Clone for LevelSetChart {
    fn clone(&self) -> Self {
        Self {
            system: self.system.clone(),
            domain: self.domain.clone(),
            z_guess: self.z_guess,
            cache: Mutex::new(HashMap::new()),
        }
    }
}

/// Check `∂H/∂z` on samples of the `(x, y)` box and return the chart.
pub fn build_level_chart(
    system: &ContactSystem,
    domain: BoxDomain,
    z_guess: f64,
    samples: usize,
    seed: u64,
) -> Result<LevelSetChart> {
    let system = system.unscaled();
    if domain.dim() != 2 * system.chart.n() {
        return Err(Error::Precondition(
            "level chart box must cover (x, y)".into(),
        ));
    }
    let chart = LevelSetChart {
        system,
        domain,
        z_guess,
        cache: Mutex::new(HashMap::new()),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probes = vec![chart.domain.center()];
    probes.extend((0..samples).map(|_| chart.domain.sample(&mut rng)));
    let mut sign = 0.0;
    for xy in &probes {
        let hz = chart.h_z(&chart.embed_with(xy, chart.z_guess))?;
        if hz.abs() < 1e-12 {
            return Err(Error::Precondition(
                "∂H/∂z vanishes on the box; ξ(H) = 0 there and H⁻¹(0) has no z-chart".into(),
            ));
        }
        let z_val = chart.zeta(xy)?;
        let hz = chart.h_z(&chart.embed_with(xy, z_val))?;
        if hz.abs() < 1e-12 {
            return Err(Error::Precondition("∂H/∂z vanishes on H⁻¹(0)".into()));
        }
        if sign != 0.0 && hz.signum() != sign {
            return Err(Error::Precondition("∂H/∂z changes sign in the box".into()));
        }
        sign = hz.signum();
    }
    Ok(chart)
}

impl LevelSetChart {
    pub fn system(&self) -> &ContactSystem {
        &self.system
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    fn embed_with(&self, xy: &[f64], z_val: f64) -> Vec<f64> {
        let mut coords = xy.to_vec();
        coords.push(z_val);
        coords
    }

    fn h_z(&self, point: &[f64]) -> Result<f64> {
        let (_, dh) = self.system.hamiltonian.value_grad(point)?;
        Ok(dh[self.system.chart.z_index()])
    }

    /// `ζ(x, y)` by damped scalar Newton from the configured guess.
    pub fn zeta(&self, xy: &[f64]) -> Result<f64> {
        let key: Vec<u64> = xy.iter().map(|v| v.to_bits()).collect();
        if let Some(z_val) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(*z_val);
        }
        let zi = self.system.chart.z_index();
        let mut z_val = self.z_guess;
        let mut converged = false;
        for _ in 0..100 {
            let (ham, dh) = self
                .system
                .hamiltonian
                .value_grad(&self.embed_with(xy, z_val))?;
            if ham.abs() < 1e-14 {
                converged = true;
                break;
            }
            if dh[zi] == 0.0 {
                return Err(Error::Convergence(
                    "∂H/∂z = 0 during the level-set solve".into(),
                ));
            }
            let step = -ham / dh[zi];
            let mut scale = 1.0;
            loop {
                let trial = z_val + scale * step;
                if let Ok(ht) = self.system.hamiltonian.value(&self.embed_with(xy, trial)) {
                    if ht.abs() < ham.abs() {
                        z_val = trial;
                        break;
                    }
                }
                scale *= 0.5;
                if scale < 1e-10 {
                    break;
                }
            }
            if scale < 1e-10 || (scale * step).abs() <= 1e-15 * (1.0 + z_val.abs()) {
                converged = self
                    .system
                    .hamiltonian
                    .value(&self.embed_with(xy, z_val))?
                    .abs()
                    < 1e-12;
                break;
            }
        }
        if !converged {
            return Err(Error::Convergence(format!(
                "level-set Newton diverged at {xy:?}"
            )));
        }
        self.cache.lock().expect("cache lock").insert(key, z_val);
        Ok(z_val)
    }

    /// The phase point `(x, y, ζ(x, y))`.
    pub fn embed(&self, xy: &[f64]) -> Result<Vec<f64>> {
        Ok(self.embed_with(xy, self.zeta(xy)?))
    }

    /// Rank of `dη` pulled back to the chart; `2n` means `M₀` is symplectic there.
    pub fn symplectic_rank(&self, xy: &[f64]) -> Result<usize> {
        let point = self.embed(xy)?;
        let (_, dh) = self.system.hamiltonian.value_grad(&point)?;
        let d = xy.len();
        let hz = dh[self.system.chart.z_index()];
        let mut jac = DMatrix::zeros(d + 1, d);
        for i in 0..d {
            jac[(i, i)] = 1.0;
            jac[(d, i)] = -dh[i] / hz;
        }
        let form = self.system.chart.darboux_form(&point);
        Ok(linalg::rank(&hje::pullback_two_form(&form, &jac)))
    }
}

/// An affine slice `λ = offset + B·μ` of the parameter space, with `μ` in a box.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSlice {
    pub offset: Vec<f64>,
    pub basis: DMatrix<f64>,
    pub free_box: BoxDomain,
}

impl ParamSlice {
    pub fn new(offset: Vec<f64>, basis: DMatrix<f64>, free_box: BoxDomain) -> Result<Self> {
        if basis.nrows() != offset.len() || basis.ncols() != free_box.dim() {
            return Err(Error::Precondition(
                "parameter slice dimensions disagree".into(),
            ));
        }
        Ok(Self {
            offset,
            basis,
            free_box,
        })
    }

    /// Fix some coordinates of `λ` and leave the rest free, in order.
    pub fn fixing(k: usize, fixed: &[(usize, f64)], free_box: BoxDomain) -> Result<Self> {
        let mut offset = vec![0.0; k];
        let mut free = Vec::new();
        for (i, slot) in offset.iter_mut().enumerate() {
            match fixed.iter().find(|(j, _)| *j == i) {
                Some((_, v)) => *slot = *v,
                None => free.push(i),
            }
        }
        let mut basis = DMatrix::zeros(k, free.len());
        for (col, &i) in free.iter().enumerate() {
            basis[(i, col)] = 1.0;
        }
        Self::new(offset, basis, free_box)
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn embed(&self, mu: &[f64]) -> Vec<f64> {
        let lifted =
            DVector::from_column_slice(&self.offset) + &self.basis * DVector::from_column_slice(mu);
        lifted.as_slice().to_vec()
    }

    /// Least-squares `μ` for a given `λ`, with the distance of `λ` from the slice.
    pub fn project(&self, params: &[f64]) -> Result<(Vec<f64>, f64)> {
        let rhs = DVector::from_column_slice(params) - DVector::from_column_slice(&self.offset);
        let mu = self
            .basis
            .clone()
            .svd(true, true)
            .solve(&rhs, 1e-12)
            .map_err(|err| Error::Singular(err.to_string()))?;
        let miss = (&self.basis * &mu - rhs).amax();
        Ok((mu.as_slice().to_vec(), miss))
    }
}

/// `Σ₀ = Σ(·, offset + B·)`, verified to land in `M₀` and to be isotropic.
#[derive(Debug, Clone)]
pub struct RestrictedSolution {
    pub parent: CompleteSolution,
    pub slice: ParamSlice,
    pub base_box: BoxDomain,
    system: ContactSystem,
    /// Largest `|H∘Σ₀|` over the samples.
    pub membership_residual: f64,
    /// Largest `|(σ₀λ)*η₀|` over the samples.
    pub isotropy_residual: f64,
    /// Largest `|(σ₀λ)*dη₀|`, the symplectic-sense isotropy.
    pub symplectic_isotropy_residual: f64,
}

struct RestrictedLocal {
    point: Vec<f64>,
    alpha: DVector<f64>,
    two: DMatrix<f64>,
}

pub fn restrict_solution(
    solution: &CompleteSolution,
    chart: &LevelSetChart,
    slice: ParamSlice,
    samples: usize,
    seed: u64,
    isotropy_tol: f64,
) -> Result<RestrictedSolution> {
    if slice.offset.len() != solution.family.param_dim() {
        return Err(Error::Precondition(
            "parameter slice has the wrong dimension".into(),
        ));
    }
    let mut restricted = RestrictedSolution {
        parent: solution.clone(),
        base_box: solution.base_box.clone(),
        slice,
        system: chart.system().clone(),
        membership_residual: 0.0,
        isotropy_residual: 0.0,
        symplectic_isotropy_residual: 0.0,
    };
    let base_dim = solution.family.base_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let base_pt = restricted.base_box.sample(&mut rng);
        let mu = restricted.slice.free_box.sample(&mut rng);
        let local = restricted.local(&base_pt, &mu)?;
        let ham = restricted.system.hamiltonian.value(&local.point)?;
        restricted.membership_residual = restricted.membership_residual.max(ham.abs());
        restricted.isotropy_residual = restricted
            .isotropy_residual
            .max(local.alpha.rows(0, base_dim).amax());
        restricted.symplectic_isotropy_residual = restricted
            .symplectic_isotropy_residual
            .max(local.two.view((0, 0), (base_dim, base_dim)).amax());
    }
    if restricted.membership_residual > MEMBERSHIP_TOL {
        return Err(Error::Precondition(format!(
            "Σ does not restrict to H⁻¹(0) on the declared slice (|H∘Σ| up to {:.3e})",
            restricted.membership_residual
        )));
    }
    if restricted.isotropy_residual > isotropy_tol {
        return Err(Error::Precondition(format!(
            "restriction is not isotropic (residual {:.3e})",
            restricted.isotropy_residual
        )));
    }
    Ok(restricted)
}

impl RestrictedSolution {
    pub fn base_dim(&self) -> usize {
        self.parent.family.base_dim()
    }

    pub fn param_dim(&self) -> usize {
        self.slice.dim()
    }

    pub fn system(&self) -> &ContactSystem {
        &self.system
    }

    /// `Σ₀(p, μ)`.
    pub fn eval(&self, base: &[f64], mu: &[f64]) -> Result<Vec<f64>> {
        self.parent.family.eval(base, &self.slice.embed(mu))
    }

    fn local(&self, base: &[f64], mu: &[f64]) -> Result<RestrictedLocal> {
        let base_dim = self.base_dim();
        let k = self.parent.family.param_dim();
        let (point, jac) = self.parent.family.jacobian(base, &self.slice.embed(mu))?;
        let mut j0 = DMatrix::zeros(jac.nrows(), base_dim + self.param_dim());
        j0.columns_mut(0, base_dim)
            .copy_from(&jac.columns(0, base_dim));
        j0.columns_mut(base_dim, self.param_dim())
            .copy_from(&(jac.columns(base_dim, k) * &self.slice.basis));
        let form = self.system.chart.darboux_form(&point);
        Ok(RestrictedLocal {
            alpha: hje::pullback_one_form(&form, &j0),
            two: hje::pullback_two_form(&form, &j0),
            point,
        })
    }
}

/// `⟨φ̂(p, μ), v⟩ = −(Σ₀*η₀)(p, μ)(0, v)`.
#[derive(Debug, Clone)]
pub struct PhiHat {
    pub restricted: RestrictedSolution,
}

/// Assemble `φ̂` and check it is an immersion (rank `dim N₀`) at sampled points.
pub fn build_phi_hat(restricted: &RestrictedSolution, samples: usize, seed: u64) -> Result<PhiHat> {
    let phi_hat = PhiHat {
        restricted: restricted.clone(),
    };
    let base_dim = restricted.base_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let base_pt = restricted.base_box.sample(&mut rng);
        let mu = restricted.slice.free_box.sample(&mut rng);
        let rank = linalg::rank(&phi_hat.jacobian(&base_pt, &mu)?);
        if rank < base_dim {
            return Err(Error::Precondition(format!(
                "φ̂ is not an immersion at p = {base_pt:?}, μ = {mu:?} (rank {rank} < {base_dim})"
            )));
        }
    }
    Ok(phi_hat)
}

impl PhiHat {
    pub fn eval(&self, base: &[f64], mu: &[f64]) -> Result<DVector<f64>> {
        let base_dim = self.restricted.base_dim();
        let local = self.restricted.local(base, mu)?;
        Ok(-local
            .alpha
            .rows(base_dim, self.restricted.param_dim())
            .into_owned())
    }

    /// `∂φ̂_j/∂p_i = dα(e_{λj}, e_{pi})`, valid because `α` vanishes on base directions.
    pub fn jacobian(&self, base: &[f64], mu: &[f64]) -> Result<DMatrix<f64>> {
        let base_dim = self.restricted.base_dim();
        let k = self.restricted.param_dim();
        let local = self.restricted.local(base, mu)?;
        Ok(local.two.view((base_dim, 0), (k, base_dim)).into_owned())
    }
}

/// `ς = ξ(H)∘Σ₀`.
pub fn varsigma(restricted: &RestrictedSolution, base: &[f64], mu: &[f64]) -> Result<f64> {
    geometry::xi_of_h(&restricted.system, &restricted.eval(base, mu)?)
}

/// Rows of `jac` forming a chart: greedy Gram–Schmidt on the largest remaining row.
fn pivot_rows(jac: &DMatrix<f64>) -> Result<Vec<usize>> {
    let ncols = jac.ncols();
    let mut rows: Vec<DVector<f64>> = (0..jac.nrows()).map(|r| jac.row(r).transpose()).collect();
    let scale = rows.iter().map(|r| r.norm()).fold(0.0, f64::max);
    let mut chosen = Vec::new();
    for _ in 0..ncols {
        let (best, norm) = rows
            .iter()
            .enumerate()
            .filter(|(i, _)| !chosen.contains(i))
            .map(|(i, r)| (i, r.norm()))
            .fold(
                (usize::MAX, 0.0),
                |acc, cand| if cand.1 > acc.1 { cand } else { acc },
            );
        if best == usize::MAX || norm <= linalg::RANK_THRESHOLD * scale.max(1e-300) {
            return Err(Error::Precondition(
                "no chart among the φ̂ components".into(),
            ));
        }
        let unit = &rows[best] / norm;
        for r in rows.iter_mut() {
            let overlap = r.dot(&unit);
            *r -= &unit * overlap;
        }
        chosen.push(best);
    }
    Ok(chosen)
}

/// Output of the `M₀` quadrature, with the chart data used.
#[derive(Debug, Clone)]
pub struct M0Solution {
    pub trajectory: Trajectory,
    pub base_path: Vec<Vec<f64>>,
    /// Indices of the `φ̂` components used as the chart `ψ`; the first is the reference.
    pub chart_rows: Vec<usize>,
    pub psi: Vec<Vec<f64>>,
}

struct Chart<'a> {
    phi_hat: &'a PhiHat,
    mu: &'a [f64],
    rows: Vec<usize>,
    /// `c_i = ψ_i(0)/ψ₁(0)`, with `c₁ = 1`.
    ratios: Vec<f64>,
}

impl Chart<'_> {
    fn psi(&self, base: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let v = self.phi_hat.eval(base, self.mu)?;
        let j = self.phi_hat.jacobian(base, self.mu)?;
        Ok((
            DVector::from_iterator(self.rows.len(), self.rows.iter().map(|&r| v[r])),
            j.select_rows(self.rows.iter()),
        ))
    }

    /// `ψ⁻¹(x, c₂x, …)` by Newton from `guess`.
    fn invert(&self, psi1: f64, guess: &[f64]) -> Result<Vec<f64>> {
        let target = DVector::from_iterator(
            self.ratios.len(),
            self.ratios.iter().map(|ratio| ratio * psi1),
        );
        let mut base_pt = guess.to_vec();
        for _ in 0..50 {
            let (v, j) = self.psi(&base_pt)?;
            let r = v - &target;
            if r.amax() <= 1e-14 * (1.0 + target.amax()) {
                return Ok(base_pt);
            }
            let step = linalg::solve(&j, &(-r))?;
            for (coord, delta) in base_pt.iter_mut().zip(step.iter()) {
                *coord += delta;
            }
            if step.amax() <= 1e-15 * (1.0 + base_pt.iter().fold(0.0f64, |acc, v| acc.max(v.abs())))
            {
                return Ok(base_pt);
            }
        }
        Err(Error::Convergence(format!(
            "chart inversion failed at ψ₁ = {psi1}"
        )))
    }

    /// `F(x) = ς(ψ⁻¹(x, c₂x, …))·x` and the preimage.
    fn rate(&self, psi1: f64, guess: &[f64]) -> Result<(f64, Vec<f64>)> {
        let base_pt = self.invert(psi1, guess)?;
        Ok((
            varsigma(&self.phi_hat.restricted, &base_pt, self.mu)? * psi1,
            base_pt,
        ))
    }
}

/// Integrate `X_H` on `M₀` from the base point `start` by the proportional
/// reduction `ψ_i = c_i ψ₁`, `ψ̇₁ = F(ψ₁)`, inverting `t = ∫ dψ/F(ψ)` step by step.
pub fn integrate_on_m0(
    phi_hat: &PhiHat,
    mu: &[f64],
    start: &[f64],
    times: &[f64],
) -> Result<M0Solution> {
    let restricted = &phi_hat.restricted;
    let base_dim = restricted.base_dim();
    if restricted.param_dim() < base_dim {
        return Err(Error::Precondition(
            "fewer free parameters than base dimensions; φ̂ cannot be a chart".into(),
        ));
    }
    let jac = phi_hat.jacobian(start, mu)?;
    if linalg::rank(&jac) < base_dim {
        return Err(Error::Precondition(
            "φ̂ is not an immersion at the start".into(),
        ));
    }
    let value = phi_hat.eval(start, mu)?;
    let mut rows = pivot_rows(&jac)?;
    let point0 = restricted.eval(start, mu)?;
    let scale = value.amax().max(1.0);
    // Re-pivot: the reference component is the largest selected one.
    let lead = (0..rows.len())
        .max_by(|&lhs, &rhs| value[rows[lhs]].abs().total_cmp(&value[rows[rhs]].abs()))
        .expect("m ≥ 1");
    rows.swap(0, lead);
    let psi0: Vec<f64> = rows.iter().map(|&r| value[r]).collect();
    if psi0[0].abs() <= 1e-14 * scale {
        // ψ(0) = 0 is a fixed point of the reduced system.
        let n = times.len();
        return Ok(M0Solution {
            trajectory: Trajectory::new(
                times.to_vec(),
                vec![point0; n],
                TrajectoryMeta {
                    method: "m0-stationary".into(),
                    residuals: vec![0.0; n],
                },
            )?,
            base_path: vec![start.to_vec(); n],
            chart_rows: rows,
            psi: vec![psi0; n],
        });
    }
    let chart = Chart {
        phi_hat,
        mu,
        ratios: psi0.iter().map(|v| v / psi0[0]).collect(),
        rows,
    };
    let quad = QuadSettings {
        tol: 1e-13,
        ..QuadSettings::default()
    };
    let (f0, _) = chart.rate(psi0[0], start)?;
    if f0 == 0.0 {
        return Err(Error::Precondition("ς vanishes at the start".into()));
    }
    let sign = f0.signum();

    let mut psi1 = psi0[0];
    let mut base = start.to_vec();
    let mut base_path = vec![base.clone()];
    let mut points = vec![point0];
    let mut psi = vec![psi0];
    let mut residuals = vec![0.0];
    for pair in times.windows(2) {
        let dt = pair[1] - pair[0];
        let (f_prev, _) = chart.rate(psi1, &base)?;
        // Exponential guess from the local rate ς = F/x.
        let mut next = psi1 * (f_prev / psi1 * dt).exp();
        let mut residual = f64::INFINITY;
        for _ in 0..30 {
            let from = psi1;
            let anchor = base.clone();
            let mut warm = anchor.clone();
            let elapsed = quad::integrate_scalar(
                |level| {
                    let (rate, base_pt) = chart
                        .rate(level, &warm)
                        .or_else(|_| chart.rate(level, &anchor))?;
                    if rate.signum() != sign || rate.abs() < 1e-300 {
                        return Err(Error::Convergence(format!(
                            "F changes sign inside the integration range (near ψ₁ = {level})"
                        )));
                    }
                    warm = base_pt;
                    Ok(1.0 / rate)
                },
                from,
                next,
                quad,
            )?;
            residual = elapsed - dt;
            let (f_next, _) = chart.rate(next, &base)?;
            if f_next.signum() != sign {
                return Err(Error::Convergence(
                    "F changes sign inside the integration range".into(),
                ));
            }
            let step = -residual * f_next;
            next += step;
            if step.abs() <= 1e-15 * next.abs().max(1e-300)
                || residual.abs() < 1e-14 * dt.abs().max(1.0)
            {
                break;
            }
        }
        if residual.abs() > 1e-10 {
            return Err(Error::Convergence(format!(
                "time quadrature inversion failed near t = {} (residual {residual:.3e})",
                pair[1]
            )));
        }
        psi1 = next;
        base = chart.invert(psi1, &base)?;
        points.push(restricted.eval(&base, mu)?);
        psi.push(chart.psi(&base)?.0.as_slice().to_vec());
        base_path.push(base.clone());
        residuals.push(residual.abs());
    }
    Ok(M0Solution {
        trajectory: Trajectory::new(
            times.to_vec(),
            points,
            TrajectoryMeta {
                method: "m0-quadrature".into(),
                residuals,
            },
        )?,
        base_path,
        chart_rows: chart.rows,
        psi,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    /// `H = 0`, `ξ(H) ≠ 0`.
    M0,
    /// `H ≠ 0`, `ξ(H) ≠ 0`.
    M1,
    /// Interior of `{ξ(H) = 0}`.
    M2,
}

#[derive(Debug, Clone)]
pub struct SplitConfig {
    /// `|H|` below this is `M₀`.
    pub h_tol: f64,
    /// `|∂H/∂z|` below this counts as `ξ(H) = 0`.
    pub xi_tol: f64,
    /// Radius of the neighbourhood probed for the `M₂` interior test.
    pub neighbourhood: f64,
    /// The declared restriction `Λ̂` used on `M₀`.
    pub m0_slice: Option<ParamSlice>,
    /// `(x, y)` box of the level chart; defaults to a box of half-width 0.5 around the start.
    pub level_box: Option<BoxDomain>,
    pub reconstruct: ReconstructConfig,
    pub newton: NewtonSettings,
    pub param_guess: Option<Vec<f64>>,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            h_tol: 1e-9,
            xi_tol: 1e-9,
            neighbourhood: 1e-3,
            m0_slice: None,
            level_box: None,
            reconstruct: ReconstructConfig::default(),
            newton: NewtonSettings::default(),
            param_guess: None,
        }
    }
}

const AMBIGUITY_FACTOR: f64 = 1e3;

/// Classify a start point. Values within a factor of 1e3 above a tolerance are
/// reported as ambiguous rather than guessed.
pub fn classify(system: &ContactSystem, point: &[f64], config: &SplitConfig) -> Result<Region> {
    let system = system.unscaled();
    let zi = system.chart.z_index();
    let hz_at = |probe: &[f64]| -> Result<f64> { Ok(system.hamiltonian.value_grad(probe)?.1[zi]) };
    let (ham, dh) = system.hamiltonian.value_grad(point)?;
    let hz = dh[zi].abs();
    if hz < config.xi_tol {
        let d = point.len();
        let r = config.neighbourhood;
        let mut probes = Vec::new();
        for i in 0..d {
            for offset in [-r, r] {
                let mut probe = point.to_vec();
                probe[i] += offset;
                probes.push(probe);
            }
        }
        for offset in [-r, r] {
            probes.push(
                point
                    .iter()
                    .map(|v| v + offset / (d as f64).sqrt())
                    .collect(),
            );
        }
        for probe in &probes {
            if hz_at(probe)?.abs() >= config.xi_tol {
                return Err(Error::Precondition(
                    "start lies on the boundary of the region where ξ(H) = 0; \
                     such points must be studied separately"
                        .into(),
                ));
            }
        }
        return Ok(Region::M2);
    }
    if hz < AMBIGUITY_FACTOR * config.xi_tol {
        return Err(Error::Precondition(format!(
            "ambiguous classification: |ξ(H)| = {hz:.3e} is within the tolerance band"
        )));
    }
    if ham.abs() < config.h_tol {
        Ok(Region::M0)
    } else if ham.abs() < AMBIGUITY_FACTOR * config.h_tol {
        Err(Error::Precondition(format!(
            "ambiguous classification: |H| = {:.3e} is within the tolerance band",
            ham.abs()
        )))
    } else {
        Ok(Region::M1)
    }
}

#[derive(Debug, Clone)]
pub struct SplitOutcome {
    pub region: Region,
    pub params: Vec<f64>,
    pub trajectory: Trajectory,
}

/// Classify the start phase point and integrate it with the matching pipeline.
pub fn split_and_integrate(
    system: &ContactSystem,
    solution: &CompleteSolution,
    start: &[f64],
    times: &[f64],
    config: &SplitConfig,
) -> Result<SplitOutcome> {
    let region = classify(system, start, config)?;
    let params = hje::first_integrals_from_solution(
        solution,
        start,
        config.param_guess.as_deref(),
        config.newton,
    )?;
    let base = solution.family.fibration().project(start);
    let recon = ReconstructConfig {
        check_params: Some(params.clone()),
        ..config.reconstruct.clone()
    };
    let trajectory = match region {
        Region::M0 => {
            let slice = config.m0_slice.clone().ok_or_else(|| {
                Error::Precondition(
                    "start is on H⁻¹(0) but no restriction of Σ was declared".into(),
                )
            })?;
            let (mu, miss) = slice.project(&params)?;
            if miss > 1e-8 {
                return Err(Error::Precondition(format!(
                    "start parameters {params:?} lie off the declared restriction"
                )));
            }
            let level_box = match &config.level_box {
                Some(b) => b.clone(),
                None => {
                    let xy = &start[..start.len() - 1];
                    BoxDomain::new(
                        xy.iter().map(|v| v - 0.5).collect(),
                        xy.iter().map(|v| v + 0.5).collect(),
                    )?
                }
            };
            let z0 = start[start.len() - 1];
            let chart = build_level_chart(system, level_box, z0, recon.samples, recon.seed)?;
            let restricted = restrict_solution(
                solution,
                &chart,
                slice,
                recon.samples,
                recon.seed,
                recon.precondition_tol,
            )?;
            let phi_hat = build_phi_hat(&restricted, recon.samples, recon.seed)?;
            integrate_on_m0(&phi_hat, &mu, &base, times)?.trajectory
        }
        Region::M1 => reconstruct::reconstruct_rescaled(
            system,
            solution,
            &GMode::ReciprocalH,
            &params,
            &base,
            times,
            recon,
        )?,
        Region::M2 => {
            let tables = reconstruct::build_tables(solution, system, recon)?;
            reconstruct::reconstruct_trajectory(&tables, &params, &base, times)?
        }
    };
    Ok(SplitOutcome {
        region,
        params,
        trajectory,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::geometry::{shared, DarbouxChart};
    use crate::hje::{ExprFamily, Fibration};
    use crate::refint;
    use std::sync::Arc;

    fn system(ham: &str) -> ContactSystem {
        let chart = DarbouxChart::new(1).unwrap();
        let ham = Expr::parse(ham, chart.names()).unwrap();
        ContactSystem::new(chart, shared(ham)).unwrap()
    }

    // Σ(y; λ1, λ2) = (λ1, y, λ2) over the y-fibration; λ2 = 0 lands in {z = 0}.
    fn y_family(components: [&str; 2]) -> CompleteSolution {
        let chart = DarbouxChart::new(1).unwrap();
        let fib = Fibration::coordinates(&chart, vec![1]).unwrap();
        let fam =
            ExprFamily::new(&chart, fib, vec!["l1".into(), "l2".into()], &components).unwrap();
        CompleteSolution::new(
            Arc::new(fam),
            BoxDomain::new(vec![0.2], vec![2.0]).unwrap(),
            BoxDomain::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap(),
        )
        .unwrap()
    }

    fn slice() -> ParamSlice {
        ParamSlice::fixing(
            2,
            &[(1, 0.0)],
            BoxDomain::new(vec![-1.0], vec![1.0]).unwrap(),
        )
        .unwrap()
    }

    fn unit_box() -> BoxDomain {
        BoxDomain::new(vec![-1.0, 0.1], vec![1.0, 2.0]).unwrap()
    }

    #[test]
    fn level_chart_solves_linear_level() {
        let chart = build_level_chart(&system("z - x1"), unit_box(), 0.0, 20, 1).unwrap();
        assert!((chart.zeta(&[0.3, 0.9]).unwrap() - 0.3).abs() < 1e-14);
        assert_eq!(chart.symplectic_rank(&[0.3, 0.9]).unwrap(), 2);
    }

    #[test]
    fn level_chart_rejects_z_free_hamiltonian() {
        assert!(matches!(
            build_level_chart(&system("x1 + y1"), unit_box(), 0.0, 5, 1),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            build_level_chart(&system("z*x1"), unit_box(), 0.0, 20, 1),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn constant_rate_is_exponential() {
        let sys = system("0.7*z");
        let sol = y_family(["l1", "l2"]);
        let chart = build_level_chart(&sys, unit_box(), 0.0, 10, 3).unwrap();
        let restricted = restrict_solution(&sol, &chart, slice(), 20, 3, 1e-10).unwrap();
        assert_eq!(restricted.isotropy_residual, 0.0);
        assert!((varsigma(&restricted, &[0.5], &[0.2]).unwrap() - 0.7).abs() < 1e-15);
        let phi_hat = build_phi_hat(&restricted, 20, 3).unwrap();
        assert!((phi_hat.eval(&[0.5], &[0.2]).unwrap()[0] + 0.5).abs() < 1e-15);
        let times: Vec<f64> = (0..=20).map(|i| i as f64 * 0.05).collect();
        let out = integrate_on_m0(&phi_hat, &[0.2], &[0.5], &times).unwrap();
        for (time, point) in times.iter().zip(&out.trajectory.points) {
            assert!(
                (point[1] - 0.5 * (0.7 * time).exp()).abs() < 1e-10,
                "{time} {point:?}"
            );
            assert!((point[0] - 0.2).abs() < 1e-15 && point[2] == 0.0);
        }
    }

    #[test]
    fn varying_rate_matches_rk4() {
        // ẏ = y·e^y on z = 0, with ς = e^y.
        let sys = system("z*exp(y1)");
        let sol = y_family(["l1", "l2"]);
        let chart = build_level_chart(&sys, unit_box(), 0.0, 10, 3).unwrap();
        let restricted = restrict_solution(&sol, &chart, slice(), 20, 3, 1e-10).unwrap();
        let phi_hat = build_phi_hat(&restricted, 20, 3).unwrap();
        let times = refint::time_grid(0.5, 0.01).unwrap();
        let out = integrate_on_m0(&phi_hat, &[0.1], &[0.4], &times).unwrap();
        let rk = refint::rk4_on_grid(&sys, &[0.1, 0.4, 0.0], &times).unwrap();
        let cmp = refint::compare(&out.trajectory, &rk).unwrap();
        assert!(cmp.max_abs < 1e-8, "{cmp:?}");
    }

    #[test]
    fn degenerate_phi_hat_is_flagged() {
        let sys = system("0.7*z");
        // σ₀λ independent of λ: φ̂ ≡ 0.
        let sol = y_family(["0", "l2"]);
        let chart = build_level_chart(&sys, unit_box(), 0.0, 10, 3).unwrap();
        let restricted = restrict_solution(&sol, &chart, slice(), 20, 3, 1e-10).unwrap();
        assert!(build_phi_hat(&restricted, 10, 3).is_err());
    }

    #[test]
    fn membership_violation_is_reported() {
        let sys = system("0.7*z");
        let sol = y_family(["l1", "l2"]);
        let chart = build_level_chart(&sys, unit_box(), 0.0, 10, 3).unwrap();
        let off = ParamSlice::fixing(
            2,
            &[(1, 0.3)],
            BoxDomain::new(vec![-1.0], vec![1.0]).unwrap(),
        )
        .unwrap();
        assert!(matches!(
            restrict_solution(&sol, &chart, off, 10, 3, 1e-10),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn classification_regions() {
        let config = SplitConfig::default();
        let sys = system("0.7*z + x1");
        assert_eq!(
            classify(&sys, &[0.0, 0.3, 0.0], &config).unwrap(),
            Region::M0
        );
        assert_eq!(
            classify(&sys, &[1.0, 0.3, 0.0], &config).unwrap(),
            Region::M1
        );
        assert!(classify(&sys, &[1e-8, 0.3, 0.0], &config).is_err());
        assert_eq!(
            classify(&system("y1 + x1"), &[0.1, 0.2, 0.3], &config).unwrap(),
            Region::M2
        );
        let err = classify(&system("y1 + z^2/2"), &[0.1, 0.2, 0.0], &config).unwrap_err();
        assert!(err.to_string().contains("must be studied separately"));
    }

    #[test]
    fn split_dispatches_m0() {
        let sys = system("0.7*z");
        let sol = y_family(["l1", "l2"]);
        let config = SplitConfig {
            m0_slice: Some(slice()),
            ..SplitConfig::default()
        };
        let times: Vec<f64> = (0..=10).map(|i| i as f64 * 0.05).collect();
        let out = split_and_integrate(&sys, &sol, &[0.2, 0.5, 0.0], &times, &config).unwrap();
        assert_eq!(out.region, Region::M0);
        let last = out.trajectory.last();
        assert!((last[1] - 0.5 * (0.35f64).exp()).abs() < 1e-10);
    }
}
