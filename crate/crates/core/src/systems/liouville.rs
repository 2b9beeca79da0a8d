//! Contact structure induced on a hypersurface `S = {H = c}` of a symplectic
//! `ℝ^{2n+2}` by a Liouville field `Δ` (`L_Δω = ω`): `η = i_Δω` restricted to `S`.
//! The Reeb field of `η|_S` is compared with `−X_H/Δ(H)`, where `i_{X_H}ω = dH`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::geometry::FormData;
use crate::linalg;

#[derive(Debug, Clone)]
pub struct LiouvilleSpec {
    /// Ambient dimension is `2n + 2`.
    pub n: usize,
    /// Constant coefficients `ω(e_a, e_b)`.
    pub omega: DMatrix<f64>,
    /// Components of `Δ`.
    pub delta: Vec<Expr>,
    pub hamiltonian: Expr,
    /// The level `c` defining `S`.
    pub level: f64,
}

/// Ambient names `q1..q_{n+1}, p1..p_{n+1}`.
pub fn ambient_names(n: usize) -> Vec<String> {
    (1..=n + 1)
        .map(|i| format!("q{i}"))
        .chain((1..=n + 1).map(|i| format!("p{i}")))
        .collect()
}

/// `ω = Σ dq^i∧dp_i`, `Δ = ½(q∂_q + p∂_p)`, `H = |q|² + |p|²` on the sphere of `radius`.
pub fn sphere(n: usize, radius: f64) -> Result<LiouvilleSpec> {
    let names = ambient_names(n);
    let d = 2 * n + 2;
    let mut omega = DMatrix::zeros(d, d);
    for i in 0..=n {
        omega[(i, n + 1 + i)] = 1.0;
        omega[(n + 1 + i, i)] = -1.0;
    }
    let delta = names
        .iter()
        .map(|v| Expr::parse(&format!("0.5*{v}"), &names))
        .collect::<std::result::Result<_, _>>()?;
    let ham_text = names
        .iter()
        .map(|v| format!("{v}^2"))
        .collect::<Vec<_>>()
        .join(" + ");
    Ok(LiouvilleSpec {
        n,
        omega,
        delta,
        hamiltonian: Expr::parse(&ham_text, &names)?,
        level: radius * radius,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointCheck {
    /// Reeb field of `η|_S`, in ambient components.
    pub reeb: DVector<f64>,
    /// `X_H` with `i_{X_H}ω = dH`.
    pub x_h: DVector<f64>,
    pub delta_h: f64,
    /// `|ξ + X_H/Δ(H)|`.
    pub rhx: f64,
    /// `|L_Δω − ω|`.
    pub liouville: f64,
}

pub fn check_point(spec: &LiouvilleSpec, point: &[f64]) -> Result<PointCheck> {
    let d = 2 * spec.n + 2;
    if point.len() != d || spec.delta.len() != d || spec.omega.shape() != (d, d) {
        return Err(Error::Precondition(
            "Liouville data has inconsistent dimensions".into(),
        ));
    }
    let omega = &spec.omega;
    let mut delta = DVector::zeros(d);
    // jac[(c, a)] = ∂_aΔ^c
    let mut jac = DMatrix::zeros(d, d);
    for (comp, component) in spec.delta.iter().enumerate() {
        let (v, grad) = component.value_grad_slice(point)?;
        delta[comp] = v;
        for (coord, gv) in grad.into_iter().enumerate() {
            jac[(comp, coord)] = gv;
        }
    }
    // (L_Δω)_ab = ∂_aΔ^c ω_cb + ∂_bΔ^c ω_ac, which is also d(i_Δω) for constant ω.
    let lie = jac.transpose() * omega + omega * &jac;
    let liouville = (&lie - omega).amax();

    let (_, dh) = spec.hamiltonian.value_grad_slice(point)?;
    let dh = DVector::from_vec(dh);
    let delta_h = dh.dot(&delta);
    if delta_h.abs() < 1e-12 {
        return Err(Error::Precondition(
            "Δ(H) = 0: Δ is not transverse to S here".into(),
        ));
    }
    let x_h = linalg::solve(&omega.transpose(), &dh)?;

    let tangent = linalg::nullspace(&DMatrix::from_row_slice(1, d, dh.as_slice()));
    let theta = omega.transpose() * &delta;
    let restricted = FormData {
        theta: tangent.transpose() * theta,
        omega: tangent.transpose() * &lie * &tangent,
    };
    let reeb = &tangent * restricted.reeb()?;
    let rhx = (&reeb + &x_h / delta_h).amax();
    Ok(PointCheck {
        reeb,
        x_h,
        delta_h,
        rhx,
        liouville,
    })
}

/// A point of `S` along a random ray, by Newton on the radius (star-shaped `S`).
pub fn sample_point<R: Rng>(spec: &LiouvilleSpec, rng: &mut R) -> Result<Vec<f64>> {
    let d = 2 * spec.n + 2;
    let mut dir: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-3);
    dir.iter_mut().for_each(|v| *v /= norm);
    let mut scale = 1.0;
    for _ in 0..100 {
        let probe: Vec<f64> = dir.iter().map(|v| scale * v).collect();
        let (level_v, dh) = spec.hamiltonian.value_grad_slice(&probe)?;
        let r = level_v - spec.level;
        if r.abs() <= 1e-15 * spec.level.abs().max(1.0) {
            return Ok(probe);
        }
        let slope: f64 = dh.iter().zip(&dir).map(|(lhs, rhs)| lhs * rhs).sum();
        if slope == 0.0 {
            break;
        }
        let step = r / slope;
        scale -= step;
        if step.abs() <= 1e-16 * scale.abs() {
            return Ok(dir.iter().map(|v| scale * v).collect());
        }
    }
    Err(Error::Convergence(
        "could not place a sample on the level set".into(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiouvilleReport {
    pub points: usize,
    pub max_liouville: f64,
    pub max_rhx: f64,
    /// `max |ξ + X_H|`; zero on the unit sphere with this sign convention.
    pub max_reeb_vs_neg_xh: f64,
    /// `max |ξ − X_H|`, for reference.
    pub max_reeb_vs_xh: f64,
}

pub fn liouville_restriction_check(
    spec: &LiouvilleSpec,
    points: &[Vec<f64>],
) -> Result<LiouvilleReport> {
    let mut report = LiouvilleReport {
        points: points.len(),
        max_liouville: 0.0,
        max_rhx: 0.0,
        max_reeb_vs_neg_xh: 0.0,
        max_reeb_vs_xh: 0.0,
    };
    for point in points {
        let check = check_point(spec, point)?;
        report.max_liouville = report.max_liouville.max(check.liouville);
        report.max_rhx = report.max_rhx.max(check.rhx);
        report.max_reeb_vs_neg_xh = report
            .max_reeb_vs_neg_xh
            .max((&check.reeb + &check.x_h).amax());
        report.max_reeb_vs_xh = report.max_reeb_vs_xh.max((&check.reeb - &check.x_h).amax());
    }
    Ok(report)
}

/// Seeded samples on `S` followed by the check.
pub fn sampled_check(spec: &LiouvilleSpec, count: usize, seed: u64) -> Result<LiouvilleReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..count)
        .map(|_| sample_point(spec, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    liouville_restriction_check(spec, &points)
}
