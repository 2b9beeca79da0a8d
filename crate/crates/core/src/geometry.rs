//! Contact geometry in a single Darboux chart with coordinates
//! `(x¹..xⁿ, y₁..yₙ, z)` and form `η = yᵢdxⁱ + dz`, optionally rescaled by a
//! conformal factor `g` to `η′ = gη`.
//!
//! Two-forms are stored as antisymmetric matrices `Ω` with
//! `dθ(U, V) = Uᵀ Ω V`, i.e. `Ω[a][b] = ∂ₐθ_b − ∂_bθₐ`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::expr::{ScalarField, SharedField};
use crate::linalg;

#[derive(Debug, Clone, PartialEq)]
pub struct DarbouxChart {
    n: usize,
    names: Vec<String>,
}

impl DarbouxChart {
    /// Chart with default coordinate names `x1..xn, y1..yn, z`.
    pub fn new(n: usize) -> Result<Self> {
        let names = (1..=n)
            .map(|i| format!("x{i}"))
            .chain((1..=n).map(|i| format!("y{i}")))
            .chain(std::iter::once("z".to_string()))
            .collect();
        Self::with_names(n, names)
    }

    pub fn with_names(n: usize, names: Vec<String>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Precondition("Darboux chart needs n >= 1".into()));
        }
        if names.len() != 2 * n + 1 {
            return Err(Error::Precondition(format!(
                "expected {} coordinate names, got {}",
                2 * n + 1,
                names.len()
            )));
        }
        Ok(Self { n, names })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Phase-space dimension `2n + 1`.
    pub fn dim(&self) -> usize {
        2 * self.n + 1
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn x_index(&self, i: usize) -> usize {
        i
    }

    pub fn y_index(&self, i: usize) -> usize {
        self.n + i
    }

    pub fn z_index(&self) -> usize {
        2 * self.n
    }

    /// The Darboux form and its exterior derivative at a point.
    pub fn darboux_form(&self, point: &[f64]) -> FormData {
        let d = self.dim();
        let mut theta = DVector::zeros(d);
        let mut omega = DMatrix::zeros(d, d);
        for i in 0..self.n {
            theta[self.x_index(i)] = point[self.y_index(i)];
            omega[(self.y_index(i), self.x_index(i))] = 1.0;
            omega[(self.x_index(i), self.y_index(i))] = -1.0;
        }
        theta[self.z_index()] = 1.0;
        FormData { theta, omega }
    }
}

/// A point of phase space split into its Darboux blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    pub x_block: Vec<f64>,
    pub y_block: Vec<f64>,
    pub z_value: f64,
}

impl PhasePoint {
    pub fn from_slice(n: usize, coords: &[f64]) -> Result<Self> {
        if coords.len() != 2 * n + 1 {
            return Err(Error::Precondition(format!(
                "phase point needs {} coordinates, got {}",
                2 * n + 1,
                coords.len()
            )));
        }
        if coords.iter().any(|coeff| !coeff.is_finite()) {
            return Err(Error::Precondition(
                "phase point has non-finite entries".into(),
            ));
        }
        Ok(Self {
            x_block: coords[..n].to_vec(),
            y_block: coords[n..2 * n].to_vec(),
            z_value: coords[2 * n],
        })
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut coords_out = self.x_block.clone();
        coords_out.extend_from_slice(&self.y_block);
        coords_out.push(self.z_value);
        coords_out
    }
}

/// A 1-form `θ` and its derivative matrix `Ω` at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct FormData {
    pub theta: DVector<f64>,
    pub omega: DMatrix<f64>,
}

impl FormData {
    /// Data of `g·θ` given `g` and `dg` at the same point.
    pub fn rescaled(&self, factor: f64, dg: &[f64]) -> FormData {
        let d = self.theta.len();
        let dg = DVector::from_column_slice(dg);
        let omega = DMatrix::from_fn(d, d, |row, col| {
            dg[row] * self.theta[col] - dg[col] * self.theta[row] + factor * self.omega[(row, col)]
        });
        FormData {
            theta: &self.theta * factor,
            omega,
        }
    }

    /// Evaluate `dθ(u, v)`.
    pub fn two_form(&self, lhs: &DVector<f64>, rhs: &DVector<f64>) -> f64 {
        lhs.dot(&(&self.omega * rhs))
    }

    /// Reeb field: `i_ξ dθ = 0`, `θ(ξ) = 1`.
    pub fn reeb(&self) -> Result<DVector<f64>> {
        let d = self.theta.len();
        let mut rhs = DVector::zeros(d + 1);
        rhs[d] = 1.0;
        Ok(self.bordered_solve(&rhs)?.rows(0, d).into_owned())
    }

    /// Contact Hamiltonian field of `h`:
    /// `i_X dθ = −dh + ξ(h)θ`, `θ(X) = h`. Also returns `ξ(h)`.
    pub fn hamiltonian_field(&self, ham: f64, dh: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
        let d = self.theta.len();
        let mut rhs = DVector::zeros(d + 1);
        rhs.rows_mut(0, d).copy_from(&(-dh));
        rhs[d] = ham;
        let sol = self.bordered_solve(&rhs)?;
        Ok((sol.rows(0, d).into_owned(), -sol[d]))
    }

    /// Solve `[[Ωᵀ, θ], [θᵀ, 0]]·(X, μ) = rhs`; nonsingular exactly where θ is contact.
    fn bordered_solve(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        let d = self.theta.len();
        let mut matrix = DMatrix::zeros(d + 1, d + 1);
        matrix
            .view_mut((0, 0), (d, d))
            .copy_from(&self.omega.transpose());
        for row in 0..d {
            matrix[(row, d)] = self.theta[row];
            matrix[(d, row)] = self.theta[row];
        }
        linalg::solve(&matrix, rhs).map_err(|err| match err {
            Error::Singular(msg) => Error::Singular(format!("contact condition violated ({msg})")),
            other => other,
        })
    }

    /// Coefficient of `(dθ)ⁿ∧θ`, normalised so the Darboux form gives 1.
    pub fn volume_coefficient(&self) -> f64 {
        let d = self.theta.len();
        let bordered = |theta: &DVector<f64>, omega: &DMatrix<f64>| {
            let mut matrix = DMatrix::zeros(d + 1, d + 1);
            matrix.view_mut((0, 0), (d, d)).copy_from(omega);
            for row in 0..d {
                matrix[(row, d)] = theta[row];
                matrix[(d, row)] = -theta[row];
            }
            linalg::pfaffian(&matrix)
        };
        let n = (d - 1) / 2;
        let reference = DarbouxChart::new(n.max(1))
            .map(|coeff| {
                let form = coeff.darboux_form(&vec![0.0; d]);
                bordered(&form.theta, &form.omega)
            })
            .unwrap_or(1.0);
        bordered(&self.theta, &self.omega) / reference
    }
}

/// A 1-form given by coefficient fields over the chart coordinates.
#[derive(Debug, Clone)]
pub struct OneForm {
    pub coefficients: Vec<SharedField>,
}

impl OneForm {
    pub fn at(&self, point: &[f64]) -> Result<FormData> {
        let d = self.coefficients.len();
        let mut theta = DVector::zeros(d);
        let mut jac = DMatrix::zeros(d, d);
        for (col, coeff) in self.coefficients.iter().enumerate() {
            let (value, grad) = coeff.value_grad(point)?;
            theta[col] = value;
            for row in 0..d {
                jac[(row, col)] = grad[row];
            }
        }
        let omega = &jac - jac.transpose();
        Ok(FormData { theta, omega })
    }
}

/// `(dη)ⁿ∧η` coefficient of an arbitrary 1-form; nonzero iff it is contact at the point.
pub fn contact_condition_residual(form: &OneForm, point: &[f64]) -> Result<f64> {
    Ok(form.at(point)?.volume_coefficient())
}

/// Effective contact data at a point: form `η′ = gη` and Hamiltonian `H′ = gH`.
#[derive(Debug, Clone)]
pub struct EffectiveData {
    pub form: FormData,
    pub ham: f64,
    pub dh: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct ContactSystem {
    pub chart: DarbouxChart,
    pub hamiltonian: SharedField,
    /// Conformal factor `g`; `None` means `g ≡ 1`.
    pub conformal: Option<SharedField>,
}

impl ContactSystem {
    pub fn new(chart: DarbouxChart, hamiltonian: SharedField) -> Result<Self> {
        if hamiltonian.dim() != chart.dim() {
            return Err(Error::Precondition(format!(
                "Hamiltonian is defined on {} coordinates, chart has {}",
                hamiltonian.dim(),
                chart.dim()
            )));
        }
        Ok(Self {
            chart,
            hamiltonian,
            conformal: None,
        })
    }

    pub fn with_conformal(mut self, factor: SharedField) -> Result<Self> {
        if factor.dim() != self.chart.dim() {
            return Err(Error::Precondition(
                "conformal factor has wrong dimension".into(),
            ));
        }
        self.conformal = Some(factor);
        Ok(self)
    }

    /// Same chart and Hamiltonian with the plain Darboux form.
    pub fn unscaled(&self) -> Self {
        Self {
            chart: self.chart.clone(),
            hamiltonian: self.hamiltonian.clone(),
            conformal: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.chart.dim()
    }

    fn conformal_at(&self, point: &[f64]) -> Result<Option<(f64, Vec<f64>)>> {
        match &self.conformal {
            None => Ok(None),
            Some(factor) => {
                let (v, dg) = factor.value_grad(point)?;
                if v == 0.0 {
                    return Err(Error::Precondition("conformal factor vanishes".into()));
                }
                Ok(Some((v, dg)))
            }
        }
    }

    /// The effective form `η′ = gη` at a point.
    pub fn form_at(&self, point: &[f64]) -> Result<FormData> {
        let base = self.chart.darboux_form(point);
        Ok(match self.conformal_at(point)? {
            None => base,
            Some((factor, dg)) => base.rescaled(factor, &dg),
        })
    }

    pub fn effective_at(&self, point: &[f64]) -> Result<EffectiveData> {
        let base = self.chart.darboux_form(point);
        let (ham, dh) = self.hamiltonian.value_grad(point)?;
        Ok(match self.conformal_at(point)? {
            None => EffectiveData {
                form: base,
                ham,
                dh: DVector::from_vec(dh),
            },
            Some((factor, dg)) => EffectiveData {
                form: base.rescaled(factor, &dg),
                ham: factor * ham,
                dh: DVector::from_iterator(
                    dh.len(),
                    dh.iter()
                        .zip(&dg)
                        .map(|(dh_i, dg_i)| factor * dh_i + ham * dg_i),
                ),
            },
        })
    }
}

/// Contact field of `H` for the Darboux form, componentwise.
fn darboux_contact_field(
    chart: &DarbouxChart,
    ham: f64,
    dh: &[f64],
    point: &[f64],
) -> DVector<f64> {
    let n = chart.n();
    let hz = dh[chart.z_index()];
    let mut v = DVector::zeros(chart.dim());
    let mut y_hy = 0.0;
    for i in 0..n {
        let y_val = point[chart.y_index(i)];
        let hy = dh[chart.y_index(i)];
        v[chart.x_index(i)] = hy;
        v[chart.y_index(i)] = y_val * hz - dh[chart.x_index(i)];
        y_hy += y_val * hy;
    }
    v[chart.z_index()] = ham - y_hy;
    v
}

/// Reeb field of the effective form.
pub fn reeb_field(system: &ContactSystem, point: &[f64]) -> Result<DVector<f64>> {
    if system.conformal.is_none() {
        let mut v = DVector::zeros(system.dim());
        v[system.chart.z_index()] = 1.0;
        return Ok(v);
    }
    system.form_at(point)?.reeb()
}

/// The contact Hamiltonian field `X_H`. For a conformal factor this is the
/// field of `gH` with respect to `gη`, which coincides with `X_H`.
pub fn contact_field(system: &ContactSystem, point: &[f64]) -> Result<DVector<f64>> {
    if system.conformal.is_none() {
        let (ham, dh) = system.hamiltonian.value_grad(point)?;
        return Ok(darboux_contact_field(&system.chart, ham, &dh, point));
    }
    let eff = system.effective_at(point)?;
    Ok(eff.form.hamiltonian_field(eff.ham, &eff.dh)?.0)
}

/// `ξ′(H′)`: `∂H/∂z` for `g ≡ 1`, otherwise `(X_H(g) + g·ξ(H))/g`.
pub fn xi_of_h(system: &ContactSystem, point: &[f64]) -> Result<f64> {
    let (ham, dh) = system.hamiltonian.value_grad(point)?;
    let hz = dh[system.chart.z_index()];
    let Some(factor) = &system.conformal else {
        return Ok(hz);
    };
    let (gv, dg) = factor.value_grad(point)?;
    if gv == 0.0 {
        return Err(Error::Precondition("conformal factor vanishes".into()));
    }
    let field = darboux_contact_field(&system.chart, ham, &dh, point);
    let xg: f64 = field.iter().zip(&dg).map(|(comp, dg_i)| comp * dg_i).sum();
    Ok((xg + gv * hz) / gv)
}

/// `X_H(g) + g·ξ(H)` for the unscaled system; zero when `g` turns `H` into a
/// Hamiltonian with `ξ′(H′) = 0`.
pub fn conformal_condition(
    system: &ContactSystem,
    factor: &dyn ScalarField,
    point: &[f64],
) -> Result<f64> {
    let (ham, dh) = system.hamiltonian.value_grad(point)?;
    let (gv, dg) = factor.value_grad(point)?;
    let field = darboux_contact_field(&system.chart, ham, &dh, point);
    let xg: f64 = field.iter().zip(&dg).map(|(comp, dg_i)| comp * dg_i).sum();
    Ok(xg + gv * dh[system.chart.z_index()])
}

/// Max-norm difference between the contact field of `(gη, gH)` and that of `(η, H)`.
pub fn conformal_covariance_residual(
    system: &ContactSystem,
    factor: SharedField,
    point: &[f64],
) -> Result<f64> {
    let plain = contact_field(&system.unscaled(), point)?;
    let scaled = contact_field(&system.unscaled().with_conformal(factor)?, point)?;
    Ok((scaled - plain).amax())
}

/// Residuals of the defining identities of `X_H` and `ξ′` at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityResiduals {
    /// `|η′(X) − H′|`
    pub contraction: f64,
    /// `max |i_X dη′ + dH′ − ξ′(H′)η′|` over the coordinate basis
    pub two_form: f64,
    /// `max |i_ξ′ dη′|`
    pub reeb_kernel: f64,
    /// `|η′(ξ′) − 1|`
    pub reeb_normalisation: f64,
    /// `|X(H′) − H′·ξ′(H′)|`
    pub energy: f64,
}

impl IdentityResiduals {
    pub fn max(&self) -> f64 {
        self.contraction
            .max(self.two_form)
            .max(self.reeb_kernel)
            .max(self.reeb_normalisation)
            .max(self.energy)
    }
}

pub fn identity_residuals(system: &ContactSystem, point: &[f64]) -> Result<IdentityResiduals> {
    let eff = system.effective_at(point)?;
    let field = contact_field(system, point)?;
    let reeb = reeb_field(system, point)?;
    let xi_h = eff.dh.dot(&reeb);
    let omega_t = eff.form.omega.transpose();
    let two_form = (&omega_t * &field + &eff.dh - &eff.form.theta * xi_h).amax();
    Ok(IdentityResiduals {
        contraction: (eff.form.theta.dot(&field) - eff.ham).abs(),
        two_form,
        reeb_kernel: (&omega_t * &reeb).amax(),
        reeb_normalisation: (eff.form.theta.dot(&reeb) - 1.0).abs(),
        energy: (eff.dh.dot(&field) - eff.ham * xi_h).abs(),
    })
}

/// Convenience: wrap any field as shared.
pub fn shared<F: ScalarField + 'static>(form: F) -> SharedField {
    Arc::new(form)
}
