//! Task orchestration: build the system named by a config, run its tasks in
//! order and collect a report.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::biiso::{self, ParamSlice, Region, SplitConfig};
use crate::error::{Error, Result};
use crate::expr::{Expr, ReciprocalField, SharedField};
use crate::geometry::{shared, ContactSystem, DarbouxChart};
use crate::hje::{self, BoxDomain, CompleteSolution, ExprFamily, Fibration, NewtonSettings};
use crate::quad::QuadSettings;
use crate::reconstruct::{self, GMode, ReconstructConfig};
use crate::refint::{self, Trajectory};
use crate::systems::{liouville, oscillator, thermo};

use super::config::{Family, FibrationSpec, NamedTask, RunConfig, TaskKind};
use super::export;

/// Samples of `H` closer to zero than this are left out of the `1/H` isotropy check.
const RECIPROCAL_H_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Error,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskReport {
    pub name: String,
    pub kind: &'static str,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    pub residuals: BTreeMap<String, f64>,
    pub artifacts: Vec<PathBuf>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub seed: u64,
    pub family: Family,
    pub tasks: Vec<TaskReport>,
    pub seconds: f64,
}

impl RunReport {
    /// 0 when every task passed, 3 on any runtime error, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.tasks.iter().any(|task| task.status == Status::Error) {
            3
        } else if self.tasks.iter().all(|task| task.status == Status::Pass) {
            0
        } else {
            1
        }
    }
}

/// A system together with what the tasks need from it.
pub enum Model {
    Thermo(Box<thermo::ThermoModel>),
    Oscillator(oscillator::OscillatorModel),
    Liouville {
        spec: liouville::LiouvilleSpec,
        points: usize,
    },
    Raw {
        system: ContactSystem,
        conformal: Option<SharedField>,
        solution: Option<CompleteSolution>,
    },
}

impl Model {
    /// Build the model; every failure here reflects the configuration.
    pub fn build(config: &RunConfig) -> Result<Self> {
        let sys = &config.system;
        let samples = config.solution.samples;
        Ok(match sys.family {
            Family::Thermo => {
                let mut spec = match &sys.spec {
                    Some(spec) => spec.clone(),
                    None => thermo::instance(sys.n.unwrap_or(2), sys.a0.unwrap_or(0.0)),
                };
                let sol = &config.solution;
                if let (Some(lo), Some(hi)) = (&sol.base_lower, &sol.base_upper) {
                    (spec.base_lower, spec.base_upper) = (lo.clone(), hi.clone());
                }
                if let (Some(lo), Some(hi)) = (&sol.param_lower, &sol.param_upper) {
                    (spec.param_lower, spec.param_upper) = (lo.clone(), hi.clone());
                }
                Model::Thermo(Box::new(thermo::thermo_system(
                    &spec,
                    samples,
                    config.seed,
                )?))
            }
            Family::DampedOscillator => {
                let mut spec = oscillator::OscillatorSpec::default();
                if let Some(alpha) = sys.alpha {
                    spec.alpha = alpha;
                }
                if let Some(anchor) = sys.anchor {
                    spec.anchor = anchor;
                }
                spec.sector = sys.sector;
                let sol = &config.solution;
                if let (Some(lo), Some(hi)) = (&sol.base_lower, &sol.base_upper) {
                    (spec.base_lower, spec.base_upper) = (lo[0], hi[0]);
                }
                if let (Some(lo), Some(hi)) = (&sol.param_lower, &sol.param_upper) {
                    spec.param_lower = [lo[0], lo[1]];
                    spec.param_upper = [hi[0], hi[1]];
                }
                Model::Oscillator(oscillator::damped_oscillator(&spec)?)
            }
            Family::LiouvilleSphere => Model::Liouville {
                spec: liouville::sphere(sys.n.unwrap_or(1), sys.radius.unwrap_or(1.0))?,
                points: sys.points.unwrap_or(100),
            },
            Family::Raw => {
                let n = sys.n.unwrap_or(0);
                let chart = DarbouxChart::new(n)?;
                let ham_text = sys
                    .hamiltonian
                    .as_deref()
                    .ok_or_else(|| Error::Config("system.H required".into()))?;
                let system = ContactSystem::new(
                    chart.clone(),
                    shared(Expr::parse(ham_text, chart.names())?),
                )?;
                let conformal = match &sys.conformal {
                    Some(factor) => Some(shared(Expr::parse(factor, chart.names())?)),
                    None => None,
                };
                let sol = &config.solution;
                let solution = match &sol.fibration {
                    None => None,
                    Some(fib) => {
                        let fibration = match fib {
                            FibrationSpec::Kind(k) if k == "x" => Fibration::x_projection(&chart),
                            FibrationSpec::Kind(k) if k == "xz" => {
                                Fibration::xz_projection(&chart)
                            }
                            FibrationSpec::Kind(k) => {
                                return Err(Error::Config(format!(
                                    "solution.fibration: unknown kind '{k}' (use \"x\", \"xz\" or a list of coordinates)"
                                )))
                            }
                            FibrationSpec::Coordinates(names) => {
                                let retained = names
                                    .iter()
                                    .map(|name| {
                                        chart.names().iter().position(|coord| coord == name).ok_or_else(
                                            || {
                                                Error::Config(format!(
                                                    "solution.fibration: unknown coordinate '{name}'"
                                                ))
                                            },
                                        )
                                    })
                                    .collect::<Result<Vec<_>>>()?;
                                Fibration::coordinates(&chart, retained)?
                            }
                        };
                        let components: Vec<&str> =
                            sol.components.iter().map(String::as_str).collect();
                        let family =
                            ExprFamily::new(&chart, fibration, sol.params.clone(), &components)?;
                        let boxed = |lo: &Option<Vec<f64>>, hi: &Option<Vec<f64>>| {
                            BoxDomain::new(
                                lo.clone().unwrap_or_default(),
                                hi.clone().unwrap_or_default(),
                            )
                        };
                        Some(CompleteSolution::new(
                            Arc::new(family),
                            boxed(&sol.base_lower, &sol.base_upper)?,
                            boxed(&sol.param_lower, &sol.param_upper)?,
                        )?)
                    }
                };
                Model::Raw {
                    system,
                    conformal,
                    solution,
                }
            }
        })
    }

    /// The system whose contact field RK4 integrates.
    fn dynamics(&self) -> Result<&ContactSystem> {
        match self {
            Model::Thermo(model) => Ok(&model.system),
            Model::Oscillator(model) => Ok(&model.system),
            Model::Raw { system, .. } => Ok(system),
            Model::Liouville { .. } => Err(unsupported("trajectories")),
        }
    }

    fn solution(&self) -> Result<&CompleteSolution> {
        match self {
            Model::Thermo(model) => Ok(&model.solution),
            Model::Oscillator(model) => Ok(&model.solution),
            Model::Raw {
                solution: Some(sol),
                ..
            } => Ok(sol),
            Model::Raw { solution: None, .. } => Err(Error::Config(
                "solution block required for this task".into(),
            )),
            Model::Liouville { .. } => Err(unsupported("complete solutions")),
        }
    }

    /// Conformal factor used by verification and reconstruction, if any.
    fn conformal(&self) -> Option<GMode> {
        match self {
            Model::Thermo(model) if model.spec.a0 != 0.0 => {
                Some(GMode::Explicit(model.conformal.clone()))
            }
            Model::Thermo(_) => None,
            Model::Oscillator(_) => Some(GMode::ReciprocalH),
            Model::Raw { conformal, .. } => conformal.clone().map(GMode::Explicit),
            Model::Liouville { .. } => None,
        }
    }
}

fn unsupported(what: &str) -> Error {
    Error::Config(format!("liouville_sphere does not provide {what}"))
}

struct Outcome {
    status: Status,
    residuals: BTreeMap<String, f64>,
    artifacts: Vec<PathBuf>,
    message: Option<String>,
    trajectory: Option<Trajectory>,
}

impl Outcome {
    fn new() -> Self {
        Self {
            status: Status::Pass,
            residuals: BTreeMap::new(),
            artifacts: Vec::new(),
            message: None,
            trajectory: None,
        }
    }

    /// Record a residual and fail the task when it reaches `tol`.
    fn bounded(&mut self, key: &str, value: f64, tol: f64) {
        self.residuals.insert(key.into(), value);
        if !(value < tol) {
            self.status = Status::Fail;
            let note = format!("{key} = {value:.3e} exceeds {tol:.1e}");
            self.message = Some(match self.message.take() {
                Some(model) => format!("{model}; {note}"),
                None => note,
            });
        }
    }

    fn info(&mut self, key: &str, value: f64) {
        self.residuals.insert(key.into(), value);
    }
}

struct Runner<'a> {
    config: &'a RunConfig,
    model: &'a Model,
    out_dir: &'a Path,
}

impl Runner<'_> {
    fn reconstruct_config(&self) -> ReconstructConfig {
        let tol = &self.config.tolerances;
        ReconstructConfig {
            quad: QuadSettings {
                tol: tol.quadrature,
                ..QuadSettings::default()
            },
            solver_tol: tol.solver,
            precondition_tol: tol.verify,
            samples: self.config.solution.samples,
            seed: self.config.seed,
            ..ReconstructConfig::default()
        }
    }

    fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.config.seed)
    }

    fn write(&self, name: &str, tr: &Trajectory, out: &mut Outcome) -> Result<()> {
        let format = self.config.output.format;
        let path = self.out_dir.join(format!("{name}.{}", format.extension()));
        export::export_trajectory(tr, &path, format)?;
        out.artifacts.push(path);
        Ok(())
    }

    fn verify(&self) -> Result<Outcome> {
        let tol = self.config.tolerances.verify;
        let mut out = Outcome::new();
        if let Model::Liouville { spec, points } = self.model {
            let report = liouville::sampled_check(spec, *points, self.config.seed)?;
            out.bounded("rhx", report.max_rhx, tol);
            out.bounded("liouville", report.max_liouville, tol);
            out.info("reeb_plus_xh", report.max_reeb_vs_neg_xh);
            out.info("reeb_minus_xh", report.max_reeb_vs_xh);
            return Ok(out);
        }
        let solution = self.model.solution()?;
        let system = self.model.dynamics()?;
        let samples = solution.sample_points(self.config.solution.samples, &mut self.rng());
        let check = hje::complete_solution_check(solution, system, &samples, tol, 1e-10)?;
        out.info("min_abs_det", check.min_abs_det);
        if let Some((base, params)) = &check.singular_at {
            out.status = Status::Fail;
            out.message = Some(format!("Σ is singular at base {base:?}, λ {params:?}"));
        }
        out.bounded("hje", check.max_hje, tol);
        out.bounded("contact_lift", check.max_contact_matrix, tol);
        out.bounded("contact_lift_scalar", check.max_contact_scalar, tol);
        let (mut isotropy, mut condition) = (0.0f64, 0.0f64);
        let reciprocal: Option<SharedField> = match self.model.conformal() {
            Some(GMode::Explicit(factor)) => Some(factor),
            Some(GMode::ReciprocalH) => Some(Arc::new(ReciprocalField(system.hamiltonian.clone()))),
            None => None,
        };
        for (base, params) in &samples {
            match &reciprocal {
                Some(factor) => {
                    if matches!(self.model, Model::Oscillator(_)) {
                        let point = solution.family.eval(base, params)?;
                        if system.hamiltonian.value(&point)?.abs() < RECIPROCAL_H_FLOOR {
                            continue;
                        }
                    }
                    let (model, condition_here) = hje::g_pseudo_isotropy_residual(
                        solution,
                        system,
                        factor.as_ref(),
                        params,
                        base,
                    )?;
                    isotropy = isotropy.max(model);
                    condition = condition.max(condition_here);
                }
                None => {
                    isotropy = isotropy.max(hje::pseudo_isotropy_residual(solution, params, base)?);
                }
            }
        }
        out.bounded("pseudo_isotropy", isotropy, tol);
        if reciprocal.is_some() {
            out.bounded("conformal_condition", condition, tol);
        }
        Ok(out)
    }

    fn reconstruct(&self, task: &NamedTask) -> Result<Outcome> {
        let spec = &task.spec;
        let (params, start) = (
            spec.params.clone().unwrap_or_default(),
            spec.start.clone().unwrap_or_default(),
        );
        let times = refint::time_grid(spec.t_end, spec.step)?;
        let solution = self.model.solution()?;
        let system = self.model.dynamics()?;
        let mut out = Outcome::new();
        let tr = match self.model.conformal() {
            Some(mode) => reconstruct::reconstruct_rescaled(
                system,
                solution,
                &mode,
                &params,
                &start,
                &times,
                self.reconstruct_config(),
            )?,
            None => {
                let tables =
                    reconstruct::build_tables(solution, system, self.reconstruct_config())?;
                out.info("pseudo_isotropy", tables.isotropy_residual);
                out.info("h_constancy", tables.h_constancy);
                out.info("h", tables.reduced_hamiltonian(&params)?);
                reconstruct::reconstruct_trajectory(&tables, &params, &start, &times)?
            }
        };
        out.info(
            "max_solver_residual",
            tr.meta.residuals.iter().cloned().fold(0.0, f64::max),
        );
        self.write(&task.name, &tr, &mut out)?;
        out.trajectory = Some(tr);
        Ok(out)
    }

    fn integrate(&self, task: &NamedTask) -> Result<Outcome> {
        let spec = &task.spec;
        let start = spec.start.clone().unwrap_or_default();
        let times = refint::time_grid(spec.t_end, spec.step)?;
        let solution = self.model.solution()?;
        let system = self.model.dynamics()?;
        let tol = &self.config.tolerances;
        let mut split = SplitConfig {
            h_tol: tol.classification,
            xi_tol: tol.classification,
            reconstruct: self.reconstruct_config(),
            ..SplitConfig::default()
        };
        if let Model::Oscillator(model) = self.model {
            let lambda1 = BoxDomain::new(
                vec![model.spec.param_lower[0]],
                vec![model.spec.param_upper[0]],
            )?;
            split.m0_slice = Some(ParamSlice::fixing(2, &[(1, 0.0)], lambda1)?);
            if start.len() == 3 {
                split.level_box = Some(BoxDomain::new(
                    vec![model.spec.base_lower, start[1] - 2.0],
                    vec![model.spec.base_upper, start[1] + 2.0],
                )?);
            }
        }
        let result = biiso::split_and_integrate(system, solution, &start, &times, &split)?;
        let mut out = Outcome::new();
        out.info(
            "region",
            match result.region {
                Region::M0 => 0.0,
                Region::M1 => 1.0,
                Region::M2 => 2.0,
            },
        );
        out.message = Some(format!("start classified as {:?}", result.region));
        if let (Model::Oscillator(model), Region::M0) = (self.model, result.region) {
            // ∂/∂λ₁(φ²) decays like e^{−αt} on H⁻¹(0).
            let lambda1 = result.params[0];
            let alpha = model.spec.alpha;
            let first = model.family.phi_sq_lambda_derivative(start[0], lambda1)?;
            let mut law = 0.0f64;
            for (time, point) in result
                .trajectory
                .times
                .iter()
                .zip(&result.trajectory.points)
            {
                let expect = first * (-alpha * time).exp();
                let got = model.family.phi_sq_lambda_derivative(point[0], lambda1)?;
                law = law.max(((got - expect) / expect).abs());
            }
            out.bounded("exponential_law", law, tol.law);
        }
        self.write(&task.name, &result.trajectory, &mut out)?;
        out.trajectory = Some(result.trajectory);
        Ok(out)
    }

    fn compare(&self, task: &NamedTask, earlier: Option<&Trajectory>) -> Result<Outcome> {
        let mut out = Outcome::new();
        let (first, second) = match (&task.spec.files, earlier) {
            (Some(files), _) => (
                export::import_trajectory(&files[0])?,
                export::import_trajectory(&files[1])?,
            ),
            (None, Some(tr)) => {
                let oracle = refint::rk4_on_grid(self.model.dynamics()?, &tr.points[0], &tr.times)?;
                self.write(&format!("{}-rk4", task.name), &oracle, &mut out)?;
                (tr.clone(), oracle)
            }
            (None, None) => {
                return Err(Error::Config(format!(
                    "{}: no trajectory to compare",
                    task.name
                )))
            }
        };
        let diff = refint::compare(&first, &second)?;
        out.bounded("max_abs", diff.max_abs, self.config.tolerances.compare);
        out.info("at_time", diff.at_time);
        Ok(out)
    }

    fn first_integrals(&self, task: &NamedTask) -> Result<Outcome> {
        let spec = &task.spec;
        let start = spec.start.clone().unwrap_or_default();
        let solution = self.model.solution()?;
        let system = self.model.dynamics()?;
        let tol = &self.config.tolerances;
        let settings = NewtonSettings::default();
        let oracle = refint::rk4(system, &start, spec.t_end, spec.step)?;
        let first = hje::first_integrals_from_solution(solution, &start, None, settings)?;
        let (mut drift, mut guess) = (0.0f64, first.clone());
        for point in &oracle.points {
            let integrals =
                hje::first_integrals_from_solution(solution, point, Some(&guess), settings)?;
            drift = drift.max(
                integrals
                    .iter()
                    .zip(&first)
                    .map(|(lhs, rhs)| (lhs - rhs).abs())
                    .fold(0.0, f64::max),
            );
            guess = integrals;
        }
        let (mut inverse, mut kernel) = (0.0f64, 0.0f64);
        for (base, params) in solution.sample_points(self.config.solution.samples, &mut self.rng())
        {
            let point = solution.family.eval(&base, &params)?;
            let back = hje::first_integrals_from_solution(solution, &point, None, settings)?;
            inverse = inverse.max(
                back.iter()
                    .zip(&params)
                    .map(|(lhs, rhs)| (lhs - rhs).abs())
                    .fold(0.0, f64::max),
            );
            kernel = kernel.max(hje::kernel_image_residual(solution, &base, &params)?);
        }
        let mut out = Outcome::new();
        out.bounded("drift", drift, tol.drift);
        out.bounded("inverse", inverse, tol.inverse);
        out.bounded("kernel_image", kernel, tol.verify);
        for (i, v) in first.iter().enumerate() {
            out.info(&format!("lambda{i}"), *v);
        }
        Ok(out)
    }
}

/// Run every task in order, writing artifacts and `report.json` under `out_dir`.
pub fn run(config: &RunConfig, model: &Model, out_dir: &Path) -> Result<RunReport> {
    let started = Instant::now();
    std::fs::create_dir_all(out_dir)?;
    let runner = Runner {
        config,
        model,
        out_dir,
    };
    let mut reports: Vec<TaskReport> = Vec::new();
    let mut trajectories: BTreeMap<String, Trajectory> = BTreeMap::new();
    let mut verify_ok = true;
    for task in config.named_tasks() {
        let clock = Instant::now();
        let blocked = match task.spec.kind {
            TaskKind::Reconstruct | TaskKind::Integrate | TaskKind::FirstIntegrals
                if !verify_ok =>
            {
                Some("skipped: an earlier verify task did not pass".to_string())
            }
            TaskKind::Compare => match &task.spec.trajectory {
                Some(target) if !trajectories.contains_key(target) => {
                    Some(format!("skipped: task '{target}' produced no trajectory"))
                }
                _ => None,
            },
            _ => None,
        };
        let result = match blocked {
            Some(reason) => Ok(Outcome {
                status: Status::Skipped,
                message: Some(reason),
                ..Outcome::new()
            }),
            None => match task.spec.kind {
                TaskKind::Verify => runner.verify(),
                TaskKind::Reconstruct => runner.reconstruct(&task),
                TaskKind::Integrate => runner.integrate(&task),
                TaskKind::Compare => {
                    let earlier = task
                        .spec
                        .trajectory
                        .as_ref()
                        .and_then(|task| trajectories.get(task));
                    runner.compare(&task, earlier)
                }
                TaskKind::FirstIntegrals => runner.first_integrals(&task),
            },
        };
        let mut outcome = result.unwrap_or_else(|err| Outcome {
            status: Status::Error,
            message: Some(err.to_string()),
            ..Outcome::new()
        });
        if task.spec.kind == TaskKind::Verify && outcome.status != Status::Pass {
            verify_ok = false;
        }
        if let Some(tr) = outcome.trajectory.take() {
            trajectories.insert(task.name.clone(), tr);
        }
        reports.push(TaskReport {
            name: task.name,
            kind: task.spec.kind.as_str(),
            status: outcome.status,
            message: outcome.message,
            residuals: outcome.residuals,
            artifacts: outcome.artifacts,
            seconds: clock.elapsed().as_secs_f64(),
        });
    }
    let report = RunReport {
        seed: config.seed,
        family: config.system.family,
        tasks: reports,
        seconds: started.elapsed().as_secs_f64(),
    };
    let json = serde_json::to_string_pretty(&report)
        .map_err(|err| Error::Config(format!("cannot serialise report: {err}")))?;
    std::fs::write(out_dir.join("report.json"), json)?;
    Ok(report)
}
