//! Runge–Kutta reference trajectories and trajectory comparison.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, ContactSystem};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub method: String,
    /// Per-step solver residuals, when the method has any.
    #[serde(default)]
    pub residuals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, points: Vec<Vec<f64>>, meta: TrajectoryMeta) -> Result<Self> {
        if times.len() != points.len() || times.is_empty() {
            return Err(Error::Precondition(
                "trajectory needs matching, non-empty time and point lists".into(),
            ));
        }
        if times.windows(2).any(|pair| !(pair[0] < pair[1])) {
            return Err(Error::Precondition(
                "trajectory times must increase strictly".into(),
            ));
        }
        let dim = points[0].len();
        if points.iter().any(|point| point.len() != dim) {
            return Err(Error::Precondition(
                "trajectory points differ in dimension".into(),
            ));
        }
        if times
            .iter()
            .chain(points.iter().flatten())
            .any(|v| !v.is_finite())
        {
            return Err(Error::Precondition(
                "trajectory has non-finite entries".into(),
            ));
        }
        Ok(Self {
            times,
            points,
            meta,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn last(&self) -> &[f64] {
        self.points.last().expect("non-empty")
    }
}

/// Uniform grid `0, h, 2h, …` up to `t_end` (the last node is `t_end` when
/// it is a multiple of `h` up to rounding).
pub fn time_grid(t_end: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(t_end > 0.0) {
        return Err(Error::Precondition(
            "step and horizon must be positive".into(),
        ));
    }
    let count = (t_end / step + 1e-9).floor() as usize;
    Ok((0..=count).map(|i| i as f64 * step).collect())
}

/// Classical RK4 for `X_H` with fixed step.
pub fn rk4(system: &ContactSystem, start: &[f64], t_end: f64, step: f64) -> Result<Trajectory> {
    rk4_on_grid(system, start, &time_grid(t_end, step)?)
}

/// Classical RK4 stepping between consecutive nodes of `times`.
pub fn rk4_on_grid(system: &ContactSystem, start: &[f64], times: &[f64]) -> Result<Trajectory> {
    let field = |time: f64, point: &[f64]| -> Result<Vec<f64>> {
        geometry::contact_field(system, point)
            .map(|v| v.as_slice().to_vec())
            .map_err(|err| {
                Error::Convergence(format!("field evaluation failed at t = {time}: {err}"))
            })
    };
    let mut points = vec![start.to_vec()];
    let mut state = start.to_vec();
    for pair in times.windows(2) {
        let (time, step) = (pair[0], pair[1] - pair[0]);
        let axpy = |scale: f64, slope: &[f64]| -> Vec<f64> {
            state
                .iter()
                .zip(slope)
                .map(|(value, rate)| value + scale * rate)
                .collect()
        };
        let k1 = field(time, &state)?;
        let k2 = field(time + 0.5 * step, &axpy(0.5 * step, &k1))?;
        let k3 = field(time + 0.5 * step, &axpy(0.5 * step, &k2))?;
        let k4 = field(time + step, &axpy(step, &k3))?;
        for i in 0..state.len() {
            state[i] += step / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        points.push(state.clone());
    }
    Trajectory::new(
        times.to_vec(),
        points,
        TrajectoryMeta {
            method: "rk4".into(),
            residuals: Vec::new(),
        },
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub max_abs: f64,
    pub at_time: f64,
    /// True when `b` had to be resampled onto the grid of `a`.
    pub interpolated: bool,
}

fn same_grid(first: &[f64], second: &[f64]) -> bool {
    first.len() == second.len()
        && first
            .iter()
            .zip(second)
            .all(|(lhs, rhs)| (lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()))
}

/// Four-point Lagrange interpolation of `b` at time `t`.
fn cubic_at(traj: &Trajectory, time: f64) -> Vec<f64> {
    let n = traj.len();
    if n < 4 {
        // Too short for a cubic: fall back to linear.
        let i = traj
            .times
            .partition_point(|&sample| sample <= time)
            .clamp(1, n.max(2) - 1)
            .min(n - 1);
        if n == 1 {
            return traj.points[0].clone();
        }
        let (t0, t1) = (traj.times[i - 1], traj.times[i]);
        let weight = (time - t0) / (t1 - t0);
        return traj.points[i - 1]
            .iter()
            .zip(&traj.points[i])
            .map(|(left, right)| left + weight * (right - left))
            .collect();
    }
    let i = traj.times.partition_point(|&sample| sample <= time);
    let start = i.saturating_sub(2).min(n - 4);
    let nodes = start..start + 4;
    let mut out = vec![0.0; traj.dim()];
    for j in nodes.clone() {
        let mut weight = 1.0;
        for k in nodes.clone() {
            if k != j {
                weight *= (time - traj.times[k]) / (traj.times[j] - traj.times[k]);
            }
        }
        for (o, v) in out.iter_mut().zip(&traj.points[j]) {
            *o += weight * v;
        }
    }
    out
}

/// Pointwise max-norm discrepancy. When the grids differ, `second` is resampled
/// by cubic interpolation at the times of `first` inside the common range.
pub fn compare(first: &Trajectory, second: &Trajectory) -> Result<Comparison> {
    if first.dim() != second.dim() {
        return Err(Error::Precondition(
            "trajectories differ in dimension".into(),
        ));
    }
    let mut best = Comparison {
        max_abs: 0.0,
        at_time: first.times[0],
        interpolated: false,
    };
    let mut track = |time: f64, point: &[f64], other: &[f64]| {
        let d = point
            .iter()
            .zip(other)
            .fold(0.0f64, |acc, (lhs, rhs)| acc.max((lhs - rhs).abs()));
        if d > best.max_abs {
            best.max_abs = d;
            best.at_time = time;
        }
    };
    if same_grid(&first.times, &second.times) {
        for ((time, point), other) in first.times.iter().zip(&first.points).zip(&second.points) {
            track(*time, point, other);
        }
        return Ok(best);
    }
    let (lo, hi) = (second.times[0], *second.times.last().expect("non-empty"));
    let mut any = false;
    for (time, point) in first.times.iter().zip(&first.points) {
        if *time < lo - 1e-12 || *time > hi + 1e-12 {
            continue;
        }
        any = true;
        track(*time, point, &cubic_at(second, *time));
    }
    if !any {
        return Err(Error::Precondition(
            "trajectories have disjoint time ranges".into(),
        ));
    }
    best.interpolated = true;
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{ConstantField, Expr};
    use crate::geometry::{shared, DarbouxChart};

    fn oscillator(alpha: f64) -> ContactSystem {
        let chart = DarbouxChart::with_names(1, vec!["q".into(), "p".into(), "s".into()]).unwrap();
        let ham = Expr::parse(&format!("(p^2 + q^2)/2 - {alpha}*s"), chart.names()).unwrap();
        ContactSystem::new(chart, shared(ham)).unwrap()
    }

    #[test]
    fn reeb_flow_is_exact() {
        let chart = DarbouxChart::new(1).unwrap();
        let sys = ContactSystem::new(chart, shared(ConstantField { dim: 3, value: 1.0 })).unwrap();
        let tr = rk4(&sys, &[0.5, -0.2, 1.0], 1.0, 0.1).unwrap();
        assert_eq!(tr.len(), 11);
        for (time, point) in tr.times.iter().zip(&tr.points) {
            assert_eq!(point[0], 0.5);
            assert_eq!(point[1], -0.2);
            assert!((point[2] - (1.0 + time)).abs() < 1e-14);
        }
    }

    #[test]
    fn level_zero_stays_invariant() {
        let sys = oscillator(0.5);
        // H = 0 with q = 1, p = -1: s = (1 + 1) / (2 * 0.5)
        let tr = rk4(&sys, &[1.0, -1.0, 2.0], 1.0, 1e-3).unwrap();
        for point in &tr.points {
            let energy = (point[0] * point[0] + point[1] * point[1]) / 2.0 - 0.5 * point[2];
            assert!(energy.abs() < 1e-7);
        }
    }

    #[test]
    fn fourth_order_convergence() {
        let sys = oscillator(0.5);
        let start = [1.0, 0.3, 0.2];
        let reference = rk4(&sys, &start, 1.0, 0.0125 / 4.0).unwrap();
        let coarse = rk4(&sys, &start, 1.0, 0.025).unwrap();
        let fine = rk4(&sys, &start, 1.0, 0.0125).unwrap();
        let e1 = compare(&coarse, &reference).unwrap().max_abs;
        let e2 = compare(&fine, &reference).unwrap().max_abs;
        let ratio = e1 / e2;
        assert!((12.0..=20.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn compare_self_and_resampled() {
        let sys = oscillator(0.5);
        let first = rk4(&sys, &[1.0, 0.0, 0.0], 1.0, 1e-3).unwrap();
        let cmp = compare(&first, &first).unwrap();
        assert_eq!(cmp.max_abs, 0.0);
        assert!(!cmp.interpolated);
        let second = rk4(&sys, &[1.0, 0.0, 0.0], 1.0, 5e-4).unwrap();
        let cmp = compare(&first, &second).unwrap();
        assert!(cmp.max_abs < 1e-9, "{cmp:?}");
        assert!(cmp.interpolated);
    }

    #[test]
    fn disjoint_ranges_are_rejected() {
        let meta = TrajectoryMeta::default();
        let first =
            Trajectory::new(vec![0.0, 1.0], vec![vec![0.0], vec![1.0]], meta.clone()).unwrap();
        let second = Trajectory::new(vec![2.0, 3.0], vec![vec![0.0], vec![1.0]], meta).unwrap();
        assert!(compare(&first, &second).is_err());
    }
}
