//! Adaptive composite Simpson quadrature for vector-valued integrands.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadSettings {
    /// Absolute tolerance on every component of the integral.
    pub tol: f64,
    /// Upper bound on the number of leaf intervals.
    pub max_intervals: usize,
}

impl Default for QuadSettings {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_intervals: 1 << 20,
        }
    }
}

struct Panel {
    lo: f64,
    hi: f64,
    fa: Vec<f64>,
    fm: Vec<f64>,
    fb: Vec<f64>,
    whole: Vec<f64>,
    tol: f64,
}

fn simpson(width: f64, fa: &[f64], fm: &[f64], fb: &[f64]) -> Vec<f64> {
    fa.iter()
        .zip(fm)
        .zip(fb)
        .map(|((left, mid_v), right)| width / 6.0 * (left + 4.0 * mid_v + right))
        .collect()
}

/// Integrate `integrand` over `[lo, hi]`. Each accepted panel carries the Richardson
/// correction `(S₂ − S₁)/15`.
pub fn integrate<F>(mut integrand: F, lo: f64, hi: f64, settings: QuadSettings) -> Result<Vec<f64>>
where
    F: FnMut(f64) -> Result<Vec<f64>>,
{
    if lo == hi {
        let dim = integrand(lo)?.len();
        return Ok(vec![0.0; dim]);
    }
    const INITIAL: usize = 4;
    let width = (hi - lo) / INITIAL as f64;
    let mut stack = Vec::new();
    let mut left = integrand(lo)?;
    let dim = left.len();
    for i in 0..INITIAL {
        let pa = lo + width * i as f64;
        let pb = if i + 1 == INITIAL { hi } else { pa + width };
        let fm = integrand(0.5 * (pa + pb))?;
        let fb = integrand(pb)?;
        let whole = simpson(pb - pa, &left, &fm, &fb);
        stack.push(Panel {
            lo: pa,
            hi: pb,
            fa: std::mem::replace(&mut left, fb.clone()),
            fm,
            fb,
            whole,
            tol: settings.tol / INITIAL as f64,
        });
    }
    let mut total = vec![0.0; dim];
    let mut leaves = INITIAL;
    while let Some(panel) = stack.pop() {
        let mid = 0.5 * (panel.lo + panel.hi);
        let flm = integrand(0.5 * (panel.lo + mid))?;
        let frm = integrand(0.5 * (mid + panel.hi))?;
        let left = simpson(mid - panel.lo, &panel.fa, &flm, &panel.fm);
        let right = simpson(panel.hi - mid, &panel.fm, &frm, &panel.fb);
        let err = left
            .iter()
            .zip(&right)
            .zip(&panel.whole)
            .fold(0.0f64, |acc, ((lv, rv), whole)| {
                acc.max((lv + rv - whole).abs())
            });
        let tiny = (panel.hi - panel.lo).abs() <= 1e-14 * (hi - lo).abs();
        if err <= 15.0 * panel.tol || tiny {
            for (k, slot) in total.iter_mut().enumerate() {
                let refined = left[k] + right[k];
                *slot += refined + (refined - panel.whole[k]) / 15.0;
            }
            continue;
        }
        leaves += 1;
        if leaves > settings.max_intervals {
            return Err(Error::Convergence(format!(
                "quadrature exceeded {} intervals on [{lo}, {hi}]",
                settings.max_intervals
            )));
        }
        let half_tol = 0.5 * panel.tol;
        stack.push(Panel {
            lo: panel.lo,
            hi: mid,
            fa: panel.fa,
            fm: flm,
            fb: panel.fm.clone(),
            whole: left,
            tol: half_tol,
        });
        stack.push(Panel {
            lo: mid,
            hi: panel.hi,
            fa: panel.fm,
            fm: frm,
            fb: panel.fb,
            whole: right,
            tol: half_tol,
        });
    }
    Ok(total)
}

/// Scalar convenience wrapper.
pub fn integrate_scalar<F>(
    mut integrand: F,
    lo: f64,
    hi: f64,
    settings: QuadSettings,
) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    integrate(|arg| Ok(vec![integrand(arg)?]), lo, hi, settings).map(|v| v[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_up_to_cubic_are_exact() {
        let v = integrate_scalar(
            |arg| Ok(arg * arg * arg - 2.0 * arg + 1.0),
            0.0,
            2.0,
            QuadSettings::default(),
        )
        .unwrap();
        assert!((v - (4.0 - 4.0 + 2.0)).abs() < 1e-14);
    }

    #[test]
    fn vector_integrand_meets_tolerance() {
        let settings = QuadSettings::default();
        let v = integrate(
            |arg| Ok(vec![arg.sin(), (-arg).exp(), 1.0 / (1.0 + arg * arg)]),
            0.0,
            3.0,
            settings,
        )
        .unwrap();
        assert!((v[0] - (1.0 - 3.0_f64.cos())).abs() < 1e-10);
        assert!((v[1] - (1.0 - (-3.0_f64).exp())).abs() < 1e-10);
        assert!((v[2] - 3.0_f64.atan()).abs() < 1e-10);
    }

    #[test]
    fn reversed_limits_flip_sign() {
        let settings = QuadSettings::default();
        let fwd = integrate_scalar(|arg| Ok(arg.cos()), 0.0, 1.0, settings).unwrap();
        let back = integrate_scalar(|arg| Ok(arg.cos()), 1.0, 0.0, settings).unwrap();
        assert!((fwd + back).abs() < 1e-12);
    }

    #[test]
    fn interval_cap_is_enforced() {
        let settings = QuadSettings {
            tol: 1e-14,
            max_intervals: 16,
        };
        assert!(integrate_scalar(|arg| Ok((50.0 * arg).sin()), 0.0, 10.0, settings).is_err());
    }
}
