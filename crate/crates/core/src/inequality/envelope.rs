//! Power envelopes of `M^θ_φ χ_Q` around a critical ball `Q = B(x0, ρ(x0))`.

use std::sync::Arc;

use serde::Serialize;

use crate::critical::CriticalRadiusField;
use crate::error::{invalid, LabError, Result};
use crate::grid::{Ball, GridFunction};
use crate::maximal::{maximal_apply, MaximalSpec};
use crate::young::luxemburg_avg;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeReport {
    pub theta: f64,
    pub young: String,
    pub center: Vec<f64>,
    pub rho0: f64,
    /// Lower envelope `c1 u^{-σ1}` with `u = 1 + |x - x0|/ρ(x0)`.
    pub c1: f64,
    pub sigma1: f64,
    /// Upper envelope `c2 u^{-σ2}`.
    pub c2: f64,
    pub sigma2: f64,
    /// Larger of the two RMS residuals, in log units.
    pub fit_residual: f64,
    /// Range of the computed values on `Q`.
    pub on_q_min: f64,
    pub on_q_max: f64,
    /// Points where the value vanished (left out of the log fit).
    pub zero_values: usize,
    /// Points whose witness ball `B(x, |x-x0| + ρ(x0))` fits on the torus.
    pub witness_checked: usize,
    /// Failures of `value ≥ 2^{-θ} u^{-θ} ‖χ_Q‖_{φ,B_x}`.
    pub witness_violations: usize,
    /// Failures of the same bound with `‖χ_Q‖_{φ,B_x}` replaced by 1.
    pub literal_violations: usize,
    /// Plot-ready data.
    pub u: Vec<f64>,
    pub values: Vec<f64>,
}

/// Minimizes a convex function of one variable on `[lo, hi]` (golden section).
fn golden(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - g * (hi - lo);
    let mut b = lo + g * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    for _ in 0..200 {
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - g * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + g * (hi - lo);
            fb = f(b);
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    (lo + hi) / 2.0
}

/// One-sided least squares in log coordinates: the line `a - σ x` lies
/// below (`lower`) or above all points; returns `(a, σ, rms)`.
fn one_sided_fit(xs: &[f64], ys: &[f64], lower: bool, s_lo: f64, s_hi: f64) -> (f64, f64, f64) {
    let shift = |s: f64| {
        let z = xs.iter().zip(ys).map(|(x, y)| y + s * x);
        if lower {
            z.fold(f64::INFINITY, f64::min)
        } else {
            z.fold(f64::NEG_INFINITY, f64::max)
        }
    };
    let cost = |s: f64| {
        let a = shift(s);
        xs.iter().zip(ys).map(|(x, y)| (y + s * x - a).powi(2)).sum::<f64>()
    };
    let s = golden(s_lo, s_hi, cost);
    let a = shift(s);
    (a, s, (cost(s) / xs.len() as f64).sqrt())
}

/// Computes `𝓜χ_Q` (dictionary augmented with the witness balls
/// `B(x, |x-x0| + ρ(x0))` that fit on the torus) and fits power envelopes
/// in `u = 1 + |x-x0|/ρ(x0)` by one-sided least squares. The upper exponent
/// is constrained to `σ2 ≤ σ1`.
pub fn chi_envelope(spec: &MaximalSpec, rho: &CriticalRadiusField, x0: usize) -> Result<EnvelopeReport> {
    let grid = *spec.dictionary.grid();
    grid.ensure_same(&rho.grid)?;
    if x0 >= grid.len() {
        return Err(invalid(format!("center index {x0} out of range")));
    }
    let rho0 = rho.at(x0);
    let half = grid.side() / 2.0;
    let dist: Vec<f64> = (0..grid.len()).map(|y| grid.index_distance(x0, y)).collect();
    let chi = GridFunction::new(grid, dist.iter().map(|t| if *t < rho0 { 1.0 } else { 0.0 }).collect())?;

    let mut witnesses = Vec::new();
    let mut witness_of = vec![None; grid.len()];
    for (x, t) in dist.iter().enumerate() {
        let r = t + rho0;
        if r <= half {
            witness_of[x] = Some(witnesses.len());
            witnesses.push(Ball::at_index(&grid, x, r)?);
        }
    }
    let dict = (*spec.dictionary).clone().with_extra_balls(witnesses.clone())?;
    let mut aug = spec.clone();
    aug.dictionary = Arc::new(dict);
    let values = maximal_apply(&chi, &aug)?;
    let theta = spec.theta().unwrap_or(0.0);

    let u: Vec<f64> = dist.iter().map(|t| 1.0 + t / rho0).collect();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    let mut zero_values = 0;
    for (ui, vi) in u.iter().zip(values.values()) {
        if *vi > 0.0 {
            xs.push(ui.ln());
            ys.push(vi.ln());
        } else {
            zero_values += 1;
        }
    }
    let spread = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - xs.iter().cloned().fold(f64::INFINITY, f64::min);
    if xs.len() < 3 || !(spread > 0.1) {
        return Err(LabError::Degenerate(format!(
            "envelope fit needs a spread of distances; log-range is {spread} over {} points",
            xs.len()
        )));
    }
    let s_max = 4.0 * (grid.dim() as f64 + theta) + 10.0;
    let (a1, sigma1, res1) = one_sided_fit(&xs, &ys, true, -2.0, s_max);
    let (a2, sigma2, res2) = one_sided_fit(&xs, &ys, false, -2.0, sigma1);

    let (mut on_q_min, mut on_q_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for (t, v) in dist.iter().zip(values.values()) {
        if *t < rho0 {
            on_q_min = on_q_min.min(*v);
            on_q_max = on_q_max.max(*v);
        }
    }

    let (mut checked, mut violations, mut literal) = (0, 0, 0);
    for x in 0..grid.len() {
        if let Some(k) = witness_of[x] {
            checked += 1;
            let base = 2f64.powf(-theta) * u[x].powf(-theta);
            let norm = luxemburg_avg(&chi, &witnesses[k], &spec.young)?;
            let v = values.values()[x];
            if v < base * norm * (1.0 - 1e-9) {
                violations += 1;
            }
            if v < base * (1.0 - 1e-9) {
                literal += 1;
            }
        }
    }

    Ok(EnvelopeReport {
        theta,
        young: spec.young.to_string(),
        center: grid.point(x0),
        rho0,
        c1: a1.exp(),
        sigma1,
        c2: a2.exp(),
        sigma2,
        fit_residual: res1.max(res2),
        on_q_min,
        on_q_max,
        zero_values,
        witness_checked: checked,
        witness_violations: violations,
        literal_violations: literal,
        u,
        values: values.into_values(),
    })
}
