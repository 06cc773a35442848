//! Multi-box trend check for local integrability conditions: compares
//! `∫|f|^p M^θ_φ(χ_Q)` with `∫|f|^p (1+|x|)^{-σ}` on boxes of growing side.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::critical::CriticalRadiusField;
use crate::error::{invalid, LabError, Result};
use crate::grid::{integrate, Grid, GridFunction};
use crate::maximal::{build_dictionary, maximal_apply, DictionaryPolicy, MaximalMode, MaximalSpec};
use crate::operators::DENSE_BUDGET;
use crate::young::YoungFunction;

/// Relative increment at the largest box below which a sequence counts as
/// converging.
pub const CAUCHY_TOL: f64 = 0.05;

/// Largest box handled (points).
const BOX_BUDGET: usize = 40_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegrabilitySpec {
    pub dim: usize,
    /// `|f| = (1 + |x|)^β`, `|x|` measured from the box center.
    pub beta: f64,
    pub p: f64,
    pub sigma: f64,
    /// Damping exponent of the maximal operator; `None` picks
    /// `max(0, σ - d)`, the θ whose envelope decay `d + θ` matches σ.
    pub theta: Option<f64>,
    pub young: YoungFunction,
    /// Critical radius (constant field) of the ball `Q` at the box center.
    pub rho: f64,
    pub sides: Vec<f64>,
    pub spacing: f64,
}

impl IntegrabilitySpec {
    pub fn new(dim: usize, beta: f64, p: f64, sigma: f64) -> Self {
        Self {
            dim,
            beta,
            p,
            sigma,
            theta: None,
            young: YoungFunction::power(1.0).expect("t is a Young function"),
            rho: 2.0,
            sides: vec![8.0, 16.0, 32.0],
            spacing: 1.0,
        }
    }

    pub fn resolved_theta(&self) -> f64 {
        self.theta.unwrap_or((self.sigma - self.dim as f64).max(0.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trend {
    pub integrals: Vec<f64>,
    /// `(I_last - I_prev) / I_last`.
    pub last_increment: f64,
    pub integrable: bool,
}

impl Trend {
    fn from(integrals: Vec<f64>) -> Self {
        let n = integrals.len();
        let last = integrals[n - 1];
        let prev = integrals[n - 2];
        let last_increment = if last > 0.0 { (last - prev).abs() / last } else { 0.0 };
        Self { integrals, last_increment, integrable: last_increment < CAUCHY_TOL }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntegrabilityReport {
    pub spec: IntegrabilitySpec,
    pub theta: f64,
    pub sides: Vec<f64>,
    pub maximal_trend: Trend,
    pub weight_trend: Trend,
    pub agree: bool,
}

/// Evaluates both integrals on every box and compares their trends.
pub fn integrability_verdict(spec: &IntegrabilitySpec) -> Result<IntegrabilityReport> {
    if spec.sides.len() < 2 {
        return Err(invalid("need at least two box sides"));
    }
    if !(spec.p >= 1.0) || !(spec.sigma > 0.0) || !(spec.rho > 0.0) || !(spec.spacing > 0.0) {
        return Err(invalid("need p ≥ 1, σ > 0, ρ > 0 and a positive spacing"));
    }
    let theta = spec.resolved_theta();
    let mut mi = Vec::new();
    let mut wi = Vec::new();
    for &side in &spec.sides {
        let n = (side / spec.spacing).round() as usize;
        let npts = n.checked_pow(spec.dim as u32).unwrap_or(usize::MAX);
        if npts > BOX_BUDGET.max(DENSE_BUDGET) {
            return Err(LabError::Budget(format!("box of side {side} has {npts} points")));
        }
        let grid = Grid::new(spec.dim, n, side)?;
        let center = grid.flat_index(&vec![n / 2; spec.dim]);
        if spec.rho > side / 2.0 {
            return Err(invalid(format!("ρ = {} does not fit a box of side {side}", spec.rho)));
        }
        let dist: Vec<f64> = (0..grid.len()).map(|y| grid.index_distance(center, y)).collect();
        let fp = GridFunction::new(grid, dist.iter().map(|t| (1.0 + t).powf(spec.beta * spec.p)).collect())?;
        let chi = GridFunction::new(grid, dist.iter().map(|t| if *t < spec.rho { 1.0 } else { 0.0 }).collect())?;
        let rho = CriticalRadiusField::constant(grid, spec.rho)?;
        let k = (4.0 * (n as f64).log2()).ceil() as usize;
        let dict = build_dictionary(&grid, DictionaryPolicy::AllCentersLogRadii { k_radii: k.max(8) })?;
        let m = MaximalSpec::new(spec.young, MaximalMode::Theta { rho: rho.rho.clone(), theta }, Arc::new(dict))?;
        let mchi = maximal_apply(&chi, &m)?;
        mi.push(integrate(&fp, Some(&mchi), None)?);
        let decay = GridFunction::new(grid, dist.iter().map(|t| (1.0 + t).powf(-spec.sigma)).collect())?;
        wi.push(integrate(&fp, Some(&decay), None)?);
    }
    let maximal_trend = Trend::from(mi);
    let weight_trend = Trend::from(wi);
    Ok(IntegrabilityReport {
        spec: spec.clone(),
        theta,
        sides: spec.sides.clone(),
        agree: maximal_trend.integrable == weight_trend.integrable,
        maximal_trend,
        weight_trend,
    })
}
