//! Critical radius geometry of a nonnegative potential: reverse Hölder
//! constants, the critical radius field ρ, its regularity constants
//! `(C0, N0)`, critical coverings and the contraction factor γ0.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};
use crate::grid::{Grid, GridFunction, OffsetTable, SharedOffsets};
use crate::kernel::{Condition, ConditionParams, ConditionReport, Sample};
use crate::maximal::BallDictionary;
use crate::seed::rng_for;

/// Seed stream used by the `(C0, N0)` fit.
const FIT_SEED: u64 = 0x5eed_c0c0;
/// Number of sampled pairs in the `(C0, N0)` fit.
pub const FIT_PAIRS: usize = 10_000;
/// Radius mesh steps of the ρ search.
const RHO_MESH: usize = 64;

fn ensure_potential(v: &GridFunction) -> Result<()> {
    if !v.is_nonnegative() {
        return Err(invalid("potential must be nonnegative"));
    }
    if v.values().iter().all(|&x| x == 0.0) {
        return Err(LabError::Degenerate("potential vanishes identically (ρ = ∞)".into()));
    }
    Ok(())
}

/// Reverse Hölder ratio `(avg_B V^q)^{1/q} / avg_B V`, maximized over the dictionary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RhReport {
    pub q: f64,
    pub constant: f64,
    pub worst_center: Vec<f64>,
    pub worst_radius: f64,
    /// Balls on which `V` vanishes.
    pub skipped: usize,
}

pub fn rh_constant(v: &GridFunction, q: f64, dict: &BallDictionary) -> Result<RhReport> {
    ensure_potential(v)?;
    if !(q > 1.0 && q.is_finite()) {
        return Err(invalid(format!("reverse Hölder exponent must exceed 1, got {q}")));
    }
    let grid = *v.grid();
    grid.ensure_same(dict.grid())?;
    let offsets = dict.offsets().clone();
    let radii = dict.radii().to_vec();
    let counts: Vec<usize> = radii.iter().map(|&r| offsets.count_within(r)).collect();
    let vals = v.values();
    let per_center: Vec<(f64, usize, f64, usize)> = (0..grid.len())
        .into_par_iter()
        .map(|c| {
            let ks = if dict.is_center(c) { counts.len() } else { 1 };
            let (mut s1, mut sq) = (0.0, 0.0);
            let mut k = 0;
            let mut best = (0.0f64, 0usize);
            let mut skipped = 0;
            for j in 0..counts[ks - 1] {
                let x = vals[offsets.apply(c, j)];
                s1 += x;
                sq += x.powf(q);
                while k < ks && counts[k] == j + 1 {
                    if s1 > 0.0 {
                        let m = (j + 1) as f64;
                        let ratio = (sq / m).powf(1.0 / q) / (s1 / m);
                        if ratio > best.0 {
                            best = (ratio, k);
                        }
                    } else {
                        skipped += 1;
                    }
                    k += 1;
                }
            }
            (best.0, c, radii[best.1], skipped)
        })
        .collect();
    let mut report = RhReport { q, constant: 0.0, worst_center: vec![], worst_radius: 0.0, skipped: 0 };
    for (ratio, c, r, sk) in per_center {
        report.skipped += sk;
        if ratio > report.constant {
            report.constant = ratio;
            report.worst_center = grid.point(c);
            report.worst_radius = r;
        }
    }
    for b in dict.extra_balls() {
        let pts = crate::grid::ball_points(&grid, b)?;
        let m = pts.len() as f64;
        let s1: f64 = pts.iter().map(|&i| vals[i]).sum();
        if s1 > 0.0 {
            let sq: f64 = pts.iter().map(|&i| vals[i].powf(q)).sum();
            let ratio = (sq / m).powf(1.0 / q) / (s1 / m);
            if ratio > report.constant {
                report.constant = ratio;
                report.worst_center = b.center().to_vec();
                report.worst_radius = b.radius();
            }
        } else {
            report.skipped += 1;
        }
    }
    Ok(report)
}

/// ρ sampled on the grid together with fitted regularity constants.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalRadiusField {
    pub grid: Grid,
    #[serde(with = "field_values")]
    pub rho: GridFunction,
    pub fitted_c0: f64,
    pub fitted_n0: f64,
    /// Fraction of points whose search reached `side/2`.
    pub capped_fraction: f64,
    /// Points where no radius satisfied the defining inequality (ρ set to `spacing/2`).
    pub floored: usize,
}

mod field_values {
    use super::*;
    use serde::Serializer;

    pub fn serialize<S: Serializer>(f: &GridFunction, s: S) -> std::result::Result<S::Ok, S::Error> {
        f.values().serialize(s)
    }

}

impl CriticalRadiusField {
    /// Wraps a directly supplied ρ and fits `(C0, N0)`.
    pub fn from_rho(rho: GridFunction) -> Result<Self> {
        let grid = *rho.grid();
        if rho.values().iter().any(|&r| !(r > 0.0 && r <= grid.side() / 2.0)) {
            return Err(invalid("ρ must lie in (0, side/2]"));
        }
        let (c0, n0) = fit_constants(&rho, FIT_PAIRS, FIT_SEED);
        let capped = rho.values().iter().filter(|&&r| r >= grid.side() / 2.0).count();
        Ok(Self {
            grid,
            capped_fraction: capped as f64 / grid.len() as f64,
            rho,
            fitted_c0: c0,
            fitted_n0: n0,
            floored: 0,
        })
    }

    /// Constant field (bypasses the fit: any `(C0, N0)` works, we record `(1, 1)`).
    pub fn constant(grid: Grid, r: f64) -> Result<Self> {
        if !(r > 0.0 && r <= grid.side() / 2.0) {
            return Err(invalid("ρ must lie in (0, side/2]"));
        }
        Ok(Self {
            grid,
            rho: GridFunction::constant(grid, r),
            fitted_c0: 1.0,
            fitted_n0: 1.0,
            capped_fraction: if r >= grid.side() / 2.0 { 1.0 } else { 0.0 },
            floored: 0,
        })
    }

    pub fn values(&self) -> &[f64] {
        self.rho.values()
    }

    pub fn at(&self, idx: usize) -> f64 {
        self.rho.values()[idx]
    }

    /// ρ at an arbitrary point (nearest grid point).
    pub fn at_point(&self, x: &[f64]) -> f64 {
        self.at(self.grid.nearest_index(x))
    }

    pub fn gamma0(&self) -> f64 {
        gamma0(self.fitted_c0, self.fitted_n0).expect("fitted constants are valid")
    }

    /// Contraction used for coverings in inequality checks: the smaller of γ0
    /// and `1/(2 C0 (5√d)^{N0+1})`.
    pub fn default_shrink(&self) -> f64 {
        let d = self.grid.dim() as f64;
        let footnote = 1.0 / (2.0 * self.fitted_c0 * (5.0 * d.sqrt()).powf(self.fitted_n0 + 1.0));
        self.gamma0().min(footnote)
    }
}

/// Computes ρ(x) = sup{r : r^{2-d} ∫_{B(x,r)} V ≤ 1} for every grid point.
pub fn rho_field(v: &GridFunction, q: f64) -> Result<CriticalRadiusField> {
    rho_field_with(v, q, None)
}

pub fn rho_field_with(v: &GridFunction, q: f64, offsets: Option<SharedOffsets>) -> Result<CriticalRadiusField> {
    let grid = *v.grid();
    if grid.dim() < 3 {
        return Err(invalid(format!("the critical radius needs d >= 3, got d = {}", grid.dim())));
    }
    if !(q > 1.0) {
        return Err(invalid(format!("q must exceed 1, got {q}")));
    }
    ensure_potential(v)?;
    let offsets = match offsets {
        Some(o) if o.grid() == &grid => o,
        _ => Arc::new(OffsetTable::new(&grid)),
    };
    let h = grid.spacing();
    let cell = grid.cell_volume();
    let d = grid.dim() as i32;
    let (r_lo, r_hi) = (h / 2.0, grid.side() / 2.0);
    let mesh: Vec<f64> = (0..RHO_MESH)
        .map(|i| if i + 1 == RHO_MESH { r_hi } else { r_lo * (r_hi / r_lo).powf(i as f64 / (RHO_MESH - 1) as f64) })
        .collect();
    let vals = v.values();
    let results: Vec<(f64, bool, bool)> = (0..grid.len())
        .into_par_iter()
        .map(|x| {
            let total = offsets.count_within(r_hi);
            let mut prefix = Vec::with_capacity(total + 1);
            prefix.push(0.0);
            let mut acc = 0.0;
            for j in 0..total {
                acc += vals[offsets.apply(x, j)];
                prefix.push(acc);
            }
            let functional = |r: f64| r.powi(2 - d) * cell * prefix[offsets.count_within(r)];
            let last = mesh.iter().rposition(|&r| functional(r) <= 1.0);
            match last {
                None => (r_lo, false, true),
                Some(i) if i + 1 == mesh.len() => (r_hi, true, false),
                Some(i) => {
                    let (mut lo, mut hi) = (mesh[i], mesh[i + 1]);
                    while hi - lo > h / 10.0 {
                        let mid = 0.5 * (lo + hi);
                        if functional(mid) <= 1.0 {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    (lo, false, false)
                }
            }
        })
        .collect();
    let capped = results.iter().filter(|r| r.1).count();
    let floored = results.iter().filter(|r| r.2).count();
    let rho = GridFunction::new(grid, results.iter().map(|r| r.0).collect())?;
    let (c0, n0) = fit_constants(&rho, FIT_PAIRS, FIT_SEED);
    Ok(CriticalRadiusField {
        grid,
        rho,
        fitted_c0: c0,
        fitted_n0: n0,
        capped_fraction: capped as f64 / grid.len() as f64,
        floored,
    })
}

/// Smallest `C0 >= 1` making both sides of the regularity inequality hold
/// with exponent `n0` on the given pairs.
fn min_c0(rho: &GridFunction, pairs: &[(usize, usize)], n0: f64) -> f64 {
    let g = rho.grid();
    let r = rho.values();
    pairs.iter().fold(1.0f64, |c, &(x, y)| {
        let u = 1.0 + g.index_distance(x, y) / r[x];
        let upper = r[y] / (r[x] * u.powf(n0 / (n0 + 1.0)));
        let lower = r[x] * u.powf(-n0) / r[y];
        c.max(upper).max(lower)
    })
}

/// Fits `(C0, N0)`: for each integer `N0 ∈ 1..=12` the minimal `C0` over the
/// sampled pairs; the pair giving the largest γ0 wins (ties: smallest `N0`).
pub fn fit_constants(rho: &GridFunction, pairs: usize, seed: u64) -> (f64, f64) {
    let g = rho.grid();
    let mut rng = rng_for(seed, 0, 0);
    let npts = g.len();
    let sample: Vec<(usize, usize)> = if npts * npts <= pairs {
        (0..npts).flat_map(|x| (0..npts).map(move |y| (x, y))).collect()
    } else {
        (0..pairs).map(|_| (rng.random_range(0..npts), rng.random_range(0..npts))).collect()
    };
    let mut best = (1.0, 1.0, f64::NEG_INFINITY);
    for n0 in 1..=12 {
        let c0 = min_c0(rho, &sample, n0 as f64);
        let g0 = gamma0(c0, n0 as f64).expect("valid constants");
        if g0 > best.2 {
            best = (c0, n0 as f64, g0);
        }
    }
    (best.0, best.1)
}

/// Largest `γ ∈ (0, 1]` with `3 γ C0 (1 + 2γ)^{N0} <= 1`.
pub fn gamma0(c0: f64, n0: f64) -> Result<f64> {
    if !(c0 >= 1.0 && n0 >= 1.0 && c0.is_finite() && n0.is_finite()) {
        return Err(invalid(format!("γ0 needs C0 >= 1 and N0 >= 1, got ({c0}, {n0})")));
    }
    let lhs = |g: f64| 3.0 * g * c0 * (1.0 + 2.0 * g).powf(n0);
    if lhs(1.0) <= 1.0 {
        return Ok(1.0);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while hi - lo > 1e-15 {
        let mid = 0.5 * (lo + hi);
        if lhs(mid) <= 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Measures the growth bound for `R^{2-d} ∫_{B(x0,R)} V` against
/// `(1+R/ρ(x0))^{N}(1+ρ(x0)/R)^{d/q-2}`.
///
/// The exponent `N` is `log2 C1 + 2 - d` with `C1` the measured doubling
/// constant; the ratio with `N = N0` (fitted) is recorded in `extras`.
pub fn potential_growth_check(
    v: &GridFunction,
    q: f64,
    rho: &CriticalRadiusField,
    samples: usize,
    seed: u64,
) -> Result<ConditionReport> {
    ensure_potential(v)?;
    let grid = *v.grid();
    grid.ensure_same(&rho.grid)?;
    let d = grid.dim();
    if d < 3 {
        return Err(invalid("growth check needs d >= 3"));
    }
    let offsets = OffsetTable::new(&grid);
    let h = grid.spacing();
    let cell = grid.cell_volume();
    let vals = v.values();
    let ball_mass = |x: usize, r: f64| offsets.ball(x, r).map(|i| vals[i]).sum::<f64>() * cell;
    let r_min = h;
    let r_max = grid.side() / 2.0;
    let draws: Vec<(usize, f64)> = (0..samples)
        .map(|t| {
            let mut rng = rng_for(seed, 41, t as u64);
            let x = rng.random_range(0..grid.len());
            let r = r_min * (r_max / r_min).powf(rng.random::<f64>());
            (x, r)
        })
        .collect();

    // Doubling constant over balls with 2R inside the torus cap; radii below
    // three cells are dominated by lattice effects and are not used.
    let doubling: Vec<Option<f64>> = draws
        .par_iter()
        .map(|&(x, r)| {
            let r = r.max(3.0 * h).min(r_max / 2.0);
            let inner = ball_mass(x, r);
            (inner > 0.0).then(|| ball_mass(x, 2.0 * r) / inner)
        })
        .collect();
    let c1 = doubling.iter().flatten().fold(1.0f64, |m, &v| m.max(v));
    let n1 = (c1.log2() + 2.0 - d as f64).max(0.0);

    let mut report = ConditionReport::new(
        Condition::LemV,
        ConditionParams { n: Some(n1), ..Default::default() },
    );
    report.extras.insert("doubling_constant".into(), c1);
    report.extras.insert("fitted_n0".into(), rho.fitted_n0);
    let ratios: Vec<Option<(f64, f64)>> = draws
        .par_iter()
        .map(|&(x, r)| {
            let mass = ball_mass(x, r);
            if mass == 0.0 {
                return None;
            }
            let lhs = mass * r.powi(2 - d as i32);
            let p = rho.at(x);
            let tail = (1.0 + p / r).powf(d as f64 / q - 2.0);
            let rhs = (1.0 + r / p).powf(n1) * tail;
            let rhs0 = (1.0 + r / p).powf(rho.fitted_n0) * tail;
            Some((lhs / rhs, lhs / rhs0))
        })
        .collect();
    for (k, r) in ratios.into_iter().enumerate() {
        match r {
            Some((a, b)) => {
                let (x, radius) = draws[k];
                report.record(a, || Sample { x0: grid.point(x), y: grid.point(x), r: radius });
                report.extra_max("constant_with_fitted_n0", b);
            }
            None => report.skipped += 1,
        }
    }
    // Value of the functional at the crossing radius itself.
    let crossing: Vec<f64> = (0..samples.min(grid.len()))
        .map(|t| {
            let x = rng_for(seed, 42, t as u64).random_range(0..grid.len());
            let p = rho.at(x);
            ball_mass(x, p) * p.powi(2 - d as i32)
        })
        .collect();
    report.extras.insert(
        "crossing_functional_min".into(),
        crossing.iter().cloned().fold(f64::INFINITY, f64::min),
    );
    report.extras.insert("crossing_functional_max".into(), crossing.iter().cloned().fold(0.0, f64::max));
    Ok(report)
}

/// Greedy covering by (contracted) critical balls with overlap statistics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoveringReport {
    pub shrink: f64,
    /// Centres (grid indices) and radii of the balls `Q_j`.
    pub centers: Vec<usize>,
    pub radii: Vec<f64>,
    /// `(σ, max_x #{j : x ∈ σ Q_j})` for σ ∈ {1, 2, 4, 8}.
    pub overlap_max: Vec<(f64, usize)>,
    pub fitted_n1: f64,
    /// Constant `C` in `overlap_max(σ) <= C σ^{N1}`.
    pub fitted_c: f64,
    /// Coefficient of determination of the log-log fit.
    pub r_squared: f64,
    pub covered_fraction: f64,
    /// Balls whose enlarged radius had to be capped at `side/2`.
    pub capped_balls: usize,
}

pub const COVERING_SIGMAS: [f64; 4] = [1.0, 2.0, 4.0, 8.0];

pub fn critical_covering(rho: &CriticalRadiusField, shrink: f64) -> Result<CoveringReport> {
    if !(shrink > 0.0 && shrink <= 1.0) {
        return Err(invalid(format!("shrink must lie in (0, 1], got {shrink}")));
    }
    let grid = rho.grid;
    let h = grid.spacing();
    if let Some(i) = rho.values().iter().position(|&r| shrink * r < h) {
        return Err(invalid(format!(
            "shrink·ρ = {} below the spacing {h} at grid index {i}",
            shrink * rho.at(i)
        )));
    }
    let offsets = OffsetTable::new(&grid);
    let cap = grid.side() / 2.0;
    let mut covered = vec![false; grid.len()];
    let (mut centers, mut radii) = (Vec::new(), Vec::new());
    let mut next = 0;
    while let Some(x) = (next..grid.len()).find(|&i| !covered[i]) {
        let r = (shrink * rho.at(x)).min(cap);
        for i in offsets.ball(x, r) {
            covered[i] = true;
        }
        centers.push(x);
        radii.push(r);
        next = x + 1;
    }
    let covered_fraction = covered.iter().filter(|&&c| c).count() as f64 / grid.len() as f64;
    let mut capped_balls = 0;
    let mut overlap_max = Vec::new();
    for &sigma in &COVERING_SIGMAS {
        let mut count = vec![0usize; grid.len()];
        for (&c, &r) in centers.iter().zip(&radii) {
            let rs = sigma * r;
            if rs > cap && sigma == *COVERING_SIGMAS.last().unwrap() {
                capped_balls += 1;
            }
            for i in offsets.ball(c, rs.min(cap)) {
                count[i] += 1;
            }
        }
        overlap_max.push((sigma, count.into_iter().max().unwrap_or(0)));
    }
    let xs: Vec<f64> = overlap_max.iter().map(|(s, _)| s.ln()).collect();
    let ys: Vec<f64> = overlap_max.iter().map(|(_, m)| (*m as f64).ln()).collect();
    let (slope, _, r2) = least_squares(&xs, &ys);
    let n1 = slope.max(0.0);
    let c = overlap_max
        .iter()
        .map(|(s, m)| *m as f64 / s.powf(n1))
        .fold(0.0, f64::max);
    Ok(CoveringReport {
        shrink,
        centers,
        radii,
        overlap_max,
        fitted_n1: n1,
        fitted_c: c,
        r_squared: r2,
        covered_fraction,
        capped_balls,
    })
}

/// Ordinary least squares `y ≈ a x + b`; returns `(a, b, R²)` (`R² = 1` for
/// constant data fitted exactly).
pub(crate) fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let a = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let b = my - a * mx;
    let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - a * x - b).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    (a, b, r2)
}

/// How [`trucho_check`] draws its configurations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruchoMode {
    Random { samples: usize, seed: u64 },
    /// Every centre, every pair of points in the ball (small grids only).
    Exhaustive,
}

/// Radii (in units of the spacing) used for `R0` and the ratios `r/R0`.
const TRUCHO_R0: [f64; 4] = [1.5, 2.5, 4.0, 6.0];
const TRUCHO_R_FACTORS: [f64; 3] = [1.5, 3.0, 8.0];

/// Measures the two consequences of the regularity inequality for `x, y ∈ B(x0, R0)`:
/// (i) `(1+R0/ρ(y)) / (1+R0/ρ(x0))^{N0}` and
/// (ii) `(1+r/ρ(y)) / ((1+R0/ρ(x0))^γ (1+r/ρ(x)))` for `r > R0`,
/// `γ = N0 (1 + N0/(N0+1))`. The report's constant is the sup of (i);
/// the sup of (ii) is in `extras["part_ii"]`.
pub fn trucho_check(rho: &CriticalRadiusField, mode: TruchoMode) -> Result<ConditionReport> {
    let grid = rho.grid;
    let h = grid.spacing();
    let n0 = rho.fitted_n0;
    let gamma = n0 * (1.0 + n0 / (n0 + 1.0));
    let offsets = OffsetTable::new(&grid);
    let r0s: Vec<f64> = TRUCHO_R0.iter().map(|m| m * h).filter(|&r| r <= grid.side() / 2.0).collect();
    if r0s.is_empty() {
        return Err(LabError::NoValidSamples("grid too small for any R0".into()));
    }
    let mut report = ConditionReport::new(
        Condition::Trucho,
        ConditionParams { n: Some(n0), ..Default::default() },
    );
    report.extras.insert("gamma".into(), gamma);
    report.extras.insert("part_ii".into(), 0.0);
    let part_i = |x0: usize, r0: f64, y: usize| (1.0 + r0 / rho.at(y)) / (1.0 + r0 / rho.at(x0)).powf(n0);
    let part_ii = |x0: usize, r0: f64, x: usize, y: usize, r: f64| {
        (1.0 + r / rho.at(y)) / ((1.0 + r0 / rho.at(x0)).powf(gamma) * (1.0 + r / rho.at(x)))
    };
    match mode {
        TruchoMode::Exhaustive => {
            let per: Vec<Vec<(f64, f64, usize, f64)>> = (0..grid.len())
                .into_par_iter()
                .map(|x0| {
                    r0s.iter()
                        .map(|&r0| {
                            let pts: Vec<usize> = offsets.ball(x0, r0).collect();
                            let (mut wi, mut arg) = (0.0f64, x0);
                            for &y in &pts {
                                let v = part_i(x0, r0, y);
                                if v > wi {
                                    wi = v;
                                    arg = y;
                                }
                            }
                            // (ii) factorizes: worst y maximizes 1+r/ρ(y), worst x minimizes 1+r/ρ(x).
                            let rmin = pts.iter().map(|&i| rho.at(i)).fold(f64::INFINITY, f64::min);
                            let rmax = pts.iter().map(|&i| rho.at(i)).fold(0.0, f64::max);
                            let wii = TRUCHO_R_FACTORS
                                .iter()
                                .map(|f| {
                                    let r = f * r0;
                                    (1.0 + r / rmin) / ((1.0 + r0 / rho.at(x0)).powf(gamma) * (1.0 + r / rmax))
                                })
                                .fold(0.0, f64::max);
                            (wi, wii, arg, r0)
                        })
                        .collect()
                })
                .collect();
            for (x0, row) in per.into_iter().enumerate() {
                for (wi, wii, y, r0) in row {
                    report.record(wi, || Sample { x0: grid.point(x0), y: grid.point(y), r: r0 });
                    report.extra_max("part_ii", wii);
                }
            }
        }
        TruchoMode::Random { samples, seed } => {
            let res: Vec<(f64, f64, usize, usize, f64)> = (0..samples)
                .into_par_iter()
                .map(|t| {
                    let mut rng = rng_for(seed, 43, t as u64);
                    let x0 = rng.random_range(0..grid.len());
                    let r0 = r0s[rng.random_range(0..r0s.len())];
                    let m = offsets.count_within(r0);
                    let x = offsets.apply(x0, rng.random_range(0..m));
                    let y = offsets.apply(x0, rng.random_range(0..m));
                    let r = TRUCHO_R_FACTORS[rng.random_range(0..TRUCHO_R_FACTORS.len())] * r0;
                    (part_i(x0, r0, y), part_ii(x0, r0, x, y, r), x0, y, r0)
                })
                .collect();
            for (wi, wii, x0, y, r0) in res {
                report.record(wi, || Sample { x0: grid.point(x0), y: grid.point(y), r: r0 });
                report.extra_max("part_ii", wii);
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::unit_ball_volume;
    use crate::maximal::{build_dictionary, DictionaryPolicy};

    #[test]
    fn gamma0_quadratic_case_and_asymptotics() {
        let exact = (-3.0 + 33f64.sqrt()) / 12.0;
        assert!((gamma0(1.0, 1.0).unwrap() - exact).abs() < 1e-12);
        for c0 in [100.0, 1e3, 1e5] {
            let g = gamma0(c0, 1.0).unwrap();
            assert!((g * 3.0 * c0 - 1.0).abs() < 0.05, "{c0}: {g}");
        }
        let mut prev = 1.0;
        for c0 in [1.0, 2.0, 5.0] {
            let g = gamma0(c0, 2.0).unwrap();
            assert!(g < prev);
            assert!(gamma0(c0, 3.0).unwrap() < g);
            prev = g;
        }
        for (c0, n0) in [(1.0, 1.0), (3.5, 2.0), (20.0, 7.0)] {
            let g = gamma0(c0, n0).unwrap();
            assert!(3.0 * g * c0 * (1.0 + 2.0 * g).powf(n0) <= 1.0 + 1e-9);
            let g2 = 1.01 * g;
            assert!(3.0 * g2 * c0 * (1.0 + 2.0 * g2).powf(n0) > 1.0);
        }
        assert!(gamma0(0.5, 1.0).is_err());
    }

    #[test]
    fn rh_constant_of_constant_is_one() {
        let g = Grid::new(3, 8, 4.0).unwrap();
        let dict = build_dictionary(&g, DictionaryPolicy::AllCentersLogRadii { k_radii: 8 }).unwrap();
        let r = rh_constant(&GridFunction::constant(g, 2.0), 1.5, &dict).unwrap();
        assert!((r.constant - 1.0).abs() < 1e-12);
        assert!(rh_constant(&GridFunction::zeros(g), 1.5, &dict).is_err());
    }

    #[test]
    fn rh_constant_matches_exhaustive_scan() {
        let g = Grid::new(3, 8, 4.0).unwrap();
        let v = GridFunction::from_fn(g, |x| 1.0 + (2.0 * std::f64::consts::PI * x[0] / 4.0).sin()).unwrap();
        let dict = build_dictionary(&g, DictionaryPolicy::AllCentersLogRadii { k_radii: 8 }).unwrap();
        let fast = rh_constant(&v, 1.5, &dict).unwrap();
        let mut slow = 0.0f64;
        for b in dict.balls() {
            let pts = crate::grid::ball_points(&g, &b).unwrap();
            let m = pts.len() as f64;
            let s1: f64 = pts.iter().map(|&i| v.values()[i]).sum::<f64>() / m;
            let sq: f64 = pts.iter().map(|&i| v.values()[i].powf(1.5)).sum::<f64>() / m;
            if s1 > 0.0 {
                slow = slow.max(sq.powf(1.0 / 1.5) / s1);
            }
        }
        assert!((fast.constant - slow).abs() < 1e-12 * slow, "{} vs {slow}", fast.constant);
        // Half-box indicator: Jensen lower bound.
        let half = GridFunction::from_fn(g, |x| if x[0] < 2.0 { 1.0 } else { 0.0 }).unwrap();
        let r = rh_constant(&half, 2.0, &dict).unwrap();
        assert!(r.constant >= 1.0 && r.skipped > 0);
    }

    #[test]
    fn rho_of_constant_potential() {
        let g = Grid::new(3, 16, 3.2).unwrap();
        let w3 = unit_ball_volume(3);
        let mut base = None;
        for c in [0.5, 1.0, 4.0] {
            let f = rho_field(&GridFunction::constant(g, c), 2.0).unwrap();
            let exact = (w3 * c).powf(-0.5);
            for &r in f.values() {
                assert!((r - exact).abs() <= 2.0 * g.spacing(), "c={c}: {r} vs {exact}");
            }
            assert_eq!(f.fitted_n0, 1.0);
            assert!(f.fitted_c0 <= 1.0 + 1e-12);
            if c == 1.0 {
                base = Some(f.at(0));
            }
            if c == 4.0 {
                assert!((f.at(0) - base.unwrap() / 2.0).abs() <= 2.0 * g.spacing());
            }
        }
        assert!(rho_field(&GridFunction::zeros(g), 2.0).is_err());
        assert!(rho_field(&GridFunction::constant(Grid::new(2, 8, 1.0).unwrap(), 1.0), 2.0).is_err());
    }

    #[test]
    fn fitted_constants_hold_on_every_pair() {
        let g = Grid::new(3, 8, 6.0).unwrap();
        let v = GridFunction::from_fn(g, |x| 0.2 + x[0] * x[0] + 0.5 * x[1]).unwrap();
        let f = rho_field(&v, 2.0).unwrap();
        let pairs: Vec<(usize, usize)> = (0..g.len()).flat_map(|x| (0..g.len()).map(move |y| (x, y))).collect();
        assert!(min_c0(&f.rho, &pairs, f.fitted_n0) <= f.fitted_c0 * (1.0 + 1e-12));
    }

    #[test]
    fn growth_check_on_constant_potential() {
        let g = Grid::new(3, 16, 4.0).unwrap();
        let v = GridFunction::constant(g, 0.1);
        let f = rho_field(&v, 2.0).unwrap();
        let rep = potential_growth_check(&v, 2.0, &f, 300, 9).unwrap();
        assert!(rep.empirical_constant.is_finite() && rep.empirical_constant > 0.0);
        let c1 = rep.extras["doubling_constant"];
        assert!((c1 / 8.0 - 1.0).abs() < 0.35, "{c1}");
        assert!(rep.extras["crossing_functional_max"] <= 1.0);
        assert!(rep.extras["crossing_functional_min"] >= 0.9, "{:?}", rep.extras);
    }

    #[test]
    fn covering_of_quarter_side_radius() {
        let g = Grid::new(3, 8, 8.0).unwrap();
        let f = CriticalRadiusField::constant(g, 2.0).unwrap();
        let c = critical_covering(&f, 1.0).unwrap();
        assert!(c.centers.len() <= 64);
        assert_eq!(c.covered_fraction, 1.0);
        assert!(c.overlap_max[0].1 >= 1);
        for w in c.overlap_max.windows(2) {
            assert!(w[1].1 >= w[0].1);
        }
        assert!(critical_covering(&f, 0.2).is_err());
    }

    #[test]
    fn trucho_on_constant_fields() {
        let g = Grid::new(3, 8, 4.0).unwrap();
        let f = CriticalRadiusField::constant(g, 1.0).unwrap();
        let ex = trucho_check(&f, TruchoMode::Exhaustive).unwrap();
        assert!(ex.empirical_constant <= 1.0 + 1e-12);
        assert!(ex.extras["part_ii"] <= 1.0 + 1e-12);
        let v = GridFunction::from_fn(g, |x| 1.0 + 0.5 * (x[0] * 1.5).cos()).unwrap();
        let f = rho_field(&v, 2.0).unwrap();
        let ex = trucho_check(&f, TruchoMode::Exhaustive).unwrap();
        let rnd = trucho_check(&f, TruchoMode::Random { samples: 4000, seed: 1 }).unwrap();
        assert!(rnd.empirical_constant <= ex.empirical_constant + 1e-12);
        assert!(rnd.empirical_constant >= 0.9 * ex.empirical_constant);
        assert!(rnd.extras["part_ii"] <= ex.extras["part_ii"] + 1e-12);
        assert!(rnd.extras["part_ii"] >= 0.9 * ex.extras["part_ii"]);
    }
}
