//! Empirical verification of kernel size/smoothness conditions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    As,
    AsPrime,
    Bs,
    Cs,
    AInf,
    BInf,
    CompR1,
    CompR2,
    LemV,
    Trucho,
}

impl Condition {
    pub fn tag(&self) -> &'static str {
        match self {
            Condition::As => "a_s",
            Condition::AsPrime => "a_s_prime",
            Condition::Bs => "b_s",
            Condition::Cs => "c_s",
            Condition::AInf => "a_inf",
            Condition::BInf => "b_inf",
            Condition::CompR1 => "comp_r1",
            Condition::CompR2 => "comp_r2",
            Condition::LemV => "lem_v",
            Condition::Trucho => "trucho",
        }
    }
}

impl std::str::FromStr for Condition {
    type Err = crate::LabError;
    fn from_str(s: &str) -> crate::Result<Self> {
        let all = [
            Condition::As,
            Condition::AsPrime,
            Condition::Bs,
            Condition::Cs,
            Condition::AInf,
            Condition::BInf,
            Condition::CompR1,
            Condition::CompR2,
            Condition::LemV,
            Condition::Trucho,
        ];
        all.into_iter()
            .find(|c| c.tag() == s)
            .ok_or_else(|| crate::error::invalid(format!("unknown condition `{s}`")))
    }
}

/// Parameters a condition was evaluated with.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConditionParams {
    pub s: Option<f64>,
    pub n: Option<f64>,
    pub delta: Option<f64>,
    pub theta: Option<f64>,
}

/// One sampled configuration `(x0, y, R)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x0: Vec<f64>,
    pub y: Vec<f64>,
    pub r: f64,
}

/// Result of an empirical condition check: the sup over samples of LHS/RHS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub condition: Condition,
    pub parameters: ConditionParams,
    pub empirical_constant: f64,
    pub worst_sample: Option<Sample>,
    pub sample_count: usize,
    /// Samples discarded (degenerate denominators, excluded cells, ...).
    pub skipped: usize,
    /// Secondary measurements, keyed by name.
    pub extras: BTreeMap<String, f64>,
}

impl ConditionReport {
    pub(crate) fn new(condition: Condition, parameters: ConditionParams) -> Self {
        Self {
            condition,
            parameters,
            empirical_constant: 0.0,
            worst_sample: None,
            sample_count: 0,
            skipped: 0,
            extras: BTreeMap::new(),
        }
    }

    /// Records one ratio; ties keep the earlier sample.
    pub(crate) fn record(&mut self, ratio: f64, sample: impl FnOnce() -> Sample) {
        self.sample_count += 1;
        if ratio > self.empirical_constant || self.worst_sample.is_none() {
            self.empirical_constant = ratio.max(self.empirical_constant);
            if ratio >= self.empirical_constant {
                self.worst_sample = Some(sample());
            }
        }
    }

    pub(crate) fn extra_max(&mut self, key: &str, v: f64) {
        let e = self.extras.entry(key.to_string()).or_insert(f64::NEG_INFINITY);
        *e = e.max(v);
    }
}

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;

use crate::critical::CriticalRadiusField;
use crate::error::{invalid, LabError, Result};
use crate::grid::{Grid, GridFunction, OffsetTable, SharedOffsets};
use crate::operators::{
    assemble_classical, build_operator, kernel_column, project_mean_zero, ClassicalOp, OperatorKernel, OperatorName,
    SchrodingerOperator,
};
use crate::seed::rng_for;

/// Integration region of [`annulus_slice_norm`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SliceMode {
    /// `R < |x0 - x| < 2R`.
    Ring,
    /// `|x0 - x| < R/2`.
    Ball,
}

/// An `s`-norm slice together with the number of singular cells (`x = y`)
/// left out of the quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SliceNorm {
    pub value: f64,
    pub excluded: usize,
}

fn offsets_in(table: &OffsetTable, lo: f64, hi: f64) -> std::ops::Range<usize> {
    let l = table.lengths();
    l.partition_point(|&t| t <= lo)..l.partition_point(|&t| t < hi)
}

fn slice_norm(
    k: &OperatorKernel,
    k0: Option<&OperatorKernel>,
    table: &OffsetTable,
    x0: usize,
    y: usize,
    r: f64,
    s: f64,
    mode: SliceMode,
) -> Result<SliceNorm> {
    let grid = k.grid();
    let range = match mode {
        SliceMode::Ring => offsets_in(table, r, 2.0 * r),
        SliceMode::Ball => 0..table.count_within(r / 2.0),
    };
    if range.is_empty() {
        return Err(LabError::EmptyBall(format!("slice of radius {r} around point {x0} contains no cells")));
    }
    let mut acc = 0.0;
    let mut excluded = 0;
    for o in range {
        let x = table.apply(x0, o);
        if x == y {
            excluded += 1;
            continue;
        }
        let v = match k0 {
            Some(k0) => k.difference_magnitude(k0, x, y),
            None => k.magnitude(x, y),
        };
        acc += v.powf(s);
    }
    Ok(SliceNorm { value: (acc * grid.cell_volume()).powf(1.0 / s), excluded })
}

/// Quadrature `s`-norm of `K(·, y)` over the ring `R < |x0 - x| < 2R`
/// (`Ring`) or the ball `B(x0, R/2)` (`Ball`). The singular cell `x = y` is
/// left out.
pub fn annulus_slice_norm(k: &OperatorKernel, x0: usize, y: usize, r: f64, s: f64, mode: SliceMode) -> Result<f64> {
    let grid = k.grid();
    check_slice_args(grid, r, s)?;
    let table = OffsetTable::new(grid);
    Ok(slice_norm(k, None, &table, x0, y, r, s, mode)?.value)
}

fn check_slice_args(grid: &Grid, r: f64, s: f64) -> Result<()> {
    if !(s > 1.0) {
        return Err(invalid(format!("slice exponent must exceed 1, got {s}")));
    }
    if !(r > 0.0 && r < grid.side() / 4.0) {
        return Err(invalid(format!("ring radius {r} must lie in (0, side/4)")));
    }
    Ok(())
}

/// How sample configurations are drawn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sampling {
    pub count: usize,
    pub seed: u64,
}

const ATTEMPTS: usize = 64;
const TASK_CONDITION: u64 = 0x4b_0001;
const TASK_COMPARISON: u64 = 0x4b_0002;

fn sample_of(grid: &Grid, x0: usize, y: usize, r: f64) -> Sample {
    Sample { x0: grid.point(x0), y: grid.point(y), r }
}

/// Log-uniform radius in `[lo, hi)`.
fn log_uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp()
}

/// One evaluated sample: primary ratio plus optional secondary ratio.
struct Eval {
    ratio: f64,
    alt: Option<f64>,
    excluded: usize,
    sample: Sample,
}

/// Draws sample configurations respecting each condition's constraints and
/// reports the largest LHS/RHS ratio.
///
/// Radii are log-uniform in `[spacing, side/4)`; for `(b_s)` additionally
/// `R ≤ ρ(x0)`. The `(b_s)` report also records, under `extras["rho_y_reading"]`,
/// the same supremum with `ρ(y)` in place of `ρ(x0)`.
pub fn check_condition(
    k: &OperatorKernel,
    k0: Option<&OperatorKernel>,
    rho: &CriticalRadiusField,
    condition: Condition,
    params: &ConditionParams,
    sampling: Sampling,
) -> Result<ConditionReport> {
    let grid = *k.grid();
    grid.ensure_same(&rho.grid)?;
    let d = grid.dim() as f64;
    let needs_k0 = matches!(condition, Condition::Bs | Condition::BInf);
    let k0 = if needs_k0 {
        let k0 = k0.ok_or_else(|| invalid(format!("condition {} needs a comparison kernel K0", condition.tag())))?;
        k.same_shape(k0)?;
        Some(k0)
    } else {
        None
    };
    let s = params.s.unwrap_or(2.0);
    let big_n = params.n.unwrap_or(0.0);
    let delta = params.delta;
    if matches!(condition, Condition::Bs | Condition::BInf | Condition::Cs) && delta.is_none_or(|v| !(v > 0.0)) {
        return Err(invalid(format!("condition {} needs δ > 0", condition.tag())));
    }
    if !(s > 1.0) {
        return Err(invalid(format!("s must exceed 1, got {s}")));
    }
    if big_n < 0.0 {
        return Err(invalid("N must be nonnegative"));
    }
    let delta = delta.unwrap_or(0.0);
    let mut parameters = params.clone();
    match condition {
        Condition::As | Condition::AsPrime | Condition::AInf => parameters.n = Some(big_n),
        _ => {}
    }
    if !matches!(condition, Condition::AInf | Condition::BInf) {
        parameters.s = Some(s);
    }
    let s_prime = s / (s - 1.0);
    let h = grid.spacing();
    let r_lo = h;
    let r_hi = grid.side() / 4.0;
    if r_lo >= r_hi {
        return Err(LabError::NoValidSamples(format!(
            "grid too coarse: spacing {h} leaves no ring radius below side/4"
        )));
    }
    let table = Arc::new(OffsetTable::new(&grid));
    let npts = grid.len();

    let eval_one = |i: usize| -> Result<Option<Eval>> {
        let mut rng = rng_for(sampling.seed, TASK_CONDITION, i as u64);
        for _ in 0..ATTEMPTS {
            let x0 = rng.random_range(0..npts);
            let rho0 = rho.at(x0);
            match condition {
                Condition::AInf | Condition::BInf => {
                    // pointwise: x = x0, y at distance in [h, side/2)
                    let hi = table.count_within(grid.side() / 2.0);
                    let o = rng.random_range(1..hi);
                    let y = table.apply(x0, o);
                    let dist = table.length(o);
                    let (lhs, rhs, alt) = if condition == Condition::AInf {
                        (k.magnitude(x0, y), dist.powf(-d) * (1.0 + dist / rho0).powf(-big_n), None)
                    } else {
                        let lhs = k.difference_magnitude(k0.unwrap(), x0, y);
                        let rhs = dist.powf(-d) * (dist / rho.at(y)).powf(delta);
                        let alt = lhs / (dist.powf(-d) * (dist / rho0).powf(delta));
                        (lhs, rhs, Some(alt))
                    };
                    return Ok(Some(Eval { ratio: lhs / rhs, alt, excluded: 0, sample: sample_of(&grid, x0, y, dist) }));
                }
                _ => {
                    let hi = if condition == Condition::Bs { r_hi.min(rho0 * (1.0 + 1e-12)) } else { r_hi };
                    if hi < r_lo {
                        continue;
                    }
                    let r = if hi > r_lo { log_uniform(&mut rng, r_lo, hi) } else { r_lo };
                    let (y, mode) = if condition == Condition::AsPrime {
                        let range = offsets_in(&table, r, 2.0 * r);
                        if range.is_empty() {
                            continue;
                        }
                        (table.apply(x0, rng.random_range(range)), SliceMode::Ball)
                    } else {
                        let m = table.count_within(r / 2.0);
                        (table.apply(x0, rng.random_range(0..m.max(1))), SliceMode::Ring)
                    };
                    let lhs_k0 = if condition == Condition::Bs { k0 } else { None };
                    let norm = match slice_norm(k, lhs_k0, &table, x0, y, r, s, mode) {
                        Ok(v) => v,
                        Err(LabError::EmptyBall(_)) => continue,
                        Err(e) => return Err(e),
                    };
                    let base = r.powf(-d / s_prime);
                    let (rhs, alt) = match condition {
                        Condition::As | Condition::AsPrime => (base * (1.0 + r / rho0).powf(-big_n), None),
                        Condition::Cs => (base * (1.0 + rho0 / r).powf(-delta) * (1.0 + r / rho0).powf(-big_n), None),
                        Condition::Bs => {
                            let alt = norm.value / (base * (r / rho.at(y)).powf(delta));
                            (base * (r / rho0).powf(delta), Some(alt))
                        }
                        _ => unreachable!(),
                    };
                    return Ok(Some(Eval {
                        ratio: norm.value / rhs,
                        alt,
                        excluded: norm.excluded,
                        sample: sample_of(&grid, x0, y, r),
                    }));
                }
            }
        }
        Ok(None)
    };

    let evals: Vec<Result<Option<Eval>>> = (0..sampling.count).into_par_iter().map(eval_one).collect();
    let mut report = ConditionReport::new(condition, parameters);
    let mut excluded = 0usize;
    for e in evals {
        match e? {
            Some(ev) => {
                excluded += ev.excluded;
                if let Some(a) = ev.alt {
                    report.extra_max("rho_y_reading", a);
                }
                report.record(ev.ratio, || ev.sample);
            }
            None => report.skipped += 1,
        }
    }
    if report.sample_count == 0 {
        return Err(LabError::NoValidSamples(format!(
            "no configuration satisfies the constraints of {} on this grid",
            condition.tag()
        )));
    }
    if condition == Condition::Bs {
        report.extras.insert("rho_reading_x0".into(), report.empirical_constant);
    }
    report.extras.insert("excluded_cells".into(), excluded as f64);
    Ok(report)
}

/// `G(x,y) = ∫_{B(x,|x-y|/4)} V(u)/|u-x|^{d-1} du` by quadrature over the
/// periodic ball; the singular cell `u = x` is left out.
pub fn g_function(v: &GridFunction, x: usize, y: usize) -> Result<f64> {
    let table = OffsetTable::new(v.grid());
    g_function_with(v, x, y, &table)
}

pub fn g_function_with(v: &GridFunction, x: usize, y: usize, table: &OffsetTable) -> Result<f64> {
    let grid = v.grid();
    let dist = grid.index_distance(x, y);
    if dist < 4.0 * grid.spacing() * (1.0 - 1e-12) {
        return Err(invalid(format!(
            "G needs |x-y| ≥ 4·spacing, got {dist} (spacing {})",
            grid.spacing()
        )));
    }
    let d = grid.dim() as i32;
    let radius = dist / 4.0;
    let vals = v.values();
    let sum: f64 = (1..table.count_within(radius))
        .map(|o| vals[table.apply(x, o)] / table.length(o).powi(d - 1))
        .sum();
    Ok(sum * grid.cell_volume())
}

/// Data for the comparison lemmas.
#[derive(Debug, Clone, Copy)]
pub struct ComparisonInputs<'a> {
    pub lop: &'a SchrodingerOperator,
    pub rho: &'a CriticalRadiusField,
    /// Reverse-Hölder exponent of `V`.
    pub q: f64,
}

/// Measures the comparison between the Schrödinger kernels and the
/// classical ones.
///
/// * `CompR1`: pairs `(x, y)` with `4h ≤ |x-y| < side/2`; LHS `|K1 - K01|`,
///   RHS `|x-y|^{1-d}(G(x,y) + |x-y|^{-1}(|x-y|/ρ(x))^{2-d/q})`.
/// * `CompR2`: `R ≤ |y-x0| ≤ ρ(x0)`, `x ∈ B(x0, R/8)`; LHS `|K2 - K02|`, RHS
///   `|R2(VΓ(y,·)χ_{B(x0,R/4)})(x)| + R^{-d}(R/ρ(x0))^δ`, `δ = min{1, 2-d/q}`.
///   The truncated field is projected to mean zero before the classical
///   multiplier is applied (the multiplier discards that mode anyway).
pub fn comparison_check(lemma: Condition, inputs: ComparisonInputs<'_>, sampling: Sampling) -> Result<ConditionReport> {
    let lop = inputs.lop;
    let grid = *lop.grid();
    grid.ensure_same(&inputs.rho.grid)?;
    let d = grid.dim() as f64;
    let q = inputs.q;
    let npts = grid.len();
    let h = grid.spacing();
    let table = Arc::new(OffsetTable::new(&grid));
    let rho = inputs.rho;
    let v = lop.potential();
    match lemma {
        Condition::CompR1 => {
            if !(q > d / 2.0 && q < d) {
                return Err(invalid(format!("the first-order comparison needs d/2 < q < d, got q = {q}")));
            }
            let t = build_operator(&grid, Some(lop), &OperatorName::R1)?;
            let t0 = crate::operators::riesz1_vector(&grid, crate::operators::NyquistMode::Real);
            let lo = table.count_within(4.0 * h * (1.0 - 1e-12));
            let hi = table.count_within(grid.side() / 2.0);
            if lo >= hi {
                return Err(LabError::NoValidSamples("grid too coarse for 4h ≤ |x-y| < side/2".into()));
            }
            let params = ConditionParams { s: None, n: None, delta: Some(2.0 - d / q), theta: None };
            let evals: Vec<Result<(f64, f64, Sample)>> = (0..sampling.count)
                .into_par_iter()
                .map(|i| {
                    let mut rng = rng_for(sampling.seed, TASK_COMPARISON, i as u64);
                    let y = rng.random_range(0..npts);
                    let o = rng.random_range(lo..hi);
                    let x = table.apply(y, o);
                    let dist = table.length(o);
                    let col = kernel_column(&t, y)?;
                    let col0 = kernel_column(&t0, y)?;
                    let lhs = (0..grid.dim())
                        .map(|c| (col[c * npts + x] - col0[c * npts + x]).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    let g = g_function_with(v, x, y, &table)?;
                    let rhs = dist.powf(1.0 - d) * (g + (dist / rho.at(x)).powf(2.0 - d / q) / dist);
                    Ok((lhs / rhs, lhs, sample_of(&grid, x, y, dist)))
                })
                .collect();
            finish(lemma, params, evals)
        }
        Condition::CompR2 => {
            if !(q > d / 2.0) {
                return Err(invalid(format!("the second-order comparison needs q > d/2, got q = {q}")));
            }
            let delta = (2.0 - d / q).min(1.0);
            let t = build_operator(&grid, Some(lop), &OperatorName::R2)?;
            let t0 = assemble_classical(&grid, ClassicalOp::Riesz2Matrix)?;
            let linv = build_operator(&grid, Some(lop), &OperatorName::Linv)?;
            let params = ConditionParams { s: None, n: None, delta: Some(delta), theta: None };
            let evals: Vec<Result<Option<(f64, f64, Sample)>>> = (0..sampling.count)
                .into_par_iter()
                .map(|i| {
                    let mut rng = rng_for(sampling.seed, TASK_COMPARISON + 1, i as u64);
                    for _ in 0..ATTEMPTS {
                        let x0 = rng.random_range(0..npts);
                        let rho0 = rho.at(x0);
                        let hi = rho0.min(grid.side() / 2.0);
                        if hi < h {
                            continue;
                        }
                        let r = log_uniform(&mut rng, h, hi.max(h * (1.0 + 1e-9)));
                        let range = offsets_in(&table, r * (1.0 - 1e-12), hi * (1.0 + 1e-12));
                        if range.is_empty() {
                            continue;
                        }
                        let y = table.apply(x0, rng.random_range(range));
                        let m = table.count_within(r / 8.0).max(1);
                        let x = table.apply(x0, rng.random_range(0..m));
                        let col = kernel_column(&t, y)?;
                        let col0 = kernel_column(&t0, y)?;
                        let dd = grid.dim() * grid.dim();
                        let lhs = (0..dd).map(|c| (col[c * npts + x] - col0[c * npts + x]).powi(2)).sum::<f64>().sqrt();
                        let gamma = kernel_column(&linv, y)?;
                        let mut field = vec![0.0; npts];
                        for u in table.ball(x0, r / 4.0) {
                            field[u] = v.values()[u] * gamma[u];
                        }
                        project_mean_zero(&mut field);
                        let r2 = t0.apply_vec(&field)?;
                        let first = (0..dd).map(|c| r2[c * npts + x].powi(2)).sum::<f64>().sqrt();
                        let rhs = first + r.powf(-d) * (r / rho0).powf(delta);
                        return Ok(Some((lhs / rhs, lhs, sample_of(&grid, x0, y, r))));
                    }
                    Ok(None)
                })
                .collect();
            let mut skipped = 0;
            let kept: Vec<Result<(f64, f64, Sample)>> = evals
                .into_iter()
                .filter_map(|e| match e {
                    Ok(Some(v)) => Some(Ok(v)),
                    Ok(None) => {
                        skipped += 1;
                        None
                    }
                    Err(e) => Some(Err(e)),
                })
                .collect();
            let mut report = finish(lemma, params, kept)?;
            report.skipped = skipped;
            Ok(report)
        }
        other => Err(invalid(format!("{} is not a comparison lemma", other.tag()))),
    }
}

fn finish(condition: Condition, params: ConditionParams, evals: Vec<Result<(f64, f64, Sample)>>) -> Result<ConditionReport> {
    let mut report = ConditionReport::new(condition, params);
    for e in evals {
        let (ratio, lhs, sample) = e?;
        report.extra_max("lhs_max", lhs);
        report.record(ratio, || sample);
    }
    if report.sample_count == 0 {
        return Err(LabError::NoValidSamples(format!(
            "no configuration satisfies the constraints of {} on this grid",
            condition.tag()
        )));
    }
    Ok(report)
}

/// Shared offset table for repeated G evaluations.
pub fn offsets_for(grid: &Grid) -> SharedOffsets {
    Arc::new(OffsetTable::new(grid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{kernel_of, LinearOperator};

    #[test]
    fn identity_kernel_off_support_is_zero() {
        let g = Grid::new(3, 8, 8.0).unwrap();
        let k = kernel_of(&LinearOperator::identity(&g)).unwrap();
        let v = annulus_slice_norm(&k, 0, 0, 1.5, 2.0, SliceMode::Ring).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn constant_kernel_ring_volume() {
        let g = Grid::new(3, 16, 16.0).unwrap();
        let k = OperatorKernel::from_matrix(&g, "ones", ndarray::Array2::from_elem((g.len(), g.len()), 1.0)).unwrap();
        let r = 3.5;
        let got = annulus_slice_norm(&k, 5, 5, r, 2.0, SliceMode::Ring).unwrap();
        let vol = 4.0 / 3.0 * std::f64::consts::PI * 7.0 * r.powi(3);
        assert!((got / vol.sqrt() - 1.0).abs() < 0.05, "{got} vs {}", vol.sqrt());
    }

    #[test]
    fn g_function_closed_form_and_linearity() {
        let g = Grid::new(3, 64, 64.0).unwrap();
        let c = 0.3;
        let v = GridFunction::constant(g, c);
        let x = g.flat_index(&[10, 10, 10]);
        let y = g.flat_index(&[34, 34, 30]);
        let dist = g.index_distance(x, y);
        let table = OffsetTable::new(&g);
        let got = g_function_with(&v, x, y, &table).unwrap();
        let expect = c * 4.0 * std::f64::consts::PI * dist / 4.0;
        assert!((got / expect - 1.0).abs() < 0.1, "{got} vs {expect}");
        let got2 = g_function_with(&v.scaled(2.0), x, y, &table).unwrap();
        assert!((got2 - 2.0 * got).abs() < 1e-12 * got);
        assert_eq!(g_function_with(&GridFunction::zeros(g), x, y, &table).unwrap(), 0.0);
        let near = g.flat_index(&[11, 10, 10]);
        assert!(g_function_with(&v, x, near, &table).is_err());
    }
}
