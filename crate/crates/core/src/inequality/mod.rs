//! Empirical constants in weighted inequalities
//! `∫|Tf|^p w ≤ C ∫|f|^p 𝓜w` (strong type) and
//! `w({|Tf| > λ}) ≤ (C/λ) ∫|f| 𝓜w` (weak type), plus the envelope and
//! local-integrability checks for characteristic functions of critical balls.

mod envelope;
mod families;
mod integrability;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, LabError, Result};
use crate::grid::{integrate, level_measure, GridFunction};
use crate::maximal::{maximal_apply, MaximalSpec};
use crate::operators::{project_mean_zero, LinearOperator};
use crate::seed::rng_for;

pub use envelope::{chi_envelope, EnvelopeReport};
pub use families::{FamilyKind, TestFamily, TrialPair, WeightKind, ALL_F, ALL_W};
pub use integrability::{integrability_verdict, IntegrabilityReport, IntegrabilitySpec, Trend, CAUCHY_TOL};

/// Number of λ levels in the default weak-type sweep.
pub const WEAK_LEVELS: usize = 40;

/// The operator on the left-hand side: linear, or a (sublinear) maximal operator.
#[derive(Debug, Clone)]
pub enum TestOperator {
    Linear(LinearOperator),
    Maximal(MaximalSpec),
}

impl TestOperator {
    pub fn name(&self) -> String {
        match self {
            TestOperator::Linear(t) => t.name().to_string(),
            TestOperator::Maximal(m) => m.to_string(),
        }
    }

    pub fn requires_mean_zero(&self) -> bool {
        matches!(self, TestOperator::Linear(t) if t.requires_mean_zero())
    }

    /// Pointwise `|Tf|`.
    pub fn abs_apply(&self, f: &GridFunction) -> Result<GridFunction> {
        match self {
            TestOperator::Linear(t) => t.apply_abs(f),
            TestOperator::Maximal(m) => maximal_apply(f, m),
        }
    }
}

fn pth_integral(f: &GridFunction, p: f64, w: &GridFunction) -> Result<f64> {
    let fp = f.map(|v| v.abs().powf(p));
    integrate(&fp, Some(w), None)
}

fn checked_ratio(num: f64, den: f64) -> Result<f64> {
    if !(den > 0.0) {
        return Err(LabError::ZeroDenominator(format!(
            "right-hand side ∫|f|^p 𝓜w = {den} (f vanishes where 𝓜w lives)"
        )));
    }
    Ok(num / den)
}

/// `∫|Tf|^p w / ∫|f|^p 𝓜w`.
pub fn strong_ratio(t: &TestOperator, m: &MaximalSpec, p: f64, f: &GridFunction, w: &GridFunction) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(invalid(format!("p must be ≥ 1, got {p}")));
    }
    let tf = t.abs_apply(f)?;
    let mw = maximal_apply(w, m)?;
    strong_from_parts(&tf, &mw, p, f, w)
}

fn strong_from_parts(tf: &GridFunction, mw: &GridFunction, p: f64, f: &GridFunction, w: &GridFunction) -> Result<f64> {
    let den = pth_integral(f, p, mw)?;
    let num = pth_integral(tf, p, w)?;
    checked_ratio(num, den)
}

/// The default λ levels: [`WEAK_LEVELS`] geometric points over `[1e-3, 1]·max`.
pub fn default_lambda_grid(max: f64) -> Vec<f64> {
    (0..WEAK_LEVELS)
        .map(|i| max * 10f64.powf(-3.0 + 3.0 * i as f64 / (WEAK_LEVELS - 1) as f64))
        .collect()
}

/// `max_λ λ·w({|Tf| > λ}) / ∫|f| 𝓜w`; `lambdas = None` uses [`default_lambda_grid`].
pub fn weak_ratio(
    t: &TestOperator,
    m: &MaximalSpec,
    f: &GridFunction,
    w: &GridFunction,
    lambdas: Option<&[f64]>,
) -> Result<f64> {
    let tf = t.abs_apply(f)?;
    let mw = maximal_apply(w, m)?;
    weak_from_parts(&tf, &mw, f, w, lambdas)
}

fn weak_from_parts(
    tf: &GridFunction,
    mw: &GridFunction,
    f: &GridFunction,
    w: &GridFunction,
    lambdas: Option<&[f64]>,
) -> Result<f64> {
    let den = pth_integral(f, 1.0, mw)?;
    let owned;
    let grid = match lambdas {
        Some(l) => l,
        None => {
            owned = default_lambda_grid(tf.max_abs());
            &owned
        }
    };
    if grid.iter().any(|l| !(*l > 0.0)) {
        return Err(invalid("λ levels must be positive"));
    }
    let mut best = 0.0f64;
    for &l in grid {
        best = best.max(l * level_measure(tf, w, l)?);
    }
    checked_ratio(best, den)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InequalityType {
    Strong,
    Weak,
}

/// Search budget: seeded random trials, then coordinate ascent from the
/// best starts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Search {
    pub trials: usize,
    pub seed: u64,
    /// Identifies the task in seed derivation.
    pub task: u64,
    pub restarts: usize,
    pub steps: usize,
}

#[derive(Debug, Clone)]
pub struct InequalityTask {
    pub operator: TestOperator,
    pub maximal: MaximalSpec,
    pub p: f64,
    pub kind: InequalityType,
    pub family: TestFamily,
    pub search: Search,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Argmax {
    pub trial: usize,
    pub f_family: FamilyKind,
    pub w_family: WeightKind,
    /// Whether the maximum was reached by the adversarial ascent.
    pub adversarial: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstantReport {
    pub operator: String,
    pub maximal: String,
    pub p: f64,
    pub kind: InequalityType,
    pub best_ratio: f64,
    pub argmax: Option<Argmax>,
    /// Running maximum over the random trials (in trial order).
    pub trace: Vec<f64>,
    /// Best value after each restart of the ascent (in restart order).
    pub adversarial_trace: Vec<f64>,
    /// `|best(N) - best(N/2)| / best(N)` over the random-trial trace.
    pub stability: f64,
    pub samples: usize,
    pub skipped: usize,
    pub seed: u64,
}

const EXTREMAL_ITERS: usize = 25;
const TASK_TRIALS: u64 = 0x1a_0000;
const TASK_ASCENT: u64 = 0x1b_0000;

struct Evaluator<'a> {
    task: &'a InequalityTask,
}

impl Evaluator<'_> {
    fn ratio_parts(&self, f: &GridFunction, w: &GridFunction, tf: &GridFunction, mw: &GridFunction) -> Result<f64> {
        match self.task.kind {
            InequalityType::Strong => strong_from_parts(tf, mw, self.task.p, f, w),
            InequalityType::Weak => weak_from_parts(tf, mw, f, w, None),
        }
    }

    fn prepare(&self, f: &mut GridFunction) {
        if self.task.operator.requires_mean_zero() {
            let mut v = f.values().to_vec();
            project_mean_zero(&mut v);
            *f = GridFunction::new(*f.grid(), v).expect("finite values");
        }
    }

    fn ratio(&self, f: &GridFunction, w: &GridFunction) -> Result<(f64, GridFunction, GridFunction)> {
        let tf = self.task.operator.abs_apply(f)?;
        let mw = maximal_apply(w, &self.task.maximal)?;
        let r = self.ratio_parts(f, w, &tf, &mw)?;
        Ok((r, tf, mw))
    }

    /// Nonlinear power iteration for `max ∫|Tf|^p w / ∫|f|^p 𝓜w` at fixed `w`:
    /// `f ← sign(g)|g/𝓜w|^{1/(p-1)}` with `g = T*(w|Tf|^{p-2}Tf)`. Iterates
    /// are kept only while the ratio increases.
    fn extremal(&self, f: GridFunction, w: &GridFunction) -> Result<GridFunction> {
        let TestOperator::Linear(t) = &self.task.operator else {
            return Ok(f);
        };
        let p = self.task.p;
        let grid = *f.grid();
        let npts = grid.len();
        let ts = t.adjoint();
        let mw = maximal_apply(w, &self.task.maximal)?;
        let mut best_f = f;
        let mut best = match self.ratio(&best_f, w) {
            Ok((r, _, _)) => r,
            Err(_) => return Ok(best_f),
        };
        for _ in 0..EXTREMAL_ITERS {
            let tf = t.apply_vec(best_f.values())?;
            let norm = crate::operators::pointwise_norm(&grid, &tf);
            let mut g_in: Vec<f64> = tf
                .iter()
                .enumerate()
                .map(|(k, v)| {
                    let a = norm.values()[k % npts];
                    if a > 0.0 {
                        w.values()[k % npts] * a.powf(p - 2.0) * v
                    } else {
                        0.0
                    }
                })
                .collect();
            if ts.requires_mean_zero() {
                for c in g_in.chunks_mut(npts) {
                    project_mean_zero(c);
                }
            }
            let g = ts.apply_vec(&g_in)?;
            let next: Vec<f64> = g
                .iter()
                .zip(mw.values())
                .map(|(gv, m)| if *m > 0.0 { gv.signum() * (gv.abs() / m).powf(1.0 / (p - 1.0)) } else { 0.0 })
                .collect();
            let mut cand = match GridFunction::new(grid, next) {
                Ok(c) => c,
                Err(_) => break,
            };
            self.prepare(&mut cand);
            match self.ratio(&cand, w) {
                Ok((r, _, _)) if r > best * (1.0 + 1e-12) => {
                    best = r;
                    best_f = cand;
                }
                _ => break,
            }
        }
        Ok(best_f)
    }

    /// Coordinate ascent on cell values of `f` and `w`; a proposal is kept
    /// iff the ratio increases.
    fn ascend(&self, mut f: GridFunction, mut w: GridFunction, restart: usize) -> Result<f64> {
        let s = &self.task.search;
        let mut rng = rng_for(s.seed, TASK_ASCENT + s.task, restart as u64);
        let (mut best, mut tf, mut mw) = self.ratio(&f, &w)?;
        let npts = f.grid().len();
        for step in 0..s.steps {
            let c = rng.random_range(0..npts);
            if step % 2 == 0 {
                let scale = f.max_abs().max(f64::MIN_POSITIVE);
                let delta = if rng.random::<bool>() { 0.5 * scale } else { -0.5 * scale };
                let mut v = f.values().to_vec();
                v[c] += delta;
                let mut cand = GridFunction::new(*f.grid(), v)?;
                self.prepare(&mut cand);
                let ctf = self.task.operator.abs_apply(&cand)?;
                if let Ok(r) = self.ratio_parts(&cand, &w, &ctf, &mw) {
                    if r > best {
                        best = r;
                        f = cand;
                        tf = ctf;
                    }
                }
            } else {
                let mut v = w.values().to_vec();
                let wmax = w.max_abs().max(f64::MIN_POSITIVE);
                v[c] = match rng.random_range(0..3) {
                    0 => v[c] * 0.5,
                    1 => v[c] * 2.0 + 0.1 * wmax,
                    _ => 0.0,
                };
                let cand = GridFunction::nonnegative(*w.grid(), v)?;
                let cmw = maximal_apply(&cand, &self.task.maximal)?;
                if let Ok(r) = self.ratio_parts(&f, &cand, &tf, &cmw) {
                    if r > best {
                        best = r;
                        w = cand;
                        mw = cmw;
                    }
                }
            }
        }
        Ok(best)
    }
}

/// Estimates the best constant of an inequality task by seeded random
/// trials followed by adversarial coordinate ascent. Degenerate trials are
/// skipped and counted.
pub fn estimate_constant(task: &InequalityTask) -> Result<ConstantReport> {
    if !(task.p >= 1.0) {
        return Err(invalid(format!("p must be ≥ 1, got {}", task.p)));
    }
    if task.kind == InequalityType::Weak && task.p != 1.0 {
        return Err(invalid("weak-type tasks use p = 1"));
    }
    let s = task.search;
    let grid = *task.maximal.dictionary.grid();
    let eval = Evaluator { task };
    let results: Vec<Option<(f64, TrialPair)>> = (0..s.trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_for(s.seed, TASK_TRIALS + s.task, i as u64);
            let mut pair = task.family.draw(&grid, &mut rng);
            eval.prepare(&mut pair.f);
            if pair.f_kind == FamilyKind::Extremal && task.kind == InequalityType::Strong && task.p > 1.0 {
                match eval.extremal(pair.f.clone(), &pair.w) {
                    Ok(f) => pair.f = f,
                    Err(_) => return None,
                }
            }
            match eval.ratio(&pair.f, &pair.w) {
                Ok((r, _, _)) if r.is_finite() => Some((r, pair)),
                _ => None,
            }
        })
        .collect();

    let mut trace = Vec::with_capacity(s.trials);
    let mut best = 0.0f64;
    let mut argmax = None;
    let mut skipped = 0;
    let mut ranked: Vec<(f64, usize)> = Vec::new();
    for (i, r) in results.iter().enumerate() {
        match r {
            Some((ratio, pair)) => {
                if *ratio > best || argmax.is_none() {
                    best = best.max(*ratio);
                    argmax = Some(Argmax { trial: i, f_family: pair.f_kind, w_family: pair.w_kind, adversarial: false });
                }
                ranked.push((*ratio, i));
            }
            None => skipped += 1,
        }
        trace.push(best);
    }
    let stability = if trace.len() >= 2 && best > 0.0 {
        (best - trace[trace.len() / 2 - 1]).abs() / best
    } else {
        0.0
    };

    // Ascent from the best distinct starts (ties broken by trial index).
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let starts: Vec<usize> = ranked.iter().take(s.restarts).map(|r| r.1).collect();
    let ascents: Vec<Result<f64>> = starts
        .par_iter()
        .enumerate()
        .map(|(k, &i)| {
            let (_, pair) = results[i].as_ref().expect("ranked trials are valid");
            eval.ascend(pair.f.clone(), pair.w.clone(), k)
        })
        .collect();
    let mut adversarial_trace = Vec::with_capacity(ascents.len());
    let mut adv_best = best;
    for (k, a) in ascents.into_iter().enumerate() {
        let a = a?;
        if a > adv_best {
            adv_best = a;
            let (_, pair) = results[starts[k]].as_ref().expect("valid");
            argmax = Some(Argmax { trial: starts[k], f_family: pair.f_kind, w_family: pair.w_kind, adversarial: true });
        }
        adversarial_trace.push(adv_best);
    }

    Ok(ConstantReport {
        operator: task.operator.name(),
        maximal: task.maximal.to_string(),
        p: task.p,
        kind: task.kind,
        best_ratio: adv_best,
        argmax,
        trace,
        adversarial_trace,
        stability,
        samples: s.trials - skipped,
        skipped,
        seed: s.seed,
    })
}
