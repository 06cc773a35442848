//! Young functions, Luxemburg averages and the 𝒟_p tail test.
//!
//! Every Young function is normalized by rescaling its argument so that
//! `A(1) = 1`; then `‖χ_Q‖_{A,B} = 1` whenever `B ⊆ Q` and constant functions
//! are fixed points of the Luxemburg average.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};
use crate::grid::{ball_points, Ball, GridFunction};

/// Parametric families of Young functions (before normalization).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum YoungFamily {
    /// `t^r`, `r >= 1`.
    Power { r: f64 },
    /// `t log^a(1+t)`, `a >= 0`.
    LogPower { a: f64 },
    /// `t log^a(1+t) log^b(e + log(1+t))`, `a, b >= 0`.
    LogLog { a: f64, b: f64 },
}

impl YoungFamily {
    fn raw(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        match *self {
            YoungFamily::Power { r } => t.powf(r),
            YoungFamily::LogPower { a } => t * t.ln_1p().powf(a),
            YoungFamily::LogLog { a, b } => {
                let l = t.ln_1p();
                t * l.powf(a) * (std::f64::consts::E + l).ln().powf(b)
            }
        }
    }

    /// `ln raw(e^lt) - lt`, usable far beyond the range of `f64` arguments.
    /// Kept separate from `lt` so the log factors are not lost to rounding
    /// when `lt` is huge.
    fn ln_excess_of_ln(&self, lt: f64) -> f64 {
        match *self {
            YoungFamily::Power { r } => (r - 1.0) * lt,
            YoungFamily::LogPower { a } => a * softplus(lt).ln(),
            YoungFamily::LogLog { a, b } => {
                let l = softplus(lt);
                a * l.ln() + b * (std::f64::consts::E + l).ln().ln()
            }
        }
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 35.0 {
        x + (-x).exp()
    } else {
        x.exp().ln_1p()
    }
}

/// A normalized Young function `A(t) = raw(scale * t)` with `A(1) = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YoungFunction {
    family: YoungFamily,
    scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Inverse,
}

impl YoungFunction {
    pub fn new(family: YoungFamily) -> Result<Self> {
        let ok = match family {
            YoungFamily::Power { r } => r.is_finite() && r >= 1.0,
            YoungFamily::LogPower { a } => a.is_finite() && a >= 0.0,
            YoungFamily::LogLog { a, b } => a.is_finite() && b.is_finite() && a >= 0.0 && b >= 0.0,
        };
        if !ok {
            return Err(invalid(format!("Young function parameters out of range: {family:?}")));
        }
        let scale = match family {
            YoungFamily::Power { .. } => 1.0,
            _ => solve_increasing(|t| family.raw(t), 1.0, 1e-15),
        };
        let a = Self { family, scale };
        a.check_shape()?;
        Ok(a)
    }

    pub fn power(r: f64) -> Result<Self> {
        Self::new(YoungFamily::Power { r })
    }

    pub fn log_power(a: f64) -> Result<Self> {
        Self::new(YoungFamily::LogPower { a })
    }

    pub fn log_log(a: f64, b: f64) -> Result<Self> {
        Self::new(YoungFamily::LogLog { a, b })
    }

    pub fn family(&self) -> YoungFamily {
        self.family
    }

    /// Exponent `r` when `A(t) = t^r`.
    pub fn power_exponent(&self) -> Option<f64> {
        match self.family {
            YoungFamily::Power { r } => Some(r),
            _ => None,
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self.family {
            YoungFamily::Power { r } if t > 0.0 => t.powf(r),
            _ => self.family.raw(self.scale * t),
        }
    }

    /// `A^{-1}(t)` by doubling and bisection to relative tolerance 1e-12.
    pub fn inverse(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        solve_increasing(|s| self.eval(s), t, 1e-12)
    }

    /// `ln A(e^lt)`.
    pub fn ln_eval_of_ln(&self, lt: f64) -> f64 {
        lt + self.ln_excess_of_ln(lt)
    }

    /// `ln(A(e^lt) / e^lt)`, accurate even when `lt` is astronomically large.
    pub fn ln_excess_of_ln(&self, lt: f64) -> f64 {
        let ls = self.scale.ln();
        ls + self.family.ln_excess_of_ln(lt + ls)
    }

    /// Sampled check of `A(0) = 0`, `A(1) = 1`, strict monotonicity and
    /// convexity on a geometric mesh of `[1e-6, 1e6]`.
    fn check_shape(&self) -> Result<()> {
        if self.eval(0.0) != 0.0 || (self.eval(1.0) - 1.0).abs() > 1e-12 {
            return Err(LabError::Internal(format!("normalization failed for {self}")));
        }
        let ts: Vec<f64> = (0..=240).map(|k| 10f64.powf(-6.0 + k as f64 * 0.05)).collect();
        for w in ts.windows(3) {
            let (a, b, c) = (self.eval(w[0]), self.eval(w[1]), self.eval(w[2]));
            if !(b > a && c > b) {
                return Err(invalid(format!("{self} is not strictly increasing near t = {}", w[1])));
            }
            let s1 = (b - a) / (w[1] - w[0]);
            let s2 = (c - b) / (w[2] - w[1]);
            if s2 < s1 * (1.0 - 1e-9) {
                return Err(invalid(format!("{self} is not convex near t = {}", w[1])));
            }
        }
        Ok(())
    }
}

impl fmt::Display for YoungFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.family {
            YoungFamily::Power { r } => write!(f, "power:{r}"),
            YoungFamily::LogPower { a } => write!(f, "logpower:{a}"),
            YoungFamily::LogLog { a, b } => write!(f, "loglog:{a},{b}"),
        }
    }
}

impl FromStr for YoungFunction {
    type Err = LabError;

    /// Parses `power:r`, `logpower:a` or `loglog:a,b`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, args) = s
            .split_once(':')
            .ok_or_else(|| invalid(format!("Young function `{s}`: expected `family:params`")))?;
        let nums: Vec<f64> = args
            .split(',')
            .map(|x| x.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| invalid(format!("Young function `{s}`: bad parameters")))?;
        match (name.trim(), nums.as_slice()) {
            ("power", [r]) => Self::power(*r),
            ("logpower", [a]) => Self::log_power(*a),
            ("loglog", [a, b]) => Self::log_log(*a, *b),
            _ => Err(invalid(format!("unknown Young function `{s}`"))),
        }
    }
}

/// Smallest `x >= 0` with `f(x) >= target` for increasing `f`, to relative
/// tolerance `tol`.
fn solve_increasing(f: impl Fn(f64) -> f64, target: f64, tol: f64) -> f64 {
    let mut hi = 1.0;
    while f(hi) < target {
        hi *= 2.0;
    }
    let mut lo = hi;
    while lo > 0.0 && f(lo) >= target {
        lo /= 2.0;
        if lo < f64::MIN_POSITIVE {
            return 0.0;
        }
    }
    while hi - lo > tol * hi {
        let mid = 0.5 * (lo + hi);
        if f(mid) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `A(t)` or `A^{-1}(t)`.
pub fn young_eval(a: &YoungFunction, t: f64, direction: Direction) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(invalid(format!("Young functions are evaluated at t >= 0, got {t}")));
    }
    Ok(match direction {
        Direction::Forward => a.eval(t),
        Direction::Inverse => a.inverse(t),
    })
}

/// Relative tolerance of the Luxemburg bisection.
pub const LUXEMBURG_TOL: f64 = 1e-8;

/// Luxemburg gauge of the sample `values` under the uniform probability
/// measure: `inf{λ > 0 : mean(A(|v|/λ)) <= 1}`.
pub fn luxemburg_gauge(values: &[f64], a: &YoungFunction) -> f64 {
    let m = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if m == 0.0 || values.is_empty() {
        return 0.0;
    }
    let count = values.len() as f64;
    let feasible = |lambda: f64| values.iter().map(|v| a.eval(v.abs() / lambda)).sum::<f64>() / count <= 1.0;
    // A(1) = 1 makes λ = max|v| feasible.
    let mut hi = m;
    let mut lo = hi / 2.0;
    while feasible(lo) {
        hi = lo;
        lo /= 2.0;
    }
    while hi - lo > LUXEMBURG_TOL * hi {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `(mean |v|^r)^{1/r}`: closed form of the gauge for `A(t) = t^r`.
pub fn power_mean(values: &[f64], r: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let m = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if m == 0.0 {
        return 0.0;
    }
    let s: f64 = values.iter().map(|v| (v.abs() / m).powf(r)).sum::<f64>() / values.len() as f64;
    m * s.powf(1.0 / r)
}

/// `‖f‖_{A,B}`, with `|B|` the quadrature measure of the ball's grid points.
pub fn luxemburg_avg(f: &GridFunction, ball: &Ball, a: &YoungFunction) -> Result<f64> {
    let pts = ball_points(f.grid(), ball)?;
    if pts.is_empty() {
        return Err(LabError::EmptyBall(format!(
            "ball of radius {} contains no grid point",
            ball.radius()
        )));
    }
    let vals: Vec<f64> = pts.iter().map(|&i| f.values()[i]).collect();
    Ok(luxemburg_gauge(&vals, a))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Membership {
    Member,
    NonMember,
    Inconclusive,
}

/// Outcome of the 𝒟_p tail test.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DpReport {
    pub p: f64,
    pub young: String,
    pub verdict: Membership,
    /// `∫_1^{T_max} (t/A(t))^{p'-1} dt/t` with `T_max = 1e12`.
    pub tail_estimate: f64,
    /// Extrapolated ratio of consecutive block integrals that decided the verdict.
    pub block_ratio: f64,
    /// 1 when decided on blocks dyadic in `log t`, 2 when blocks of those
    /// blocks were needed.
    pub level: u8,
}

/// Physical cutoff used for the reported partial integral.
pub const DP_T_MAX: f64 = 1e12;
/// Block ratios within this distance of 1 cannot be classified.
pub const DP_INCONCLUSIVE_BAND: f64 = 1e-3;
const DP_STABLE: f64 = 1e-9;
const LEVEL1_BLOCKS: usize = 64;
const LEVEL2_GROUPS: usize = 9;

/// Classifies `A ∈ 𝒟_p` from the tail `∫_1^∞ (t/A(t))^{p'-1} dt/t`.
///
/// In `u = log t` the integrand is `h(u) = exp((p'-1)(u - log A(e^u)))`.
/// Blocks `∫_{2^{j-1}}^{2^j} h du` decay geometrically for convergent tails,
/// stay constant on the borderline `h ~ 1/u` and grow otherwise. When the
/// block ratio itself drifts towards 1 (iterated-log tails) the blocks are
/// grouped dyadically once more and the test is repeated on the groups.
pub fn dp_membership(a: &YoungFunction, p: f64) -> Result<DpReport> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(invalid(format!("𝒟_p needs p > 1, got {p}")));
    }
    let q = 1.0 / (p - 1.0); // p' - 1
    let ln_h = |u: f64| -q * a.ln_excess_of_ln(u);
    let gl = GaussLegendre::new(24);

    let tail_estimate = gl.integrate_log(|u| ln_h(u), 0.0, DP_T_MAX.ln(), 16).exp();

    // ln of block integrals: [0,1], [1,2], [2,4], ...
    let nblocks = 1000;
    let ln_blocks: Vec<f64> = (0..nblocks)
        .map(|j| {
            if j == 0 {
                gl.integrate_log(|u| ln_h(u), 0.0, 1.0, 2)
            } else {
                let lo = 2f64.powi(j as i32 - 1);
                // u = lo * e^s, du = u ds
                gl.integrate_log(|s| ln_h(lo * s.exp()) + (lo * s.exp()).ln(), 0.0, std::f64::consts::LN_2, 2)
            }
        })
        .collect();
    let ratio = |lb: &[f64], j: usize| (lb[j + 1] - lb[j]).exp();

    let young = a.to_string();
    let last = LEVEL1_BLOCKS - 2;
    let r_last = ratio(&ln_blocks, last);
    let r_mid = ratio(&ln_blocks, last / 2);
    let stationary = (r_last - r_mid).abs() < DP_INCONCLUSIVE_BAND;
    if stationary || r_last > 1.0 + DP_INCONCLUSIVE_BAND || !r_last.is_finite() || r_last == 0.0 {
        let verdict = classify(r_last);
        return Ok(DpReport { p, young, verdict, tail_estimate, block_ratio: r_last, level: 1 });
    }

    // Level 2: groups j ∈ [2^m, 2^{m+1}).
    let ln_groups: Vec<f64> = (0..LEVEL2_GROUPS)
        .map(|m| {
            let (lo, hi) = (1usize << m, (1usize << (m + 1)).min(nblocks));
            log_sum_exp(&ln_blocks[lo..hi])
        })
        .collect();
    let g = LEVEL2_GROUPS - 2;
    let q1 = ratio(&ln_groups, g);
    let q0 = ratio(&ln_groups, g - 1);
    // Group ratios approach their limit like 2^{-m}.
    let extrapolated = 2.0 * q1 - q0;
    Ok(DpReport {
        p,
        young,
        verdict: classify(extrapolated),
        tail_estimate,
        block_ratio: extrapolated,
        level: 2,
    })
}

fn classify(ratio: f64) -> Membership {
    if !(ratio.is_finite()) || ratio <= 1.0 - DP_INCONCLUSIVE_BAND {
        // Underflowing or geometrically decaying blocks.
        if ratio.is_nan() {
            Membership::Inconclusive
        } else if ratio == f64::INFINITY {
            Membership::NonMember
        } else {
            Membership::Member
        }
    } else if ratio >= 1.0 - DP_STABLE {
        Membership::NonMember
    } else {
        Membership::Inconclusive
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Gauss-Legendre rule on `[-1, 1]`.
pub(crate) struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub(crate) fn new(n: usize) -> Self {
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            nodes[i] = x;
            weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
        Self { nodes, weights }
    }

    /// `ln ∫_lo^hi exp(ln_f)` on `panels` equal sub-intervals.
    pub(crate) fn integrate_log(&self, ln_f: impl Fn(f64) -> f64, lo: f64, hi: f64, panels: usize) -> f64 {
        let w = (hi - lo) / panels as f64;
        let mut terms = Vec::with_capacity(panels * self.nodes.len());
        for k in 0..panels {
            let a = lo + k as f64 * w;
            for (x, wt) in self.nodes.iter().zip(&self.weights) {
                let u = a + 0.5 * w * (x + 1.0);
                terms.push(ln_f(u) + (0.5 * w * wt).ln());
            }
        }
        log_sum_exp(&terms)
    }

    #[cfg(test)]
    fn integrate(&self, f: impl Fn(f64) -> f64, lo: f64, hi: f64, panels: usize) -> f64 {
        let w = (hi - lo) / panels as f64;
        let mut s = 0.0;
        for k in 0..panels {
            let a = lo + k as f64 * w;
            for (x, wt) in self.nodes.iter().zip(&self.weights) {
                s += 0.5 * w * wt * f(a + 0.5 * w * (x + 1.0));
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn eval_examples() {
        let a = YoungFunction::power(2.0).unwrap();
        assert_eq!(young_eval(&a, 3.0, Direction::Forward).unwrap(), 9.0);
        assert!((young_eval(&a, 9.0, Direction::Inverse).unwrap() - 3.0).abs() < 1e-11);
        let l = YoungFunction::log_power(1.0).unwrap();
        assert!((young_eval(&l, 1.0, Direction::Forward).unwrap() - 1.0).abs() < 1e-12);
        assert!(young_eval(&a, -1.0, Direction::Forward).is_err());
    }

    #[test]
    fn normalization_for_every_family() {
        for s in ["power:1", "power:3.5", "logpower:0", "logpower:2.5", "loglog:1,1.5", "loglog:0,2"] {
            let a: YoungFunction = s.parse().unwrap();
            assert!((a.eval(1.0) - 1.0).abs() < 1e-12, "{s}");
            assert_eq!(a.eval(0.0), 0.0);
            assert_eq!(a.to_string().parse::<YoungFunction>().unwrap(), a);
        }
        assert!("power:0.5".parse::<YoungFunction>().is_err());
        assert!("logpower:-1".parse::<YoungFunction>().is_err());
        assert!("cosh:1".parse::<YoungFunction>().is_err());
    }

    #[test]
    fn ln_eval_matches_direct_evaluation() {
        for s in ["power:2", "logpower:1.5", "loglog:1,2"] {
            let a: YoungFunction = s.parse().unwrap();
            for &t in &[0.3, 1.0, 7.0, 1e5] {
                let direct = a.eval(t).ln();
                assert!((a.ln_eval_of_ln(t.ln()) - direct).abs() < 1e-10, "{s} at {t}");
            }
        }
    }

    #[test]
    fn inverse_of_forward_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for s in ["power:1.5", "logpower:1", "loglog:0.5,1"] {
            let a: YoungFunction = s.parse().unwrap();
            for _ in 0..200 {
                let t = 10f64.powf(rng.random_range(-6.0..6.0));
                let back = a.inverse(a.eval(t));
                assert!((back - t).abs() <= 1e-10 * t.max(1e-300), "{s}: {t} -> {back}");
            }
            assert_eq!(a.inverse(0.0), 0.0);
        }
    }

    #[test]
    fn luxemburg_matches_power_mean() {
        let g = Grid::new(2, 16, 4.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let f = GridFunction::new(g, (0..g.len()).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
        for r in [1.0, 1.5, 2.0, 3.0] {
            let a = YoungFunction::power(r).unwrap();
            let ball = Ball::new(&g, vec![1.0, 3.5], 1.3).unwrap();
            let pts = ball_points(&g, &ball).unwrap();
            let vals: Vec<f64> = pts.iter().map(|&i| f.values()[i]).collect();
            // (1/|B|) Σ |f|^r h^d with |B| = #points h^d
            let oracle = (vals.iter().map(|v| v.abs().powf(r)).sum::<f64>() / vals.len() as f64).powf(1.0 / r);
            let lux = luxemburg_avg(&f, &ball, &a).unwrap();
            assert!((lux - oracle).abs() <= 1e-8 * oracle, "r={r}: {lux} vs {oracle}");
            assert!((power_mean(&vals, r) - oracle).abs() <= 1e-12 * oracle);
        }
    }

    #[test]
    fn luxemburg_of_constants_and_indicators() {
        let g = Grid::new(2, 16, 4.0).unwrap();
        let ball = Ball::new(&g, vec![2.0, 2.0], 1.0).unwrap();
        for s in ["power:2", "logpower:1", "loglog:1,1"] {
            let a: YoungFunction = s.parse().unwrap();
            let c = GridFunction::constant(g, 3.7);
            assert!((luxemburg_avg(&c, &ball, &a).unwrap() - 3.7).abs() < 1e-7);
            let q = Ball::new(&g, vec![2.0, 2.0], 1.8).unwrap();
            let chi = GridFunction::from_fn(g, |x| if q.contains(&g, x) { 1.0 } else { 0.0 }).unwrap();
            assert!((luxemburg_avg(&chi, &ball, &a).unwrap() - 1.0).abs() < 1e-7);
            assert_eq!(luxemburg_avg(&GridFunction::zeros(g), &ball, &a).unwrap(), 0.0);
        }
    }

    #[test]
    fn dp_membership_examples() {
        for p in [1.5, 2.0, 3.0] {
            let own = dp_membership(&YoungFunction::power(p).unwrap(), p).unwrap();
            assert_eq!(own.verdict, Membership::Member, "{own:?}");
            let lin = dp_membership(&YoungFunction::power(1.0).unwrap(), p).unwrap();
            assert_eq!(lin.verdict, Membership::NonMember, "{lin:?}");
            for eps in [0.1, 0.5, 1.0] {
                let r = dp_membership(&YoungFunction::log_power(p - 1.0 + eps).unwrap(), p).unwrap();
                assert_eq!(r.verdict, Membership::Member, "p={p} eps={eps}: {r:?}");
            }
            let crit = dp_membership(&YoungFunction::log_power(p - 1.0).unwrap(), p).unwrap();
            assert_eq!(crit.verdict, Membership::NonMember, "{crit:?}");
        }
        assert!(dp_membership(&YoungFunction::power(2.0).unwrap(), 1.0).is_err());
    }

    #[test]
    fn dp_membership_iterated_log_examples() {
        for p in [1.5, 2.0, 3.0] {
            let good = dp_membership(&YoungFunction::log_log(p - 1.0, p - 1.0 + 0.5).unwrap(), p).unwrap();
            assert_eq!(good.verdict, Membership::Member, "{good:?}");
            assert_eq!(good.level, 2);
            let bad = dp_membership(&YoungFunction::log_log(p - 1.0, 0.0).unwrap(), p).unwrap();
            assert_eq!(bad.verdict, Membership::NonMember, "{bad:?}");
        }
    }

    #[test]
    fn tail_estimate_of_power_is_closed_form() {
        // A = t^p: integrand t^{-2}, so ∫_1^T = 1 - 1/T.
        let r = dp_membership(&YoungFunction::power(2.0).unwrap(), 2.0).unwrap();
        assert!((r.tail_estimate - (1.0 - 1e-12)).abs() < 1e-9, "{}", r.tail_estimate);
    }

    #[test]
    fn gauss_legendre_is_exact_on_polynomials() {
        let gl = GaussLegendre::new(8);
        let v = gl.integrate(|x| x.powi(7) + 3.0 * x * x, 0.0, 2.0, 1);
        assert!((v - (256.0 / 8.0 + 8.0)).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn luxemburg_is_homogeneous_and_monotone(seed in any::<u64>(), c in -5.0f64..5.0, fam in 0usize..3) {
            let fams = [YoungFunction::power(2.0).unwrap(), YoungFunction::log_power(1.0).unwrap(), YoungFunction::log_log(1.0, 1.0).unwrap()];
            let a = fams[fam];
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let vals: Vec<f64> = (0..30).map(|_| rng.random_range(-3.0..3.0)).collect();
            let base = luxemburg_gauge(&vals, &a);
            let scaled: Vec<f64> = vals.iter().map(|v| c * v).collect();
            prop_assert!((luxemburg_gauge(&scaled, &a) - c.abs() * base).abs() <= 3e-8 * (c.abs() * base).max(1e-300));
            let bigger: Vec<f64> = vals.iter().map(|v| v.abs() + rng.random_range(0.0..1.0)).collect();
            prop_assert!(luxemburg_gauge(&bigger, &a) >= base * (1.0 - 2e-8));
            let lin = YoungFunction::power(1.0).unwrap();
            let mean = vals.iter().map(|v| v.abs()).sum::<f64>() / vals.len() as f64;
            prop_assert!((luxemburg_gauge(&vals, &lin) - mean).abs() <= 1e-8 * mean);
        }
    }
}
