//! Orlicz maximal operators on a finite ball dictionary.
//!
//! The supremum over "all balls containing x" is replaced by a maximum over a
//! [`BallDictionary`]: grid-centred balls with a geometric ladder of radii,
//! optionally thinned to a sub-lattice of centres, plus arbitrary extra balls.
//! The first radius is `0.51 * spacing`, so the single-cell ball is always
//! present and `Mf >= |f|` holds exactly.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};
use crate::grid::{ball_points, Ball, Grid, GridFunction, OffsetTable, SharedOffsets};
use crate::young::{luxemburg_gauge, YoungFunction};

/// Radius of the single-cell ball, as a multiple of the spacing.
pub const SINGLE_CELL_RADIUS: f64 = 0.51;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum DictionaryPolicy {
    AllCentersLogRadii { k_radii: usize },
    SubsampledCenters { stride: usize, k_radii: usize },
}

impl DictionaryPolicy {
    pub fn k_radii(&self) -> usize {
        match *self {
            DictionaryPolicy::AllCentersLogRadii { k_radii } => k_radii,
            DictionaryPolicy::SubsampledCenters { k_radii, .. } => k_radii,
        }
    }
}

/// Finite family of balls standing in for "all balls".
#[derive(Debug, Clone)]
pub struct BallDictionary {
    grid: Grid,
    policy: DictionaryPolicy,
    radii: Vec<f64>,
    /// `counts[k]`: number of offsets inside radius `radii[k]`.
    counts: Vec<usize>,
    /// Centres carrying the full radius ladder (`None`: every grid point).
    centers: Option<Vec<bool>>,
    offsets: SharedOffsets,
    extra: Vec<Ball>,
}

pub fn build_dictionary(grid: &Grid, policy: DictionaryPolicy) -> Result<BallDictionary> {
    BallDictionary::new(grid, policy, None)
}

impl BallDictionary {
    /// Builds a dictionary, reusing `offsets` when one for the same grid is at hand.
    pub fn new(grid: &Grid, policy: DictionaryPolicy, offsets: Option<SharedOffsets>) -> Result<Self> {
        let k = policy.k_radii();
        if k < 8 {
            return Err(invalid(format!("ball dictionary needs k_radii >= 8, got {k}")));
        }
        let centers = match policy {
            DictionaryPolicy::AllCentersLogRadii { .. } => None,
            DictionaryPolicy::SubsampledCenters { stride, .. } => {
                if stride == 0 || grid.n() % stride != 0 {
                    return Err(invalid(format!("stride {stride} does not divide n = {}", grid.n())));
                }
                Some(
                    (0..grid.len())
                        .map(|i| grid.multi_index(i).iter().all(|m| m % stride == 0))
                        .collect(),
                )
            }
        };
        let offsets = match offsets {
            Some(o) if o.grid() == grid => o,
            _ => Arc::new(OffsetTable::new(grid)),
        };
        let r0 = SINGLE_CELL_RADIUS * grid.spacing();
        let r1 = grid.side() / 2.0;
        let radii: Vec<f64> = (0..k)
            .map(|i| {
                if i + 1 == k {
                    r1
                } else {
                    r0 * (r1 / r0).powf(i as f64 / (k - 1) as f64)
                }
            })
            .collect();
        let counts = radii.iter().map(|&r| offsets.count_within(r)).collect();
        Ok(Self { grid: *grid, policy, radii, counts, centers, offsets, extra: Vec::new() })
    }

    /// Adds arbitrary balls (e.g. witness balls of a lower-bound construction).
    pub fn with_extra_balls(mut self, balls: Vec<Ball>) -> Result<Self> {
        for b in &balls {
            if b.center().len() != self.grid.dim() || b.radius() > self.grid.side() / 2.0 {
                return Err(invalid("extra ball does not fit the dictionary grid"));
            }
        }
        self.extra.extend(balls);
        Ok(self)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn policy(&self) -> DictionaryPolicy {
        self.policy
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn offsets(&self) -> &SharedOffsets {
        &self.offsets
    }

    pub fn extra_balls(&self) -> &[Ball] {
        &self.extra
    }

    pub fn is_center(&self, idx: usize) -> bool {
        self.centers.as_ref().is_none_or(|c| c[idx])
    }

    /// Total number of balls.
    pub fn len(&self) -> usize {
        let full = match &self.centers {
            None => self.grid.len(),
            Some(c) => c.iter().filter(|&&b| b).count(),
        };
        full * self.radii.len() + (self.grid.len() - full) + self.extra.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Every ball as an explicit [`Ball`] (for brute-force checks and export).
    pub fn balls(&self) -> Vec<Ball> {
        let mut out = Vec::with_capacity(self.len());
        for c in 0..self.grid.len() {
            let ks = if self.is_center(c) { self.radii.len() } else { 1 };
            for &r in &self.radii[..ks] {
                out.push(Ball::at_index(&self.grid, c, r).expect("dictionary radius is valid"));
            }
        }
        out.extend(self.extra.iter().cloned());
        out
    }

    /// Doubles the radius ladder (for convergence checks).
    pub fn refined(&self) -> Result<Self> {
        let policy = match self.policy {
            DictionaryPolicy::AllCentersLogRadii { k_radii } => {
                DictionaryPolicy::AllCentersLogRadii { k_radii: 2 * k_radii }
            }
            DictionaryPolicy::SubsampledCenters { stride, k_radii } => {
                DictionaryPolicy::SubsampledCenters { stride, k_radii: 2 * k_radii }
            }
        };
        let mut d = Self::new(&self.grid, policy, Some(self.offsets.clone()))?;
        d.extra = self.extra.clone();
        Ok(d)
    }
}

/// Which balls are admissible and how they are weighted.
#[derive(Debug, Clone, PartialEq)]
pub enum MaximalMode {
    Full,
    /// Only balls `B(x0, r)` with `r <= ρ(x0)`.
    Local { rho: GridFunction },
    /// Every ball, damped by `(1 + r/ρ(x0))^{-θ}`.
    Theta { rho: GridFunction, theta: f64 },
}

#[derive(Debug, Clone)]
pub struct MaximalSpec {
    pub young: YoungFunction,
    pub mode: MaximalMode,
    pub dictionary: Arc<BallDictionary>,
    /// Extra applications of the plain Hardy–Littlewood operator afterwards.
    pub compose_with_hl: usize,
}

impl MaximalSpec {
    pub fn new(young: YoungFunction, mode: MaximalMode, dictionary: Arc<BallDictionary>) -> Result<Self> {
        let spec = Self { young, mode, dictionary, compose_with_hl: 0 };
        spec.validate()?;
        Ok(spec)
    }

    /// Plain Hardy–Littlewood operator `M`.
    pub fn hardy_littlewood(dictionary: Arc<BallDictionary>) -> Self {
        Self {
            young: YoungFunction::power(1.0).expect("t is a Young function"),
            mode: MaximalMode::Full,
            dictionary,
            compose_with_hl: 0,
        }
    }

    pub fn composed(mut self, extra: usize) -> Self {
        self.compose_with_hl = extra;
        self
    }

    pub fn theta(&self) -> Option<f64> {
        match self.mode {
            MaximalMode::Theta { theta, .. } => Some(theta),
            _ => None,
        }
    }

    fn validate(&self) -> Result<()> {
        let g = self.dictionary.grid();
        match &self.mode {
            MaximalMode::Full => {}
            MaximalMode::Local { rho } => check_rho(g, rho)?,
            MaximalMode::Theta { rho, theta } => {
                check_rho(g, rho)?;
                if !(theta.is_finite() && *theta >= 0.0) {
                    return Err(invalid(format!("θ must be finite and >= 0, got {theta}")));
                }
            }
        }
        Ok(())
    }
}

fn check_rho(g: &Grid, rho: &GridFunction) -> Result<()> {
    g.ensure_same(rho.grid())?;
    if rho.values().iter().any(|&r| !(r > 0.0)) {
        return Err(invalid("critical radius must be positive everywhere"));
    }
    Ok(())
}

impl fmt::Display for MaximalSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let base = match &self.mode {
            MaximalMode::Full => format!("M[{}]", self.young),
            MaximalMode::Local { .. } => format!("Mloc[{}]", self.young),
            MaximalMode::Theta { theta, .. } => format!("Mtheta{theta}[{}]", self.young),
        };
        if self.compose_with_hl == 0 {
            write!(f, "{base}")
        } else {
            write!(f, "M^{}∘{base}", self.compose_with_hl)
        }
    }
}

/// `𝓜f` on the dictionary: at each point, the largest (damped) Luxemburg
/// average over admissible balls containing it.
pub fn maximal_apply(f: &GridFunction, spec: &MaximalSpec) -> Result<GridFunction> {
    spec.validate()?;
    let dict = &spec.dictionary;
    dict.grid().ensure_same(f.grid())?;
    let mut out = apply_once(f, &spec.young, &spec.mode, dict)?;
    if spec.compose_with_hl > 0 {
        let hl = YoungFunction::power(1.0)?;
        for _ in 0..spec.compose_with_hl {
            out = apply_once(&out, &hl, &MaximalMode::Full, dict)?;
        }
    }
    Ok(out)
}

fn damping(mode: &MaximalMode, center: usize, r: f64) -> Option<f64> {
    match mode {
        MaximalMode::Full => Some(1.0),
        MaximalMode::Local { rho } => (r <= rho.values()[center]).then_some(1.0),
        MaximalMode::Theta { rho, theta } => Some((1.0 + r / rho.values()[center]).powf(-theta)),
    }
}

fn apply_once(f: &GridFunction, young: &YoungFunction, mode: &MaximalMode, dict: &BallDictionary) -> Result<GridFunction> {
    let grid = *dict.grid();
    let npts = grid.len();
    let offsets = dict.offsets();
    let nk = dict.radii.len();
    let cmax = dict.counts[nk - 1];
    let abs: Vec<f64> = f.values().iter().map(|v| v.abs()).collect();

    // table[c * nk + k]: damped average over B(c, radii[k]), or -inf if the
    // ball is not in the dictionary / not admissible.
    let table: Vec<f64> = (0..npts)
        .into_par_iter()
        .flat_map_iter(|c| {
            let ks = if dict.is_center(c) { nk } else { 1 };
            let mut row = vec![f64::NEG_INFINITY; nk];
            let avgs = ladder_averages(&abs, c, offsets, &dict.counts[..ks], young);
            for k in 0..ks {
                // The single-cell ball is always admissible.
                let w = if k == 0 { damping(mode, c, dict.radii[k]).or(Some(1.0)) } else { damping(mode, c, dict.radii[k]) };
                if let Some(w) = w {
                    row[k] = w * avgs[k];
                }
            }
            row
        })
        .collect();

    let mut out: Vec<f64> = (0..npts)
        .into_par_iter()
        .map(|x| {
            // B(c, r) ∋ x  ⇔  c ∈ B(x, r): scan offsets nearest first.
            let mut best = f64::NEG_INFINITY;
            let mut k0 = 0;
            for j in 0..cmax {
                while dict.counts[k0] <= j {
                    k0 += 1;
                }
                let c = offsets.apply(x, j);
                for v in &table[c * nk + k0..(c + 1) * nk] {
                    best = best.max(*v);
                }
            }
            best
        })
        .collect();

    if !dict.extra.is_empty() {
        let contributions: Vec<(Vec<usize>, f64)> = dict
            .extra
            .par_iter()
            .map(|b| -> Result<(Vec<usize>, f64)> {
                let pts = ball_points(&grid, b)?;
                if pts.is_empty() {
                    return Ok((pts, f64::NEG_INFINITY));
                }
                let c = grid.nearest_index(b.center());
                let w = damping(mode, c, b.radius());
                let vals: Vec<f64> = pts.iter().map(|&i| abs[i]).collect();
                let v = w.map_or(f64::NEG_INFINITY, |w| w * gauge(&vals, young));
                Ok((pts, v))
            })
            .collect::<Result<_>>()?;
        for (pts, v) in contributions {
            for i in pts {
                out[i] = out[i].max(v);
            }
        }
    }

    if let Some(i) = out.iter().position(|v| !v.is_finite()) {
        return Err(LabError::Internal(format!("no admissible ball contains grid point {i}")));
    }
    GridFunction::new(grid, out)
}

fn gauge(vals: &[f64], young: &YoungFunction) -> f64 {
    match young.power_exponent() {
        Some(r) => crate::young::power_mean(vals, r),
        None => luxemburg_gauge(vals, young),
    }
}

/// Luxemburg averages of `|f|` over the nested balls `B(c, ·)` whose point
/// counts are `counts`.
fn ladder_averages(abs: &[f64], c: usize, offsets: &OffsetTable, counts: &[usize], young: &YoungFunction) -> Vec<f64> {
    let last = *counts.last().expect("non-empty ladder");
    match young.power_exponent() {
        Some(r) => {
            let mut out = Vec::with_capacity(counts.len());
            let mut acc = 0.0;
            let mut k = 0;
            for j in 0..last {
                let v = abs[offsets.apply(c, j)];
                acc += if r == 1.0 { v } else { v.powf(r) };
                while k < counts.len() && counts[k] == j + 1 {
                    let mean = acc / (j + 1) as f64;
                    out.push(if r == 1.0 { mean } else { mean.powf(1.0 / r) });
                    k += 1;
                }
            }
            out
        }
        None => {
            let vals: Vec<f64> = (0..last).map(|j| abs[offsets.apply(c, j)]).collect();
            counts.iter().map(|&m| luxemburg_gauge(&vals[..m], young)).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(g: Grid, seed: u64) -> GridFunction {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        GridFunction::new(g, (0..g.len()).map(|_| rng.random_range(-1.0..2.0)).collect()).unwrap()
    }

    #[test]
    fn dictionary_counts_and_determinism() {
        let g = Grid::new(1, 64, 10.0).unwrap();
        let d = build_dictionary(&g, DictionaryPolicy::AllCentersLogRadii { k_radii: 16 }).unwrap();
        assert_eq!(d.len(), 64 * 16);
        assert_eq!(d.balls().len(), 64 * 16);
        let again = build_dictionary(&g, DictionaryPolicy::AllCentersLogRadii { k_radii: 16 }).unwrap();
        assert_eq!(d.balls(), again.balls());
        for (c, b) in d.balls().iter().step_by(16).enumerate() {
            assert_eq!(ball_points(&g, b).unwrap(), vec![c]);
        }
        assert!(build_dictionary(&g, DictionaryPolicy::AllCentersLogRadii { k_radii: 4 }).is_err());
        assert!(build_dictionary(&g, DictionaryPolicy::SubsampledCenters { stride: 3, k_radii: 8 }).is_err());
        let sub = build_dictionary(&g, DictionaryPolicy::SubsampledCenters { stride: 4, k_radii: 8 }).unwrap();
        assert_eq!(sub.len(), 16 * 8 + 48);
    }

    /// Exhaustive sup over the explicit ball list.
    fn brute_force(f: &GridFunction, dict: &BallDictionary, young: &YoungFunction) -> Vec<f64> {
        let g = f.grid();
        let mut out = vec![f64::NEG_INFINITY; g.len()];
        for b in dict.balls() {
            let pts = ball_points(g, &b).unwrap();
            let vals: Vec<f64> = pts.iter().map(|&i| f.values()[i].abs()).collect();
            let v = match young.power_exponent() {
                Some(r) => crate::young::power_mean(&vals, r),
                None => luxemburg_gauge(&vals, young),
            };
            for x in 0..g.len() {
                if b.contains(g, &g.point(x)) {
                    out[x] = out[x].max(v);
                }
            }
        }
        out
    }

    #[test]
    fn spike_matches_brute_force_exactly() {
        let g = Grid::new(1, 32, 8.0).unwrap();
        let mut v = vec![0.0; 32];
        v[5] = 1.0;
        let f = GridFunction::new(g, v).unwrap();
        let dict = Arc::new(build_dictionary(&g, DictionaryPolicy::AllCentersLogRadii { k_radii: 12 }).unwrap());
        let spec = MaximalSpec::hardy_littlewood(dict.clone());
        let fast = maximal_apply(&f, &spec).unwrap();
        let slow = brute_force(&f, &dict, &spec.young);
        for (a, b) in fast.values().iter().zip(&slow) {
            assert!((a - b).abs() <= 1e-15 * b.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn generic_young_matches_brute_force_in_2d() {
        let g = Grid::new(2, 8, 4.0).unwrap();
        let f = random_field(g, 3);
        let dict = Arc::new(build_dictionary(&g, DictionaryPolicy::AllCentersLogRadii { k_radii: 8 }).unwrap());
        let a = YoungFunction::log_power(1.0).unwrap();
        let spec = MaximalSpec::new(a, MaximalMode::Full, dict.clone()).unwrap();
        let fast = maximal_apply(&f, &spec).unwrap();
        let slow = brute_force(&f, &dict, &a);
        for (x, y) in fast.values().iter().zip(&slow) {
            assert!((x - y).abs() <= 1e-12 * y.abs(), "{x} vs {y}");
        }
    }

    #[test]
    fn constants_are_fixed_points() {
        let g = Grid::new(2, 8, 3.0).unwrap();
        let dict = Arc::new(build_dictionary(&g, DictionaryPolicy::AllCentersLogRadii { k_radii: 8 }).unwrap());
        for a in ["power:1", "power:2.5", "logpower:1", "loglog:1,2"] {
            let spec = MaximalSpec::new(a.parse().unwrap(), MaximalMode::Full, dict.clone()).unwrap();
            let m = maximal_apply(&GridFunction::constant(g, 2.5), &spec).unwrap();
            for v in m.values() {
                assert!((v - 2.5).abs() < 1e-7, "{a}: {v}");
            }
        }
    }

    #[test]
    fn damping_and_localization_are_dominated_by_full() {
        let g = Grid::new(2, 16, 8.0).unwrap();
        let dict = Arc::new(build_dictionary(&g, DictionaryPolicy::AllCentersLogRadii { k_radii: 10 }).unwrap());
        let f = random_field(g, 11);
        let rho = GridFunction::from_fn(g, |x| 0.5 + 0.2 * x[0]).unwrap();
        let y = YoungFunction::power(1.5).unwrap();
        let full = maximal_apply(&f, &MaximalSpec::new(y, MaximalMode::Full, dict.clone()).unwrap()).unwrap();
        let theta0 = maximal_apply(
            &f,
            &MaximalSpec::new(y, MaximalMode::Theta { rho: rho.clone(), theta: 0.0 }, dict.clone()).unwrap(),
        )
        .unwrap();
        assert_eq!(theta0, full);
        let loc = maximal_apply(&f, &MaximalSpec::new(y, MaximalMode::Local { rho: rho.clone() }, dict.clone()).unwrap())
            .unwrap();
        let mut prev = full.clone();
        for theta in [0.5, 1.0, 2.0] {
            let t = maximal_apply(
                &f,
                &MaximalSpec::new(y, MaximalMode::Theta { rho: rho.clone(), theta }, dict.clone()).unwrap(),
            )
            .unwrap();
            for i in 0..g.len() {
                assert!(t.values()[i] <= prev.values()[i] + 1e-14);
                assert!(t.values()[i] >= f.values()[i].abs() * (1.0 + SINGLE_CELL_RADIUS * g.spacing() / rho.values()[i]).powf(-theta) - 1e-14);
            }
            prev = t;
        }
        for i in 0..g.len() {
            assert!(loc.values()[i] <= full.values()[i] + 1e-14);
            assert!(loc.values()[i] >= f.values()[i].abs() - 1e-14);
        }
    }

    #[test]
    fn composition_and_extra_balls() {
        let g = Grid::new(1, 32, 8.0).unwrap();
        let dict = Arc::new(build_dictionary(&g, DictionaryPolicy::AllCentersLogRadii { k_radii: 10 }).unwrap());
        let f = random_field(g, 5);
        let m = MaximalSpec::hardy_littlewood(dict.clone());
        let once = maximal_apply(&f, &m).unwrap();
        let twice = maximal_apply(&once, &m).unwrap();
        assert_eq!(maximal_apply(&f, &m.clone().composed(1)).unwrap(), twice);
        // An extra ball can only raise the output.
        let extra = Arc::new(
            build_dictionary(&g, DictionaryPolicy::AllCentersLogRadii { k_radii: 10 })
                .unwrap()
                .with_extra_balls(vec![Ball::new(&g, vec![1.3], 2.9).unwrap()])
                .unwrap(),
        );
        let more = maximal_apply(&f, &MaximalSpec::hardy_littlewood(extra)).unwrap();
        for i in 0..g.len() {
            assert!(more.values()[i] >= once.values()[i]);
        }
    }

    #[test]
    fn refining_the_radius_ladder_changes_little() {
        let g = Grid::new(1, 128, 16.0).unwrap();
        let f = GridFunction::from_fn(g, |x| (-(x[0] - 8.0).powi(2)).exp() + 0.1).unwrap();
        let dict = Arc::new(build_dictionary(&g, DictionaryPolicy::AllCentersLogRadii { k_radii: 256 }).unwrap());
        let a = maximal_apply(&f, &MaximalSpec::hardy_littlewood(dict.clone())).unwrap();
        let b = maximal_apply(&f, &MaximalSpec::hardy_littlewood(Arc::new(dict.refined().unwrap()))).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((y - x).abs() <= 0.01 * y, "{x} vs {y}");
        }
    }
}
