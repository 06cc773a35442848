//! Seeded test families of functions `f` and weights `w`.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::grid::{Grid, GridFunction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    /// Random trigonometric polynomial with low frequencies.
    FourierBand,
    /// Gaussian bump of random width and sign.
    Spike,
    /// `sign((y - x0)·e)` on a ball around `x0` (odd step across a hyperplane).
    Step,
    /// Indicator of a ball.
    Indicator,
    /// A step refined towards the extremal function of the drawn weight by
    /// the nonlinear power iteration (linear operators only).
    Extremal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightKind {
    /// A single cell.
    Spike,
    /// Indicator of a ball.
    Indicator,
    /// `(1 + dist(x1, ·))^α`, frozen beyond radius `R`.
    PowerEnvelope,
    /// Independent uniform values raised to a random power.
    RandomPositive,
}

/// The default function families (the power-iteration family is opt-in).
pub const ALL_F: [FamilyKind; 4] = [FamilyKind::FourierBand, FamilyKind::Spike, FamilyKind::Step, FamilyKind::Indicator];
pub const ALL_W: [WeightKind; 4] =
    [WeightKind::Spike, WeightKind::Indicator, WeightKind::PowerEnvelope, WeightKind::RandomPositive];

/// Which kinds to draw from (uniformly).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFamily {
    pub f_kinds: Vec<FamilyKind>,
    pub w_kinds: Vec<WeightKind>,
}

impl Default for TestFamily {
    fn default() -> Self {
        Self { f_kinds: ALL_F.to_vec(), w_kinds: ALL_W.to_vec() }
    }
}

#[derive(Debug, Clone)]
pub struct TrialPair {
    pub f: GridFunction,
    pub w: GridFunction,
    pub f_kind: FamilyKind,
    pub w_kind: WeightKind,
}

fn log_uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp()
}

impl TestFamily {
    pub fn draw(&self, grid: &Grid, rng: &mut impl Rng) -> TrialPair {
        let f_kind = self.f_kinds[rng.random_range(0..self.f_kinds.len())];
        let w_kind = self.w_kinds[rng.random_range(0..self.w_kinds.len())];
        let npts = grid.len();
        let d = grid.dim();
        let h = grid.spacing();
        let x0 = rng.random_range(0..npts);
        let p0 = grid.point(x0);
        let r = log_uniform(rng, 1.5 * h, grid.side() / 4.0);
        let dist: Vec<f64> = (0..npts).map(|y| grid.index_distance(x0, y)).collect();

        let f: Vec<f64> = match f_kind {
            FamilyKind::FourierBand => {
                let modes: Vec<(Vec<f64>, f64, f64)> = (0..6)
                    .map(|_| {
                        let k: Vec<f64> = (0..d).map(|_| rng.random_range(-4i32..=4) as f64).collect();
                        (k, rng.random_range(-1.0..1.0), rng.random_range(0.0..2.0 * PI))
                    })
                    .collect();
                (0..npts)
                    .map(|y| {
                        let x = grid.point(y);
                        modes
                            .iter()
                            .map(|(k, a, ph)| {
                                let arg: f64 = k.iter().zip(&x).map(|(ki, xi)| ki * xi).sum::<f64>();
                                a * (2.0 * PI * arg / grid.side() + ph).cos()
                            })
                            .sum()
                    })
                    .collect()
            }
            FamilyKind::Spike => {
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                let width = (r / 2.0).max(0.5 * h);
                dist.iter().map(|t| sign * (-(t * t) / (2.0 * width * width)).exp()).collect()
            }
            FamilyKind::Step | FamilyKind::Extremal => {
                let axis = rng.random_range(0..d);
                (0..npts)
                    .map(|y| {
                        if dist[y] >= r {
                            return 0.0;
                        }
                        let mut diff = grid.point(y)[axis] - p0[axis];
                        // periodic signed difference
                        let side = grid.side();
                        if diff > side / 2.0 {
                            diff -= side;
                        } else if diff < -side / 2.0 {
                            diff += side;
                        }
                        if diff.abs() < 1e-12 * side {
                            0.0
                        } else {
                            diff.signum()
                        }
                    })
                    .collect()
            }
            FamilyKind::Indicator => dist.iter().map(|t| if *t < r { 1.0 } else { 0.0 }).collect(),
        };

        let x1 = if rng.random::<bool>() { x0 } else { rng.random_range(0..npts) };
        let d1: Vec<f64> = (0..npts).map(|y| grid.index_distance(x1, y)).collect();
        let rw = log_uniform(rng, 0.6 * h, grid.side() / 4.0);
        let w: Vec<f64> = match w_kind {
            WeightKind::Spike => (0..npts).map(|y| if y == x1 { 1.0 } else { 0.0 }).collect(),
            WeightKind::Indicator => d1.iter().map(|t| if *t < rw { 1.0 } else { 0.0 }).collect(),
            WeightKind::PowerEnvelope => {
                let alpha = rng.random_range(-(d as f64) + 0.25..1.0);
                d1.iter().map(|t| (1.0 + t.min(rw) / h).powf(alpha)).collect()
            }
            WeightKind::RandomPositive => {
                let e = rng.random_range(1.0..4.0);
                (0..npts).map(|_| rng.random::<f64>().powf(e)).collect()
            }
        };
        TrialPair {
            f: GridFunction::new(*grid, f).expect("finite values"),
            w: GridFunction::nonnegative(*grid, w).expect("nonnegative weights"),
            f_kind,
            w_kind,
        }
    }
}
