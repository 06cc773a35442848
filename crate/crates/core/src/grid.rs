//! Periodic grids, fields on them, balls under the periodic metric and the
//! cell-sum quadrature every integral in the crate is built on.
//!
//! The domain is the flat torus `[0, side)^d` sampled at `n` points per axis.
//! Grid point `i` sits at `m(i) * spacing` where `m(i)` is its row-major
//! multi-index (last axis fastest). All integrals are midpoint cell sums with
//! weight `spacing^d`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};

/// Discrete periodic domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    n: usize,
    side: f64,
}

impl Grid {
    pub fn new(dim: usize, n: usize, side: f64) -> Result<Self> {
        if dim == 0 {
            return Err(LabError::InvalidGrid("dimension must be at least 1".into()));
        }
        if n < 4 {
            return Err(LabError::InvalidGrid(format!("n = {n}: need at least 4 points per axis")));
        }
        if n % 2 != 0 {
            return Err(LabError::InvalidGrid(format!(
                "n = {n} is odd; spectral operators need an even point count"
            )));
        }
        if !(side.is_finite() && side > 0.0) {
            return Err(LabError::InvalidGrid(format!("side = {side} must be positive and finite")));
        }
        let total = (n as u128).checked_pow(dim as u32);
        match total {
            Some(t) if t <= u32::MAX as u128 => {}
            _ => return Err(LabError::InvalidGrid(format!("n^d = {n}^{dim} is too large"))),
        }
        Ok(Self { dim, n, side })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    pub fn spacing(&self) -> f64 {
        self.side / self.n as f64
    }

    /// Quadrature weight of one cell, `spacing^d`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Total number of grid points, `n^d`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn volume(&self) -> f64 {
        self.side.powi(self.dim as i32)
    }

    /// Largest possible periodic distance, `side * sqrt(d) / 2`.
    pub fn max_distance(&self) -> f64 {
        self.side * (self.dim as f64).sqrt() / 2.0
    }

    pub fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        let mut m = vec![0; self.dim];
        for a in (0..self.dim).rev() {
            m[a] = idx % self.n;
            idx /= self.n;
        }
        m
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi.iter().fold(0, |acc, &m| acc * self.n + (m % self.n))
    }

    /// Coordinates of grid point `idx`.
    pub fn point(&self, idx: usize) -> Vec<f64> {
        let h = self.spacing();
        self.multi_index(idx).into_iter().map(|m| m as f64 * h).collect()
    }

    /// Index of the grid point nearest to `x` (coordinates taken modulo `side`).
    pub fn nearest_index(&self, x: &[f64]) -> usize {
        let h = self.spacing();
        let n = self.n as i64;
        let multi: Vec<usize> = x
            .iter()
            .map(|&c| ((c / h).round() as i64).rem_euclid(n) as usize)
            .collect();
        self.flat_index(&multi)
    }

    /// Periodic distance between two points of the box.
    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(&x, &y)| {
                let mut t = (x - y) % self.side;
                if t > self.side / 2.0 {
                    t -= self.side;
                } else if t < -self.side / 2.0 {
                    t += self.side;
                }
                t * t
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Periodic distance between grid points, computed on the integer lattice.
    pub fn index_distance(&self, i: usize, j: usize) -> f64 {
        let n = self.n;
        let mut acc = 0usize;
        let (mut a, mut b) = (i, j);
        for _ in 0..self.dim {
            let da = a % n;
            let db = b % n;
            let k = (da + n - db) % n;
            let s = k.min(n - k);
            acc += s * s;
            a /= n;
            b /= n;
        }
        (acc as f64).sqrt() * self.spacing()
    }

    /// Index of the point `idx` shifted by a multi-index residue offset.
    pub fn shifted(&self, idx: usize, offset: &[usize]) -> usize {
        let n = self.n;
        let mut out = 0;
        let mut stride = 1;
        let mut rest = idx;
        for a in (0..self.dim).rev() {
            let m = rest % n;
            rest /= n;
            out += ((m + offset[a]) % n) * stride;
            stride *= n;
        }
        out
    }

    pub fn ensure_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(LabError::GridMismatch(format!(
                "(d={}, n={}, side={}) vs (d={}, n={}, side={})",
                self.dim, self.n, self.side, other.dim, other.n, other.side
            )))
        }
    }
}

/// Real-valued field sampled on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(invalid(format!(
                "expected {} values for the grid, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("non-finite value at index {i}")));
        }
        Ok(Self { grid, values })
    }

    /// Same as [`GridFunction::new`] but also requires `values >= 0`
    /// (weights and potentials).
    pub fn nonnegative(grid: Grid, values: Vec<f64>) -> Result<Self> {
        let f = Self::new(grid, values)?;
        if let Some(i) = f.values.iter().position(|&v| v < 0.0) {
            return Err(invalid(format!("negative value {} at index {i}", f.values[i])));
        }
        Ok(f)
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self { grid, values: vec![c; grid.len()] }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn from_fn(grid: Grid, mut f: impl FnMut(&[f64]) -> f64) -> Result<Self> {
        let values = (0..grid.len()).map(|i| f(&grid.point(i))).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn abs(&self) -> Self {
        self.map(f64::abs)
    }

    pub fn scaled(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    pub fn is_nonnegative(&self) -> bool {
        self.values.iter().all(|&v| v >= 0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Translate the field by a multi-index residue offset:
    /// `out[x + offset] = self[x]`.
    pub fn translated(&self, offset: &[usize]) -> Self {
        let mut out = vec![0.0; self.values.len()];
        for (i, &v) in self.values.iter().enumerate() {
            out[self.grid.shifted(i, offset)] = v;
        }
        Self { grid: self.grid, values: out }
    }

    /// Pointwise product.
    pub fn product(&self, other: &GridFunction) -> Result<Self> {
        self.grid.ensure_same(&other.grid)?;
        Ok(Self {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect(),
        })
    }

    /// Inner product `Σ f g h^d`.
    pub fn inner(&self, other: &GridFunction) -> Result<f64> {
        self.grid.ensure_same(&other.grid)?;
        Ok(dot(&self.values, &other.values) * self.grid.cell_volume())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Euclidean ball under the periodic metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    center: Vec<f64>,
    radius: f64,
}

impl Ball {
    pub fn new(grid: &Grid, center: Vec<f64>, radius: f64) -> Result<Self> {
        if center.len() != grid.dim() {
            return Err(invalid(format!(
                "ball center has {} coordinates on a {}-dimensional grid",
                center.len(),
                grid.dim()
            )));
        }
        if !(radius > 0.0 && radius <= grid.side() / 2.0) {
            return Err(invalid(format!(
                "ball radius {radius} outside (0, side/2 = {}]",
                grid.side() / 2.0
            )));
        }
        Ok(Self { center, radius })
    }

    /// Ball centred on grid point `idx`.
    pub fn at_index(grid: &Grid, idx: usize, radius: f64) -> Result<Self> {
        Self::new(grid, grid.point(idx), radius)
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn contains(&self, grid: &Grid, x: &[f64]) -> bool {
        grid.distance(&self.center, x) < self.radius
    }
}

/// Grid indices inside `ball`, in increasing index order.
pub fn ball_points(grid: &Grid, ball: &Ball) -> Result<Vec<usize>> {
    if ball.center.len() != grid.dim() || !(ball.radius > 0.0 && ball.radius <= grid.side() / 2.0) {
        return Err(invalid(format!("ball radius {} outside (0, side/2]", ball.radius)));
    }
    let h = grid.spacing();
    let n = grid.n() as i64;
    let r = ball.radius;
    // Per-axis candidate residues within distance r of the center coordinate.
    let axes: Vec<Vec<(usize, f64)>> = ball
        .center
        .iter()
        .map(|&c| {
            let mut v: Vec<(usize, f64)> = (0..n)
                .filter_map(|m| {
                    let mut t = (m as f64 * h - c) % grid.side();
                    if t > grid.side() / 2.0 {
                        t -= grid.side();
                    } else if t < -grid.side() / 2.0 {
                        t += grid.side();
                    }
                    (t.abs() < r).then_some((m as usize, t * t))
                })
                .collect();
            v.sort_by_key(|p| p.0);
            v
        })
        .collect();
    let mut out = Vec::new();
    let mut multi = vec![0usize; grid.dim()];
    collect_ball(grid, &axes, 0, 0.0, r, &mut multi, &mut out);
    out.sort_unstable();
    Ok(out)
}

fn collect_ball(
    grid: &Grid,
    axes: &[Vec<(usize, f64)>],
    axis: usize,
    acc: f64,
    r: f64,
    multi: &mut Vec<usize>,
    out: &mut Vec<usize>,
) {
    if axis == axes.len() {
        // Same rounding path as `Grid::distance`.
        if acc.sqrt() < r {
            out.push(grid.flat_index(multi));
        }
        return;
    }
    for &(m, t2) in &axes[axis] {
        if acc + t2 < r * r * (1.0 + 1e-12) {
            multi[axis] = m;
            collect_ball(grid, axes, axis + 1, acc + t2, r, multi, out);
        }
    }
}

/// All lattice offsets of the torus sorted by periodic length. A grid-centred
/// ball of radius `r` is exactly the prefix of offsets shorter than `r`.
#[derive(Debug, Clone)]
pub struct OffsetTable {
    grid: Grid,
    residues: Vec<usize>,
    lengths: Vec<f64>,
}

impl OffsetTable {
    pub fn new(grid: &Grid) -> Self {
        let d = grid.dim();
        let n = grid.n();
        let h = grid.spacing();
        let mut entries: Vec<(u64, usize)> = (0..grid.len())
            .map(|i| {
                let m = grid.multi_index(i);
                let s: u64 = m.iter().map(|&k| (k.min(n - k) as u64).pow(2)).sum();
                (s, i)
            })
            .collect();
        entries.sort_unstable();
        let mut residues = Vec::with_capacity(entries.len() * d);
        let mut lengths = Vec::with_capacity(entries.len());
        for &(s, i) in &entries {
            residues.extend(grid.multi_index(i));
            lengths.push((s as f64).sqrt() * h);
        }
        Self { grid: *grid, residues, lengths }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lengths.is_empty()
    }

    /// Number of offsets strictly shorter than `r`.
    pub fn count_within(&self, r: f64) -> usize {
        self.lengths.partition_point(|&l| l < r)
    }

    pub fn length(&self, k: usize) -> f64 {
        self.lengths[k]
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn residue(&self, k: usize) -> &[usize] {
        let d = self.grid.dim();
        &self.residues[k * d..(k + 1) * d]
    }

    /// Index of `center + offset k`.
    pub fn apply(&self, center: usize, k: usize) -> usize {
        self.grid.shifted(center, self.residue(k))
    }

    /// Indices of the grid-centred ball `B(center, r)`, nearest first.
    pub fn ball(&self, center: usize, r: f64) -> impl Iterator<Item = usize> + '_ {
        (0..self.count_within(r)).map(move |k| self.apply(center, k))
    }
}

/// Shared offset table (cheap to clone).
pub type SharedOffsets = Arc<OffsetTable>;

/// `Σ_{x ∈ region} f(x) w(x) h^d`; region defaults to the whole torus and
/// `w` to 1.
pub fn integrate(f: &GridFunction, w: Option<&GridFunction>, region: Option<&Ball>) -> Result<f64> {
    let grid = f.grid();
    if let Some(w) = w {
        grid.ensure_same(w.grid())?;
    }
    let weight = |i: usize| w.map_or(1.0, |w| w.values[i]);
    let sum = match region {
        None => (0..grid.len()).map(|i| f.values[i] * weight(i)).sum::<f64>(),
        Some(b) => ball_points(grid, b)?.into_iter().map(|i| f.values[i] * weight(i)).sum(),
    };
    Ok(sum * grid.cell_volume())
}

/// `(∫ |f|^p w)^{1/p}`.
pub fn lp_norm(f: &GridFunction, p: f64, w: Option<&GridFunction>) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(invalid(format!("lp_norm needs p >= 1, got {p}")));
    }
    let powered = f.map(|v| v.abs().powf(p));
    Ok(integrate(&powered, w, None)?.powf(1.0 / p))
}

/// Weighted measure `w({x : |f(x)| > λ})`.
pub fn level_measure(f: &GridFunction, w: &GridFunction, lambda: f64) -> Result<f64> {
    f.grid().ensure_same(w.grid())?;
    if !(lambda > 0.0) {
        return Err(invalid(format!("level_measure needs λ > 0, got {lambda}")));
    }
    let s: f64 = f
        .values()
        .iter()
        .zip(w.values())
        .filter(|(v, _)| v.abs() > lambda)
        .map(|(_, w)| w)
        .sum();
    Ok(s * f.grid().cell_volume())
}

/// Volume of the unit ball in `d` dimensions.
pub fn unit_ball_volume(d: usize) -> f64 {
    use std::f64::consts::PI;
    match d {
        0 => 1.0,
        1 => 2.0,
        _ => 2.0 * PI / d as f64 * unit_ball_volume(d - 2),
    }
}
