//! FFT plumbing and the discrete symbols of the differential and Riesz-type
//! multipliers.
//!
//! Frequencies: index `m` on an axis of `n` points maps to the signed integer
//! `m' = m` for `m < n/2`, `m' = m - n` for `m > n/2`; `m = n/2` is the
//! Nyquist index. The physical frequency is `ξ = 2π m'/side`, with
//! `ξ_N = π n / side` at Nyquist.
//!
//! At the Nyquist index an odd symbol such as `iξ_j` cannot stay odd (the mode
//! is its own mirror image). Two conventions are offered: [`NyquistMode::Zero`]
//! drops the mode (skew-adjoint, used by the classical Riesz transforms) and
//! [`NyquistMode::Real`] replaces `iξ_N` by the real number `ξ_N`, which keeps
//! outputs real and makes `Σ_j |symbol_j|^2 = |ξ|^2` exact, so that `∇*∇ = -Δ`
//! holds to rounding.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::grid::Grid;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NyquistMode {
    Zero,
    Real,
}

/// Planned forward/inverse FFTs of one axis length, applied along every axis.
#[derive(Clone)]
pub struct FftNd {
    grid: Grid,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FftNd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "FftNd({:?})", self.grid)
    }
}

impl FftNd {
    pub fn new(grid: &Grid) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            grid: *grid,
            forward: planner.plan_fft_forward(grid.n()),
            inverse: planner.plan_fft_inverse(grid.n()),
        }
    }

    fn transform(&self, data: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        let n = self.grid.n();
        let d = self.grid.dim();
        let total = data.len();
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        for axis in 0..d {
            let stride = n.pow((d - 1 - axis) as u32);
            let block = stride * n;
            for base in (0..total).step_by(block) {
                for off in 0..stride {
                    let start = base + off;
                    for (k, v) in line.iter_mut().enumerate() {
                        *v = data[start + k * stride];
                    }
                    fft.process_with_scratch(&mut line, &mut scratch);
                    for (k, v) in line.iter().enumerate() {
                        data[start + k * stride] = *v;
                    }
                }
            }
        }
    }

    /// Unnormalized forward transform.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, &self.forward);
    }

    /// Inverse transform including the `1/n^d` normalization.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, &self.inverse);
        let s = 1.0 / data.len() as f64;
        for v in data.iter_mut() {
            *v *= s;
        }
    }
}

/// Per-axis wave numbers of every grid frequency, with Nyquist flags.
#[derive(Debug, Clone)]
pub struct Frequencies {
    pub dim: usize,
    /// `xi[f * d + a]`: physical frequency of index `f` along axis `a`
    /// (`+ξ_N` at Nyquist).
    pub xi: Vec<f64>,
    pub nyquist: Vec<bool>,
}

impl Frequencies {
    pub fn new(grid: &Grid) -> Self {
        let n = grid.n();
        let d = grid.dim();
        let mut xi = Vec::with_capacity(grid.len() * d);
        let mut nyquist = Vec::with_capacity(grid.len() * d);
        for f in 0..grid.len() {
            for m in grid.multi_index(f) {
                let signed = if m < n / 2 {
                    m as f64
                } else if m == n / 2 {
                    (n / 2) as f64
                } else {
                    m as f64 - n as f64
                };
                xi.push(2.0 * PI * signed / grid.side());
                nyquist.push(m == n / 2);
            }
        }
        Self { dim: d, xi, nyquist }
    }

    pub fn len(&self) -> usize {
        self.xi.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.xi.is_empty()
    }

    pub fn xi(&self, f: usize, a: usize) -> f64 {
        self.xi[f * self.dim + a]
    }

    pub fn is_nyquist(&self, f: usize, a: usize) -> bool {
        self.nyquist[f * self.dim + a]
    }

    pub fn norm2(&self, f: usize) -> f64 {
        (0..self.dim).map(|a| self.xi(f, a).powi(2)).sum()
    }

    /// Symbol of `∂_j`.
    pub fn derivative(&self, f: usize, j: usize, mode: NyquistMode) -> Complex64 {
        let x = self.xi(f, j);
        if self.is_nyquist(f, j) {
            match mode {
                NyquistMode::Zero => Complex64::new(0.0, 0.0),
                NyquistMode::Real => Complex64::new(x, 0.0),
            }
        } else {
            Complex64::new(0.0, x)
        }
    }

    /// Symbol of `∂_j ∂_k`: `-ξ_j ξ_k`, with mixed terms dropped on Nyquist axes.
    pub fn second_derivative(&self, f: usize, j: usize, k: usize) -> Complex64 {
        if j != k && (self.is_nyquist(f, j) || self.is_nyquist(f, k)) {
            return Complex64::new(0.0, 0.0);
        }
        Complex64::new(-self.xi(f, j) * self.xi(f, k), 0.0)
    }
}
