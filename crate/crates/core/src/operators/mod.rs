//! Linear operators on grid functions: Fourier multipliers, the Schrödinger
//! operator `L = -Δ + V` with its spectral calculus, compositions, adjoints
//! and kernel extraction.
//!
//! An operator is a chain of [`Stage`]s acting on *channelled* fields: a
//! vector of `channels * n^d` reals (channel-major). Gradients map one
//! channel to `d`, Hessians to `d^2`; pointwise magnitudes `|Tf|` are taken
//! over channels.

pub mod fourier;
pub mod pde;
pub mod schrodinger;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use ndarray::{s, Array2, ArrayView2};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};
use crate::grid::{Grid, GridFunction};
use crate::seed::rng_for;

pub use fourier::NyquistMode;
use fourier::{FftNd, Frequencies};
pub use pde::{solve_pde, PdeRhs, PdeSolution};
pub use schrodinger::{assemble_schrodinger, build_operator, SchrodingerOperator};

/// Largest `n^d` for dense operators and kernels.
pub const DENSE_BUDGET: usize = 20_000;

/// Relative size of the zero mode tolerated by mean-zero operators.
pub const ZERO_MODE_TOL: f64 = 1e-10;

/// A Fourier multiplier from `in_ch` to `out_ch` channels.
#[derive(Debug)]
pub struct Multiplier {
    label: String,
    in_ch: usize,
    out_ch: usize,
    /// `symbols[o * in_ch + i][frequency]`.
    symbols: Vec<Vec<Complex64>>,
    mean_zero: bool,
    fft: FftNd,
}

/// Eigendecomposition `A = U diag(λ) U^T` (eigenvectors in columns).
#[derive(Debug)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: Array2<f64>,
}

#[derive(Debug, Clone)]
pub enum Stage {
    Multiplier(Arc<Multiplier>),
    /// `U diag(g) U^T`, applied to each channel.
    Spectral { eigen: Arc<Eigen>, g: Arc<Vec<f64>> },
    /// Pointwise multiplication, applied to each channel.
    Diagonal(Arc<Vec<f64>>),
    /// Dense matrix over grid points, applied to each channel.
    Dense { matrix: Arc<Array2<f64>>, transposed: bool },
}

impl Stage {
    fn channels(&self, in_ch: usize) -> Result<usize> {
        match self {
            Stage::Multiplier(m) if m.in_ch == in_ch => Ok(m.out_ch),
            Stage::Multiplier(m) => Err(LabError::Internal(format!(
                "multiplier `{}` expects {} channels, got {in_ch}",
                m.label, m.in_ch
            ))),
            _ => Ok(in_ch),
        }
    }

    fn adjoint(&self) -> Stage {
        match self {
            Stage::Multiplier(m) => {
                let mut symbols = vec![Vec::new(); m.in_ch * m.out_ch];
                for o in 0..m.out_ch {
                    for i in 0..m.in_ch {
                        symbols[i * m.out_ch + o] = m.symbols[o * m.in_ch + i].iter().map(|z| z.conj()).collect();
                    }
                }
                Stage::Multiplier(Arc::new(Multiplier {
                    label: format!("{}*", m.label),
                    in_ch: m.out_ch,
                    out_ch: m.in_ch,
                    symbols,
                    mean_zero: m.mean_zero,
                    fft: m.fft.clone(),
                }))
            }
            Stage::Dense { matrix, transposed } => Stage::Dense { matrix: matrix.clone(), transposed: !transposed },
            other => other.clone(),
        }
    }

    /// Applies the stage to every row of `batch` (rows are channelled fields).
    fn apply(&self, batch: Array2<f64>, npts: usize) -> Result<Array2<f64>> {
        match self {
            Stage::Multiplier(m) => m.apply(batch, npts),
            Stage::Spectral { eigen, g } => {
                let u = &eigen.vectors;
                let mut out = batch;
                let ch = out.ncols() / npts;
                for c in 0..ch {
                    let block = out.slice(s![.., c * npts..(c + 1) * npts]);
                    let mut coef = block.dot(u);
                    for mut row in coef.rows_mut() {
                        for (v, gk) in row.iter_mut().zip(g.iter()) {
                            *v *= gk;
                        }
                    }
                    let back = coef.dot(&u.t());
                    out.slice_mut(s![.., c * npts..(c + 1) * npts]).assign(&back);
                }
                Ok(out)
            }
            Stage::Diagonal(w) => {
                let mut out = batch;
                for mut row in out.rows_mut() {
                    for (k, v) in row.iter_mut().enumerate() {
                        *v *= w[k % npts];
                    }
                }
                Ok(out)
            }
            Stage::Dense { matrix, transposed } => {
                let mut out = batch;
                let ch = out.ncols() / npts;
                for c in 0..ch {
                    let block = out.slice(s![.., c * npts..(c + 1) * npts]);
                    // rows are vectors: y^T = x^T A^T
                    let res = if *transposed { block.dot(&**matrix) } else { block.dot(&matrix.t()) };
                    out.slice_mut(s![.., c * npts..(c + 1) * npts]).assign(&res);
                }
                Ok(out)
            }
        }
    }
}

impl Multiplier {
    pub fn new(grid: &Grid, label: impl Into<String>, in_ch: usize, out_ch: usize, symbols: Vec<Vec<Complex64>>, mean_zero: bool) -> Self {
        debug_assert_eq!(symbols.len(), in_ch * out_ch);
        Self { label: label.into(), in_ch, out_ch, symbols, mean_zero, fft: FftNd::new(grid) }
    }

    fn apply(&self, batch: Array2<f64>, npts: usize) -> Result<Array2<f64>> {
        let rows = batch.nrows();
        let results: Vec<Result<Vec<f64>>> = (0..rows)
            .into_par_iter()
            .map(|r| {
                let src = batch.row(r);
                let mut dst = vec![0.0; self.out_ch * npts];
                let mut spectra = Vec::with_capacity(self.in_ch);
                for i in 0..self.in_ch {
                    let chunk = src.slice(s![i * npts..(i + 1) * npts]);
                    let mut z: Vec<Complex64> = chunk.iter().map(|&v| Complex64::new(v, 0.0)).collect();
                    self.fft.forward(&mut z);
                    if self.mean_zero {
                        let mean = z[0].re / npts as f64;
                        let norm = (chunk.iter().map(|v| v * v).sum::<f64>() / npts as f64).sqrt();
                        if mean.abs() > ZERO_MODE_TOL * norm.max(f64::MIN_POSITIVE) {
                            return Err(LabError::ZeroMode {
                                op: self.label.clone(),
                                mean,
                                relative: mean.abs() / norm,
                            });
                        }
                    }
                    spectra.push(z);
                }
                let mut acc = vec![Complex64::new(0.0, 0.0); npts];
                for o in 0..self.out_ch {
                    acc.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
                    for (i, spec) in spectra.iter().enumerate() {
                        let sym = &self.symbols[o * self.in_ch + i];
                        for f in 0..npts {
                            acc[f] += sym[f] * spec[f];
                        }
                    }
                    self.fft.inverse(&mut acc);
                    for (k, z) in acc.iter().enumerate() {
                        dst[o * npts + k] = z.re;
                    }
                }
                Ok(dst)
            })
            .collect();
        let mut out = Array2::<f64>::zeros((rows, self.out_ch * npts));
        for (r, res) in results.into_iter().enumerate() {
            out.row_mut(r).assign(&ndarray::ArrayView1::from(&res?[..]));
        }
        Ok(out)
    }
}

/// The gradient `1 → d` channels (Nyquist convention chosen by `mode`).
pub fn gradient(grid: &Grid, mode: NyquistMode) -> Multiplier {
    let fr = Frequencies::new(grid);
    let symbols = (0..grid.dim())
        .map(|j| (0..grid.len()).map(|f| fr.derivative(f, j, mode)).collect())
        .collect();
    Multiplier::new(grid, "grad", 1, grid.dim(), symbols, false)
}

/// The Hessian `1 → d^2` channels, channel `j * d + k` = `∂_j ∂_k`.
pub fn hessian(grid: &Grid) -> Multiplier {
    let fr = Frequencies::new(grid);
    let d = grid.dim();
    let symbols = (0..d * d)
        .map(|c| (0..grid.len()).map(|f| fr.second_derivative(f, c / d, c % d)).collect())
        .collect();
    Multiplier::new(grid, "hess", 1, d * d, symbols, false)
}

/// `-Δ` with symbol `|ξ|^2`.
pub fn neg_laplacian(grid: &Grid) -> Multiplier {
    let fr = Frequencies::new(grid);
    let symbol = (0..grid.len()).map(|f| Complex64::new(fr.norm2(f), 0.0)).collect();
    Multiplier::new(grid, "-lap", 1, 1, vec![symbol], false)
}

/// Classical (translation-invariant) operators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum ClassicalOp {
    /// `iξ_j/|ξ|`.
    Riesz1 { j: usize },
    /// All first-order components, `1 → d` channels.
    Riesz1Vector,
    /// `-ξ_j ξ_k/|ξ|^2`.
    Riesz2 { j: usize, k: usize },
    /// All second-order components, `1 → d^2` channels.
    Riesz2Matrix,
    /// `|ξ|^{-2γ}`.
    FracLap { gamma: f64 },
    /// `|ξ|^{-1}`.
    FracInt,
    Identity,
}

fn riesz1_symbols(grid: &Grid, axes: &[usize], mode: NyquistMode) -> Vec<Vec<Complex64>> {
    let fr = Frequencies::new(grid);
    axes.iter()
        .map(|&j| {
            (0..grid.len())
                .map(|f| {
                    let n2 = fr.norm2(f);
                    if n2 == 0.0 {
                        Complex64::new(0.0, 0.0)
                    } else {
                        fr.derivative(f, j, mode) / n2.sqrt()
                    }
                })
                .collect()
        })
        .collect()
}

fn riesz2_symbols(grid: &Grid, pairs: &[(usize, usize)]) -> Vec<Vec<Complex64>> {
    let fr = Frequencies::new(grid);
    pairs
        .iter()
        .map(|&(j, k)| {
            (0..grid.len())
                .map(|f| {
                    let n2 = fr.norm2(f);
                    if n2 == 0.0 {
                        Complex64::new(0.0, 0.0)
                    } else {
                        fr.second_derivative(f, j, k) / n2
                    }
                })
                .collect()
        })
        .collect()
}

/// First-order Riesz transform `1 → d` with a chosen Nyquist convention
/// (`Real` matches the Schrödinger gradient; used for kernel comparisons).
pub fn riesz1_vector(grid: &Grid, mode: NyquistMode) -> LinearOperator {
    let axes: Vec<usize> = (0..grid.dim()).collect();
    let m = Multiplier::new(grid, "R1", 1, grid.dim(), riesz1_symbols(grid, &axes, mode), true);
    LinearOperator::from_stages(grid, format!("classical:R1{}", if mode == NyquistMode::Real { "~" } else { "" }), 1, vec![Stage::Multiplier(Arc::new(m))])
        .expect("channels are consistent")
}

pub fn assemble_classical(grid: &Grid, op: ClassicalOp) -> Result<LinearOperator> {
    let d = grid.dim();
    let fr = Frequencies::new(grid);
    let check_axis = |j: usize| {
        if j < d {
            Ok(())
        } else {
            Err(invalid(format!("axis {j} out of range for d = {d}")))
        }
    };
    let (label, out, symbols, mean_zero) = match op {
        ClassicalOp::Riesz1 { j } => {
            check_axis(j)?;
            (format!("classical:R1{j}"), 1, riesz1_symbols(grid, &[j], NyquistMode::Zero), true)
        }
        ClassicalOp::Riesz1Vector => {
            let axes: Vec<usize> = (0..d).collect();
            ("classical:R1".to_string(), d, riesz1_symbols(grid, &axes, NyquistMode::Zero), true)
        }
        ClassicalOp::Riesz2 { j, k } => {
            check_axis(j)?;
            check_axis(k)?;
            (format!("classical:R2{j}{k}"), 1, riesz2_symbols(grid, &[(j, k)]), true)
        }
        ClassicalOp::Riesz2Matrix => {
            let pairs: Vec<(usize, usize)> = (0..d * d).map(|c| (c / d, c % d)).collect();
            ("classical:R2".to_string(), d * d, riesz2_symbols(grid, &pairs), true)
        }
        ClassicalOp::FracLap { gamma } => {
            if !(gamma > 0.0 && gamma.is_finite()) {
                return Err(invalid(format!("fractional power γ must be positive, got {gamma}")));
            }
            let s = (0..grid.len())
                .map(|f| {
                    let n2 = fr.norm2(f);
                    Complex64::new(if n2 == 0.0 { 0.0 } else { n2.powf(-gamma) }, 0.0)
                })
                .collect();
            (format!("classical:fraclap:{gamma}"), 1, vec![s], true)
        }
        ClassicalOp::FracInt => {
            let s = (0..grid.len())
                .map(|f| {
                    let n2 = fr.norm2(f);
                    Complex64::new(if n2 == 0.0 { 0.0 } else { n2.powf(-0.5) }, 0.0)
                })
                .collect();
            ("classical:fracint".to_string(), 1, vec![s], true)
        }
        ClassicalOp::Identity => return Ok(LinearOperator::identity(grid)),
    };
    let m = Multiplier::new(grid, label.clone(), 1, out, symbols, mean_zero);
    LinearOperator::from_stages(grid, label, 1, vec![Stage::Multiplier(Arc::new(m))])
}

/// A linear map between channelled fields on one grid.
#[derive(Debug, Clone)]
pub struct LinearOperator {
    grid: Grid,
    name: String,
    in_ch: usize,
    out_ch: usize,
    /// Applied first to last.
    stages: Vec<Stage>,
}

impl LinearOperator {
    pub fn from_stages(grid: &Grid, name: impl Into<String>, in_ch: usize, stages: Vec<Stage>) -> Result<Self> {
        let mut ch = in_ch;
        for st in &stages {
            ch = st.channels(ch)?;
        }
        Ok(Self { grid: *grid, name: name.into(), in_ch, out_ch: ch, stages })
    }

    pub fn identity(grid: &Grid) -> Self {
        Self { grid: *grid, name: "Identity".into(), in_ch: 1, out_ch: 1, stages: vec![] }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn in_channels(&self) -> usize {
        self.in_ch
    }

    pub fn out_channels(&self) -> usize {
        self.out_ch
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    /// True when some stage only accepts mean-zero inputs.
    pub fn requires_mean_zero(&self) -> bool {
        self.stages.iter().any(|s| matches!(s, Stage::Multiplier(m) if m.mean_zero))
    }

    /// `self ∘ first`.
    pub fn after(&self, first: &LinearOperator) -> Result<Self> {
        self.grid.ensure_same(&first.grid)?;
        let mut stages = first.stages.clone();
        stages.extend(self.stages.iter().cloned());
        Self::from_stages(&self.grid, format!("{}∘{}", self.name, first.name), first.in_ch, stages)
    }

    pub fn adjoint(&self) -> Self {
        let name = match self.name.strip_suffix('*') {
            Some(base) => base.to_string(),
            None => format!("{}*", self.name),
        };
        Self {
            grid: self.grid,
            name,
            in_ch: self.out_ch,
            out_ch: self.in_ch,
            stages: self.stages.iter().rev().map(Stage::adjoint).collect(),
        }
    }

    /// Applies the operator to each row of `batch` (`rows x in_ch * n^d`).
    pub fn apply_batch(&self, batch: Array2<f64>) -> Result<Array2<f64>> {
        let npts = self.grid.len();
        if batch.ncols() != self.in_ch * npts {
            return Err(invalid(format!(
                "operator {} expects {} values per input, got {}",
                self.name,
                self.in_ch * npts,
                batch.ncols()
            )));
        }
        let mut x = batch;
        for st in &self.stages {
            x = st.apply(x, npts)?;
        }
        Ok(x)
    }

    /// Applies the operator to one channelled field.
    pub fn apply_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        let batch = Array2::from_shape_vec((1, x.len()), x.to_vec()).map_err(|e| LabError::Internal(e.to_string()))?;
        Ok(self.apply_batch(batch)?.into_raw_vec_and_offset().0)
    }

    /// Output channels of `T f` for a scalar `f`.
    pub fn apply(&self, f: &GridFunction) -> Result<Vec<GridFunction>> {
        self.grid.ensure_same(f.grid())?;
        if self.in_ch != 1 {
            return Err(invalid(format!("operator {} acts on {}-channel fields", self.name, self.in_ch)));
        }
        let out = self.apply_vec(f.values())?;
        out.chunks(self.grid.len()).map(|c| GridFunction::new(self.grid, c.to_vec())).collect()
    }

    /// Pointwise magnitude `|Tf|` (Euclidean norm over output channels).
    pub fn apply_abs(&self, f: &GridFunction) -> Result<GridFunction> {
        self.grid.ensure_same(f.grid())?;
        let out = self.apply_vec(f.values())?;
        Ok(pointwise_norm(&self.grid, &out))
    }

    /// Quadrature pairing `⟨Tx, y⟩` of channelled fields.
    pub fn pairing(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let tx = self.apply_vec(x)?;
        if tx.len() != y.len() {
            return Err(invalid("pairing: channel mismatch"));
        }
        Ok(crate::grid::dot(&tx, y) * self.grid.cell_volume())
    }

    /// Random channelled input, projected to mean zero when required.
    pub fn random_input(&self, rng: &mut impl Rng) -> Vec<f64> {
        random_field(&self.grid, self.in_ch, self.requires_mean_zero(), rng)
    }

    /// Random channelled output-side field (for adjoint pairing).
    pub fn random_output(&self, rng: &mut impl Rng) -> Vec<f64> {
        random_field(&self.grid, self.out_ch, self.requires_mean_zero(), rng)
    }
}

fn random_field(grid: &Grid, ch: usize, mean_zero: bool, rng: &mut impl Rng) -> Vec<f64> {
    let npts = grid.len();
    let mut v: Vec<f64> = (0..ch * npts).map(|_| rng.random_range(-1.0..1.0)).collect();
    if mean_zero {
        for c in v.chunks_mut(npts) {
            project_mean_zero(c);
        }
    }
    v
}

pub fn project_mean_zero(v: &mut [f64]) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= m);
}

/// Pointwise Euclidean norm over channels of a channelled field.
pub fn pointwise_norm(grid: &Grid, v: &[f64]) -> GridFunction {
    let npts = grid.len();
    let vals = (0..npts)
        .map(|x| v.iter().skip(x).step_by(npts).map(|t| t * t).sum::<f64>().sqrt())
        .collect();
    GridFunction::new(*grid, vals).expect("finite values")
}

/// Relative adjoint defect `|⟨Tf,g⟩ - ⟨f,T*g⟩| / (‖Tf‖‖g‖ + ‖f‖‖T*g‖)` over
/// random pairs (max).
pub fn adjoint_defect(t: &LinearOperator, pairs: usize, seed: u64) -> Result<f64> {
    let ts = t.adjoint();
    let h = t.grid.cell_volume();
    let mut worst = 0.0f64;
    for k in 0..pairs {
        let mut rng = rng_for(seed, 7, k as u64);
        let f = t.random_input(&mut rng);
        let g = t.random_output(&mut rng);
        let tf = t.apply_vec(&f)?;
        let tsg = ts.apply_vec(&g)?;
        let lhs = crate::grid::dot(&tf, &g) * h;
        let rhs = crate::grid::dot(&f, &tsg) * h;
        let n = |v: &[f64]| (crate::grid::dot(v, v) * h).sqrt();
        let scale = n(&tf) * n(&g) + n(&f) * n(&tsg);
        if scale > 0.0 {
            worst = worst.max((lhs - rhs).abs() / scale);
        }
    }
    Ok(worst)
}

/// `‖T‖_{2→2}` estimated by power iteration on `T*T`.
pub fn operator_norm(t: &LinearOperator, iters: usize, seed: u64) -> Result<f64> {
    let ts = t.adjoint();
    let mut rng = rng_for(seed, 8, 0);
    let mut x = t.random_input(&mut rng);
    let mut est = 0.0;
    for _ in 0..iters {
        let nx = crate::grid::dot(&x, &x).sqrt();
        if nx == 0.0 {
            return Ok(0.0);
        }
        x.iter_mut().for_each(|v| *v /= nx);
        let tx = t.apply_vec(&x)?;
        est = crate::grid::dot(&tx, &tx).sqrt();
        x = ts.apply_vec(&tx)?;
        if t.requires_mean_zero() {
            for c in x.chunks_mut(t.grid.len()) {
                project_mean_zero(c);
            }
        }
    }
    Ok(est)
}

/// Dense kernel `K(x, y)` of an operator, one block per (output, input) channel pair.
#[derive(Debug, Clone)]
pub struct OperatorKernel {
    grid: Grid,
    name: String,
    in_ch: usize,
    out_ch: usize,
    /// `blocks[o * in_ch + i][[x, y]]`.
    blocks: Vec<Array2<f64>>,
    /// Whether columns were taken on mean-zero-projected indicators.
    pub projected: bool,
}

/// Extracts `K(x,y) = T(δ_y)(x)` with `δ_y` the normalized cell indicator.
///
/// Operators that only accept mean-zero inputs are applied to the projected
/// indicators `δ_y - 1/|torus|`, so their kernel reproduces the action on
/// mean-zero functions.
pub fn kernel_of(t: &LinearOperator) -> Result<OperatorKernel> {
    let g = t.grid;
    let npts = g.len();
    if npts > DENSE_BUDGET {
        return Err(LabError::Budget(format!("kernel of {npts} x {npts} exceeds the budget of {DENSE_BUDGET} points")));
    }
    let projected = t.requires_mean_zero();
    let inv_cell = 1.0 / g.cell_volume();
    let mut blocks = vec![Array2::<f64>::zeros((npts, npts)); t.out_ch * t.in_ch];
    for i in 0..t.in_ch {
        let mut batch = Array2::<f64>::zeros((npts, t.in_ch * npts));
        for y in 0..npts {
            batch[[y, i * npts + y]] = 1.0;
            if projected {
                let mut row = batch.slice_mut(s![y, i * npts..(i + 1) * npts]);
                row -= 1.0 / npts as f64;
            }
        }
        let out = t.apply_batch(batch)?;
        for o in 0..t.out_ch {
            let blk = out.slice(s![.., o * npts..(o + 1) * npts]);
            // out[y, x] = T(e_y)(x)  ⇒  K[x, y] = out[y, x] / h^d
            blocks[o * t.in_ch + i] = blk.t().to_owned() * inv_cell;
        }
    }
    Ok(OperatorKernel { grid: g, name: t.name.clone(), in_ch: t.in_ch, out_ch: t.out_ch, blocks, projected })
}

/// Column `y` of the kernel of `t` (all output channels, scalar input),
/// without forming the whole matrix.
pub fn kernel_column(t: &LinearOperator, y: usize) -> Result<Vec<f64>> {
    let g = t.grid;
    let npts = g.len();
    if t.in_ch != 1 {
        return Err(invalid("kernel columns need a scalar-input operator"));
    }
    if y >= npts {
        return Err(invalid(format!("column {y} out of range")));
    }
    let mut e = vec![0.0; npts];
    e[y] = 1.0;
    if t.requires_mean_zero() {
        project_mean_zero(&mut e);
    }
    let inv_cell = 1.0 / g.cell_volume();
    Ok(t.apply_vec(&e)?.into_iter().map(|v| v * inv_cell).collect())
}

impl OperatorKernel {
    /// Wraps an explicit scalar kernel matrix.
    pub fn from_matrix(grid: &Grid, name: impl Into<String>, k: Array2<f64>) -> Result<Self> {
        if k.dim() != (grid.len(), grid.len()) {
            return Err(invalid("kernel matrix shape does not match the grid"));
        }
        Ok(Self { grid: *grid, name: name.into(), in_ch: 1, out_ch: 1, blocks: vec![k], projected: false })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn channels(&self) -> (usize, usize) {
        (self.out_ch, self.in_ch)
    }

    pub fn block(&self, out: usize, input: usize) -> ArrayView2<'_, f64> {
        self.blocks[out * self.in_ch + input].view()
    }

    /// `|K(x, y)|` (Frobenius norm over channel blocks).
    pub fn magnitude(&self, x: usize, y: usize) -> f64 {
        if self.blocks.len() == 1 {
            return self.blocks[0][[x, y]].abs();
        }
        self.blocks.iter().map(|b| b[[x, y]].powi(2)).sum::<f64>().sqrt()
    }

    /// Channel-wise difference `|K(x,y) - K0(x,y)|`.
    pub fn difference_magnitude(&self, other: &OperatorKernel, x: usize, y: usize) -> f64 {
        self.blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| (a[[x, y]] - b[[x, y]]).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn same_shape(&self, other: &OperatorKernel) -> Result<()> {
        self.grid.ensure_same(&other.grid)?;
        if self.channels() != other.channels() {
            return Err(invalid(format!(
                "kernels {} and {} have different channel layouts",
                self.name, other.name
            )));
        }
        Ok(())
    }

    /// `Σ_y K(x,y) f(y) h^d` for a channelled input.
    pub fn apply_vec(&self, f: &[f64]) -> Vec<f64> {
        let npts = self.grid.len();
        let h = self.grid.cell_volume();
        let mut out = vec![0.0; self.out_ch * npts];
        for o in 0..self.out_ch {
            for i in 0..self.in_ch {
                let fi = ndarray::ArrayView1::from(&f[i * npts..(i + 1) * npts]);
                let r = self.blocks[o * self.in_ch + i].dot(&fi);
                for (x, v) in r.iter().enumerate() {
                    out[o * npts + x] += v * h;
                }
            }
        }
        out
    }

    /// The kernel of the adjoint: blocks swapped and transposed.
    pub fn transposed(&self) -> Self {
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for i in 0..self.in_ch {
            for o in 0..self.out_ch {
                blocks.push(self.blocks[o * self.in_ch + i].t().to_owned());
            }
        }
        Self {
            grid: self.grid,
            name: format!("{}ᵀ", self.name),
            in_ch: self.out_ch,
            out_ch: self.in_ch,
            blocks,
            projected: self.projected,
        }
    }

    /// Writes column `y` of every block as a grid function (export helper).
    pub fn column(&self, y: usize) -> Vec<GridFunction> {
        self.blocks
            .iter()
            .map(|b| GridFunction::new(self.grid, b.column(y).to_vec()).expect("finite kernel"))
            .collect()
    }
}

/// Operator names accepted in configs.
#[derive(Debug, Clone, PartialEq)]
pub enum OperatorName {
    R1,
    R2,
    VgL(f64),
    Mixed(f64),
    Linv,
    LhalfInv,
    Identity,
    Classical(ClassicalOp),
    Adjoint(Box<OperatorName>),
}

impl OperatorName {
    /// Whether a Schrödinger operator is needed to build it.
    pub fn needs_schrodinger(&self) -> bool {
        match self {
            OperatorName::Classical(_) | OperatorName::Identity => false,
            OperatorName::Adjoint(inner) => inner.needs_schrodinger(),
            _ => true,
        }
    }

    /// Checks the parameter ranges of the γ-families for dimension `d`.
    pub fn validate(&self, d: usize) -> Result<()> {
        match self {
            OperatorName::VgL(g) => {
                if !(*g > 0.0 && *g < d as f64 / 2.0) {
                    return Err(invalid(format!("VgL:γ needs 0<γ<d/2 = {}, got γ = {g}", d as f64 / 2.0)));
                }
            }
            OperatorName::Mixed(g) => {
                if !(*g > 0.5 && *g <= 1.0) {
                    return Err(invalid(format!("mixed:γ needs 1/2<γ≤1, got γ = {g}")));
                }
            }
            OperatorName::Adjoint(inner) => inner.validate(d)?,
            _ => {}
        }
        Ok(())
    }
}

impl fmt::Display for OperatorName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OperatorName::R1 => write!(f, "R1"),
            OperatorName::R2 => write!(f, "R2"),
            OperatorName::VgL(g) => write!(f, "VgL:{g}"),
            OperatorName::Mixed(g) => write!(f, "mixed:{g}"),
            OperatorName::Linv => write!(f, "Linv"),
            OperatorName::LhalfInv => write!(f, "Lhalf_inv"),
            OperatorName::Identity => write!(f, "Identity"),
            OperatorName::Classical(c) => match c {
                ClassicalOp::Riesz1 { j } => write!(f, "classical:R1{j}"),
                ClassicalOp::Riesz1Vector => write!(f, "classical:R1"),
                ClassicalOp::Riesz2 { j, k } => write!(f, "classical:R2{j}{k}"),
                ClassicalOp::Riesz2Matrix => write!(f, "classical:R2"),
                ClassicalOp::FracLap { gamma } => write!(f, "classical:fraclap:{gamma}"),
                ClassicalOp::FracInt => write!(f, "classical:fracint"),
                ClassicalOp::Identity => write!(f, "Identity"),
            },
            OperatorName::Adjoint(inner) => match inner.as_ref() {
                OperatorName::VgL(g) => write!(f, "VgL*:{g}"),
                OperatorName::Mixed(g) => write!(f, "mixed*:{g}"),
                other => write!(f, "{other}*"),
            },
        }
    }
}

fn parse_gamma(s: &str, tag: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| invalid(format!("`{tag}` needs a numeric γ, got `{s}`")))
}

fn parse_axis(c: char) -> Result<usize> {
    c.to_digit(10)
        .map(|v| v as usize)
        .ok_or_else(|| invalid(format!("axis `{c}` is not a digit")))
}

impl FromStr for OperatorName {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(rest) = s.strip_prefix("classical:") {
            let op = match rest {
                "R1" => ClassicalOp::Riesz1Vector,
                "R2" => ClassicalOp::Riesz2Matrix,
                "fracint" => ClassicalOp::FracInt,
                r if r.starts_with("fraclap:") => ClassicalOp::FracLap { gamma: parse_gamma(&r[8..], "classical:fraclap")? },
                r if r.starts_with("R1") && r.len() == 3 => ClassicalOp::Riesz1 { j: parse_axis(r.chars().nth(2).unwrap())? },
                r if r.starts_with("R2") && r.len() == 4 => {
                    let mut cs = r.chars().skip(2);
                    ClassicalOp::Riesz2 { j: parse_axis(cs.next().unwrap())?, k: parse_axis(cs.next().unwrap())? }
                }
                _ => return Err(invalid(format!("unknown classical operator `{s}`"))),
            };
            return Ok(OperatorName::Classical(op));
        }
        if let Some((tag, g)) = s.split_once(':') {
            return match tag {
                "VgL" => Ok(OperatorName::VgL(parse_gamma(g, tag)?)),
                "VgL*" => Ok(OperatorName::Adjoint(Box::new(OperatorName::VgL(parse_gamma(g, tag)?)))),
                "mixed" => Ok(OperatorName::Mixed(parse_gamma(g, tag)?)),
                "mixed*" => Ok(OperatorName::Adjoint(Box::new(OperatorName::Mixed(parse_gamma(g, tag)?)))),
                _ => Err(invalid(format!("unknown operator `{s}`"))),
            };
        }
        if let Some(base) = s.strip_suffix('*') {
            return Ok(OperatorName::Adjoint(Box::new(base.parse()?)));
        }
        match s {
            "R1" => Ok(OperatorName::R1),
            "R2" => Ok(OperatorName::R2),
            "Linv" => Ok(OperatorName::Linv),
            "Lhalfinv" | "Lhalf_inv" => Ok(OperatorName::LhalfInv),
            "Identity" | "I" => Ok(OperatorName::Identity),
            _ => Err(invalid(format!("unknown operator `{s}`"))),
        }
    }
}
