//! The Schrödinger operator `L = -Δ + V` as a dense symmetric matrix with a
//! stored eigendecomposition, and the operators built from its functional
//! calculus.

use std::sync::Arc;

use ndarray::Array2;
use ndarray_linalg::{Eigh, UPLO};
use num_complex::Complex64;

use super::fourier::FftNd;
use super::{
    assemble_classical, gradient, hessian, neg_laplacian, Eigen, LinearOperator, NyquistMode, OperatorName, Stage,
    DENSE_BUDGET,
};
use crate::error::{invalid, LabError, Result};
use crate::grid::{Grid, GridFunction};

#[derive(Debug, Clone)]
pub struct SchrodingerOperator {
    grid: Grid,
    v: GridFunction,
    matrix: Arc<Array2<f64>>,
    eigen: Arc<Eigen>,
}

/// Dense spectral `-Δ`: circulant with first column `(-Δ)δ_0`.
pub(crate) fn laplacian_matrix(grid: &Grid) -> Array2<f64> {
    let npts = grid.len();
    let m = neg_laplacian(grid);
    let fft = FftNd::new(grid);
    let mut col = vec![Complex64::new(0.0, 0.0); npts];
    col[0] = Complex64::new(1.0, 0.0);
    fft.forward(&mut col);
    for (z, s) in col.iter_mut().zip(&m.symbols[0]) {
        *z *= s;
    }
    fft.inverse(&mut col);
    let n = grid.n();
    let mut out = Array2::<f64>::zeros((npts, npts));
    let mut diff = vec![0usize; grid.dim()];
    for x in 0..npts {
        let mx = grid.multi_index(x);
        for y in 0..npts {
            let my = grid.multi_index(y);
            for a in 0..grid.dim() {
                diff[a] = (mx[a] + n - my[a]) % n;
            }
            out[[x, y]] = col[grid.flat_index(&diff)].re;
        }
    }
    out
}

pub fn assemble_schrodinger(grid: &Grid, v: &GridFunction) -> Result<SchrodingerOperator> {
    grid.ensure_same(v.grid())?;
    if grid.dim() < 3 {
        return Err(invalid(format!("Schrödinger operators need d ≥ 3, got d = {}", grid.dim())));
    }
    if grid.len() > DENSE_BUDGET {
        return Err(LabError::Budget(format!(
            "n^d = {} exceeds the dense budget of {DENSE_BUDGET} points",
            grid.len()
        )));
    }
    if let Some(bad) = v.values().iter().find(|x| **x < 0.0) {
        return Err(invalid(format!("potential must be nonnegative, found {bad}")));
    }
    if v.values().iter().all(|x| *x == 0.0) {
        return Err(invalid("potential vanishes identically; L is not invertible"));
    }
    let mut l = laplacian_matrix(grid);
    for (i, vi) in v.values().iter().enumerate() {
        l[[i, i]] += vi;
    }
    // exact symmetry (the circulant is symmetric up to FFT rounding)
    let lt = l.t().to_owned();
    l = (&l + &lt) * 0.5;
    let (values, vectors) = l.eigh(UPLO::Lower).map_err(|e| LabError::Linalg(e.to_string()))?;
    let values = values.to_vec();
    if let Some(min) = values.iter().copied().reduce(f64::min) {
        if min <= 0.0 {
            return Err(LabError::Linalg(format!("L is not positive definite: smallest eigenvalue {min}")));
        }
    }
    Ok(SchrodingerOperator {
        grid: *grid,
        v: v.clone(),
        matrix: Arc::new(l),
        eigen: Arc::new(Eigen { values, vectors }),
    })
}

impl SchrodingerOperator {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn potential(&self) -> &GridFunction {
        &self.v
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigen.values
    }

    pub fn eigenvectors(&self) -> &Array2<f64> {
        &self.eigen.vectors
    }

    /// The dense matrix of `L`.
    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    /// `g(L) = U g(Λ) U^T` as an operator.
    pub fn spectral_function(&self, name: impl Into<String>, g: impl Fn(f64) -> f64) -> LinearOperator {
        let gv = self.eigen.values.iter().map(|&l| g(l)).collect();
        LinearOperator::from_stages(&self.grid, name, 1, vec![Stage::Spectral { eigen: self.eigen.clone(), g: Arc::new(gv) }])
            .expect("scalar stage")
    }

    /// `L` itself, as the dense matrix.
    pub fn as_operator(&self) -> LinearOperator {
        LinearOperator::from_stages(&self.grid, "L", 1, vec![Stage::Dense { matrix: self.matrix.clone(), transposed: false }])
            .expect("scalar stage")
    }

    /// Multiplication by `V^power` (`power ≥ 0`; `0^0 = 1`).
    pub fn potential_power(&self, power: f64) -> Stage {
        Stage::Diagonal(Arc::new(self.v.values().iter().map(|x| if power == 0.0 { 1.0 } else { x.powf(power) }).collect()))
    }

    /// Relative reconstruction error `‖Lx - UΛU^T x‖ / ‖Lx‖` on a given vector.
    pub fn reconstruction_error(&self, x: &[f64]) -> Result<f64> {
        let direct = self.as_operator().apply_vec(x)?;
        let spec = self.spectral_function("UΛUᵀ", |l| l).apply_vec(x)?;
        let num: f64 = direct.iter().zip(&spec).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let den: f64 = direct.iter().map(|a| a * a).sum::<f64>().sqrt();
        Ok(if den > 0.0 { num / den } else { num })
    }
}

/// Builds a named operator. Classical names need no Schrödinger operator.
pub fn build_operator(grid: &Grid, lop: Option<&SchrodingerOperator>, name: &OperatorName) -> Result<LinearOperator> {
    name.validate(grid.dim())?;
    if let OperatorName::Adjoint(inner) = name {
        return Ok(build_operator(grid, lop, inner)?.adjoint().with_name(name.to_string()));
    }
    if let OperatorName::Classical(op) = name {
        return assemble_classical(grid, *op);
    }
    if let OperatorName::Identity = name {
        return Ok(LinearOperator::identity(grid));
    }
    let l = lop.ok_or_else(|| invalid(format!("operator {name} needs a potential")))?;
    grid.ensure_same(&l.grid)?;
    let spectral = |g: Box<dyn Fn(f64) -> f64>| {
        let gv = l.eigen.values.iter().map(|&x| g(x)).collect();
        Stage::Spectral { eigen: l.eigen.clone(), g: Arc::new(gv) }
    };
    let grad = || Stage::Multiplier(Arc::new(gradient(grid, NyquistMode::Real)));
    let stages = match name {
        OperatorName::R1 => vec![spectral(Box::new(|x| x.powf(-0.5))), grad()],
        OperatorName::R2 => vec![spectral(Box::new(|x| 1.0 / x)), Stage::Multiplier(Arc::new(hessian(grid)))],
        OperatorName::VgL(g) => {
            let g = *g;
            vec![spectral(Box::new(move |x| x.powf(-g))), l.potential_power(g)]
        }
        OperatorName::Mixed(g) => {
            // V^{γ-1/2} ∇ L^{-γ}; equivalently V^{ν/2}(x) K_ν with ν = 2γ - 1.
            let g = *g;
            vec![spectral(Box::new(move |x| x.powf(-g))), grad(), l.potential_power(g - 0.5)]
        }
        OperatorName::Linv => vec![spectral(Box::new(|x| 1.0 / x))],
        OperatorName::LhalfInv => vec![spectral(Box::new(|x| x.powf(-0.5)))],
        _ => unreachable!("handled above"),
    };
    LinearOperator::from_stages(grid, name.to_string(), 1, stages)
}
