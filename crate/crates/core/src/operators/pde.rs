//! Solving `-Δu + Vu = f` and `-Δu + Vu = ∇·F` through the stored
//! eigendecomposition, with the derived fields used by the a-priori estimates.

use std::sync::Arc;

use super::{gradient, hessian, pointwise_norm, LinearOperator, NyquistMode, SchrodingerOperator, Stage};
use crate::error::{invalid, Result};
use crate::grid::GridFunction;

#[derive(Debug, Clone)]
pub enum PdeRhs {
    Source(GridFunction),
    /// A vector field with one component per axis.
    Divergence(Vec<GridFunction>),
}

#[derive(Debug, Clone)]
pub struct PdeSolution {
    pub u: GridFunction,
    /// `∂_j u`, one field per axis.
    pub grad_u: Vec<GridFunction>,
    /// `∂_j ∂_k u` at index `j * d + k`.
    pub hess_u: Vec<GridFunction>,
    pub v_u: GridFunction,
    pub v_half_grad_u: Vec<GridFunction>,
    pub v_half_u: GridFunction,
    /// `‖Lu - rhs‖ / ‖rhs‖` with `L` the dense matrix.
    pub residual: f64,
}

impl PdeSolution {
    pub fn grad_abs(&self) -> GridFunction {
        channels_abs(&self.grad_u)
    }

    pub fn hess_abs(&self) -> GridFunction {
        channels_abs(&self.hess_u)
    }

    pub fn v_half_grad_abs(&self) -> GridFunction {
        channels_abs(&self.v_half_grad_u)
    }
}

fn channels_abs(fields: &[GridFunction]) -> GridFunction {
    let grid = *fields[0].grid();
    let flat: Vec<f64> = fields.iter().flat_map(|f| f.values().iter().copied()).collect();
    pointwise_norm(&grid, &flat)
}

fn split(grid: &crate::grid::Grid, v: Vec<f64>) -> Result<Vec<GridFunction>> {
    v.chunks(grid.len()).map(|c| GridFunction::new(*grid, c.to_vec())).collect()
}

/// The divergence `∇·F = -∇*F` (adjoint of the gradient used by `L`).
pub fn divergence_operator(grid: &crate::grid::Grid) -> LinearOperator {
    let g = LinearOperator::from_stages(grid, "grad", 1, vec![Stage::Multiplier(Arc::new(gradient(grid, NyquistMode::Real)))])
        .expect("gradient stage");
    let neg = Stage::Diagonal(Arc::new(vec![-1.0; grid.len()]));
    let mut stages = g.adjoint().stages().to_vec();
    stages.push(neg);
    LinearOperator::from_stages(grid, "div", grid.dim(), stages).expect("divergence stages")
}

pub fn solve_pde(lop: &SchrodingerOperator, rhs: &PdeRhs) -> Result<PdeSolution> {
    let grid = *lop.grid();
    let f: Vec<f64> = match rhs {
        PdeRhs::Source(f) => {
            grid.ensure_same(f.grid())?;
            f.values().to_vec()
        }
        PdeRhs::Divergence(fields) => {
            if fields.len() != grid.dim() {
                return Err(invalid(format!("divergence data needs {} components, got {}", grid.dim(), fields.len())));
            }
            let mut flat = Vec::with_capacity(grid.dim() * grid.len());
            for c in fields {
                grid.ensure_same(c.grid())?;
                flat.extend_from_slice(c.values());
            }
            divergence_operator(&grid).apply_vec(&flat)?
        }
    };
    let u = lop.spectral_function("Linv", |l| 1.0 / l).apply_vec(&f)?;
    let lu = lop.as_operator().apply_vec(&u)?;
    let num = lu.iter().zip(&f).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let den = f.iter().map(|a| a * a).sum::<f64>().sqrt();
    let residual = if den > 0.0 { num / den } else { num };

    let grad = LinearOperator::from_stages(&grid, "grad", 1, vec![Stage::Multiplier(Arc::new(gradient(&grid, NyquistMode::Real)))])?;
    let hess = LinearOperator::from_stages(&grid, "hess", 1, vec![Stage::Multiplier(Arc::new(hessian(&grid)))])?;
    let gu = grad.apply_vec(&u)?;
    let hu = hess.apply_vec(&u)?;
    let v = lop.potential().values();
    let npts = grid.len();
    let vhalf: Vec<f64> = v.iter().map(|x| x.sqrt()).collect();
    let v_u: Vec<f64> = u.iter().zip(v).map(|(a, b)| a * b).collect();
    let v_half_u: Vec<f64> = u.iter().zip(&vhalf).map(|(a, b)| a * b).collect();
    let v_half_grad: Vec<f64> = gu.iter().enumerate().map(|(k, a)| a * vhalf[k % npts]).collect();
    Ok(PdeSolution {
        u: GridFunction::new(grid, u)?,
        grad_u: split(&grid, gu)?,
        hess_u: split(&grid, hu)?,
        v_u: GridFunction::new(grid, v_u)?,
        v_half_grad_u: split(&grid, v_half_grad)?,
        v_half_u: GridFunction::new(grid, v_half_u)?,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::operators::{assemble_schrodinger, build_operator, OperatorName};
    use std::f64::consts::PI;

    #[test]
    fn single_mode_with_constant_potential() {
        let g = Grid::new(3, 6, 3.0).unwrap();
        let c = 0.4;
        let l = assemble_schrodinger(&g, &GridFunction::constant(g, c)).unwrap();
        let k = 2.0 * PI / 3.0;
        let f = GridFunction::from_fn(g, |x| (k * x[1]).cos()).unwrap();
        let sol = solve_pde(&l, &PdeRhs::Source(f.clone())).unwrap();
        for (a, b) in sol.u.values().iter().zip(f.values()) {
            assert!((a - b / (k * k + c)).abs() < 1e-10);
        }
        assert!(sol.residual < 1e-8);
    }

    #[test]
    fn recovers_known_solution() {
        let g = Grid::new(3, 6, 4.0).unwrap();
        let v = GridFunction::from_fn(g, |x| 1.0 + x[0].cos().powi(2)).unwrap();
        let l = assemble_schrodinger(&g, &v).unwrap();
        let target = GridFunction::from_fn(g, |x| (x[0] + 2.0 * x[2]).sin() * x[1].cos()).unwrap();
        let f = l.as_operator().apply(&target).unwrap().remove(0);
        let sol = solve_pde(&l, &PdeRhs::Source(f)).unwrap();
        for (a, b) in sol.u.values().iter().zip(target.values()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn divergence_data_matches_composition() {
        let g = Grid::new(3, 6, 4.0).unwrap();
        let v = GridFunction::from_fn(g, |x| 0.5 + x[2].sin().powi(2)).unwrap();
        let l = assemble_schrodinger(&g, &v).unwrap();
        let fields: Vec<GridFunction> =
            (0..3).map(|j| GridFunction::from_fn(g, |x| ((j + 1) as f64 * x[j]).sin() + x[(j + 1) % 3].cos()).unwrap()).collect();
        let sol = solve_pde(&l, &PdeRhs::Divergence(fields.clone())).unwrap();
        assert!(sol.residual < 1e-8);
        // ∇L^{-1}∇·F = R1 ∘ (L^{-1/2}∇·F), composed factor by factor
        let r1 = build_operator(&g, Some(&l), &OperatorName::R1).unwrap();
        let lh = build_operator(&g, Some(&l), &OperatorName::LhalfInv).unwrap();
        let chain = r1.after(&lh.after(&divergence_operator(&g)).unwrap()).unwrap();
        let flat: Vec<f64> = fields.iter().flat_map(|f| f.values().to_vec()).collect();
        let composed = chain.apply_vec(&flat).unwrap();
        let direct: Vec<f64> = sol.grad_u.iter().flat_map(|f| f.values().to_vec()).collect();
        let scale = direct.iter().fold(0.0f64, |m, t| m.max(t.abs()));
        for (a, b) in composed.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-9 * scale.max(1.0));
        }
    }
}
