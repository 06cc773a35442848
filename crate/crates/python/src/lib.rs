//! Python bindings: the `riesz_lab` extension module.
//!
//! Grid functions cross the boundary as flat lists in row-major order
//! together with `(dim, n, side)`. Structured results come back as plain
//! dicts/lists (via JSON), matching the on-disk report schema.

use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use riesz_lab::config::ExperimentConfig;
use riesz_lab::critical::{gamma0 as gamma0_of, rho_field};
use riesz_lab::maximal::{build_dictionary, maximal_apply, DictionaryPolicy, MaximalSpec};
use riesz_lab::operators::{adjoint_defect, assemble_schrodinger, build_operator, OperatorName};
use riesz_lab::runner::{run_experiment, RunOptions, TaskReport, SCHEMA};
use riesz_lab::young::{dp_membership, luxemburg_gauge, YoungFunction};
use riesz_lab::{Grid, GridFunction, LabError};
use serde::Serialize;

pub type Result<T> = std::result::Result<T, LabError>;

fn field(values: Vec<f64>, dim: usize, n: usize, side: f64) -> Result<GridFunction> {
    GridFunction::new(Grid::new(dim, n, side)?, values)
}

/// Runs a TOML config given as text.
pub fn run_toml_source(source: &str, out: Option<PathBuf>, seed: Option<u64>) -> Result<Vec<TaskReport>> {
    let cfg = ExperimentConfig::from_toml_str(source)?;
    Ok(run_experiment(&cfg, &RunOptions { out, seed, parallel: None })?.reports)
}

/// `𝓜f` with the default dictionary; `compose = 1` gives `M∘M[young]`.
pub fn maximal_values(values: Vec<f64>, dim: usize, n: usize, side: f64, young: &str, compose: usize) -> Result<Vec<f64>> {
    let f = field(values, dim, n, side)?;
    let k = riesz_lab::config::default_k_radii(n);
    let dict = build_dictionary(f.grid(), DictionaryPolicy::AllCentersLogRadii { k_radii: k })?;
    let mut spec = MaximalSpec::hardy_littlewood(dict.into()).composed(compose);
    spec.young = young.parse()?;
    Ok(maximal_apply(&f, &spec)?.into_values())
}

#[derive(Debug, Clone, Serialize)]
pub struct RhoSummary {
    pub rho: Vec<f64>,
    pub fitted_c0: f64,
    pub fitted_n0: f64,
    pub gamma0: f64,
}

pub fn rho_summary(values: Vec<f64>, dim: usize, n: usize, side: f64, q: f64) -> Result<RhoSummary> {
    let v = field(values, dim, n, side)?;
    let r = rho_field(&v, q)?;
    Ok(RhoSummary { gamma0: r.gamma0(), rho: r.values().to_vec(), fitted_c0: r.fitted_c0, fitted_n0: r.fitted_n0 })
}

/// Largest relative defect of `⟨Tf, g⟩ = ⟨f, T*g⟩` over random pairs.
pub fn operator_adjoint_defect(
    operator: &str,
    dim: usize,
    n: usize,
    side: f64,
    potential: Option<Vec<f64>>,
    pairs: usize,
    seed: u64,
) -> Result<f64> {
    let grid = Grid::new(dim, n, side)?;
    let name: OperatorName = operator.parse()?;
    name.validate(dim)?;
    let lop = match potential {
        Some(v) if name.needs_schrodinger() => Some(assemble_schrodinger(&grid, &GridFunction::new(grid, v)?)?),
        None if name.needs_schrodinger() => {
            return Err(LabError::InvalidArgument(format!("operator `{operator}` needs a potential")))
        }
        _ => None,
    };
    adjoint_defect(&build_operator(&grid, lop.as_ref(), &name)?, pairs, seed)
}

fn py_err(e: LabError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py>(py: Python<'py>, v: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

#[pymodule(name = "riesz_lab")]
mod riesz_lab_module {
    use super::*;

    #[pymodule_export]
    const SCHEMA_VERSION: &str = SCHEMA;

    /// Runs a TOML config file; returns the list of task reports.
    #[pyfunction]
    #[pyo3(signature = (path, out=None, seed=None))]
    fn run_config<'py>(py: Python<'py>, path: PathBuf, out: Option<PathBuf>, seed: Option<u64>) -> PyResult<Bound<'py, PyAny>> {
        let source = std::fs::read_to_string(&path).map_err(|e| py_err(e.into()))?;
        let reports = run_toml_source(&source, out, seed).map_err(py_err)?;
        to_py(py, &reports)
    }

    /// Runs a TOML config given as a string.
    #[pyfunction]
    #[pyo3(signature = (source, out=None, seed=None))]
    fn run_toml<'py>(py: Python<'py>, source: &str, out: Option<PathBuf>, seed: Option<u64>) -> PyResult<Bound<'py, PyAny>> {
        let reports = run_toml_source(source, out, seed).map_err(py_err)?;
        to_py(py, &reports)
    }

    /// Luxemburg norm of a sample set (uniform average) for a Young function
    /// such as `"power:2"` or `"logpower:1"`.
    #[pyfunction]
    fn luxemburg(values: Vec<f64>, young: &str) -> PyResult<f64> {
        let a: YoungFunction = young.parse().map_err(py_err)?;
        Ok(luxemburg_gauge(&values, &a))
    }

    #[pyfunction]
    fn power_mean(values: Vec<f64>, r: f64) -> f64 {
        riesz_lab::young::power_mean(&values, r)
    }

    #[pyfunction]
    fn gamma0(c0: f64, n0: f64) -> PyResult<f64> {
        gamma0_of(c0, n0).map_err(py_err)
    }

    /// Classifies a Young function against the 𝒟_p condition.
    #[pyfunction]
    fn dp_class<'py>(py: Python<'py>, young: &str, p: f64) -> PyResult<Bound<'py, PyAny>> {
        let a: YoungFunction = young.parse().map_err(py_err)?;
        to_py(py, &dp_membership(&a, p).map_err(py_err)?)
    }

    #[pyfunction]
    #[pyo3(signature = (values, dim, n, side, young="power:1", compose=0))]
    fn maximal(values: Vec<f64>, dim: usize, n: usize, side: f64, young: &str, compose: usize) -> PyResult<Vec<f64>> {
        maximal_values(values, dim, n, side, young, compose).map_err(py_err)
    }

    #[pyfunction]
    fn rho<'py>(py: Python<'py>, values: Vec<f64>, dim: usize, n: usize, side: f64, q: f64) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &rho_summary(values, dim, n, side, q).map_err(py_err)?)
    }

    #[pyfunction]
    #[pyo3(signature = (operator, dim, n, side, potential=None, pairs=50, seed=0))]
    fn adjoint_check(
        operator: &str,
        dim: usize,
        n: usize,
        side: f64,
        potential: Option<Vec<f64>>,
        pairs: usize,
        seed: u64,
    ) -> PyResult<f64> {
        operator_adjoint_defect(operator, dim, n, side, potential, pairs, seed).map_err(py_err)
    }
}
