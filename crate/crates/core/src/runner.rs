//! Executes experiment configs and writes schema-versioned reports.
//!
//! Each task yields one JSON report embedding the full resolved config, and
//! the run writes a CSV index with one summary row per task. Reports differ
//! between reruns with the same config only in their `timestamp`.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{
    ExperimentConfig, MaximalConfig, MaximalInput, MaximalModeKind, PdeKind, PotentialSpec, SearchConfig, TaskConfig,
    TaskSpec,
};
use crate::critical::{critical_covering, potential_growth_check, rho_field, trucho_check, CriticalRadiusField, TruchoMode};
use crate::error::{LabError, Result};
use crate::grid::{lp_norm, Grid, GridFunction};
use crate::gridio::{read_csv, read_rlgf};
use crate::inequality::{
    chi_envelope, estimate_constant, integrability_verdict, InequalityTask, InequalityType, Search, TestFamily,
    TestOperator,
};
use crate::kernel::{check_condition, comparison_check, ComparisonInputs, Condition, ConditionParams, Sampling};
use crate::maximal::{build_dictionary, maximal_apply, BallDictionary, DictionaryPolicy, MaximalMode, MaximalSpec};
use crate::operators::{
    assemble_schrodinger, build_operator, kernel_of, pointwise_norm, riesz1_vector, solve_pde, ClassicalOp, NyquistMode,
    OperatorName, PdeRhs, SchrodingerOperator,
};
use crate::seed::{derive_seed, rng_for};
use crate::young::YoungFunction;

pub const SCHEMA: &str = "riesz-lab/1";

/// Column order of the CSV index.
pub const CSV_COLUMNS: [&str; 9] = ["task", "operator", "maximal", "p", "theta", "best_ratio", "stability", "samples", "seed"];

const TASK_PDE_DATA: u64 = 0x70de_0000;

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub task: String,
    pub operator: String,
    pub maximal: String,
    pub p: Option<f64>,
    pub theta: Option<f64>,
    pub best_ratio: Option<f64>,
    pub stability: Option<f64>,
    pub samples: Option<usize>,
    pub seed: u64,
}

impl SummaryRow {
    fn new(task: &TaskConfig, seed: u64) -> Self {
        Self {
            task: task.name.clone(),
            operator: String::new(),
            maximal: String::new(),
            p: None,
            theta: None,
            best_ratio: None,
            stability: None,
            samples: None,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    Ok,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub schema: String,
    /// Seconds since the Unix epoch; the only field that varies between reruns.
    pub timestamp: u64,
    pub index: usize,
    pub task: String,
    pub kind: String,
    pub status: TaskStatus,
    pub error: Option<String>,
    pub summary: SummaryRow,
    pub config: ExperimentConfig,
    pub result: Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

/// Writes `reports` as a JSON array or as the CSV index (header always present).
pub fn emit_report(reports: &[TaskReport], format: ReportFormat, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    match format {
        ReportFormat::Json => {
            let text = serde_json::to_string_pretty(reports).map_err(|e| LabError::Format(e.to_string()))?;
            std::fs::write(path, text + "\n")?;
        }
        ReportFormat::Csv => {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path).map_err(csv_err)?;
            w.write_record(CSV_COLUMNS).map_err(csv_err)?;
            for r in reports {
                w.serialize(&r.summary).map_err(csv_err)?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

/// Reads a CSV index back.
pub fn read_index(path: impl AsRef<Path>) -> Result<Vec<SummaryRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

fn csv_err(e: csv::Error) -> LabError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => LabError::Io(io),
        other => LabError::Format(format!("{other:?}")),
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Output directory (overrides the config's `out`).
    pub out: Option<PathBuf>,
    /// Overrides the config's master seed.
    pub seed: Option<u64>,
    /// Overrides the config's `parallel` flag.
    pub parallel: Option<bool>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub reports: Vec<TaskReport>,
    /// Files written, in order (task reports, then the index).
    pub files: Vec<PathBuf>,
    pub failed: usize,
}

impl RunSummary {
    /// `0` iff every task succeeded.
    pub fn exit_code(&self) -> i32 {
        if self.failed == 0 {
            0
        } else {
            1
        }
    }
}

/// Loads, validates and runs a TOML config.
pub fn run_config(path: impl AsRef<Path>, opts: &RunOptions) -> Result<RunSummary> {
    let cfg = ExperimentConfig::load(path)?;
    run_experiment(&cfg, opts)
}

/// Inputs shared read-only by all tasks.
pub struct Shared {
    pub grid: Grid,
    pub dictionary: Arc<BallDictionary>,
    pub potential: Option<GridFunction>,
    pub rho: Option<CriticalRadiusField>,
    pub lop: Option<SchrodingerOperator>,
}

impl Shared {
    pub fn prepare(cfg: &ExperimentConfig) -> Result<Self> {
        let grid = cfg.grid.build()?;
        let dictionary = Arc::new(build_dictionary(&grid, DictionaryPolicy::AllCentersLogRadii { k_radii: cfg.k_radii })?);
        let potential = match &cfg.potential {
            Some(p) => Some(load_potential(&grid, p)?),
            None => None,
        };
        let needs_rho = cfg.tasks.iter().any(|t| match &t.spec {
            TaskSpec::Rho | TaskSpec::Covering { .. } | TaskSpec::KernelCheck { .. } => true,
            TaskSpec::Maximal { maximal, .. } | TaskSpec::FsConstant { maximal, .. } | TaskSpec::WeakCheck { maximal, .. } => {
                maximal.needs_rho()
            }
            TaskSpec::Envelope { rho, .. } => rho.is_none(),
            _ => false,
        });
        let needs_lop = cfg.tasks.iter().any(|t| match &t.spec {
            TaskSpec::Pde { .. } => true,
            TaskSpec::KernelCheck { operator, condition, .. } => {
                matches!(condition, Condition::CompR1 | Condition::CompR2) || needs_schrodinger(operator)
            }
            TaskSpec::FsConstant { operator, .. } | TaskSpec::WeakCheck { operator, .. } => needs_schrodinger(operator),
            _ => false,
        });
        let missing = || LabError::Config("tasks need a potential, but none is configured".into());
        let rho = if needs_rho { Some(rho_field(potential.as_ref().ok_or_else(missing)?, cfg.q)?) } else { None };
        let lop = if needs_lop { Some(assemble_schrodinger(&grid, potential.as_ref().ok_or_else(missing)?)?) } else { None };
        Ok(Self { grid, dictionary, potential, rho, lop })
    }

    fn rho(&self) -> Result<&CriticalRadiusField> {
        self.rho.as_ref().ok_or_else(|| LabError::Internal("ρ was not prepared".into()))
    }

    fn lop(&self) -> Result<&SchrodingerOperator> {
        self.lop.as_ref().ok_or_else(|| LabError::Internal("Schrödinger operator was not prepared".into()))
    }

    fn potential(&self) -> Result<&GridFunction> {
        self.potential.as_ref().ok_or_else(|| LabError::Internal("potential was not prepared".into()))
    }
}

fn needs_schrodinger(op: &str) -> bool {
    op.parse::<OperatorName>().map(|o| o.needs_schrodinger()).unwrap_or(false)
}

fn read_field(grid: &Grid, path: &Path) -> Result<GridFunction> {
    let read = match path.extension().and_then(|e| e.to_str()) {
        Some("rlgf") => read_rlgf(path),
        _ => read_csv(path),
    };
    let f = read.map_err(|e| match e {
        LabError::Io(io) => LabError::Io(std::io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
        other => other,
    })?;
    grid.ensure_same(f.grid())?;
    Ok(f)
}

pub fn load_potential(grid: &Grid, spec: &PotentialSpec) -> Result<GridFunction> {
    let center = vec![grid.side() / 2.0; grid.dim()];
    let dist = |x: &[f64]| grid.distance(x, &center);
    match spec {
        PotentialSpec::Constant { value } => Ok(GridFunction::constant(*grid, *value)),
        PotentialSpec::File { path } => read_field(grid, path),
        PotentialSpec::Formula { tag } => match tag.as_str() {
            "quadratic" => GridFunction::from_fn(*grid, |x| dist(x).powi(2)),
            "cosine" => GridFunction::from_fn(*grid, |x| 1.0 + (2.0 * PI * x[0] / grid.side()).cos()),
            t => {
                let a: f64 = t
                    .strip_prefix("power:")
                    .and_then(|a| a.parse().ok())
                    .ok_or_else(|| LabError::Config(format!("unknown potential formula `{t}`")))?;
                GridFunction::from_fn(*grid, |x| dist(x).powf(a))
            }
        },
    }
}

/// Builds the maximal operator a config describes.
pub fn maximal_spec(shared: &Shared, m: &MaximalConfig) -> Result<MaximalSpec> {
    let young: YoungFunction = m.young.parse()?;
    let rho = || -> Result<GridFunction> {
        match m.rho {
            Some(r) => Ok(CriticalRadiusField::constant(shared.grid, r)?.rho),
            None => Ok(shared.rho()?.rho.clone()),
        }
    };
    let mode = match m.mode {
        MaximalModeKind::Full => MaximalMode::Full,
        MaximalModeKind::Local => MaximalMode::Local { rho: rho()? },
        MaximalModeKind::Theta => MaximalMode::Theta { rho: rho()?, theta: m.theta.unwrap_or(0.0) },
    };
    Ok(MaximalSpec::new(young, mode, shared.dictionary.clone())?.composed(m.compose))
}

fn linear_operator(shared: &Shared, name: &str) -> Result<crate::operators::LinearOperator> {
    let op: OperatorName = name.parse()?;
    op.validate(shared.grid.dim())?;
    let lop = if op.needs_schrodinger() { Some(shared.lop()?) } else { None };
    build_operator(&shared.grid, lop, &op)
}

/// The classical kernel a Schrödinger kernel is compared with by default.
fn default_k0(shared: &Shared, operator: &str) -> Result<crate::operators::OperatorKernel> {
    let g = &shared.grid;
    let t0 = match operator.parse::<OperatorName>()? {
        OperatorName::R1 => riesz1_vector(g, NyquistMode::Real),
        OperatorName::R2 => crate::operators::assemble_classical(g, ClassicalOp::Riesz2Matrix)?,
        other => {
            return Err(LabError::Config(format!("no default comparison kernel for `{other}`; set `k0`")));
        }
    };
    kernel_of(&t0)
}

fn to_json<T: Serialize>(v: &T) -> Result<Value> {
    serde_json::to_value(v).map_err(|e| LabError::Format(e.to_string()))
}

/// Low-frequency random field, deterministic in `(seed, index, channel)`.
fn smooth_random(grid: &Grid, seed: u64, index: usize, channel: u64) -> Result<GridFunction> {
    let mut rng = rng_for(seed, TASK_PDE_DATA + index as u64, channel);
    let modes: Vec<(Vec<f64>, f64, f64)> = (0..6)
        .map(|_| {
            let k: Vec<f64> = (0..grid.dim()).map(|_| rng.random_range(-3i32..=3) as f64).collect();
            (k, rng.random_range(-1.0..1.0), rng.random_range(0.0..2.0 * PI))
        })
        .collect();
    GridFunction::from_fn(*grid, |x| {
        modes
            .iter()
            .map(|(k, a, ph)| a * (2.0 * PI * k.iter().zip(x).map(|(ki, xi)| ki * xi).sum::<f64>() / grid.side() + ph).cos())
            .sum()
    })
}

/// Runs one task and returns its summary row and result payload.
pub fn run_task(cfg: &ExperimentConfig, shared: &Shared, index: usize, task: &TaskConfig) -> Result<(SummaryRow, Value)> {
    let mut row = SummaryRow::new(task, cfg.seed);
    let grid = shared.grid;
    let task_seed = derive_seed(cfg.seed, index as u64, 0);
    let value = match &task.spec {
        TaskSpec::GridInfo => {
            let potential = shared.potential.as_ref().map(|v| {
                let vals = v.values();
                json!({
                    "min": vals.iter().cloned().fold(f64::INFINITY, f64::min),
                    "max": vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                    "mean": v.mean(),
                })
            });
            json!({
                "dim": grid.dim(),
                "n": grid.n(),
                "side": grid.side(),
                "spacing": grid.spacing(),
                "points": grid.len(),
                "cell_volume": grid.cell_volume(),
                "dictionary_balls": shared.dictionary.len(),
                "radii": shared.dictionary.radii(),
                "potential": potential,
            })
        }
        TaskSpec::Rho => {
            let rho = shared.rho()?;
            let vals = rho.values();
            json!({
                "field": to_json(rho)?,
                "min": vals.iter().cloned().fold(f64::INFINITY, f64::min),
                "max": vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                "gamma0": rho.gamma0(),
                "default_shrink": rho.default_shrink(),
            })
        }
        TaskSpec::Covering { shrink } => {
            let rho = shared.rho()?;
            to_json(&critical_covering(rho, shrink.unwrap_or_else(|| rho.default_shrink()))?)?
        }
        TaskSpec::Maximal { maximal, input } => {
            let spec = maximal_spec(shared, maximal)?;
            row.maximal = maximal.label();
            row.theta = maximal.theta;
            let f = match input {
                MaximalInput::File(p) => read_field(&grid, p)?,
                MaximalInput::Indicator(r) => {
                    let c = vec![grid.side() / 2.0; grid.dim()];
                    GridFunction::from_fn(grid, |x| if grid.distance(x, &c) < *r { 1.0 } else { 0.0 })?
                }
            };
            let mf = maximal_apply(&f, &spec)?;
            json!({ "maximal": spec.to_string(), "max": mf.max_abs(), "mean": mf.mean(), "values": mf.values() })
        }
        TaskSpec::KernelCheck { operator, condition, s, n, delta, theta, samples, k0 } => {
            let sampling = Sampling { count: *samples, seed: task_seed };
            let rho = shared.rho()?;
            row.operator = operator.clone();
            row.theta = *theta;
            let report = match condition {
                Condition::CompR1 | Condition::CompR2 => {
                    row.operator = if *condition == Condition::CompR1 { "R1" } else { "R2" }.into();
                    comparison_check(*condition, ComparisonInputs { lop: shared.lop()?, rho, q: cfg.q }, sampling)?
                }
                Condition::Trucho => trucho_check(rho, TruchoMode::Random { samples: *samples, seed: task_seed })?,
                Condition::LemV => potential_growth_check(shared.potential()?, cfg.q, rho, *samples, task_seed)?,
                _ => {
                    let k = kernel_of(&linear_operator(shared, operator)?)?;
                    let k0 = match (condition, k0) {
                        (Condition::Bs | Condition::BInf, Some(name)) => Some(kernel_of(&linear_operator(shared, name)?)?),
                        (Condition::Bs | Condition::BInf, None) => Some(default_k0(shared, operator)?),
                        _ => None,
                    };
                    let params = ConditionParams { s: *s, n: *n, delta: *delta, theta: *theta };
                    check_condition(&k, k0.as_ref(), rho, *condition, &params, sampling)?
                }
            };
            row.best_ratio = Some(report.empirical_constant);
            row.samples = Some(report.sample_count);
            to_json(&report)?
        }
        TaskSpec::FsConstant { operator, maximal, p, search, family } => {
            constant_task(cfg, shared, index, &mut row, operator, maximal, *p, InequalityType::Strong, search, family)?
        }
        TaskSpec::WeakCheck { operator, maximal, search, family } => {
            constant_task(cfg, shared, index, &mut row, operator, maximal, 1.0, InequalityType::Weak, search, family)?
        }
        TaskSpec::Envelope { young, theta, center, rho } => {
            let r = match rho {
                Some(r) => CriticalRadiusField::constant(grid, *r)?,
                None => shared.rho()?.clone(),
            };
            let spec = MaximalSpec::new(
                young.parse()?,
                MaximalMode::Theta { rho: r.rho.clone(), theta: *theta },
                shared.dictionary.clone(),
            )?;
            row.maximal = MaximalConfig {
                young: young.clone(),
                mode: MaximalModeKind::Theta,
                theta: Some(*theta),
                compose: 0,
                rho: *rho,
            }
            .label();
            row.theta = Some(*theta);
            to_json(&chi_envelope(&spec, &r, *center)?)?
        }
        TaskSpec::Integrability(spec) => {
            let report = integrability_verdict(spec)?;
            row.p = Some(spec.p);
            row.theta = Some(report.theta);
            to_json(&report)?
        }
        TaskSpec::Pde { rhs, p, input } => {
            let lop = shared.lop()?;
            let d = grid.dim();
            let (data, data_abs) = match rhs {
                PdeKind::Source => {
                    let f = match input {
                        Some(path) => read_field(&grid, path)?,
                        None => smooth_random(&grid, cfg.seed, index, 0)?,
                    };
                    (PdeRhs::Source(f.clone()), f.abs())
                }
                PdeKind::Divergence => {
                    let fields = (0..d).map(|c| smooth_random(&grid, cfg.seed, index, c as u64)).collect::<Result<Vec<_>>>()?;
                    let flat: Vec<f64> = fields.iter().flat_map(|f| f.values().to_vec()).collect();
                    (PdeRhs::Divergence(fields), pointwise_norm(&grid, &flat))
                }
            };
            let sol = solve_pde(lop, &data)?;
            let den = lp_norm(&data_abs, *p, None)?;
            let ratio = |g: &GridFunction| -> Result<f64> { Ok(lp_norm(g, *p, None)? / den) };
            row.p = Some(*p);
            match rhs {
                PdeKind::Source => json!({
                    "rhs": "source",
                    "residual": sol.residual,
                    "hessian_ratio": ratio(&sol.hess_abs())?,
                    "vu_ratio": ratio(&sol.v_u)?,
                    "v_half_grad_ratio": ratio(&sol.v_half_grad_abs())?,
                }),
                PdeKind::Divergence => json!({
                    "rhs": "divergence",
                    "residual": sol.residual,
                    "grad_ratio": ratio(&sol.grad_abs())?,
                    "v_half_u_ratio": ratio(&sol.v_half_u)?,
                }),
            }
        }
    };
    Ok((row, value))
}

#[allow(clippy::too_many_arguments)]
fn constant_task(
    cfg: &ExperimentConfig,
    shared: &Shared,
    index: usize,
    row: &mut SummaryRow,
    operator: &str,
    maximal: &MaximalConfig,
    p: f64,
    kind: InequalityType,
    search: &SearchConfig,
    family: &TestFamily,
) -> Result<Value> {
    let job = InequalityTask {
        operator: TestOperator::Linear(linear_operator(shared, operator)?),
        maximal: maximal_spec(shared, maximal)?,
        p,
        kind,
        family: family.clone(),
        search: Search { trials: search.trials, seed: cfg.seed, task: index as u64, restarts: search.restarts, steps: search.steps },
    };
    let report = estimate_constant(&job)?;
    row.operator = operator.to_string();
    row.maximal = maximal.label();
    row.p = Some(p);
    row.theta = maximal.theta;
    row.best_ratio = Some(report.best_ratio);
    row.stability = Some(report.stability);
    row.samples = Some(report.samples);
    to_json(&report)
}

fn timestamp() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn slug(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

/// Runs every task of a validated config. Task failures are recorded in
/// their reports (and counted); only invalid configs and unloadable shared
/// inputs abort the run.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunSummary> {
    let mut cfg = cfg.clone();
    if let Some(s) = opts.seed {
        cfg.seed = s;
    }
    if let Some(p) = opts.parallel {
        cfg.parallel = p;
    }
    if let Some(o) = &opts.out {
        cfg.out = Some(o.clone());
    }
    cfg.validate()?;
    let shared = Shared::prepare(&cfg)?;
    let stamp = timestamp();
    let one = |(i, t): (usize, &TaskConfig)| -> TaskReport {
        let (summary, result, error) = match run_task(&cfg, &shared, i, t) {
            Ok((row, v)) => (row, v, None),
            Err(e) => (SummaryRow::new(t, cfg.seed), Value::Null, Some(e.to_string())),
        };
        TaskReport {
            schema: SCHEMA.into(),
            timestamp: stamp,
            index: i,
            task: t.name.clone(),
            kind: t.spec.kind().into(),
            status: if error.is_none() { TaskStatus::Ok } else { TaskStatus::Error },
            error,
            summary,
            config: cfg.clone(),
            result,
        }
    };
    let reports: Vec<TaskReport> = if cfg.parallel {
        cfg.tasks.par_iter().enumerate().map(one).collect()
    } else {
        cfg.tasks.iter().enumerate().map(one).collect()
    };
    let failed = reports.iter().filter(|r| r.status == TaskStatus::Error).count();
    let mut files = Vec::new();
    if let Some(dir) = &cfg.out {
        std::fs::create_dir_all(dir)?;
        for r in &reports {
            let path = dir.join(format!("{:02}-{}.json", r.index, slug(&r.task)));
            let text = serde_json::to_string_pretty(r).map_err(|e| LabError::Format(e.to_string()))?;
            std::fs::write(&path, text + "\n")?;
            files.push(path);
        }
        let index = dir.join("index.csv");
        emit_report(&reports, ReportFormat::Csv, &index)?;
        files.push(index);
    }
    Ok(RunSummary { reports, files, failed })
}
