//! TOML experiment configurations.
//!
//! A config names a grid, an optional potential, and a list of tasks run in
//! declared order. Parsing resolves every default, so the resolved
//! [`ExperimentConfig`] can be embedded verbatim in each report. Errors carry
//! the line of the offending value.
//!
//! ```toml
//! seed = 42
//!
//! [grid]
//! dim = 1
//! n = 64
//!
//! [[task]]
//! kind = "fs-constant"
//! operator = "classical:R10"
//! p = 2.0
//! maximal = { compose = 1 }
//! ```

use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::Spanned;

use crate::error::{LabError, Result};
use crate::grid::Grid;
use crate::inequality::{FamilyKind, IntegrabilitySpec, TestFamily, WeightKind, ALL_F, ALL_W};
use crate::kernel::Condition;
use crate::operators::OperatorName;
use crate::young::YoungFunction;

pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_TRIALS: usize = 200;
pub const DEFAULT_RESTARTS: usize = 4;
pub const DEFAULT_STEPS: usize = 200;
pub const DEFAULT_SAMPLES: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub dim: usize,
    pub n: usize,
    pub side: f64,
}

impl GridConfig {
    pub fn build(&self) -> Result<Grid> {
        Grid::new(self.dim, self.n, self.side)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialSpec {
    Constant { value: f64 },
    /// `.rlgf` binary or CSV (by extension) on the configured grid.
    File { path: PathBuf },
    /// `quadratic` (`|x-c|^2`), `power:α` (`|x-c|^α`) or `cosine`
    /// (`1 + cos(2πx_1/side)`), with `c` the centre of the box.
    Formula { tag: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaximalModeKind {
    Full,
    Local,
    Theta,
}

/// A maximal operator, with ρ taken from the potential unless given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaximalConfig {
    pub young: String,
    pub mode: MaximalModeKind,
    pub theta: Option<f64>,
    pub compose: usize,
    /// Constant critical radius overriding the potential's ρ.
    pub rho: Option<f64>,
}

impl Default for MaximalConfig {
    fn default() -> Self {
        Self { young: "power:1".into(), mode: MaximalModeKind::Full, theta: None, compose: 0, rho: None }
    }
}

impl MaximalConfig {
    pub fn needs_rho(&self) -> bool {
        self.mode != MaximalModeKind::Full && self.rho.is_none()
    }

    /// Short label used in summaries: `M`, `M∘M`, `Mloc[power:2]`, ...
    pub fn label(&self) -> String {
        let young = if self.young == "power:1" { String::new() } else { format!("[{}]", self.young) };
        let base = match self.mode {
            MaximalModeKind::Full => format!("M{young}"),
            MaximalModeKind::Local => format!("Mloc{young}"),
            MaximalModeKind::Theta => format!("Mθ{}{young}", self.theta.unwrap_or(0.0)),
        };
        (0..self.compose).fold(base, |acc, _| format!("M∘{acc}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub trials: usize,
    pub restarts: usize,
    pub steps: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self { trials: DEFAULT_TRIALS, restarts: DEFAULT_RESTARTS, steps: DEFAULT_STEPS }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaximalInput {
    File(PathBuf),
    /// Indicator of the ball of this radius at the grid centre.
    Indicator(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PdeKind {
    Source,
    Divergence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TaskSpec {
    GridInfo,
    Rho,
    Covering {
        /// Ball contraction; `None` is `auto`, the contraction used by the
        /// inequality checks.
        shrink: Option<f64>,
    },
    Maximal {
        maximal: MaximalConfig,
        input: MaximalInput,
    },
    KernelCheck {
        operator: String,
        condition: Condition,
        s: Option<f64>,
        n: Option<f64>,
        delta: Option<f64>,
        theta: Option<f64>,
        samples: usize,
        k0: Option<String>,
    },
    FsConstant {
        operator: String,
        maximal: MaximalConfig,
        p: f64,
        search: SearchConfig,
        family: TestFamily,
    },
    WeakCheck {
        operator: String,
        maximal: MaximalConfig,
        search: SearchConfig,
        family: TestFamily,
    },
    Envelope {
        young: String,
        theta: f64,
        /// Grid index of the centre (default: the grid centre).
        center: usize,
        rho: Option<f64>,
    },
    Integrability(IntegrabilitySpec),
    Pde {
        rhs: PdeKind,
        p: f64,
        input: Option<PathBuf>,
    },
}

impl TaskSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            TaskSpec::GridInfo => "grid-info",
            TaskSpec::Rho => "rho",
            TaskSpec::Covering { .. } => "covering",
            TaskSpec::Maximal { .. } => "maximal",
            TaskSpec::KernelCheck { .. } => "kernel-check",
            TaskSpec::FsConstant { .. } => "fs-constant",
            TaskSpec::WeakCheck { .. } => "weak-check",
            TaskSpec::Envelope { .. } => "envelope",
            TaskSpec::Integrability(_) => "integrability",
            TaskSpec::Pde { .. } => "pde",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskConfig {
    pub name: String,
    #[serde(flatten)]
    pub spec: TaskSpec,
}

/// A fully resolved experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub parallel: bool,
    /// Reverse-Hölder exponent assumed for the potential.
    pub q: f64,
    pub grid: GridConfig,
    pub potential: Option<PotentialSpec>,
    /// Radii per centre in the ball dictionary.
    pub k_radii: usize,
    pub tasks: Vec<TaskConfig>,
}

/// `max(8, ⌈4 log2 n⌉)`.
pub fn default_k_radii(n: usize) -> usize {
    ((4.0 * (n as f64).log2()).ceil() as usize).max(8)
}

impl ExperimentConfig {
    /// A config with defaults and no tasks.
    pub fn new(grid: GridConfig) -> Self {
        Self {
            seed: DEFAULT_SEED,
            out: None,
            parallel: false,
            q: grid.dim as f64,
            grid,
            potential: None,
            k_radii: default_k_radii(grid.n),
            tasks: Vec::new(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let src = std::fs::read_to_string(path)?;
        Self::from_toml_str(&src).map_err(|e| match e {
            LabError::Config(m) => LabError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn from_toml_str(src: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(src).map_err(|e| {
            let line = e.span().map(|s| line_of(src, s.start)).unwrap_or(0);
            LabError::Config(format!("line {line}: {}", e.message().trim()))
        })?;
        raw.resolve().map_err(|(span, msg)| LabError::Config(format!("line {}: {msg}", line_of(src, span.start))))
    }

    /// Semantic checks shared by parsed and programmatic configs.
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| LabError::Config(m);
        self.grid.build()?;
        check_q(self.q, self.grid.dim).map_err(err)?;
        if self.k_radii < 8 {
            return Err(err(format!("k_radii = {} must be at least 8", self.k_radii)));
        }
        for t in &self.tasks {
            let ctx = |m: String| err(format!("task `{}`: {m}", t.name));
            match &t.spec {
                TaskSpec::KernelCheck { operator, .. } if !operator.is_empty() => {
                    check_operator(operator, self.grid.dim).map_err(ctx)?;
                }
                TaskSpec::Envelope { center, .. } if *center >= self.grid.n.pow(self.grid.dim as u32) => {
                    return Err(ctx(format!("center index {center} is outside the grid")));
                }
                TaskSpec::Pde { .. } if self.grid.dim < 3 => {
                    return Err(ctx("pde needs the Schrödinger operator, which requires d ≥ 3".into()));
                }
                TaskSpec::FsConstant { operator, maximal, p, .. } => {
                    check_operator(operator, self.grid.dim).map_err(ctx)?;
                    check_maximal(maximal).map_err(ctx)?;
                    if !(*p >= 1.0) {
                        return Err(ctx(format!("p = {p} must be ≥ 1")));
                    }
                }
                TaskSpec::WeakCheck { operator, maximal, .. } => {
                    check_operator(operator, self.grid.dim).map_err(ctx)?;
                    check_maximal(maximal).map_err(ctx)?;
                }
                TaskSpec::Maximal { maximal, .. } => check_maximal(maximal).map_err(ctx)?,
                TaskSpec::Envelope { young, .. } => {
                    young.parse::<YoungFunction>().map_err(|e| ctx(e.to_string()))?;
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn needs_potential(&self) -> bool {
        self.tasks.iter().any(|t| match &t.spec {
            TaskSpec::Rho | TaskSpec::Covering { .. } | TaskSpec::KernelCheck { .. } | TaskSpec::Pde { .. } => true,
            TaskSpec::FsConstant { operator, maximal, .. } | TaskSpec::WeakCheck { operator, maximal, .. } => {
                maximal.needs_rho() || operator_needs_schrodinger(operator)
            }
            TaskSpec::Maximal { maximal, .. } => maximal.needs_rho(),
            TaskSpec::Envelope { rho, .. } => rho.is_none(),
            TaskSpec::GridInfo | TaskSpec::Integrability(_) => false,
        })
    }
}

fn operator_needs_schrodinger(op: &str) -> bool {
    op.parse::<OperatorName>().map(|o| o.needs_schrodinger()).unwrap_or(false)
}

fn line_of(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].matches('\n').count() + 1
}

fn check_q(q: f64, d: usize) -> std::result::Result<(), String> {
    if !(q > d as f64 / 2.0) || !q.is_finite() {
        return Err(format!("q = {q} must exceed d/2 = {}", d as f64 / 2.0));
    }
    Ok(())
}

fn check_operator(s: &str, d: usize) -> std::result::Result<OperatorName, String> {
    let op: OperatorName = s.parse().map_err(|e: LabError| e.to_string())?;
    op.validate(d).map_err(|e| e.to_string())?;
    if op.needs_schrodinger() && d < 3 {
        return Err(format!("operator `{s}` needs the Schrödinger operator, which requires d ≥ 3"));
    }
    Ok(op)
}

fn check_maximal(m: &MaximalConfig) -> std::result::Result<(), String> {
    m.young.parse::<YoungFunction>().map_err(|e| e.to_string())?;
    match (m.mode, m.theta) {
        (MaximalModeKind::Theta, None) => return Err("mode `theta` needs `theta`".into()),
        (MaximalModeKind::Theta, Some(t)) if !(t >= 0.0) => return Err(format!("θ = {t} must be ≥ 0")),
        (MaximalModeKind::Full | MaximalModeKind::Local, Some(_)) => {
            return Err("`theta` only applies to mode `theta`".into())
        }
        _ => {}
    }
    if let Some(r) = m.rho {
        if !(r > 0.0) {
            return Err(format!("ρ = {r} must be positive"));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- raw layer

type OptSpanned<T> = Option<Spanned<T>>;
type ResolveResult<T> = std::result::Result<T, (Range<usize>, String)>;

fn at<T>(s: &Spanned<T>, msg: impl Into<String>) -> (Range<usize>, String) {
    (s.span(), msg.into())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: Option<u64>,
    out: Option<PathBuf>,
    parallel: Option<bool>,
    q: OptSpanned<f64>,
    grid: Spanned<RawGrid>,
    potential: OptSpanned<RawPotential>,
    dictionary: Option<RawDictionary>,
    #[serde(default, rename = "task")]
    tasks: Vec<Spanned<RawTask>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    dim: Spanned<usize>,
    n: Spanned<usize>,
    side: OptSpanned<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPotential {
    constant: OptSpanned<f64>,
    file: Option<PathBuf>,
    formula: OptSpanned<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDictionary {
    k_radii: OptSpanned<usize>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawShrink {
    Value(f64),
    Word(String),
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawMaximal {
    young: OptSpanned<String>,
    mode: OptSpanned<String>,
    theta: Option<f64>,
    compose: Option<usize>,
    rho: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTask {
    kind: Spanned<String>,
    name: Option<String>,
    operator: OptSpanned<String>,
    maximal: OptSpanned<RawMaximal>,
    p: OptSpanned<f64>,
    trials: Option<usize>,
    restarts: Option<usize>,
    steps: Option<usize>,
    f_families: OptSpanned<Vec<String>>,
    w_families: OptSpanned<Vec<String>>,
    condition: OptSpanned<String>,
    s: Option<f64>,
    n: Option<f64>,
    delta: Option<f64>,
    theta: Option<f64>,
    samples: Option<usize>,
    k0: OptSpanned<String>,
    young: OptSpanned<String>,
    center: OptSpanned<Vec<usize>>,
    rho: Option<f64>,
    shrink: OptSpanned<RawShrink>,
    input: Option<PathBuf>,
    indicator: OptSpanned<f64>,
    rhs: OptSpanned<String>,
    // integrability
    dim: Option<usize>,
    beta: Option<f64>,
    sigma: Option<f64>,
    sides: Option<Vec<f64>>,
    spacing: Option<f64>,
}

fn family_kind(s: &str) -> std::result::Result<FamilyKind, String> {
    match s {
        "fourier_band" => Ok(FamilyKind::FourierBand),
        "spike" => Ok(FamilyKind::Spike),
        "step" => Ok(FamilyKind::Step),
        "indicator" => Ok(FamilyKind::Indicator),
        "extremal" => Ok(FamilyKind::Extremal),
        other => Err(format!("unknown function family `{other}` (fourier_band, spike, step, indicator, extremal)")),
    }
}

fn weight_kind(s: &str) -> std::result::Result<WeightKind, String> {
    match s {
        "spike" => Ok(WeightKind::Spike),
        "indicator" => Ok(WeightKind::Indicator),
        "power_envelope" => Ok(WeightKind::PowerEnvelope),
        "random_positive" => Ok(WeightKind::RandomPositive),
        other => Err(format!("unknown weight family `{other}` (spike, indicator, power_envelope, random_positive)")),
    }
}

/// Builds a test family from kind names; empty lists mean "all defaults".
pub fn family_from_names(f: &[String], w: &[String]) -> Result<TestFamily> {
    let f_kinds = if f.is_empty() {
        ALL_F.to_vec()
    } else {
        f.iter().map(|s| family_kind(s)).collect::<std::result::Result<_, _>>().map_err(LabError::Config)?
    };
    let w_kinds = if w.is_empty() {
        ALL_W.to_vec()
    } else {
        w.iter().map(|s| weight_kind(s)).collect::<std::result::Result<_, _>>().map_err(LabError::Config)?
    };
    Ok(TestFamily { f_kinds, w_kinds })
}

fn parse_family(list: &Spanned<Vec<String>>) -> ResolveResult<Vec<FamilyKind>> {
    list.get_ref().iter().map(|s| family_kind(s).map_err(|m| at(list, m))).collect()
}

fn parse_weights(list: &Spanned<Vec<String>>) -> ResolveResult<Vec<WeightKind>> {
    list.get_ref().iter().map(|s| weight_kind(s).map_err(|m| at(list, m))).collect()
}

impl RawMaximal {
    fn resolve(&self) -> ResolveResult<MaximalConfig> {
        let young = match &self.young {
            Some(y) => {
                let f: YoungFunction = y.get_ref().parse().map_err(|e: LabError| at(y, e.to_string()))?;
                f.to_string()
            }
            None => "power:1".into(),
        };
        let mode = match &self.mode {
            None if self.theta.is_some() => MaximalModeKind::Theta,
            None => MaximalModeKind::Full,
            Some(m) => match m.get_ref().as_str() {
                "full" => MaximalModeKind::Full,
                "local" => MaximalModeKind::Local,
                "theta" => MaximalModeKind::Theta,
                other => return Err(at(m, format!("unknown maximal mode `{other}` (full, local, theta)"))),
            },
        };
        Ok(MaximalConfig { young, mode, theta: self.theta, compose: self.compose.unwrap_or(0), rho: self.rho })
    }
}

impl RawConfig {
    fn resolve(self) -> ResolveResult<ExperimentConfig> {
        let g = self.grid.get_ref();
        let dim = *g.dim.get_ref();
        let n = *g.n.get_ref();
        if dim == 0 {
            return Err(at(&g.dim, "dimension must be at least 1"));
        }
        if n % 2 != 0 || n < 4 {
            return Err(at(&g.n, format!("n = {n}: need an even number of points per axis, at least 4")));
        }
        let side = match &g.side {
            Some(s) => *s.get_ref(),
            None => n as f64,
        };
        let grid = GridConfig { dim, n, side };
        if let Err(e) = grid.build() {
            let span = g.side.as_ref().map(|s| s.span()).unwrap_or(self.grid.span());
            return Err((span, e.to_string()));
        }
        let q = match &self.q {
            Some(q) => {
                check_q(*q.get_ref(), dim).map_err(|m| at(q, m))?;
                *q.get_ref()
            }
            None => dim as f64,
        };
        let potential = match &self.potential {
            None => None,
            Some(p) => {
                let r = p.get_ref();
                let count = r.constant.is_some() as usize + r.file.is_some() as usize + r.formula.is_some() as usize;
                if count != 1 {
                    return Err(at(p, "potential needs exactly one of `constant`, `file`, `formula`"));
                }
                Some(if let Some(c) = &r.constant {
                    if !(*c.get_ref() > 0.0) {
                        return Err(at(c, "constant potential must be positive"));
                    }
                    PotentialSpec::Constant { value: *c.get_ref() }
                } else if let Some(f) = &r.file {
                    PotentialSpec::File { path: f.clone() }
                } else {
                    let t = r.formula.as_ref().expect("counted");
                    check_formula(t.get_ref()).map_err(|m| at(t, m))?;
                    PotentialSpec::Formula { tag: t.get_ref().clone() }
                })
            }
        };
        let k_radii = match self.dictionary.as_ref().and_then(|d| d.k_radii.as_ref()) {
            Some(k) if *k.get_ref() < 8 => return Err(at(k, "k_radii must be at least 8")),
            Some(k) => *k.get_ref(),
            None => default_k_radii(n),
        };
        let mut tasks = Vec::with_capacity(self.tasks.len());
        for t in &self.tasks {
            tasks.push(resolve_task(t, &grid)?);
        }
        let cfg = ExperimentConfig {
            seed: self.seed.unwrap_or(DEFAULT_SEED),
            out: self.out,
            parallel: self.parallel.unwrap_or(false),
            q,
            grid,
            potential,
            k_radii,
            tasks,
        };
        if cfg.potential.is_none() && cfg.needs_potential() {
            let i = cfg
                .tasks
                .iter()
                .position(|t| ExperimentConfig { tasks: vec![t.clone()], ..cfg.clone() }.needs_potential())
                .unwrap_or(0);
            return Err(at(&self.tasks[i], format!("task `{}` needs a [potential] section", cfg.tasks[i].name)));
        }
        Ok(cfg)
    }
}

fn check_formula(tag: &str) -> std::result::Result<(), String> {
    match tag {
        "quadratic" | "cosine" => Ok(()),
        t if t.starts_with("power:") => match t[6..].parse::<f64>() {
            Ok(a) if a > 0.0 => Ok(()),
            _ => Err(format!("`{t}`: power:α needs α > 0")),
        },
        other => Err(format!("unknown potential formula `{other}` (quadratic, power:α, cosine)")),
    }
}

fn resolve_task(st: &Spanned<RawTask>, grid: &GridConfig) -> ResolveResult<TaskConfig> {
    let t = st.get_ref();
    let kind = t.kind.get_ref().as_str();
    let name = t.name.clone().unwrap_or_else(|| kind.to_string());
    let operator = |required: bool| -> ResolveResult<Option<String>> {
        match &t.operator {
            Some(op) => {
                let parsed = check_operator(op.get_ref(), grid.dim).map_err(|m| at(op, m))?;
                Ok(Some(parsed.to_string()))
            }
            None if required => Err(at(st, format!("task kind `{kind}` needs `operator`"))),
            None => Ok(None),
        }
    };
    let maximal = || -> ResolveResult<MaximalConfig> {
        match &t.maximal {
            Some(m) => {
                let cfg = m.get_ref().resolve()?;
                check_maximal(&cfg).map_err(|e| at(m, e))?;
                Ok(cfg)
            }
            None => Ok(MaximalConfig::default()),
        }
    };
    let search = SearchConfig {
        trials: t.trials.unwrap_or(DEFAULT_TRIALS),
        restarts: t.restarts.unwrap_or(DEFAULT_RESTARTS),
        steps: t.steps.unwrap_or(DEFAULT_STEPS),
    };
    let family = || -> ResolveResult<TestFamily> {
        Ok(TestFamily {
            f_kinds: match &t.f_families {
                Some(l) => parse_family(l)?,
                None => ALL_F.to_vec(),
            },
            w_kinds: match &t.w_families {
                Some(l) => parse_weights(l)?,
                None => ALL_W.to_vec(),
            },
        })
    };
    let npts = grid.n.pow(grid.dim as u32);
    let center_default = (0..grid.dim).fold(0, |acc, _| acc * grid.n + grid.n / 2);
    let spec = match kind {
        "grid-info" => TaskSpec::GridInfo,
        "rho" => TaskSpec::Rho,
        "covering" => {
            let shrink = match &t.shrink {
                None => Some(1.0),
                Some(sp) => match sp.get_ref() {
                    RawShrink::Word(w) if w == "auto" => None,
                    RawShrink::Value(v) if *v > 0.0 && *v <= 1.0 => Some(*v),
                    _ => return Err(at(sp, "shrink must be `auto` or lie in (0, 1]")),
                },
            };
            TaskSpec::Covering { shrink }
        }
        "maximal" => {
            let input = match (&t.input, &t.indicator) {
                (Some(_), Some(i)) => return Err(at(i, "give either `input` or `indicator`, not both")),
                (Some(p), None) => MaximalInput::File(p.clone()),
                (None, Some(r)) if !(*r.get_ref() > 0.0) => return Err(at(r, "indicator radius must be positive")),
                (None, Some(r)) => MaximalInput::Indicator(*r.get_ref()),
                (None, None) => MaximalInput::Indicator(grid.side / 8.0),
            };
            TaskSpec::Maximal { maximal: maximal()?, input }
        }
        "kernel-check" => {
            let c = t.condition.as_ref().ok_or_else(|| at(st, "kernel-check needs `condition`"))?;
            let condition: Condition = c.get_ref().parse().map_err(|e: LabError| at(c, e.to_string()))?;
            let needs_op = !matches!(condition, Condition::CompR1 | Condition::CompR2 | Condition::Trucho | Condition::LemV);
            let op = operator(needs_op)?.unwrap_or_default();
            if let Some(k0) = &t.k0 {
                let name = check_operator(k0.get_ref(), grid.dim).map_err(|m| at(k0, m))?;
                if name.needs_schrodinger() {
                    return Err(at(k0, "K0 must be a classical operator"));
                }
            }
            TaskSpec::KernelCheck {
                operator: op,
                condition,
                s: t.s,
                n: t.n,
                delta: t.delta,
                theta: t.theta,
                samples: t.samples.unwrap_or(DEFAULT_SAMPLES),
                k0: t.k0.as_ref().map(|k| k.get_ref().clone()),
            }
        }
        "fs-constant" => {
            let p = t.p.as_ref().ok_or_else(|| at(st, "fs-constant needs `p`"))?;
            if !(*p.get_ref() >= 1.0) {
                return Err(at(p, format!("p = {} must be ≥ 1", p.get_ref())));
            }
            TaskSpec::FsConstant {
                operator: operator(true)?.expect("required"),
                maximal: maximal()?,
                p: *p.get_ref(),
                search,
                family: family()?,
            }
        }
        "weak-check" => TaskSpec::WeakCheck {
            operator: operator(true)?.expect("required"),
            maximal: maximal()?,
            search,
            family: family()?,
        },
        "envelope" => {
            let young = match &t.young {
                Some(y) => y.get_ref().parse::<YoungFunction>().map_err(|e| at(y, e.to_string()))?.to_string(),
                None => "power:1".into(),
            };
            let center = match &t.center {
                None => center_default,
                Some(c) => {
                    let v = c.get_ref();
                    if v.len() != grid.dim || v.iter().any(|&i| i >= grid.n) {
                        return Err(at(c, format!("center must be {} indices below {}", grid.dim, grid.n)));
                    }
                    v.iter().fold(0, |acc, &i| acc * grid.n + i)
                }
            };
            debug_assert!(center < npts);
            TaskSpec::Envelope { young, theta: t.theta.unwrap_or(0.0), center, rho: t.rho }
        }
        "integrability" => {
            let dim = t.dim.unwrap_or(grid.dim);
            let p = t.p.as_ref().map(|p| *p.get_ref()).unwrap_or(2.0);
            let mut spec = IntegrabilitySpec::new(dim, t.beta.unwrap_or(0.0), p, t.sigma.unwrap_or(dim as f64 + 1.0));
            spec.theta = t.theta;
            if let Some(y) = &t.young {
                spec.young = y.get_ref().parse().map_err(|e: LabError| at(y, e.to_string()))?;
            }
            if let Some(r) = t.rho {
                spec.rho = r;
            }
            if let Some(s) = &t.sides {
                spec.sides = s.clone();
            }
            if let Some(h) = t.spacing {
                spec.spacing = h;
            }
            TaskSpec::Integrability(spec)
        }
        "pde" => {
            let rhs = match &t.rhs {
                None => PdeKind::Source,
                Some(r) => match r.get_ref().as_str() {
                    "source" => PdeKind::Source,
                    "divergence" => PdeKind::Divergence,
                    other => return Err(at(r, format!("unknown rhs `{other}` (source, divergence)"))),
                },
            };
            if grid.dim < 3 {
                return Err(at(st, "pde needs the Schrödinger operator, which requires d ≥ 3"));
            }
            let p = t.p.as_ref().map(|p| *p.get_ref()).unwrap_or(2.0);
            TaskSpec::Pde { rhs, p, input: t.input.clone() }
        }
        other => {
            return Err(at(
                &t.kind,
                format!(
                    "unknown task kind `{other}` (grid-info, rho, covering, maximal, kernel-check, fs-constant, \
                     weak-check, envelope, integrability, pde)"
                ),
            ))
        }
    };
    Ok(TaskConfig { name, spec })
}
