//! `riesz-lab` command line: one subcommand per experiment kind, plus `run`
//! for TOML configs. Single-task subcommands print their JSON report to
//! stdout; with `--out` they also write it (and an index) to disk.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use riesz_lab::config::{
    family_from_names, ExperimentConfig, GridConfig, MaximalConfig, MaximalInput, MaximalModeKind, PdeKind,
    PotentialSpec, SearchConfig, TaskConfig, TaskSpec, DEFAULT_RESTARTS, DEFAULT_SAMPLES, DEFAULT_STEPS, DEFAULT_TRIALS,
};
use riesz_lab::inequality::IntegrabilitySpec;
use riesz_lab::kernel::Condition;
use riesz_lab::runner::{run_config, run_experiment, RunOptions, RunSummary};

#[derive(Parser)]
#[command(name = "riesz-lab", version, about = "Maximal operators, Riesz transforms and weighted inequalities on periodic grids")]
struct Cli {
    /// Master seed for every stochastic step.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory for JSON reports and the CSV index.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct GridArgs {
    #[arg(long, default_value_t = 1)]
    dim: usize,
    /// Points per axis (even).
    #[arg(long, default_value_t = 64)]
    n: usize,
    /// Torus side length (default: n, i.e. unit spacing).
    #[arg(long)]
    side: Option<f64>,
}

#[derive(Args, Clone, Default)]
struct PotentialArgs {
    /// Constant potential V ≡ c.
    #[arg(long, group = "potential")]
    potential_constant: Option<f64>,
    /// Potential from an .rlgf or CSV file.
    #[arg(long, group = "potential")]
    potential_file: Option<PathBuf>,
    /// Potential formula: quadratic, power:α or cosine.
    #[arg(long, group = "potential")]
    potential_formula: Option<String>,
    /// Reverse-Hölder exponent of V (default: d).
    #[arg(long)]
    q: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Full,
    Local,
    Theta,
}

#[derive(Args, Clone)]
struct MaximalArgs {
    /// Young function: power:r, logpower:a or loglog:a,b.
    #[arg(long, default_value = "power:1")]
    young: String,
    #[arg(long, value_enum, default_value_t = Mode::Full)]
    mode: Mode,
    /// Damping exponent (mode theta).
    #[arg(long)]
    theta: Option<f64>,
    /// Extra Hardy–Littlewood applications afterwards (1 gives M∘M).
    #[arg(long, default_value_t = 0)]
    compose: usize,
    /// Constant critical radius instead of the potential's.
    #[arg(long)]
    rho: Option<f64>,
}

impl MaximalArgs {
    fn config(&self) -> MaximalConfig {
        let mode = match self.mode {
            Mode::Full if self.theta.is_some() => MaximalModeKind::Theta,
            Mode::Full => MaximalModeKind::Full,
            Mode::Local => MaximalModeKind::Local,
            Mode::Theta => MaximalModeKind::Theta,
        };
        MaximalConfig { young: self.young.clone(), mode, theta: self.theta, compose: self.compose, rho: self.rho }
    }
}

#[derive(Args, Clone)]
struct SearchArgs {
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    trials: usize,
    #[arg(long, default_value_t = DEFAULT_RESTARTS)]
    restarts: usize,
    #[arg(long, default_value_t = DEFAULT_STEPS)]
    steps: usize,
    /// Function families (comma separated; default: all).
    #[arg(long, value_delimiter = ',')]
    f_families: Vec<String>,
    /// Weight families (comma separated; default: all).
    #[arg(long, value_delimiter = ',')]
    w_families: Vec<String>,
}

impl SearchArgs {
    fn config(&self) -> SearchConfig {
        SearchConfig { trials: self.trials, restarts: self.restarts, steps: self.steps }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Rhs {
    Source,
    Divergence,
}

#[derive(Subcommand)]
enum Command {
    /// Grid, dictionary and potential summary.
    GridInfo {
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        potential: PotentialArgs,
    },
    /// Critical radius field of a potential.
    Rho {
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        potential: PotentialArgs,
    },
    /// Covering by critical balls and its overlap statistics.
    Covering {
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        potential: PotentialArgs,
        /// Ball contraction in (0, 1], or `auto` for the contraction used by
        /// the inequality checks.
        #[arg(long, default_value = "1")]
        shrink: String,
    },
    /// Applies a maximal operator to a field (file, or a centred indicator).
    Maximal {
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        potential: PotentialArgs,
        #[command(flatten)]
        maximal: MaximalArgs,
        #[arg(long, conflicts_with = "indicator")]
        input: Option<PathBuf>,
        #[arg(long)]
        indicator: Option<f64>,
    },
    /// Empirical kernel condition constants.
    KernelCheck {
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        potential: PotentialArgs,
        #[arg(long, default_value = "")]
        operator: String,
        /// a_s, a_s_prime, b_s, c_s, a_inf, b_inf, comp_r1, comp_r2, lem_v, trucho.
        #[arg(long)]
        condition: Condition,
        #[arg(long)]
        s: Option<f64>,
        /// Exponent N of the (1 + R/ρ)^N factor.
        #[arg(long = "exponent-n")]
        exponent_n: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_SAMPLES)]
        samples: usize,
        /// Classical comparison kernel for b_s / b_inf.
        #[arg(long)]
        k0: Option<String>,
    },
    /// Strong-type constant ∫|Tf|^p w ≤ C ∫|f|^p 𝓜w.
    FsConstant {
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        potential: PotentialArgs,
        #[arg(long)]
        operator: String,
        #[arg(long)]
        p: f64,
        #[command(flatten)]
        maximal: MaximalArgs,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// Weak-type constant λ w({|Tf| > λ}) ≤ C ∫|f| 𝓜w.
    WeakCheck {
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        potential: PotentialArgs,
        #[arg(long)]
        operator: String,
        #[command(flatten)]
        maximal: MaximalArgs,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// Power envelopes of the damped maximal function of a critical ball.
    Envelope {
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        potential: PotentialArgs,
        #[arg(long, default_value = "power:1")]
        young: String,
        #[arg(long, default_value_t = 0.0)]
        theta: f64,
        /// Centre as grid indices, comma separated (default: grid centre).
        #[arg(long, value_delimiter = ',')]
        center: Vec<usize>,
        #[arg(long)]
        rho: Option<f64>,
    },
    /// Local integrability trend against (1+|x|)^{-σ}.
    Integrability {
        #[arg(long, default_value_t = 1)]
        dim: usize,
        #[arg(long, default_value_t = 0.0)]
        beta: f64,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long)]
        sigma: f64,
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long, default_value = "power:1")]
        young: String,
        #[arg(long, default_value_t = 2.0)]
        rho: f64,
        #[arg(long, value_delimiter = ',', default_values_t = [8.0, 16.0, 32.0])]
        sides: Vec<f64>,
        #[arg(long, default_value_t = 1.0)]
        spacing: f64,
    },
    /// Solves -Δu + Vu = f (or ∇·F) and reports the a-priori ratios.
    Pde {
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        potential: PotentialArgs,
        #[arg(long, value_enum, default_value_t = Rhs::Source)]
        rhs: Rhs,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Runs a TOML experiment config.
    Run {
        config: PathBuf,
        /// Run independent tasks concurrently.
        #[arg(long)]
        parallel: bool,
    },
}

fn base_config(grid: &GridArgs, potential: &PotentialArgs) -> ExperimentConfig {
    let g = GridConfig { dim: grid.dim, n: grid.n, side: grid.side.unwrap_or(grid.n as f64) };
    let mut cfg = ExperimentConfig::new(g);
    if let Some(q) = potential.q {
        cfg.q = q;
    }
    cfg.potential = if let Some(c) = potential.potential_constant {
        Some(PotentialSpec::Constant { value: c })
    } else if let Some(p) = &potential.potential_file {
        Some(PotentialSpec::File { path: p.clone() })
    } else {
        potential.potential_formula.as_ref().map(|t| PotentialSpec::Formula { tag: t.clone() })
    };
    cfg
}

fn single(mut cfg: ExperimentConfig, spec: TaskSpec) -> ExperimentConfig {
    cfg.tasks.push(TaskConfig { name: spec.kind().to_string(), spec });
    cfg
}

fn build(command: Command) -> Result<Option<ExperimentConfig>> {
    let cfg = match command {
        Command::Run { .. } => return Ok(None),
        Command::GridInfo { grid, potential } => single(base_config(&grid, &potential), TaskSpec::GridInfo),
        Command::Rho { grid, potential } => single(base_config(&grid, &potential), TaskSpec::Rho),
        Command::Covering { grid, potential, shrink } => {
            let shrink = match shrink.as_str() {
                "auto" => None,
                v => match v.parse::<f64>() {
                    Ok(x) if x > 0.0 && x <= 1.0 => Some(x),
                    _ => bail!("--shrink must be `auto` or lie in (0, 1], got `{v}`"),
                },
            };
            single(base_config(&grid, &potential), TaskSpec::Covering { shrink })
        }
        Command::Maximal { grid, potential, maximal, input, indicator } => {
            let side = grid.side.unwrap_or(grid.n as f64);
            let input = match (input, indicator) {
                (Some(p), _) => MaximalInput::File(p),
                (None, Some(r)) => MaximalInput::Indicator(r),
                (None, None) => MaximalInput::Indicator(side / 8.0),
            };
            single(base_config(&grid, &potential), TaskSpec::Maximal { maximal: maximal.config(), input })
        }
        Command::KernelCheck { grid, potential, operator, condition, s, exponent_n, delta, theta, samples, k0 } => single(
            base_config(&grid, &potential),
            TaskSpec::KernelCheck { operator, condition, s, n: exponent_n, delta, theta, samples, k0 },
        ),
        Command::FsConstant { grid, potential, operator, p, maximal, search } => single(
            base_config(&grid, &potential),
            TaskSpec::FsConstant {
                operator,
                maximal: maximal.config(),
                p,
                search: search.config(),
                family: family_from_names(&search.f_families, &search.w_families)?,
            },
        ),
        Command::WeakCheck { grid, potential, operator, maximal, search } => single(
            base_config(&grid, &potential),
            TaskSpec::WeakCheck {
                operator,
                maximal: maximal.config(),
                search: search.config(),
                family: family_from_names(&search.f_families, &search.w_families)?,
            },
        ),
        Command::Envelope { grid, potential, young, theta, center, rho } => {
            let n = grid.n;
            let center = if center.is_empty() {
                (0..grid.dim).fold(0, |acc, _| acc * n + n / 2)
            } else {
                if center.len() != grid.dim || center.iter().any(|&i| i >= n) {
                    bail!("--center needs {} indices below {n}", grid.dim);
                }
                center.iter().fold(0, |acc, &i| acc * n + i)
            };
            single(base_config(&grid, &potential), TaskSpec::Envelope { young, theta, center, rho })
        }
        Command::Integrability { dim, beta, p, sigma, theta, young, rho, sides, spacing } => {
            let mut spec = IntegrabilitySpec::new(dim, beta, p, sigma);
            spec.theta = theta;
            spec.young = young.parse()?;
            spec.rho = rho;
            spec.sides = sides;
            spec.spacing = spacing;
            let grid = GridArgs { dim, n: 8, side: None };
            single(base_config(&grid, &PotentialArgs::default()), TaskSpec::Integrability(spec))
        }
        Command::Pde { grid, potential, rhs, p, input } => {
            let rhs = match rhs {
                Rhs::Source => PdeKind::Source,
                Rhs::Divergence => PdeKind::Divergence,
            };
            single(base_config(&grid, &potential), TaskSpec::Pde { rhs, p, input })
        }
    };
    Ok(Some(cfg))
}

fn report(summary: &RunSummary, print_reports: bool) -> Result<()> {
    let mut out = std::io::stdout().lock();
    if print_reports {
        for r in &summary.reports {
            // a closed pipe (`| head`) is not an error worth reporting
            if writeln!(out, "{}", serde_json::to_string_pretty(r)?).is_err() {
                return Ok(());
            }
        }
    } else {
        for r in &summary.reports {
            let status = match &r.error {
                None => "ok".to_string(),
                Some(e) => format!("error: {e}"),
            };
            let ratio = r.summary.best_ratio.map(|b| format!(" best_ratio={b:.6}")).unwrap_or_default();
            if writeln!(out, "[{:02}] {} ({}){ratio}: {status}", r.index, r.task, r.kind).is_err() {
                return Ok(());
            }
        }
    }
    for f in &summary.files {
        eprintln!("wrote {}", f.display());
    }
    for r in summary.reports.iter().filter(|r| r.error.is_some()) {
        eprintln!("task `{}` failed: {}", r.task, r.error.as_deref().unwrap_or_default());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match real_main(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main(cli: Cli) -> Result<ExitCode> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global().context("configuring the thread pool")?;
    }
    let opts = RunOptions { out: cli.out.clone(), seed: cli.seed, parallel: None };
    let (summary, print_reports) = match cli.command {
        Command::Run { config, parallel } => {
            let opts = RunOptions { parallel: parallel.then_some(true), ..opts };
            (run_config(&config, &opts)?, false)
        }
        other => {
            let cfg = build(other)?.expect("single-task command");
            (run_experiment(&cfg, &opts)?, true)
        }
    };
    report(&summary, print_reports)?;
    Ok(if summary.exit_code() == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
}
