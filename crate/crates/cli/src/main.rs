use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use she_lab_core::config::{digest_str, parse_config_with, run_experiment, Overrides};
use she_lab_core::correlation::CorrelationModel;
use she_lab_core::error::Error;
use she_lab_core::experiments::{moment_bounds_experiment, ExperimentResult, Verdict};
use she_lab_core::persist::persist_result;

#[derive(Parser)]
#[command(name = "she-lab", version, about = "Monte Carlo and moment experiments for the stochastic heat equation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ensemble run with per-node moments (optionally checked against the exact second moment).
    Simulate(RunArgs),
    /// Ensemble moments against the upper bound, or with --model the bound table alone.
    Moments(MomentsArgs),
    /// Weak comparison principle under common noise.
    Compare(RunArgs),
    /// Strict positivity and small-ball probabilities.
    Smallball(RunArgs),
    /// Hölder exponent from variogram regression.
    Holder(RunArgs),
    /// Convergence under truncated and mollified initial data.
    ConvergeInitial(RunArgs),
    /// Convergence under mollified noise.
    ConvergeNoise(RunArgs),
    /// Weak convergence to the initial measure as t → 0.
    WeakTrace(RunArgs),
    /// Numerical checks of the kernel identities and inequalities.
    KernelsCheck(KernelArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicas: Option<u64>,
    /// Output directory (overrides `output_dir` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct KernelArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct MomentsArgs {
    #[arg(long, conflicts_with_all = ["model", "gamma", "p", "t_grid"], required_unless_present = "model")]
    config: Option<PathBuf>,
    /// `white`, `riesz:<beta>` or `gaussian:<ell>`, one-dimensional.
    #[arg(long, requires_all = ["t_grid"])]
    model: Option<String>,
    /// Lipschitz constant of ρ (λ for ρ(u) = λu).
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    /// Comma-separated observation times.
    #[arg(long, value_delimiter = ',')]
    t_grid: Vec<f64>,
    #[command(flatten)]
    common: Common,
}

fn parse_model(s: &str) -> anyhow::Result<CorrelationModel> {
    let (kind, arg) = match s.split_once(':') {
        Some((k, a)) => (k, Some(a.parse::<f64>().with_context(|| format!("--model {s}: bad parameter"))?)),
        None => (s, None),
    };
    Ok(match (kind, arg) {
        ("white", None) => CorrelationModel::white(),
        ("riesz", Some(beta)) => CorrelationModel::riesz(1, beta)?,
        ("gaussian", Some(ell)) => CorrelationModel::gaussian(1, ell)?,
        _ => bail!("--model {s}: expected white, riesz:<beta> or gaussian:<ell>"),
    })
}

fn run_config(name: &str, config: &PathBuf, common: &Common) -> anyhow::Result<(ExperimentResult, PathBuf)> {
    let overrides = Overrides { seed: common.seed, replicas: common.replicas, output_dir: common.out.clone() };
    let cfg = parse_config_with(config, &overrides).map_err(|e| report(e, config))?;
    if cfg.experiment.name() != name {
        bail!("{}: experiment.name is {:?} but the subcommand is {name:?}", config.display(), cfg.experiment.name());
    }
    let result = run_experiment(&cfg)?;
    Ok((result, cfg.output_dir))
}

fn report(e: Error, config: &PathBuf) -> anyhow::Error {
    match e {
        Error::Validation(list) => anyhow::anyhow!("{}: invalid config\n  {}", config.display(), list.join("\n  ")),
        other => anyhow::Error::new(other).context(format!("reading {}", config.display())),
    }
}

fn run(cli: Cli) -> anyhow::Result<Verdict> {
    let (result, out) = match &cli.command {
        Command::Simulate(a) => run_config("simulate", &a.config, &a.common)?,
        Command::Compare(a) => run_config("compare", &a.config, &a.common)?,
        Command::Smallball(a) => run_config("smallball", &a.config, &a.common)?,
        Command::Holder(a) => run_config("holder", &a.config, &a.common)?,
        Command::ConvergeInitial(a) => run_config("converge-initial", &a.config, &a.common)?,
        Command::ConvergeNoise(a) => run_config("converge-noise", &a.config, &a.common)?,
        Command::WeakTrace(a) => run_config("weak-trace", &a.config, &a.common)?,
        Command::Moments(a) => match &a.config {
            Some(c) => run_config("moments", c, &a.common)?,
            None => {
                let spec = a.model.as_deref().unwrap_or("white");
                let model = parse_model(spec)?;
                let key = format!("model={spec};gamma={:e};p={:e};t={:?}", a.gamma, a.p, a.t_grid);
                let r = moment_bounds_experiment(&model, a.gamma, a.p, &a.t_grid, &digest_str(&key))?;
                (r, a.common.out.clone().unwrap_or_else(|| "out".into()))
            }
        },
        Command::KernelsCheck(a) => match &a.config {
            Some(c) => run_config("kernels-check", c, &a.common)?,
            None => {
                let text = format!("seed = {}\n[experiment]\nname = \"kernels-check\"\n", a.common.seed.unwrap_or(0));
                let overrides = Overrides { output_dir: a.common.out.clone(), ..Default::default() };
                let cfg = she_lab_core::config::parse_config_str(&text, ".".as_ref(), &overrides)?;
                (run_experiment(&cfg)?, cfg.output_dir)
            }
        },
    };
    let manifest = persist_result(&result, &out)?;
    for v in &result.verdicts {
        println!("{:<13} {}  {}", v.verdict.as_str().to_uppercase(), v.criterion, v.detail);
    }
    println!("manifest: {}", manifest.display());
    Ok(result.overall())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(Verdict::Pass) => ExitCode::SUCCESS,
        Ok(Verdict::Inconclusive) => ExitCode::from(2),
        Ok(Verdict::Fail) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
