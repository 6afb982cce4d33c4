use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use taperspec::harness::{parse_lens, run, ExperimentConfig, ExperimentKind};

/// Monte Carlo experiments for frequency-domain inference from tapered data.
#[derive(Parser)]
#[command(name = "taperspec", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate series from a model.
    Simulate(Flags),
    /// Average tapered periodograms against the model density.
    Periodogram(Flags),
    /// Plug-in estimation of a linear spectral functional.
    EstimateFunctional(Flags),
    /// Tapered Whittle estimation.
    Whittle(Flags),
    /// Goodness-of-fit tests, simple or composite.
    Gof(Flags),
    /// Normalized traces of Toeplitz products against their limit.
    TraceExperiment(Flags),
    /// Fejér kernel normalization, tail mass and smoothing error.
    Fejer(Flags),
    /// Paired clean/contaminated comparisons under a deterministic trend.
    Robustness(Flags),
    /// Run the experiment described by `--config`.
    Run(Flags),
}

#[derive(Args, Clone, Default)]
struct Flags {
    /// TOML experiment file; flags given on the command line override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model spec, e.g. `ar1{theta=0.5}`, `arfima{d=0.3}`, `fgn{H=0.7}`.
    #[arg(long)]
    model: Option<String>,
    /// Innovation driver: gaussian, t5, laplace, exponential.
    #[arg(long)]
    driver: Option<String>,
    /// rect, linear or tukey.
    #[arg(long)]
    taper: Option<String>,
    /// Sample sizes, comma separated.
    #[arg(long = "T", value_name = "T")]
    lens: Option<String>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output prefix; writes `<out>.csv` and `<out>.json`.
    #[arg(long)]
    out: Option<String>,
    /// Exit with status 2 if any configured threshold fails.
    #[arg(long)]
    check: bool,
    /// Generating function, e.g. `cos:1`, `indicator:pi/2`.
    #[arg(long)]
    g: Option<String>,
    /// Plug-in variance source: model or smoothed.
    #[arg(long)]
    variance: Option<String>,
    /// Whittle weight: unit or lorentz.
    #[arg(long)]
    weight: Option<String>,
    #[arg(long)]
    oversample: Option<usize>,
    #[arg(long)]
    fixed_scale: Option<f64>,
    /// simple or composite.
    #[arg(long)]
    mode: Option<String>,
    /// cosine:m or ar-example[:m].
    #[arg(long)]
    basis: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Data-generating model for power studies.
    #[arg(long)]
    alt: Option<String>,
    /// zero, power:c,beta or slow-power:c,beta.
    #[arg(long)]
    trend: Option<String>,
    /// functional or whittle.
    #[arg(long)]
    target: Option<String>,
    /// Trace pair; only ar1xcos is built in.
    #[arg(long)]
    pair: Option<String>,
    /// Fejér tail cut-off.
    #[arg(long)]
    delta: Option<f64>,
}

fn build_config(kind: Option<ExperimentKind>, f: &Flags) -> Result<ExperimentConfig> {
    let mut cfg = match &f.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => match kind {
            Some(k) => ExperimentConfig::new(k),
            None => bail!("`run` needs --config"),
        },
    };
    if let Some(k) = kind {
        if f.config.is_some() && cfg.experiment != k {
            bail!("config describes a `{}` experiment, not `{k}`", cfg.experiment);
        }
    }
    macro_rules! set {
        ($($flag:ident => $($field:ident).+),* $(,)?) => {
            $(if let Some(v) = &f.$flag { cfg.$($field).+ = v.clone().into(); })*
        };
    }
    set!(model => model, driver => driver, taper => taper, out => out);
    set!(g => options.g, variance => options.variance, weight => options.weight, mode => options.mode);
    set!(basis => options.basis, alt => options.alt, trend => options.trend, target => options.target);
    set!(pair => options.pair);
    if let Some(v) = f.reps {
        cfg.reps = v;
    }
    if let Some(v) = f.seed {
        cfg.seed = v;
    }
    if let Some(v) = &f.lens {
        cfg.lens = parse_lens(v)?;
    }
    if f.oversample.is_some() {
        cfg.options.oversample = f.oversample;
    }
    if f.fixed_scale.is_some() {
        cfg.options.fixed_scale = f.fixed_scale;
    }
    if f.alpha.is_some() {
        cfg.options.alpha = f.alpha;
    }
    if f.delta.is_some() {
        cfg.options.delta = f.delta;
    }
    if f.check && cfg.check.is_empty() {
        cfg.check = cfg.default_checks();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(kind: Option<ExperimentKind>, flags: &Flags) -> Result<bool> {
    let cfg = build_config(kind, flags)?;
    let report = run(&cfg).with_context(|| format!("{} experiment failed", cfg.experiment))?;
    match &cfg.out {
        Some(prefix) => {
            let (csv, json) = report.write(Path::new(prefix))?;
            eprintln!("wrote {} and {}", csv.display(), json.display());
        }
        None => print!("{}", report.to_json()?),
    }
    if flags.check {
        if report.checks.is_empty() {
            eprintln!("--check given but this experiment has no thresholds");
        }
        for c in &report.checks {
            eprintln!("{c}");
        }
        return Ok(report.passed());
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, flags) = match &cli.command {
        Command::Simulate(f) => (Some(ExperimentKind::Simulate), f),
        Command::Periodogram(f) => (Some(ExperimentKind::Periodogram), f),
        Command::EstimateFunctional(f) => (Some(ExperimentKind::EstimateFunctional), f),
        Command::Whittle(f) => (Some(ExperimentKind::Whittle), f),
        Command::Gof(f) => (Some(ExperimentKind::Gof), f),
        Command::TraceExperiment(f) => (Some(ExperimentKind::TraceExperiment), f),
        Command::Fejer(f) => (Some(ExperimentKind::Fejer), f),
        Command::Robustness(f) => (Some(ExperimentKind::Robustness), f),
        Command::Run(f) => (None, f),
    };
    match execute(kind, flags) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
