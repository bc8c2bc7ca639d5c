use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use safeplan::experiment::{self, EnvSpec, ExperimentConfig, RunReport, TransferConfig};
use safeplan::policy::PolicyDocument;
use safeplan::{Error, Policy, SafetySpec, ThreatMode};

/// Exit status for invalid input.
const EXIT_INVALID: u8 = 2;
/// Exit status when certification was required but RP is uncertified.
const EXIT_UNCERTIFIED: u8 = 3;

#[derive(Parser)]
#[command(name = "safeplan", version, about = "Threat-bounded planning for finite-horizon constrained MDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the baseline threat table and secure set.
    Recon(StageArgs),
    /// Solve the planning stage from recon artifacts.
    Plan(PlanArgs),
    /// Run a full experiment: solve or train every method and evaluate it.
    Run(RunArgs),
    /// Write baseline threat heat maps of one moving obstacle.
    Heatmap(HeatmapArgs),
    /// Train on one environment and evaluate on another.
    Transfer(RunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Discounted,
    Accident,
}

impl From<Mode> for ThreatMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Discounted => ThreatMode::DiscountedDanger,
            Mode::Accident => ThreatMode::AccidentProbability,
        }
    }
}

#[derive(Args)]
struct StageArgs {
    /// JSON file with `env`, `safety` and optionally `tv_cap` and `baseline`
    /// (an experiment file works).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the safety budget.
    #[arg(long)]
    budget: Option<f64>,
    /// Overrides the safety mode.
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[arg(long)]
    tv_cap: Option<f64>,
    /// Baseline policy JSON; the threat-minimizing policy by default.
    #[arg(long)]
    baseline: Option<PathBuf>,
}

#[derive(Args)]
struct PlanArgs {
    /// JSON file with the `env` used for recon.
    #[arg(long)]
    config: PathBuf,
    /// Directory written by `recon`.
    #[arg(long)]
    recon: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    require_certified: bool,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Evaluate a single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    budget: Option<f64>,
    #[arg(long)]
    require_certified: bool,
}

#[derive(Args)]
struct HeatmapArgs {
    #[arg(long)]
    out: PathBuf,
    /// Obstacle offsets span `-radius..=radius` on each axis.
    #[arg(long, default_value_t = 3)]
    radius: usize,
    #[arg(long, default_value_t = 0.5)]
    move_prob: f64,
    #[arg(long, default_value_t = 5)]
    horizon: usize,
}

#[derive(Deserialize)]
struct StageFile {
    env: EnvSpec,
    safety: Option<SafetySpec>,
    tv_cap: Option<f64>,
    baseline: Option<PathBuf>,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())).into())
}

fn base_dir(config: &Path) -> Option<&Path> {
    config.parent().filter(|p| !p.as_os_str().is_empty())
}

fn recon(args: &StageArgs) -> anyhow::Result<u8> {
    let file: StageFile = read_json(&args.config)?;
    let base = base_dir(&args.config);
    let cmdp = experiment::tabular(&file.env, base)?;
    let safety = match (file.safety, args.budget, args.mode) {
        (_, Some(b), Some(m)) => SafetySpec::new(b, m.into())?,
        (Some(s), b, m) => SafetySpec::new(b.unwrap_or(s.budget), m.map_or(s.mode, Into::into))?,
        (None, _, _) => bail!(Error::Config("no safety spec: give `safety` in the file or --budget and --mode".into())),
    };
    let baseline = match args.baseline.as_ref().or(file.baseline.as_ref()) {
        Some(p) => Some(Policy::from_document(&read_json::<PolicyDocument>(p)?)?),
        None => None,
    };
    let r = experiment::recon(&cmdp, &safety, baseline, args.tv_cap.or(file.tv_cap).unwrap_or(1.0))?;
    experiment::write_recon(&args.out, &r)?;
    println!(
        "x* = {:.6e}; {} of {} states secure; baseline threat at start: {:?}",
        r.summary.x_star, r.summary.n_secure_states, r.summary.n_states, r.summary.start_threats
    );
    Ok(0)
}

fn plan(args: &PlanArgs) -> anyhow::Result<u8> {
    let file: StageFile = read_json(&args.config)?;
    let cmdp = experiment::tabular(&file.env, base_dir(&args.config))?;
    let sol = experiment::plan(&cmdp, &args.recon)?;
    experiment::write_plan(&args.out, &sol)?;
    println!("expected return {:.6}; certified {}", sol.expected_return, sol.certified);
    for d in &sol.diagnostics {
        println!("  {d}");
    }
    Ok(if args.require_certified && !sol.certified { EXIT_UNCERTIFIED } else { 0 })
}

fn print_report(report: &RunReport) {
    println!("{:<28} {:>12} {:>10} {:>20} {:>10}", "method", "avg_reward", "crash", "crash_ci95", "certified");
    for o in &report.outcomes {
        let m = &o.metrics;
        let cert = m.certified.map_or("-".to_string(), |c| c.to_string());
        println!(
            "{:<28} {:>12.4} {:>10.4} {:>20} {:>10}",
            m.method,
            m.average_reward,
            m.crash_rate,
            format!("[{:.4}, {:.4}]", m.crash_rate_ci95.0, m.crash_rate_ci95.1),
            cert
        );
        for d in &o.diagnostics {
            println!("  {d}");
        }
    }
}

fn status(report: &RunReport, require_certified: bool) -> u8 {
    if require_certified && report.rp_certified() != Some(true) {
        eprintln!("RP is not certified");
        EXIT_UNCERTIFIED
    } else {
        0
    }
}

fn run(args: &RunArgs) -> anyhow::Result<u8> {
    let text = fs::read_to_string(&args.config).with_context(|| format!("reading {}", args.config.display()))?;
    let mut cfg = ExperimentConfig::from_json(&text)?;
    if let Some(seed) = args.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(out) = &args.out {
        cfg.out = Some(out.clone());
    }
    if let Some(n) = args.episodes {
        cfg.episodes = n;
    }
    if let Some(b) = args.budget {
        cfg.safety = SafetySpec::new(b, cfg.safety.mode)?;
    }
    let report = experiment::run(&cfg, base_dir(&args.config))?;
    print_report(&report);
    Ok(status(&report, args.require_certified || cfg.require_certified))
}

fn transfer(args: &RunArgs) -> anyhow::Result<u8> {
    let text = fs::read_to_string(&args.config).with_context(|| format!("reading {}", args.config.display()))?;
    let mut cfg = TransferConfig::from_json(&text)?;
    if let Some(seed) = args.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(out) = &args.out {
        cfg.out = Some(out.clone());
    }
    if let Some(n) = args.episodes {
        cfg.episodes = n;
    }
    if let Some(b) = args.budget {
        cfg.safety = SafetySpec::new(b, cfg.safety.mode)?;
    }
    let report = experiment::transfer_eval(&cfg, base_dir(&args.config))?;
    print_report(&report);
    Ok(status(&report, args.require_certified))
}

fn heatmap(args: &HeatmapArgs) -> anyhow::Result<u8> {
    let maps = experiment::write_heatmaps(&args.out, args.radius, args.move_prob, args.horizon)?;
    println!("wrote {} heat maps to {}", maps.len(), args.out.display());
    Ok(0)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Invalid(_) | Error::Config(_) | Error::Argument(_) | Error::Dimension(_)) => EXIT_INVALID,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Recon(a) => recon(a),
        Command::Plan(a) => plan(a),
        Command::Run(a) => run(a),
        Command::Heatmap(a) => heatmap(a),
        Command::Transfer(a) => transfer(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
