use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sotlab::experiments::{self, collect_verdicts, emit_all, render_summary, ExperimentConfig, Report, Scenario};
use sotlab::Error;

#[derive(Parser)]
#[command(name = "sotlab", version, about = "Run the sotlab experiment scenarios and check their verdicts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Kernel identities, time-change sandwich and contraction.
    KernelsCheck(Common),
    /// Solve the smoothed Schrödinger bridge and save its potentials.
    BridgeSolve(Common),
    /// Zero-mass limit with the uncorrected coupling.
    ZeroMass(Common),
    /// Zero-mass limit with a prescribed initial momentum.
    ZeroMassBeta(Common),
    /// Value-function checks for a terminal reward.
    Duality(Common),
    /// Terminal law of the simulated bridge against the target marginal.
    Marginal(Common),
    /// Deterministic energy identity on polynomial paths.
    Deterministic(Common),
    /// Sampled checks of the cost assumptions.
    Assumptions(Common),
    /// Collate the verdicts of every run found in --out.
    Report(Common),
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Extra `key=value` config overrides, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Command {
    fn split(&self) -> (Option<Scenario>, &Common) {
        match self {
            Command::KernelsCheck(c) => (Some(Scenario::KernelsCheck), c),
            Command::BridgeSolve(c) => (Some(Scenario::BridgeSolve), c),
            Command::ZeroMass(c) => (Some(Scenario::ZeroMass), c),
            Command::ZeroMassBeta(c) => (Some(Scenario::ZeroMassBeta), c),
            Command::Duality(c) => (Some(Scenario::Duality), c),
            Command::Marginal(c) => (Some(Scenario::Marginal), c),
            Command::Deterministic(c) => (Some(Scenario::Deterministic), c),
            Command::Assumptions(c) => (Some(Scenario::Assumptions), c),
            Command::Report(c) => (None, c),
        }
    }
}

fn load_config(common: &Common) -> sotlab::Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    for kv in &common.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got '{kv}'")))?;
        cfg.set(k.trim(), v)?;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run_scenario(scenario: Scenario, common: &Common) -> sotlab::Result<Report> {
    let cfg = load_config(common)?;
    let report = experiments::run(scenario, &cfg, Some(&common.out))?;
    emit_all(&report, &common.out)?;
    Ok(report)
}

fn collate(out: &Path) -> sotlab::Result<bool> {
    let verdicts = collect_verdicts(out)?;
    if verdicts.is_empty() {
        return Err(Error::Config(format!("no run records in {}", out.display())));
    }
    let md = render_summary(&verdicts);
    let path = out.join("report.md");
    std::fs::write(&path, &md).map_err(|e| Error::Io { path: path.display().to_string(), source: e })?;
    print!("{md}");
    Ok(verdicts.iter().all(|(_, v)| v.pass))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (scenario, common) = cli.command.split();
    if let Some(n) = common.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let outcome = match scenario {
        Some(s) => run_scenario(s, common).map(|r| {
            for v in &r.verdicts {
                println!("{v}");
            }
            println!("{}: {} in {:.1} s", s, if r.passed() { "PASS" } else { "FAIL" }, r.elapsed_seconds);
            r.passed()
        }),
        None => collate(&common.out),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e @ (Error::Config(_) | Error::InvalidParameter(_))) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
