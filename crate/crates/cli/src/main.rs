use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use schrocurve::run::{cmd_info, cmd_noise_sample, cmd_simulate, cmd_verify, output_dir, RunConfig, RunManifest};
use schrocurve::verify::Suite;

/// Stochastic Schrödinger simulations on asymptotically flat metrics.
#[derive(Parser)]
#[command(name = "schrocurve", version, about)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Config file (TOML or JSON) or the name of a shipped preset.
    #[arg(long, global = true)]
    config: Option<String>,
    /// Overrides the Monte Carlo and verification seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run directory; defaults to runs/<name>.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, env = "SCHROCURVE_WORKERS")]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Picard solves over the Monte Carlo batch.
    Simulate,
    /// Runs a verification battery.
    Verify {
        /// symbols, norms, propagator, noise, isometry, hs, contraction or all.
        suite: String,
    },
    /// Samples noise increments and checks their covariance.
    NoiseSample,
    /// Prints the resolved config, horizon and size estimates.
    Info,
}

fn load(common: &Common) -> schrocurve::Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(spec) => RunConfig::load(spec)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.monte_carlo.seed = Some(seed);
        cfg.verify.seed = seed;
    }
    if let Some(w) = common.workers {
        cfg.workers = w;
    }
    Ok(cfg)
}

fn report(m: &RunManifest, out: &std::path::Path) -> ExitCode {
    for c in &m.verdicts {
        println!("{c}");
    }
    let failed = m.verdicts.iter().filter(|c| !c.pass).count();
    println!("{} checks, {failed} failed; manifest {}", m.verdicts.len(), out.join("manifest.json").display());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn run(cli: Cli) -> schrocurve::Result<ExitCode> {
    let cfg = load(&cli.common)?;
    let out = cli.common.out.as_deref();
    let dir = |command: &str| output_dir(&cfg, out, command);
    match cli.command {
        Command::Simulate => {
            let d = dir("simulate");
            Ok(report(&cmd_simulate(&cfg, Some(&d))?, &d))
        }
        Command::Verify { suite } => {
            let suite: Suite = suite.parse()?;
            let d = dir(&format!("verify-{suite}"));
            Ok(report(&cmd_verify(suite, &cfg, Some(&d))?, &d))
        }
        Command::NoiseSample => {
            let d = dir("noise-sample");
            Ok(report(&cmd_noise_sample(&cfg, Some(&d))?, &d))
        }
        Command::Info => {
            print!("{}", cmd_info(&cfg)?);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
