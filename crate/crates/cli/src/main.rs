//! Command-line front end: runs check batteries and writes JSON/CSV artifacts.

mod config;
mod report;
mod suites;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Config, ConfigError, Overrides};
use report::Report;
use suites::{Ctx, Failure, Outcome};

#[derive(Parser, Debug)]
#[command(name = "stable-cones", version, about = "Killed stable processes in cones: checks and artifacts")]
struct Cli {
  /// TOML configuration file.
  #[arg(long, global = true)]
  config: Option<PathBuf>,
  /// Output directory.
  #[arg(long, global = true, default_value = "out")]
  out: PathBuf,
  #[arg(long, global = true)]
  seed: Option<u64>,
  /// One value or a comma-separated list.
  #[arg(long, global = true, value_delimiter = ',')]
  alpha: Option<Vec<f64>>,
  /// half-line, punctured-line, half-space, right-circular or slit-plane.
  #[arg(long, global = true)]
  cone: Option<String>,
  #[arg(long, global = true)]
  dim: Option<usize>,
  /// Right-circular aperture in radians.
  #[arg(long, global = true)]
  aperture: Option<f64>,
  /// Monte Carlo path count.
  #[arg(long, global = true)]
  paths: Option<u64>,
  /// Horizon for survival and invariance.
  #[arg(long, global = true)]
  t: Option<f64>,
  /// Start point, comma-separated.
  #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
  x: Option<Vec<f64>>,
  #[command(subcommand)]
  cmd: Command,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
  /// Survival probabilities, pathwise scaling and grid cross-validation.
  Survival,
  /// Invariance of the Martin kernel under the killed semigroup.
  Invariance,
  /// Conditioned endpoint laws at a large time.
  Yaglom,
  /// Homogeneity exponent from survival decay.
  Beta,
  /// Stationary density of the Ornstein-Uhlenbeck semigroup.
  Stationary,
  /// Entrance law, vertex limits and the Yaglom density.
  Entrance,
  /// Weighted-norm decay and hypercontractivity.
  Decay,
  /// Every battery above plus sampler and kernel checks.
  VerifyAll,
}

type Battery = fn(&Ctx, &mut Report) -> Outcome;

fn batteries(cmd: Command) -> Vec<Battery> {
  match cmd {
    Command::Survival => vec![suites::survival_suite],
    Command::Invariance => vec![suites::invariance],
    Command::Yaglom => vec![suites::yaglom],
    Command::Beta => vec![suites::beta],
    Command::Stationary => vec![suites::stationary],
    Command::Entrance => vec![suites::entrance],
    Command::Decay => vec![suites::decay],
    Command::VerifyAll => vec![
      suites::sampler,
      suites::survival_suite,
      suites::invariance,
      suites::beta,
      suites::yaglom,
      suites::stationary,
      suites::entrance,
      suites::decay,
      suites::kernel,
    ],
  }
}

fn load(cli: &Cli) -> Result<Config, ConfigError> {
  let mut cfg = match &cli.config {
    Some(p) => Config::load(p)?,
    None => Config::default(),
  };
  cfg.apply(&Overrides {
    seed: cli.seed,
    alpha: cli.alpha.clone(),
    cone: cli.cone.clone(),
    dim: cli.dim,
    aperture: cli.aperture,
    paths: cli.paths,
    t: cli.t,
    x: cli.x.clone(),
  });
  cfg.validate()?;
  Ok(cfg)
}

fn run(cli: &Cli, cfg: &Config, rep: &mut Report) -> Result<(), Failure> {
  let seed = cfg.resolved_seed()?;
  rep.note(format!("seed {seed}"));
  for (index, alpha) in cfg.alpha.values().into_iter().enumerate() {
    let ctx = Ctx { cfg, seed, alpha, index: index as u64, cone: cfg.cone_for(alpha)?, main: Default::default() };
    for battery in batteries(cli.cmd) {
      match battery(&ctx, rep) {
        // verify-all skips batteries that do not cover the configured cone.
        Err(Failure::Config(e)) if cli.cmd == Command::VerifyAll && e.field == "cone.kind" => {
          rep.note(format!("skipped: {e}"));
        }
        other => other?,
      }
    }
  }
  Ok(())
}

fn main() -> ExitCode {
  let cli = Cli::parse();
  let started = report::unix_seconds();
  let cfg = match load(&cli) {
    Ok(c) => c,
    Err(e) => {
      eprintln!("{e}");
      return ExitCode::from(2);
    }
  };
  let mut rep = match Report::new(&cli.out) {
    Ok(r) => r,
    Err(e) => {
      eprintln!("cannot create {}: {e}", cli.out.display());
      return ExitCode::from(2);
    }
  };
  let result = run(&cli, &cfg, &mut rep);
  let code = match &result {
    Ok(()) if rep.all_pass() => 0,
    Ok(()) => 1,
    Err(Failure::Config(e)) => {
      rep.note(e.to_string());
      2
    }
    Err(Failure::Io(e)) => {
      rep.note(format!("i/o error: {e}"));
      1
    }
    Err(Failure::Numeric(e)) => {
      rep.note(format!("run failed: {e}"));
      1
    }
  };
  if let Err(e) = rep.finish(started) {
    eprintln!("cannot write summary: {e}");
    return ExitCode::from(1);
  }
  let passed = rep.checks.iter().filter(|c| c.pass).count();
  eprintln!("{passed}/{} checks passed", rep.checks.len());
  ExitCode::from(code)
}
