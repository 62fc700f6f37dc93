//! `admm-trajopt`: runs car and walker scenarios from TOML configs and writes
//! CSV tables plus a TOML summary.
//!
//! Exit status: 0 when every step converged, 1 when some step hit the
//! iteration cap, 2 for invalid input, 3 for solver or output failures.
//! Log verbosity comes from `ADMM_TRAJOPT_LOG` (default `warn`).

mod compare;
mod config;
mod error;
mod output;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use admm_trajopt::admm::{ConstraintId, Variant};
use clap::{Parser, Subcommand};

use crate::config::{KeyLines, ScenarioConfig};
use crate::error::CliError;

#[derive(Parser)]
#[command(
    name = "admm-trajopt",
    version,
    about = "Multi-block ADMM trajectory optimization scenarios"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Overrides {
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replaces the ADMM iteration cap of every config.
    #[arg(long, value_name = "N")]
    max_iter: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Solves one scenario.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        /// Replaces the ADMM variant: vanilla, over_relaxed, varying_penalty or swa.
        #[arg(long, value_parser = parse_variant)]
        variant: Option<Variant>,
    },
    /// Solves configs that differ only in their acceleration settings and
    /// aligns one residual across them.
    Compare {
        #[arg(required = true, num_args = 2..)]
        configs: Vec<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
        /// Residual to align: c, h, lambda, j, t or f.
        #[arg(long, default_value = "t", value_parser = parse_residual)]
        residual: ConstraintId,
    },
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: admm_trajopt::Error| e.to_string())
}

fn parse_residual(s: &str) -> Result<ConstraintId, String> {
    ConstraintId::ALL
        .into_iter()
        .find(|id| id.symbol() == s)
        .ok_or_else(|| format!("unknown residual `{s}`; expected one of c, h, lambda, j, t, f"))
}

/// Loads `path` and applies command-line overrides, re-validating after.
fn load(path: &Path, max_iter: Option<usize>, variant: Option<Variant>) -> Result<ScenarioConfig, CliError> {
    let mut cfg = config::load(path)?;
    if let Some(n) = max_iter {
        cfg.admm.stopping.max_iterations = n;
    }
    if let Some(v) = variant {
        cfg.admm.acceleration.variant = v;
    }
    config::check(&cfg, &KeyLines::default()).map_err(|e| e.with_path(path))?;
    Ok(cfg)
}

fn status(converged: bool) -> ExitCode {
    if converged {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn execute(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Run {
            config,
            overrides,
            variant,
        } => {
            let cfg = load(&config, overrides.max_iter, variant)?;
            let stem = config.file_stem().unwrap_or_default();
            let out = overrides
                .out
                .or_else(|| cfg.out.clone())
                .unwrap_or_else(|| Path::new("out").join(stem));
            let report = run::run(&cfg, &out)?;
            let s = &report.summary;
            println!(
                "{} {}: converged={} iterations={} final_cost={} -> {}",
                s.scenario,
                s.variant,
                s.converged,
                s.iterations,
                output::number(s.final_cost),
                report.dir.display()
            );
            Ok(status(report.converged()))
        }
        Command::Compare {
            configs,
            overrides,
            residual,
        } => {
            let loaded = configs
                .iter()
                .map(|p| Ok((p.clone(), load(p, overrides.max_iter, None)?)))
                .collect::<Result<Vec<_>, CliError>>()?;
            let out = overrides.out.unwrap_or_else(|| PathBuf::from("out/compare"));
            let cmp = compare::compare(&loaded, &out, residual)?;
            for (label, converged) in cmp.labels.iter().zip(&cmp.converged) {
                println!("{label}: converged={converged}");
            }
            for c in &cmp.crossover {
                match c.iteration {
                    Some(it) => println!(
                        "{} below {} on r_{} from step {} iteration {it}",
                        c.swa,
                        c.other,
                        cmp.residual,
                        c.step.unwrap_or(1)
                    ),
                    None => println!(
                        "{} never below {} on r_{}: crossover undefined",
                        c.swa, c.other, cmp.residual
                    ),
                }
            }
            Ok(status(cmp.all_converged()))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("ADMM_TRAJOPT_LOG", "warn")).init();
    match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
