//! Experiment runner: reproduces the vector-field denoising rate table, the
//! magnetization reconstruction study, the seminorm comparison, and the
//! unregularized instability demonstration, writing `table.csv`,
//! `fields/*.txt` and `report.txt` into the output directory.
//!
//! Exit codes: 0 on success, 2 on configuration/validation errors, 3 on
//! solver failures.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use curvetik::experiment::{
    run_denoising_rates, run_direct_inverse, run_magnetization, run_seminorm_compare,
    validate_schedule, ExperimentConfig, ExperimentKind,
};
use curvetik::Error;

#[derive(Parser)]
#[command(
    name = "curvetik",
    version,
    about = "Tikhonov regularization experiments for vector fields on curves"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Parser)]
struct RunArgs {
    /// TOML experiment configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the RNG seed of the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: ./out-<experiment>).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Denoising convergence-rate study on the sine graph (cross table +
    /// diagonal slope).
    DenoiseRates(RunArgs),
    /// Magnetization reconstruction across a refinement schedule.
    Magnetize(RunArgs),
    /// Best-alpha comparison of the split and ambient seminorms.
    SeminormCompare(RunArgs),
    /// Unregularized least squares next to the regularized solve.
    DirectInverse(RunArgs),
    /// Check a parameter schedule against the convergence conditions.
    ValidateSchedule(RunArgs),
}

fn load_config(args: &RunArgs, kind: ExperimentKind) -> Result<ExperimentConfig, Error> {
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            ExperimentConfig::from_toml_str(&text)?
        }
        None => ExperimentConfig::default_for(kind),
    };
    config.kind = kind;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn out_dir(args: &RunArgs, name: &str) -> PathBuf {
    args.out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("out-{name}")))
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::DenoiseRates(args) => {
            let config = load_config(&args, ExperimentKind::DenoiseRates)?;
            let report = run_denoising_rates(&config)?;
            let dir = out_dir(&args, "denoise-rates");
            report.write_outputs(&dir)?;
            println!("diagonal slope = {:.4}", report.diagonal_slope);
            for (k, err) in report.diagonal_errors.iter().enumerate() {
                println!("level {} diagonal error = {:.4}", k + 1, err);
            }
            println!("outputs in {}", dir.display());
        }
        Command::Magnetize(args) => {
            let config = load_config(&args, ExperimentKind::Magnetize)?;
            let report = run_magnetization(&config)?;
            let dir = out_dir(&args, "magnetize");
            report.write_outputs(&dir)?;
            for r in &report.rows {
                println!(
                    "level {}: rel L2 error {:.4}, normal fraction {:.4}",
                    r.level, r.rel_l2_error, r.normal_fraction
                );
            }
            println!("outputs in {}", dir.display());
        }
        Command::SeminormCompare(args) => {
            let config = load_config(&args, ExperimentKind::SeminormCompare)?;
            let report = run_seminorm_compare(&config)?;
            let dir = out_dir(&args, "seminorm-compare");
            report.write_outputs(&dir)?;
            println!(
                "best split:   error {:.4} at alpha {:.2e}",
                report.best_split.1, report.best_split.0
            );
            println!(
                "best ambient: error {:.4} at alpha {:.2e}",
                report.best_ambient.1, report.best_ambient.0
            );
            println!("outputs in {}", dir.display());
        }
        Command::DirectInverse(args) => {
            let config = load_config(&args, ExperimentKind::DirectInverse)?;
            let report = run_direct_inverse(&config)?;
            let dir = out_dir(&args, "direct-inverse");
            report.write_outputs(&dir)?;
            println!(
                "regularized error {:.4}, unregularized error {:.4e} (ratio {:.2e})",
                report.regularized_error, report.unregularized_error, report.error_ratio
            );
            println!("outputs in {}", dir.display());
        }
        Command::ValidateSchedule(args) => {
            // the schedule to validate may belong to any experiment kind;
            // default to the denoising family
            let config = match &args.config {
                Some(path) => {
                    let text = std::fs::read_to_string(path)?;
                    let mut c = ExperimentConfig::from_toml_str(&text)?;
                    if let Some(seed) = args.seed {
                        c.seed = seed;
                    }
                    c
                }
                None => ExperimentConfig::default_for(ExperimentKind::DenoiseRates),
            };
            let diag = validate_schedule(&config)?;
            let mut stdout = std::io::stdout();
            diag.write_report(&mut stdout)?;
            if let Some(out) = &args.out {
                std::fs::create_dir_all(out)?;
                let mut f = std::fs::File::create(out.join("report.txt"))?;
                diag.write_report(&mut f)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_)
                | Error::InvalidArgument(_)
                | Error::Parse(_)
                | Error::DomainMismatch(_)
                | Error::GridMismatch(_)
                | Error::DimensionMismatch(_)
                | Error::TooFewKnots { .. }
                | Error::GridTooSmall { .. }
                | Error::Io(_) => ExitCode::from(2),
                _ => ExitCode::from(3),
            }
        }
    }
}
