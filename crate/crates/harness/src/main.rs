use std::path::{Path, PathBuf};
use std::process::ExitCode;

use abft_core::solver::Variant;
use abft_harness::config::{ExperimentConfig, SEED_ENV};
use abft_harness::ensemble::{run_ensemble, EnsembleSummary};
use abft_harness::gates;
use abft_harness::output::{emit_csv, emit_svg_plot};
use abft_harness::run_arm_name;
use abft_harness::suites::{
    bitflip_suite, emit_verify_csv, malevolent_suite, verification_suite, SuiteOptions, Timing,
    VERIFY_ELLS,
};
use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "abft",
    version,
    about = "Fault-tolerant asynchronous Jacobi experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the benchmark over all sizes and agent counts and write verify.csv.
    Verify(SuiteArgs),
    /// Bit-flip families: by probability and by bit range.
    Bitflip(SuiteArgs),
    /// Malevolent families: by offset mean and by recovery time.
    Malevolent(SuiteArgs),
    /// Run one ensemble described by a TOML file.
    Run(RunArgs),
    /// Render an ensemble CSV as an SVG plot.
    Plot { csv: PathBuf, svg: PathBuf },
    /// Evaluate every acceptance criterion on the virtual clock.
    Accept {
        #[arg(long, env = SEED_ENV, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Args)]
struct SuiteArgs {
    /// Directory for the CSV files.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    seed: u64,
    /// Use the virtual clock with protocol durations divided by ten.
    #[arg(long)]
    compressed: bool,
    /// Also write an SVG next to each CSV.
    #[arg(long)]
    plot: bool,
}

impl SuiteArgs {
    fn options(&self) -> SuiteOptions {
        SuiteOptions {
            timing: if self.compressed {
                Timing::Compressed
            } else {
                Timing::WallClock
            },
            trials: self.trials,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output CSV.
    #[arg(long, default_value = "run.csv")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    variant: Option<Variant>,
}

fn print_ensemble(e: &EnsembleSummary) {
    println!(
        "{:<28} converged {:>2}/{:<2} geo time {}",
        e.arm,
        e.converged(),
        e.trials.len(),
        e.geo_time().map_or("-".into(), |t| format!("{t:.3} s"))
    );
}

fn plot_next_to(csv: &Path) -> Result<()> {
    let svg = csv.with_extension("svg");
    emit_svg_plot(csv, &svg)?;
    println!("wrote {}", svg.display());
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Verify(args) => {
            let rows = verification_suite(&args.options(), &VERIFY_ELLS, |r| {
                println!(
                    "{:<5} ell={:<3} n={:<3} cond={:<10.3} converged {:>2}/{:<2} geo time {}",
                    r.variant.name(),
                    r.ell,
                    r.agents,
                    r.cond_a,
                    r.converged,
                    r.trials,
                    r.geo_time.map_or("-".into(), |t| format!("{t:.3} s"))
                )
            })?;
            let path = args.out.join("verify.csv");
            emit_verify_csv(&rows, &path)?;
            println!("wrote {}", path.display());
            Ok(rows.iter().all(|r| r.converged == r.trials))
        }
        Command::Bitflip(args) => {
            for family in bitflip_suite(&args.options(), print_ensemble)? {
                family.emit(&args.out)?;
                let path = args.out.join(family.file);
                println!("wrote {}", path.display());
                if args.plot {
                    plot_next_to(&path)?;
                }
            }
            Ok(true)
        }
        Command::Malevolent(args) => {
            for family in malevolent_suite(&args.options(), print_ensemble)? {
                family.emit(&args.out)?;
                let path = args.out.join(family.file);
                println!("wrote {}", path.display());
                if args.plot {
                    plot_next_to(&path)?;
                }
            }
            Ok(true)
        }
        Command::Run(args) => {
            let mut config = ExperimentConfig::load(&args.config)?;
            config.apply_env()?;
            if let Some(seed) = args.seed {
                config.seed = seed;
            }
            if let Some(trials) = args.trials {
                config.trials = trials;
            }
            if let Some(variant) = args.variant {
                config.variant = variant;
            }
            config.validate()?;
            let summary = run_ensemble(&run_arm_name(&config), &config)?;
            print_ensemble(&summary);
            emit_csv(std::slice::from_ref(&summary), &args.out)?;
            println!("wrote {}", args.out.display());
            Ok(true)
        }
        Command::Plot { csv, svg } => {
            emit_svg_plot(&csv, &svg)?;
            println!("wrote {}", svg.display());
            Ok(true)
        }
        Command::Accept { seed } => {
            let opts = SuiteOptions {
                timing: Timing::Compressed,
                trials: 10,
                seed,
            };
            let criteria = gates::run_all(&opts, |line| println!("{line}"))?;
            let passed = criteria.iter().filter(|c| c.passed).count();
            println!("{passed}/{} criteria passed", criteria.len());
            Ok(passed == criteria.len())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()).context("abft") {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
