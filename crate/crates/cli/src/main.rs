use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use benders_lab::experiment::{self, ExperimentConfig, RunSettings};
use benders_lab::instance::{Family, GeneratorSpec, Instance};
use benders_lab_core::Method;

#[derive(Parser)]
#[command(
    name = "benders-lab",
    version,
    about = "Two-stage stochastic LP experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance with one method.
    Solve {
        #[arg(long)]
        instance: PathBuf,
        /// de, gapm, single, multi, adaptive or adaptive-single
        #[arg(long)]
        method: Method,
        #[arg(long, default_value_t = 1e-6)]
        tol_gap: f64,
        /// Seconds.
        #[arg(long)]
        time_limit: Option<f64>,
        #[arg(long)]
        iter_limit: Option<usize>,
        /// Directory for summary.csv, the trace and an instance echo.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        parallel_subproblems: usize,
    },
    /// Write a seeded random instance.
    Generate {
        #[arg(long, value_enum)]
        family: Family,
        #[arg(long)]
        scenarios: usize,
        #[arg(long)]
        seed: u64,
        /// Demand correlation (smcf only).
        #[arg(long, default_value_t = 0.0)]
        correlation: f64,
        /// Cost/capacity level 0..=4 (smcf only); defaults to seed mod 5.
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every method of a JSON experiment config.
    Compare {
        #[arg(long)]
        config: PathBuf,
    },
    /// Check an instance file and report the first violated invariant.
    Validate {
        #[arg(long)]
        instance: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Solve {
            instance,
            method,
            tol_gap,
            time_limit,
            iter_limit,
            out,
            parallel_subproblems,
        } => {
            let inst = Instance::load(&instance)?;
            let name = instance
                .file_stem()
                .map_or("instance".into(), |s| s.to_string_lossy().into_owned());
            let settings = RunSettings {
                tol_gap,
                time_limit,
                iteration_limit: iter_limit,
                threads: parallel_subproblems,
                ..RunSettings::default()
            };
            let (rows, _) =
                experiment::run_instance(&name, &inst, &[method], &settings, None, out.as_deref())?;
            if let Some(dir) = &out {
                experiment::write_summary(&dir.join("summary.csv"), &rows)?;
            }
            let r = &rows[0];
            println!("status     {}", r.status);
            println!("objective  {}", r.objective);
            println!("bounds     [{}, {}]", r.z_lower, r.z_upper);
            println!("iterations {}", r.iterations);
            println!(
                "cuts       {} optimality, {} feasibility",
                r.optimality_cuts, r.feasibility_cuts
            );
            println!(
                "partition  {} cells after {} refinements",
                r.final_partition_size, r.refinements
            );
            println!("seconds    {:.3}", r.wall_seconds);
            if r.status == "error" {
                anyhow::bail!("{method} failed on {}", instance.display());
            }
        }
        Command::Generate {
            family,
            scenarios,
            seed,
            correlation,
            grid,
            out,
        } => {
            let spec = GeneratorSpec {
                family,
                scenarios,
                seed,
                correlation,
                grid,
            };
            spec.generate().context("generating instance")?.save(&out)?;
        }
        Command::Compare { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let rows = experiment::run_experiment(&cfg)?;
            for r in rows {
                println!(
                    "{:<24} {:<16} {:<10} {:>16.8} {:>8.3}s",
                    r.instance, r.method, r.status, r.objective, r.wall_seconds
                );
            }
        }
        Command::Validate { instance } => {
            Instance::load(&instance)?.validate()?;
            println!("ok");
        }
    }
    Ok(())
}
