use std::path::PathBuf;
use std::process::ExitCode;

use chanceopt_cli::compare::{read_design, run_compare_chance};
use chanceopt_cli::sample_field::run_sample_field;
use chanceopt_cli::scaling::{run_scaling, ScalingOptions};
use chanceopt_cli::verify::{run_verify, VerifyOptions};
use chanceopt_cli::{
    init_threads, run_optimize, CliError, Engine, Experiment, ExperimentConfig, Overrides,
};
use clap::{Parser, Subcommand};

/// Chance-constrained groundwater extraction with Taylor surrogates.
#[derive(Parser)]
#[command(name = "chanceopt", version)]
struct Cli {
    /// TOML configuration; defaults reproduce the reference experiment.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    engine: Option<Engine>,
    /// Cells per side of the mesh.
    #[arg(long, global = true)]
    mesh: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the continuation solve and write report.json and CSV tables.
    Optimize,
    /// Run derivative, oracle and accounting checks; exit 1 on failure.
    Verify {
        #[arg(long, hide = true)]
        corrupt_gradient: bool,
    },
    /// Chance estimates at one design for nested sample prefixes.
    CompareChance {
        /// JSON array, or a report.json whose z_opt is used. Defaults to z0.
        #[arg(long)]
        design: Option<PathBuf>,
        /// Smoothing sharpness; defaults to the last scheduled beta.
        #[arg(long)]
        beta: Option<f64>,
    },
    /// Optimize on several meshes and export the spectra at each optimum.
    Scaling {
        #[arg(long, value_delimiter = ',', default_value = "16,32,64")]
        meshes: Vec<usize>,
        #[arg(long, default_value_t = ScalingOptions::default().threshold)]
        threshold: f64,
        #[arg(long, default_value_t = ScalingOptions::default().spectrum_rank)]
        spectrum_rank: usize,
    },
    /// Export the mean field and the first samples.
    SampleField {
        #[arg(long, default_value_t = 4)]
        count: usize,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    let mut config = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    config.apply(&Overrides {
        seed: cli.seed,
        out: cli.out.clone(),
        engine: cli.engine,
        mesh: cli.mesh,
    })?;
    let out = config.run.out.clone();
    match cli.command {
        Command::Optimize => {
            let exp = Experiment::new(config)?;
            let outcome = run_optimize(&exp, Some(&out))?;
            let r = &outcome.report;
            if let Some(last) = r.steps.last() {
                let full = last.estimate(chanceopt_core::ChanceSource::FullModel, true);
                println!(
                    "{} steps, chance {:.4} +- {:.4} (M = {}), {} solves, {:.1} s",
                    r.steps.len(),
                    full.value,
                    full.std_error,
                    full.samples,
                    r.counters.optimizer.total,
                    outcome.wall_seconds
                );
            }
        }
        Command::Verify { corrupt_gradient } => {
            run_verify(&config, Some(&out), VerifyOptions { corrupt_gradient })?;
        }
        Command::CompareChance { design, beta } => {
            let beta = beta.unwrap_or_else(|| config.schedule().step(config.schedule.l_max).beta);
            let exp = Experiment::new(config)?;
            let z = match design {
                Some(p) => read_design(&p)?,
                None => exp.config.z0(),
            };
            let rows = run_compare_chance(&exp, &z, beta, Some(&out))?;
            println!(
                "{} rows written to {}",
                rows.len(),
                out.join("chance_compare.csv").display()
            );
        }
        Command::Scaling {
            meshes,
            threshold,
            spectrum_rank,
        } => {
            let res = run_scaling(
                &config,
                &meshes,
                ScalingOptions {
                    spectrum_rank,
                    threshold,
                },
                Some(&out),
            )?;
            for r in &res.rows {
                println!(
                    "n = {:>3}  dim = {:>5}  |lambda| > {threshold}: {:>2}  inner iterations {}",
                    r.n, r.dim, r.above_threshold, r.inner_iterations
                );
            }
        }
        Command::SampleField { count } => {
            let exp = Experiment::new(config)?;
            let written = run_sample_field(&exp, count, &out)?;
            println!(
                "{written} fields written to {}",
                out.join("field_samples.csv").display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("chanceopt: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
