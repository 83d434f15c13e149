use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use censurv_cli::commands::{
    self, Ablation, EvaluateArgs, Globals, SweepArgs, SynthOverrides, TrainArgs,
};
use censurv_cli::Arm;

#[derive(Parser)]
#[command(
    name = "censurv",
    version,
    about = "Survival-time regression under right-censoring"
)]
struct Cli {
    /// TOML experiment config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the data and training seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Overwrite existing output files.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset as CSV.
    GenData(GenDataArgs),
    /// Print a balanced bin schedule as JSON.
    BinPlan {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        n_bins: Option<usize>,
    },
    /// Train, then score the held-out test split.
    Train {
        #[arg(long)]
        data: Option<PathBuf>,
        /// Bin schedule JSON from `bin-plan`.
        #[arg(long)]
        bins_file: Option<PathBuf>,
        #[arg(long)]
        no_pseudo: bool,
        #[arg(long)]
        no_rank: bool,
        #[arg(long)]
        no_elr: bool,
    },
    /// Score a checkpoint on a dataset and print metrics JSON.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Fail unless the checkpoint has this many bins.
        #[arg(long)]
        bins: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train every arm under increasing artificial censoring.
    SweepCensoring {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        rhos: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// e.g. base,pseudo+rank
        #[arg(long, value_delimiter = ',')]
        arms: Option<Vec<Arm>>,
        /// Parallel runs; 0 uses every core.
        #[arg(long)]
        jobs: Option<usize>,
    },
}

#[derive(Args)]
struct GenDataArgs {
    /// Defaults to data.csv in the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    n_patients: Option<usize>,
    #[arg(long)]
    samples_per_patient: Option<usize>,
    #[arg(long)]
    n_features: Option<usize>,
    /// Fraction of censored patients.
    #[arg(long)]
    censoring: Option<f64>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    weibull_shape: Option<f64>,
    #[arg(long)]
    max_time: Option<f64>,
    #[arg(long)]
    risk_scale: Option<f64>,
    #[arg(long)]
    risk_seed: Option<u64>,
}

fn run(cli: Cli) -> Result<()> {
    let globals = Globals {
        config: cli.config,
        seed: cli.seed,
        output_dir: cli.output_dir,
        force: cli.force,
    };
    match cli.command {
        Command::GenData(a) => {
            let overrides = SynthOverrides {
                n_patients: a.n_patients,
                samples_per_patient: a.samples_per_patient,
                n_features: a.n_features,
                censoring: a.censoring,
                noise: a.noise,
                weibull_shape: a.weibull_shape,
                max_time: a.max_time,
                risk_scale: a.risk_scale,
                risk_seed: a.risk_seed,
            };
            let path = commands::gen_data(&globals, &overrides, a.out.as_deref())?;
            eprintln!("wrote {}", path.display());
        }
        Command::BinPlan { data, n_bins } => {
            println!(
                "{}",
                commands::bin_plan_json(&globals, data.as_deref(), n_bins)?
            );
        }
        Command::Train {
            data,
            bins_file,
            no_pseudo,
            no_rank,
            no_elr,
        } => {
            let args = TrainArgs {
                data,
                bins_file,
                ablation: Ablation {
                    no_pseudo,
                    no_rank,
                    no_elr,
                },
            };
            let out = commands::train_cmd(&globals, &args)?;
            print!("{}", out.report.to_table());
            eprintln!(
                "best epoch {}; outputs in {}",
                out.best_epoch,
                out.dir.display()
            );
        }
        Command::Evaluate {
            checkpoint,
            data,
            bins,
            out,
        } => {
            let args = EvaluateArgs {
                checkpoint,
                data,
                bins,
                out,
            };
            let report = commands::evaluate_cmd(&globals, &args)?;
            print!("{}", commands::metrics_json(&report)?);
        }
        Command::SweepCensoring {
            data,
            rhos,
            seeds,
            arms,
            jobs,
        } => {
            let args = SweepArgs {
                data,
                rhos,
                seeds,
                arms,
                jobs,
            };
            let (dir, rows) = commands::sweep_cmd(&globals, &args)?;
            eprintln!("{} runs; outputs in {}", rows.len(), dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
