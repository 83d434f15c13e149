//! Implementations of the subcommands. Each returns an error instead of
//! exiting so the binary decides the exit status.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use censurv::data::{generate_synthetic, load_csv, save_csv, split_patient_wise};
use censurv::trainer::write_atomic;
use censurv::{bin_plan, evaluate, train, Checkpoint, Dataset, MetricsReport, TrainConfig};

use crate::config::ExperimentConfig;
use crate::sweep::{run_sweep, summarize, to_csv, Arm, SweepPlan, SweepRow};

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct Globals {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub force: bool,
}

impl Globals {
    /// The config file, or defaults, with the `--seed` override applied to
    /// both the data generator and the trainer.
    pub fn experiment(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.data.synth.seed = seed;
            cfg.train.seed = seed;
        }
        Ok(cfg)
    }

    pub fn output_dir(&self, cfg: &ExperimentConfig) -> PathBuf {
        self.output_dir
            .clone()
            .unwrap_or_else(|| cfg.output.dir.clone())
    }

    fn check_writable(&self, path: &Path) -> Result<()> {
        if path.exists() && !self.force {
            bail!(
                "{} already exists; pass --force to overwrite",
                path.display()
            );
        }
        Ok(())
    }
}

/// The `--no-*` switches of `train`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Ablation {
    pub no_pseudo: bool,
    pub no_rank: bool,
    pub no_elr: bool,
}

impl Ablation {
    /// Turn components off. Flags never switch on something the config
    /// disabled.
    pub fn apply(self, config: &TrainConfig) -> TrainConfig {
        TrainConfig {
            pseudo: config.pseudo && !self.no_pseudo,
            rank: config.rank && !self.no_rank,
            elr: config.elr && !self.no_elr,
            ..config.clone()
        }
    }
}

/// Overrides for the synthetic generator given on the command line.
#[derive(Debug, Clone, Default)]
pub struct SynthOverrides {
    pub n_patients: Option<usize>,
    pub samples_per_patient: Option<usize>,
    pub n_features: Option<usize>,
    pub censoring: Option<f64>,
    pub noise: Option<f64>,
    pub weibull_shape: Option<f64>,
    pub max_time: Option<f64>,
    pub risk_scale: Option<f64>,
    pub risk_seed: Option<u64>,
}

pub fn gen_data(
    globals: &Globals,
    overrides: &SynthOverrides,
    out: Option<&Path>,
) -> Result<PathBuf> {
    let cfg = globals.experiment()?;
    let mut spec = cfg.data.synth.clone();
    let o = overrides;
    macro_rules! set {
        ($($field:ident),*) => { $(if let Some(v) = o.$field { spec.$field = v; })* };
    }
    set!(
        n_patients,
        samples_per_patient,
        n_features,
        censoring,
        noise,
        weibull_shape,
        max_time,
        risk_scale,
        risk_seed
    );

    let path = match out {
        Some(p) => p.to_path_buf(),
        None => globals.output_dir(&cfg).join("data.csv"),
    };
    globals.check_writable(&path)?;
    let dataset = generate_synthetic(&spec).context("generating synthetic data")?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)
            .with_context(|| format!("creating {}", parent.display()))?;
    }
    save_csv(&dataset, &path).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn load_dataset(cfg: &ExperimentConfig, data: Option<&Path>) -> Result<Dataset> {
    match data {
        Some(p) => load_csv(p).with_context(|| format!("loading {}", p.display())),
        None => cfg.dataset(),
    }
}

/// Balanced bin schedule as pretty JSON.
pub fn bin_plan_json(
    globals: &Globals,
    data: Option<&Path>,
    n_bins: Option<usize>,
) -> Result<String> {
    let cfg = globals.experiment()?;
    let dataset = load_dataset(&cfg, data)?;
    let n = n_bins.unwrap_or(cfg.train.n_bins);
    let schedule = bin_plan(&dataset.times(), n)?;
    Ok(serde_json::to_string_pretty(&schedule)?)
}

#[derive(Debug, Clone, Default)]
pub struct TrainArgs {
    pub data: Option<PathBuf>,
    pub bins_file: Option<PathBuf>,
    pub ablation: Ablation,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub dir: PathBuf,
    pub report: MetricsReport,
    pub best_epoch: usize,
}

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const HISTORY_FILE: &str = "history.csv";
pub const METRICS_FILE: &str = "metrics.json";

/// Split by patient, train, and score the test split. Writes the checkpoint,
/// the per-epoch history and the test metrics into the output directory.
pub fn train_cmd(globals: &Globals, args: &TrainArgs) -> Result<TrainOutcome> {
    let mut cfg = globals.experiment()?;
    if let Some(p) = &args.bins_file {
        cfg.train.bins_file = Some(p.clone());
    }
    let config = args.ablation.apply(&cfg.train_config()?);
    let dataset = load_dataset(&cfg, args.data.as_deref())?;
    let [train_set, val_set, test_set]: [Dataset; 3] =
        split_patient_wise(&dataset, &cfg.data.split, config.seed)?
            .try_into()
            .map_err(|_| anyhow::anyhow!("expected a train/validation/test split"))?;

    let dir = globals.output_dir(&cfg);
    let files = [CHECKPOINT_FILE, HISTORY_FILE, METRICS_FILE].map(|f| dir.join(f));
    for f in &files {
        globals.check_writable(f)?;
    }
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;

    let (checkpoint, history) = train(&train_set, &val_set, &config)?;
    let report = evaluate(&checkpoint, &test_set)?;

    checkpoint.save(&files[0])?;
    write_atomic(&files[1], history.to_csv_string()?.as_bytes())?;
    write_atomic(&files[2], metrics_json(&report)?.as_bytes())?;
    Ok(TrainOutcome {
        dir,
        report,
        best_epoch: history.best_epoch,
    })
}

pub fn metrics_json(report: &MetricsReport) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

#[derive(Debug, Clone, Default)]
pub struct EvaluateArgs {
    pub checkpoint: PathBuf,
    pub data: Option<PathBuf>,
    /// Expected number of bins; must match the checkpoint.
    pub bins: Option<usize>,
    pub out: Option<PathBuf>,
}

pub fn evaluate_cmd(globals: &Globals, args: &EvaluateArgs) -> Result<MetricsReport> {
    let cfg = globals.experiment()?;
    let checkpoint = Checkpoint::load(&args.checkpoint)
        .with_context(|| format!("loading checkpoint {}", args.checkpoint.display()))?;
    if let Some(n) = args.bins {
        if n != checkpoint.schedule.len() {
            bail!(
                "checkpoint has {} bins but {n} were requested",
                checkpoint.schedule.len()
            );
        }
    }
    let dataset = load_dataset(&cfg, args.data.as_deref())?;
    let report = evaluate(&checkpoint, &dataset)?;
    if let Some(out) = &args.out {
        globals.check_writable(out)?;
        write_atomic(out, metrics_json(&report)?.as_bytes())?;
    }
    Ok(report)
}

#[derive(Debug, Clone, Default)]
pub struct SweepArgs {
    pub data: Option<PathBuf>,
    pub rhos: Option<Vec<f64>>,
    pub seeds: Option<Vec<u64>>,
    pub arms: Option<Vec<Arm>>,
    pub jobs: Option<usize>,
}

pub const SWEEP_FILE: &str = "sweep.csv";
pub const SWEEP_SUMMARY_FILE: &str = "sweep_summary.csv";

pub fn sweep_cmd(globals: &Globals, args: &SweepArgs) -> Result<(PathBuf, Vec<SweepRow>)> {
    let cfg = globals.experiment()?;
    let base = cfg.train_config()?;
    let dataset = load_dataset(&cfg, args.data.as_deref())?;
    let plan = SweepPlan {
        arms: args.arms.clone().unwrap_or_else(|| cfg.sweep.arms.clone()),
        rhos: args.rhos.clone().unwrap_or_else(|| cfg.sweep.rhos.clone()),
        seeds: args
            .seeds
            .clone()
            .unwrap_or_else(|| cfg.sweep.seeds.clone()),
        split: cfg.data.split.clone(),
        jobs: args.jobs.unwrap_or(cfg.sweep.jobs),
    };
    if plan.arms.is_empty() || plan.rhos.is_empty() || plan.seeds.is_empty() {
        bail!("sweep needs at least one arm, rho and seed");
    }
    let dir = globals.output_dir(&cfg);
    let files = [SWEEP_FILE, SWEEP_SUMMARY_FILE].map(|f| dir.join(f));
    for f in &files {
        globals.check_writable(f)?;
    }
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;

    let rows = run_sweep(&dataset, &base, &plan)?;
    write_atomic(&files[0], &to_csv(&rows)?)?;
    write_atomic(&files[1], &to_csv(&summarize(&rows))?)?;
    Ok((dir, rows))
}
