//! Experiment configuration file (TOML).
//!
//! ```toml
//! [data]
//! path = "data.csv"          # omit to generate synthetic data from [data.synth]
//! split = [0.6, 0.2, 0.2]    # train / validation / test, by patient
//!
//! [data.synth]
//! n_patients = 1000
//!
//! [model]
//! hidden = [64, 64]
//!
//! [loss]
//! alpha = 100.0
//! beta = 1e6
//!
//! [train]
//! epochs = 40
//! n_bins = 5
//!
//! [output]
//! dir = "out"
//!
//! [sweep]
//! rhos = [0.0, 0.25, 0.5, 0.75, 0.9]
//! ```
//!
//! Every key is optional. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use censurv::data::{generate_synthetic, load_csv};
use censurv::model::AdamConfig;
use censurv::{BinSchedule, Dataset, LossWeights, SynthSpec, TrainConfig, ValMetric};
use serde::{Deserialize, Serialize};

use crate::sweep::Arm;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSection,
    pub model: ModelSection,
    pub loss: LossWeights,
    pub train: TrainSection,
    pub output: OutputSection,
    pub sweep: SweepSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub path: Option<PathBuf>,
    pub split: Vec<f64>,
    pub synth: SynthSpec,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            path: None,
            split: vec![0.6, 0.2, 0.2],
            synth: SynthSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub hidden: Vec<usize>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub n_bins: usize,
    pub seed: u64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub decoupled_weight_decay: bool,
    pub val_metric: ValMetric,
    pub pseudo: bool,
    pub rank: bool,
    pub elr: bool,
    pub label_scale: f64,
    /// JSON bin schedule as printed by `bin-plan`.
    pub bins_file: Option<PathBuf>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        let a = AdamConfig::default();
        Self {
            epochs: t.epochs,
            batch_size: t.batch_size,
            n_bins: t.n_bins,
            seed: t.seed,
            learning_rate: a.learning_rate,
            weight_decay: a.weight_decay,
            beta1: a.beta1,
            beta2: a.beta2,
            adam_eps: a.eps,
            decoupled_weight_decay: a.decoupled_weight_decay,
            val_metric: t.val_metric,
            pseudo: t.pseudo,
            rank: t.rank,
            elr: t.elr,
            label_scale: t.label_scale,
            bins_file: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub rhos: Vec<f64>,
    pub seeds: Vec<u64>,
    pub arms: Vec<Arm>,
    /// Parallel training runs; 0 uses every available core.
    pub jobs: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            rhos: vec![0.0, 0.25, 0.5, 0.75, 0.9],
            seeds: vec![0, 1, 2, 3, 4],
            arms: Arm::DEFAULT_SWEEP.to_vec(),
            jobs: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).context("invalid config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        self.data.synth.validate().context("[data.synth]")?;
        if self.data.split.len() != 3 {
            bail!("[data] split must list train, validation and test fractions");
        }
        if self.sweep.rhos.iter().any(|r| !(0.0..=1.0).contains(r)) {
            bail!("[sweep] rhos must lie in [0, 1], got {:?}", self.sweep.rhos);
        }
        self.train_config()?
            .validate()
            .context("[train]/[loss]/[model]")?;
        Ok(())
    }

    /// Trainer settings, with the fixed bin schedule loaded when `bins_file` is set.
    pub fn train_config(&self) -> Result<TrainConfig> {
        let t = &self.train;
        let schedule = match &t.bins_file {
            Some(p) => Some(load_schedule(p)?),
            None => None,
        };
        let n_bins = schedule.as_ref().map_or(t.n_bins, BinSchedule::len);
        Ok(TrainConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            hidden: self.model.hidden.clone(),
            n_bins,
            seed: t.seed,
            optimizer: AdamConfig {
                learning_rate: t.learning_rate,
                beta1: t.beta1,
                beta2: t.beta2,
                eps: t.adam_eps,
                weight_decay: t.weight_decay,
                decoupled_weight_decay: t.decoupled_weight_decay,
            },
            loss: self.loss,
            val_metric: t.val_metric,
            pseudo: t.pseudo,
            rank: t.rank,
            elr: t.elr,
            label_scale: t.label_scale,
            schedule,
        })
    }

    /// The configured dataset: the CSV at `data.path`, or synthetic data.
    pub fn dataset(&self) -> Result<Dataset> {
        match &self.data.path {
            Some(p) => load_csv(p).with_context(|| format!("loading {}", p.display())),
            None => Ok(generate_synthetic(&self.data.synth)?),
        }
    }
}

pub fn load_schedule(path: &Path) -> Result<BinSchedule> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading bin schedule {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing bin schedule {}", path.display()))
}
