//! Training loop with per-epoch pseudo-labelling, evaluation and checkpoints.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::head::{bin_plan, time_unchecked, BinSchedule};
use crate::losses::{batch_loss, LossTerms, LossWeights, TemporalEnsemble};
use crate::metrics::{MetricsReport, Scored};
use crate::model::{AdamConfig, AdamState, Mlp};
use crate::pseudo::{relabel, schedule_ratio, select_pseudo_set, PseudoPlan};
use crate::sample::Sample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValMetric {
    /// Lower is better.
    #[default]
    CensoredMae,
    /// Lower is better.
    UncensoredMae,
    /// Higher is better.
    CIndex,
}

impl ValMetric {
    /// Score where lower is better; `None` if the metric is undefined.
    fn loss(self, report: &MetricsReport) -> Option<f64> {
        match self {
            ValMetric::CensoredMae => Some(report.censored_mae),
            ValMetric::UncensoredMae => report.uncensored_mae,
            ValMetric::CIndex => report.c_index.map(|c| -c),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub hidden: Vec<usize>,
    pub n_bins: usize,
    pub seed: u64,
    pub optimizer: AdamConfig,
    pub loss: LossWeights,
    pub val_metric: ValMetric,
    pub pseudo: bool,
    pub rank: bool,
    pub elr: bool,
    /// Multiplies every time before it enters the loss.
    pub label_scale: f64,
    /// Fixed bin schedule; planned from the training times when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schedule: Option<BinSchedule>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 40,
            batch_size: 32,
            hidden: vec![64, 64],
            n_bins: 5,
            seed: 0,
            optimizer: AdamConfig::default(),
            loss: LossWeights::default(),
            val_metric: ValMetric::default(),
            pseudo: true,
            rank: true,
            elr: true,
            label_scale: 1.0,
            schedule: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidArgument(m));
        if self.epochs == 0 {
            return fail("train.epochs must be at least 1".into());
        }
        if self.batch_size < 2 {
            return fail("train.batch_size must be at least 2".into());
        }
        if self.n_bins == 0 {
            return fail("train.n_bins must be at least 1".into());
        }
        if self.hidden.contains(&0) {
            return fail(format!(
                "model.hidden widths must be positive, got {:?}",
                self.hidden
            ));
        }
        if !(self.label_scale.is_finite() && self.label_scale > 0.0) {
            return fail(format!(
                "train.label_scale {} must be positive",
                self.label_scale
            ));
        }
        if let Some(s) = &self.schedule {
            if s.len() != self.n_bins {
                return Err(Error::Dimension {
                    context: "fixed bin schedule vs n_bins",
                    expected: self.n_bins,
                    actual: s.len(),
                });
            }
        }
        self.loss.validate()?;
        self.optimizer.validate()
    }

    /// Loss weights with the ablation toggles applied.
    pub fn effective_weights(&self) -> LossWeights {
        LossWeights {
            alpha: if self.elr { self.loss.alpha } else { 0.0 },
            delta: if self.rank { self.loss.delta } else { 0.0 },
            ..self.loss
        }
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serialises");
        hex::encode(Sha256::digest(&json))
    }
}

/// One row per completed epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub pseudo_ratio: f64,
    pub pseudo_count: usize,
    pub loss_total: f64,
    pub loss_ca_mse: f64,
    pub loss_elr: f64,
    pub loss_pen: f64,
    pub loss_rank: f64,
    pub val_censored_mae: f64,
    pub val_uncensored_mae: Option<f64>,
    pub val_c_index: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
    /// Epoch whose parameters ended up in the returned checkpoint.
    pub best_epoch: usize,
}

impl TrainHistory {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub model: Mlp,
    pub optimizer: AdamState,
    pub schedule: BinSchedule,
    pub feature_dim: usize,
    pub epoch: usize,
    pub config_fingerprint: String,
    pub config: TrainConfig,
}

impl Checkpoint {
    /// Predicted days for a feature vector.
    pub fn predict(&self, features: &[f64]) -> Result<f64> {
        let logits = self.model.predict(features)?;
        Ok(time_unchecked(&logits, &self.schedule))
    }

    /// Write to `path` via a temporary file and rename.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), &serde_json::to_vec(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let ck: Checkpoint = serde_json::from_slice(&bytes)?;
        ck.check()?;
        Ok(ck)
    }

    fn check(&self) -> Result<()> {
        if self.model.output_dim() != self.schedule.len() {
            return Err(Error::Checkpoint(format!(
                "model emits {} logits but the schedule has {} bins",
                self.model.output_dim(),
                self.schedule.len()
            )));
        }
        if self.model.input_dim() != self.feature_dim {
            return Err(Error::Checkpoint(format!(
                "model input width {} differs from recorded feature width {}",
                self.model.input_dim(),
                self.feature_dim
            )));
        }
        Ok(())
    }
}

/// Write `bytes` to a sibling temporary file, then rename over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path).inspect_err(|_| {
        let _ = std::fs::remove_file(&tmp);
    })?;
    Ok(())
}

fn epoch_rng(seed: u64, epoch: usize, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((epoch as u64) << 8) | purpose);
    rng
}

const STREAM_INIT: u64 = 0;
const STREAM_PSEUDO: u64 = 1;
const STREAM_SHUFFLE: u64 = 2;

/// The epoch's effective training samples, built from the original data.
///
/// A fraction `m(k)` of the originally censored samples is replaced by
/// pseudo-labelled copies whose label uses the current model's prediction.
/// Pseudo labels never feed into later epochs.
pub fn epoch_samples(
    train_set: &Dataset,
    model: &Mlp,
    schedule: &BinSchedule,
    config: &TrainConfig,
    epoch: usize,
) -> Result<(Vec<Sample>, PseudoPlan)> {
    let ratio = if config.pseudo {
        schedule_ratio(epoch, config.epochs)?
    } else {
        0.0
    };
    let mut samples = train_set.samples().to_vec();
    let mut plan = PseudoPlan {
        epoch,
        total_epochs: config.epochs,
        ratio,
        selected: Default::default(),
    };
    if !config.pseudo {
        return Ok((samples, plan));
    }
    let censored: Vec<usize> = (0..samples.len())
        .filter(|&i| samples[i].censored)
        .collect();
    if censored.is_empty() {
        return Ok((samples, plan));
    }
    // no-gradient pass over every censored sample before the minibatch loop
    let mut t_hat = Vec::with_capacity(censored.len());
    for &i in &censored {
        let logits = model.predict(&samples[i].features)?;
        t_hat.push(time_unchecked(&logits, schedule));
    }
    let ids: Vec<String> = censored.iter().map(|&i| samples[i].id.clone()).collect();
    plan.selected = select_pseudo_set(
        &ids,
        ratio,
        &mut epoch_rng(config.seed, epoch, STREAM_PSEUDO),
    )?;
    for (&i, &t) in censored.iter().zip(&t_hat) {
        if plan.selected.contains(&samples[i].id) {
            samples[i] = relabel(&samples[i], t)?;
        }
    }
    Ok((samples, plan))
}

/// Predictions for every sample, paired with patient id and label.
pub fn predict_dataset(
    model: &Mlp,
    schedule: &BinSchedule,
    dataset: &Dataset,
) -> Result<Vec<(String, Scored)>> {
    dataset
        .samples()
        .iter()
        .map(|s| {
            let logits = model.predict(&s.features)?;
            Ok((
                s.patient_id.clone(),
                Scored::new(time_unchecked(&logits, schedule), s.y, s.censored),
            ))
        })
        .collect()
}

pub fn evaluate(checkpoint: &Checkpoint, dataset: &Dataset) -> Result<MetricsReport> {
    if dataset.is_empty() {
        return Err(Error::EmptyInput("cannot evaluate an empty dataset"));
    }
    if dataset.feature_dim() != checkpoint.feature_dim {
        return Err(Error::Dimension {
            context: "dataset features vs checkpoint input width",
            expected: checkpoint.feature_dim,
            actual: dataset.feature_dim(),
        });
    }
    let preds = predict_dataset(&checkpoint.model, &checkpoint.schedule, dataset)?;
    MetricsReport::from_predictions(&preds)
}

fn training_view(samples: &[Sample], scale: f64) -> Vec<Sample> {
    if scale == 1.0 {
        return samples.to_vec();
    }
    samples
        .iter()
        .map(|s| Sample {
            y: s.y * scale,
            ..s.clone()
        })
        .collect()
}

/// Loss terms of the whole effective training set at `epoch`, evaluated as a
/// single batch with a fresh temporal ensemble. Useful to see which terms a
/// configuration switches on.
pub fn probe_loss_terms(
    train_set: &Dataset,
    model: &Mlp,
    schedule: &BinSchedule,
    config: &TrainConfig,
    epoch: usize,
) -> Result<LossTerms> {
    let (samples, _) = epoch_samples(train_set, model, schedule, config, epoch)?;
    let samples = training_view(&samples, config.label_scale);
    let loss_schedule = schedule.scaled(config.label_scale)?;
    let logits = samples
        .iter()
        .map(|s| model.predict(&s.features))
        .collect::<Result<Vec<_>>>()?;
    let batch: Vec<(&Sample, &[f64])> = samples
        .iter()
        .zip(logits.iter().map(Vec::as_slice))
        .collect();
    let ensemble = TemporalEnsemble::new(schedule.len());
    Ok(batch_loss(
        &batch,
        &ensemble,
        &loss_schedule,
        &config.effective_weights(),
    )?
    .terms)
}

/// Fresh model for `config`, seeded from `config.seed`.
pub fn init_model(feature_dim: usize, config: &TrainConfig) -> Result<Mlp> {
    let mut rng = epoch_rng(config.seed, 0, STREAM_INIT);
    Mlp::new(feature_dim, &config.hidden, config.n_bins, &mut rng)
}

/// Bin schedule used for training: the fixed one from the config, or a
/// balanced plan over all training times.
pub fn training_schedule(train_set: &Dataset, config: &TrainConfig) -> Result<BinSchedule> {
    match &config.schedule {
        Some(s) => Ok(s.clone()),
        None => bin_plan(&train_set.times(), config.n_bins),
    }
}

/// Run the full training procedure and return the checkpoint with the best
/// validation score along with the per-epoch history.
pub fn train(
    train_set: &Dataset,
    val_set: &Dataset,
    config: &TrainConfig,
) -> Result<(Checkpoint, TrainHistory)> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyInput("training set is empty"));
    }
    if val_set.is_empty() {
        return Err(Error::EmptyInput("validation set is empty"));
    }
    let feature_dim = train_set.feature_dim();
    if val_set.feature_dim() != feature_dim {
        return Err(Error::Dimension {
            context: "validation features vs training features",
            expected: feature_dim,
            actual: val_set.feature_dim(),
        });
    }

    let schedule = training_schedule(train_set, config)?;
    let loss_schedule = schedule.scaled(config.label_scale)?;
    let weights = config.effective_weights();
    let mut model = init_model(feature_dim, config)?;
    let mut optimizer = AdamState::new(&model, config.optimizer);
    let mut ensemble = TemporalEnsemble::new(config.n_bins);
    let fingerprint = config.fingerprint();

    let mut history = TrainHistory::default();
    let mut best: Option<(f64, Checkpoint)> = None;

    for epoch in 1..=config.epochs {
        let (samples, plan) = epoch_samples(train_set, &model, &schedule, config, epoch)?;
        let samples = training_view(&samples, config.label_scale);
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(&mut epoch_rng(config.seed, epoch, STREAM_SHUFFLE));

        let mut sums = LossTerms::default();
        for (batch_idx, chunk) in order.chunks(config.batch_size).enumerate() {
            let mut logits = Vec::with_capacity(chunk.len());
            let mut caches = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let (p, cache) = model.forward(&samples[i].features)?;
                logits.push(p);
                caches.push(cache);
            }
            let batch: Vec<(&Sample, &[f64])> = chunk
                .iter()
                .zip(&logits)
                .map(|(&i, p)| (&samples[i], p.as_slice()))
                .collect();
            let out = batch_loss(&batch, &ensemble, &loss_schedule, &weights)?;
            let bad = out.terms.first_non_finite().or_else(|| {
                (!out.grads.iter().flatten().all(|g| g.is_finite())).then_some("gradient")
            });
            if let Some(term) = bad {
                return Err(Error::NonFiniteLoss {
                    term,
                    epoch,
                    batch: batch_idx,
                });
            }

            let mut grads = model.zeros_like();
            for (cache, g) in caches.iter().zip(&out.grads) {
                model.backward(cache, g, &mut grads)?;
            }
            optimizer.step(&mut model, &grads)?;

            for (&i, p) in chunk.iter().zip(&logits) {
                ensemble.update(&samples[i].id, p, config.loss.psi)?;
            }

            let w = chunk.len() as f64;
            sums.ca_mse += w * out.terms.ca_mse;
            sums.ca_mse_pseudo += w * out.terms.ca_mse_pseudo;
            sums.elr += w * out.terms.elr;
            sums.pen += w * out.terms.pen;
            sums.rank += w * out.terms.rank;
        }
        ensemble.epoch = epoch;

        let n = samples.len() as f64;
        let checkpoint = Checkpoint {
            model: model.clone(),
            optimizer: optimizer.clone(),
            schedule: schedule.clone(),
            feature_dim,
            epoch,
            config_fingerprint: fingerprint.clone(),
            config: config.clone(),
        };
        let report = evaluate(&checkpoint, val_set)?;
        history.records.push(EpochRecord {
            epoch,
            pseudo_ratio: plan.ratio,
            pseudo_count: plan.selected.len(),
            loss_total: sums.total() / n,
            loss_ca_mse: sums.ca_mse / n,
            loss_elr: sums.elr / n,
            loss_pen: sums.pen / n,
            loss_rank: sums.rank / n,
            val_censored_mae: report.censored_mae,
            val_uncensored_mae: report.uncensored_mae,
            val_c_index: report.c_index,
        });

        let score = config.val_metric.loss(&report).unwrap_or(f64::INFINITY);
        if best.as_ref().is_none_or(|(b, _)| score < *b) {
            history.best_epoch = epoch;
            best = Some((score, checkpoint));
        }
    }

    let (_, checkpoint) = best.expect("at least one epoch ran");
    Ok((checkpoint, history))
}
