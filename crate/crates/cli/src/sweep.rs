//! Censoring-ratio robustness sweep.
//!
//! For every seed the data is split by patient, a fraction `rho` of the
//! uncensored training patients is artificially censored, each ablation arm
//! is trained, and the untouched test split is scored.

use std::fmt;
use std::str::FromStr;

use anyhow::{anyhow, Context, Result};
use censurv::data::{simulate_censoring, split_patient_wise};
use censurv::{evaluate, train, Dataset, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Which of the optional components are switched on. The squared error and
/// the bin penalty are always present.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Arm {
    #[serde(rename = "base")]
    Base,
    #[serde(rename = "rank")]
    Rank,
    #[serde(rename = "elr")]
    Elr,
    #[serde(rename = "pseudo")]
    Pseudo,
    #[serde(rename = "pseudo+elr")]
    PseudoElr,
    #[serde(rename = "pseudo+rank")]
    PseudoRank,
    #[serde(rename = "pseudo+rank+elr")]
    PseudoRankElr,
}

impl Arm {
    pub const ALL: [Arm; 7] = [
        Arm::Base,
        Arm::Rank,
        Arm::Elr,
        Arm::Pseudo,
        Arm::PseudoElr,
        Arm::PseudoRank,
        Arm::PseudoRankElr,
    ];

    pub const DEFAULT_SWEEP: [Arm; 5] = [
        Arm::Base,
        Arm::Rank,
        Arm::Pseudo,
        Arm::PseudoRank,
        Arm::PseudoRankElr,
    ];

    /// `(pseudo, rank, elr)`.
    pub fn toggles(self) -> (bool, bool, bool) {
        match self {
            Arm::Base => (false, false, false),
            Arm::Rank => (false, true, false),
            Arm::Elr => (false, false, true),
            Arm::Pseudo => (true, false, false),
            Arm::PseudoElr => (true, false, true),
            Arm::PseudoRank => (true, true, false),
            Arm::PseudoRankElr => (true, true, true),
        }
    }

    pub fn apply(self, config: &TrainConfig) -> TrainConfig {
        let (pseudo, rank, elr) = self.toggles();
        TrainConfig {
            pseudo,
            rank,
            elr,
            ..config.clone()
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Arm::Base => "base",
            Arm::Rank => "rank",
            Arm::Elr => "elr",
            Arm::Pseudo => "pseudo",
            Arm::PseudoElr => "pseudo+elr",
            Arm::PseudoRank => "pseudo+rank",
            Arm::PseudoRankElr => "pseudo+rank+elr",
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Arm {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Arm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| anyhow!("unknown arm `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub arm: Arm,
    pub rho: f64,
    pub seed: u64,
    pub censored_mae: f64,
    pub uncensored_mae: Option<f64>,
    pub c_index: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub arm: Arm,
    pub rho: f64,
    pub n_seeds: usize,
    pub censored_mae_mean: f64,
    pub censored_mae_std: f64,
    pub censored_mae_best: f64,
    pub uncensored_mae_mean: Option<f64>,
    pub uncensored_mae_std: Option<f64>,
    pub uncensored_mae_best: Option<f64>,
    pub c_index_mean: Option<f64>,
    pub c_index_std: Option<f64>,
    pub c_index_best: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SweepPlan {
    pub arms: Vec<Arm>,
    pub rhos: Vec<f64>,
    pub seeds: Vec<u64>,
    pub split: Vec<f64>,
    pub jobs: usize,
}

/// Training split after censoring simulation. Depends only on `(seed, rho)`,
/// so every arm sees the same data.
pub fn censored_training_split(train_set: &Dataset, rho: f64, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rho.to_bits());
    Ok(simulate_censoring(train_set, rho, &mut rng)?)
}

/// One row per `(arm, rho, seed)`, sorted in that order.
pub fn run_sweep(dataset: &Dataset, base: &TrainConfig, plan: &SweepPlan) -> Result<Vec<SweepRow>> {
    if let Some(r) = plan.rhos.iter().find(|r| !(0.0..=1.0).contains(*r)) {
        return Err(anyhow!("rho {r} outside [0, 1]"));
    }
    let mut splits = Vec::with_capacity(plan.seeds.len());
    for &seed in &plan.seeds {
        let parts = split_patient_wise(dataset, &plan.split, seed)?;
        let [train_set, val_set, test_set]: [Dataset; 3] = parts
            .try_into()
            .map_err(|_| anyhow!("sweep needs a train/validation/test split"))?;
        splits.push((seed, train_set, val_set, test_set));
    }

    let mut jobs = Vec::new();
    for &arm in &plan.arms {
        for &rho in &plan.rhos {
            for (idx, _) in plan.seeds.iter().enumerate() {
                jobs.push((arm, rho, idx));
            }
        }
    }

    let run = |&(arm, rho, idx): &(Arm, f64, usize)| -> Result<SweepRow> {
        let (seed, train_set, val_set, test_set) = &splits[idx];
        let train_set = censored_training_split(train_set, rho, *seed)?;
        let config = TrainConfig {
            seed: *seed,
            ..arm.apply(base)
        };
        let (checkpoint, _) = train(&train_set, val_set, &config)
            .with_context(|| format!("arm {arm}, rho {rho}, seed {seed}"))?;
        let report = evaluate(&checkpoint, test_set)?;
        Ok(SweepRow {
            arm,
            rho,
            seed: *seed,
            censored_mae: report.censored_mae,
            uncensored_mae: report.uncensored_mae,
            c_index: report.c_index,
        })
    };

    let mut rows = if plan.jobs == 1 {
        jobs.iter().map(run).collect::<Result<Vec<_>>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(plan.jobs)
            .build()?;
        pool.install(|| jobs.par_iter().map(run).collect::<Result<Vec<_>>>())?
    };
    rows.sort_by(|a, b| {
        a.arm
            .cmp(&b.arm)
            .then(a.rho.total_cmp(&b.rho))
            .then(a.seed.cmp(&b.seed))
    });
    Ok(rows)
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Mean, sample standard deviation and best value over seeds for each
/// `(arm, rho)`. Optional metrics are summarised only when present for
/// every seed.
pub fn summarize(rows: &[SweepRow]) -> Vec<SummaryRow> {
    let mut out: Vec<SummaryRow> = Vec::new();
    let mut start = 0;
    while start < rows.len() {
        let key = (rows[start].arm, rows[start].rho);
        let end = start
            + rows[start..]
                .iter()
                .take_while(|r| (r.arm, r.rho) == key)
                .count();
        let group = &rows[start..end];
        let cmae: Vec<f64> = group.iter().map(|r| r.censored_mae).collect();
        let umae: Option<Vec<f64>> = group.iter().map(|r| r.uncensored_mae).collect();
        let cidx: Option<Vec<f64>> = group.iter().map(|r| r.c_index).collect();
        let (cm, cs) = mean_std(&cmae);
        let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
        let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        out.push(SummaryRow {
            arm: key.0,
            rho: key.1,
            n_seeds: group.len(),
            censored_mae_mean: cm,
            censored_mae_std: cs,
            censored_mae_best: min(&cmae),
            uncensored_mae_mean: umae.as_ref().map(|v| mean_std(v).0),
            uncensored_mae_std: umae.as_ref().map(|v| mean_std(v).1),
            uncensored_mae_best: umae.as_ref().map(|v| min(v)),
            c_index_mean: cidx.as_ref().map(|v| mean_std(v).0),
            c_index_std: cidx.as_ref().map(|v| mean_std(v).1),
            c_index_best: cidx.as_ref().map(|v| max(v)),
        });
        start = end;
    }
    out
}

pub fn to_csv<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    Ok(w.into_inner()?)
}
