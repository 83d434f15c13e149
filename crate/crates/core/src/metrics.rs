//! Censoring-aware evaluation metrics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A prediction paired with its observed label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scored {
    pub t_hat: f64,
    pub y: f64,
    pub censored: bool,
}

impl Scored {
    pub fn new(t_hat: f64, y: f64, censored: bool) -> Self {
        Self { t_hat, y, censored }
    }
}

/// MAE that does not count over-prediction on censored samples as error.
pub fn censored_mae(preds: &[Scored]) -> Result<f64> {
    if preds.is_empty() {
        return Err(Error::EmptyInput(
            "censored_mae needs at least one prediction",
        ));
    }
    let total: f64 = preds
        .iter()
        .map(|p| {
            if p.censored && p.t_hat >= p.y {
                0.0
            } else {
                (p.t_hat - p.y).abs()
            }
        })
        .sum();
    Ok(total / preds.len() as f64)
}

/// Plain MAE over uncensored samples; `None` when there are none.
pub fn uncensored_mae(preds: &[Scored]) -> Option<f64> {
    let (sum, n) = preds
        .iter()
        .filter(|p| !p.censored)
        .fold((0.0, 0usize), |(s, n), p| {
            (s + (p.t_hat - p.y).abs(), n + 1)
        });
    (n > 0).then(|| sum / n as f64)
}

/// Harrell's concordance index.
///
/// A pair is comparable when the earlier observed time is an event; equal
/// observed times are never comparable. Tied predictions score one half.
/// `None` when no pair is comparable.
pub fn c_index(preds: &[Scored]) -> Option<f64> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[a].y.total_cmp(&preds[b].y));

    let (mut concordant, mut tied, mut comparable) = (0u64, 0u64, 0u64);
    for (pos, &i) in order.iter().enumerate() {
        let earlier = &preds[i];
        if earlier.censored {
            continue;
        }
        for &j in &order[pos + 1..] {
            let later = &preds[j];
            if later.y <= earlier.y {
                continue;
            }
            comparable += 1;
            if earlier.t_hat < later.t_hat {
                concordant += 1;
            } else if earlier.t_hat == later.t_hat {
                tied += 1;
            }
        }
    }
    (comparable > 0).then(|| (concordant as f64 + 0.5 * tied as f64) / comparable as f64)
}

/// Mean prediction per patient. Patients come back sorted by id.
pub fn aggregate_by_patient(preds: &[(String, Scored)]) -> Result<Vec<(String, Scored)>> {
    let mut groups: BTreeMap<&str, (f64, usize, f64, bool)> = BTreeMap::new();
    for (pid, p) in preds {
        let entry = groups
            .entry(pid.as_str())
            .or_insert((0.0, 0, p.y, p.censored));
        if entry.2 != p.y || entry.3 != p.censored {
            return Err(Error::DataIntegrity(format!(
                "patient {pid} has inconsistent labels: ({}, {}) vs ({}, {})",
                entry.2, entry.3, p.y, p.censored
            )));
        }
        entry.0 += p.t_hat;
        entry.1 += 1;
    }
    Ok(groups
        .into_iter()
        .map(|(pid, (sum, n, y, censored))| {
            (pid.to_owned(), Scored::new(sum / n as f64, y, censored))
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub censored_mae: f64,
    pub uncensored_mae: Option<f64>,
    pub c_index: Option<f64>,
}

impl MetricSet {
    pub fn compute(preds: &[Scored]) -> Result<Self> {
        Ok(Self {
            censored_mae: censored_mae(preds)?,
            uncensored_mae: uncensored_mae(preds),
            c_index: c_index(preds),
        })
    }
}

/// Patient-level headline metrics plus sample-level metrics for debugging.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub censored_mae: f64,
    pub uncensored_mae: Option<f64>,
    pub c_index: Option<f64>,
    pub n_samples: usize,
    pub n_patients: usize,
    /// Uncensored patients.
    pub n_uncensored: usize,
    pub sample_level: MetricSet,
}

impl MetricsReport {
    pub fn from_predictions(preds: &[(String, Scored)]) -> Result<Self> {
        if preds.is_empty() {
            return Err(Error::EmptyInput("cannot evaluate an empty dataset"));
        }
        let samples: Vec<Scored> = preds.iter().map(|(_, s)| *s).collect();
        let patients: Vec<Scored> = aggregate_by_patient(preds)?
            .into_iter()
            .map(|(_, s)| s)
            .collect();
        let headline = MetricSet::compute(&patients)?;
        Ok(Self {
            censored_mae: headline.censored_mae,
            uncensored_mae: headline.uncensored_mae,
            c_index: headline.c_index,
            n_samples: samples.len(),
            n_patients: patients.len(),
            n_uncensored: patients.iter().filter(|p| !p.censored).count(),
            sample_level: MetricSet::compute(&samples)?,
        })
    }

    pub fn headline(&self) -> MetricSet {
        MetricSet {
            censored_mae: self.censored_mae,
            uncensored_mae: self.uncensored_mae,
            c_index: self.c_index,
        }
    }

    /// Fixed-order human readable table.
    pub fn to_table(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "n/a".to_owned(), |v| format!("{v:.4}"));
        let s = &self.sample_level;
        let mut out = String::new();
        out.push_str(&format!(
            "{:<16}{:>14}{:>14}\n",
            "metric", "patient", "sample"
        ));
        out.push_str(&format!(
            "{:<16}{:>14.4}{:>14.4}\n",
            "censored_mae", self.censored_mae, s.censored_mae
        ));
        out.push_str(&format!(
            "{:<16}{:>14}{:>14}\n",
            "uncensored_mae",
            opt(self.uncensored_mae),
            opt(s.uncensored_mae)
        ));
        out.push_str(&format!(
            "{:<16}{:>14}{:>14}\n",
            "c_index",
            opt(self.c_index),
            opt(s.c_index)
        ));
        out.push_str(&format!(
            "n_samples={} n_patients={} n_uncensored={}\n",
            self.n_samples, self.n_patients, self.n_uncensored
        ));
        out
    }
}
