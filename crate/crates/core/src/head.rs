//! The binned survival head: bin schedules and the logits-to-days map.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sigmoid;

/// Per-bin widths in days. The horizon `total` is the sum of the widths.
///
/// Serialises as `{"bins": [...], "total": ...}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSchedule")]
pub struct BinSchedule {
    bins: Vec<f64>,
    total: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSchedule {
    bins: Vec<f64>,
    total: f64,
}

impl TryFrom<RawSchedule> for BinSchedule {
    type Error = Error;

    fn try_from(raw: RawSchedule) -> Result<Self> {
        let schedule = BinSchedule::new(raw.bins)?;
        let tol = 1e-9 * schedule.total.max(1.0);
        if (schedule.total - raw.total).abs() > tol {
            return Err(Error::InvalidSchedule(format!(
                "total {} does not match the sum of bins {}",
                raw.total, schedule.total
            )));
        }
        Ok(schedule)
    }
}

impl BinSchedule {
    pub fn new(bins: Vec<f64>) -> Result<Self> {
        if bins.is_empty() {
            return Err(Error::InvalidSchedule(
                "at least one bin is required".into(),
            ));
        }
        if let Some(b) = bins.iter().find(|b| !(b.is_finite() && **b > 0.0)) {
            return Err(Error::InvalidSchedule(format!(
                "bin widths must be finite and positive, got {b}"
            )));
        }
        let total = bins.iter().sum();
        Ok(Self { bins, total })
    }

    pub fn bins(&self) -> &[f64] {
        &self.bins
    }

    /// The horizon `U`.
    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    /// Every width multiplied by `factor`; predictions scale by the same factor.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.bins.iter().map(|b| b * factor).collect())
    }

    fn check_len(&self, logits: &[f64]) -> Result<()> {
        if logits.len() != self.bins.len() {
            return Err(Error::Dimension {
                context: "logit vector vs bin schedule",
                expected: self.bins.len(),
                actual: logits.len(),
            });
        }
        Ok(())
    }
}

/// Balanced bin planner.
///
/// Cumulative edges sit at the nearest-rank `k / n_bins` quantiles of
/// `times` (k = 1..n_bins-1) and the last edge is `max(times)`, so every bin
/// holds roughly the same number of observations while widths differ.
pub fn bin_plan(times: &[f64], n_bins: usize) -> Result<BinSchedule> {
    if times.is_empty() {
        return Err(Error::EmptyInput("bin_plan needs at least one time"));
    }
    if n_bins == 0 {
        return Err(Error::InvalidArgument("n_bins must be at least 1".into()));
    }
    if let Some(t) = times.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "observed times must be finite and positive, got {t}"
        )));
    }
    let mut sorted = times.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();

    let mut edges = Vec::with_capacity(n_bins);
    for k in 1..n_bins {
        // nearest rank: smallest value with at least k*n/N observations at or below it
        let rank = (k * n).div_ceil(n_bins);
        edges.push(sorted[rank.max(1) - 1]);
    }
    edges.push(sorted[n - 1]);

    let mut prev = 0.0;
    let mut bins = Vec::with_capacity(n_bins);
    for (i, &edge) in edges.iter().enumerate() {
        if edge <= prev {
            return Err(Error::DegenerateBins(format!(
                "edge {} ({edge}) does not exceed the previous edge ({prev}); \
                 too few distinct times for {n_bins} bins",
                i + 1
            )));
        }
        bins.push(edge - prev);
        prev = edge;
    }
    BinSchedule::new(bins)
}

/// Predicted survival time: `U - sum_n b(n) * sigmoid(p(n))`.
pub fn logits_to_time(logits: &[f64], schedule: &BinSchedule) -> Result<f64> {
    schedule.check_len(logits)?;
    Ok(time_unchecked(logits, schedule))
}

pub(crate) fn time_unchecked(logits: &[f64], schedule: &BinSchedule) -> f64 {
    let risk: f64 = schedule
        .bins
        .iter()
        .zip(logits)
        .map(|(b, p)| b * sigmoid(*p))
        .sum();
    schedule.total - risk
}

/// `d t_hat / d p(n) = -b(n) * s(n) * (1 - s(n))` with `s = sigmoid(p)`.
pub fn time_gradient(logits: &[f64], schedule: &BinSchedule) -> Result<Vec<f64>> {
    schedule.check_len(logits)?;
    Ok(time_gradient_unchecked(logits, schedule))
}

pub(crate) fn time_gradient_unchecked(logits: &[f64], schedule: &BinSchedule) -> Vec<f64> {
    schedule
        .bins
        .iter()
        .zip(logits)
        .map(|(b, p)| {
            let s = sigmoid(*p);
            -b * s * (1.0 - s)
        })
        .collect()
}
