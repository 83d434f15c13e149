//! Pseudo labels for censored samples and the cosine ramp that decides how
//! many censored samples receive one at each epoch.

use std::collections::BTreeSet;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sample::Sample;

/// Pseudo-labelling decision for one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoPlan {
    pub epoch: usize,
    pub total_epochs: usize,
    pub ratio: f64,
    pub selected: BTreeSet<String>,
}

/// `m = (1 + cos(pi (1 - k / k_total))) / 2`: 0 at `k = 0`, 1 at `k = k_total`.
pub fn schedule_ratio(k: usize, k_total: usize) -> Result<f64> {
    if k_total == 0 || k > k_total {
        return Err(Error::InvalidArgument(format!(
            "epoch {k} outside [0, {k_total}]"
        )));
    }
    let frac = k as f64 / k_total as f64;
    let m = (1.0 + (std::f64::consts::PI * (1.0 - frac)).cos()) / 2.0;
    Ok(m.clamp(0.0, 1.0))
}

/// Number of ids selected for ratio `m`.
pub fn selection_size(m: f64, n: usize) -> usize {
    ((m * n as f64).round() as usize).min(n)
}

/// Uniform subset of `censored_ids` of size `round(m * len)`, without replacement.
pub fn select_pseudo_set<R: Rng + ?Sized>(
    censored_ids: &[String],
    m: f64,
    rng: &mut R,
) -> Result<BTreeSet<String>> {
    if !(0.0..=1.0).contains(&m) {
        return Err(Error::InvalidArgument(format!(
            "pseudo ratio {m} outside [0, 1]"
        )));
    }
    let n = censored_ids.len();
    let k = selection_size(m, n);
    Ok(index::sample(rng, n, k)
        .into_iter()
        .map(|i| censored_ids[i].clone())
        .collect())
}

/// A pseudo-labelled copy of a censored sample: `y = max(y, t_hat)`,
/// treated as an event from now on and flagged as pseudo.
pub fn relabel(sample: &Sample, t_hat: f64) -> Result<Sample> {
    if !sample.censored {
        return Err(Error::InvalidArgument(format!(
            "sample {} is not censored and cannot be pseudo-labelled",
            sample.id
        )));
    }
    Ok(Sample {
        y: sample.y.max(t_hat),
        censored: false,
        pseudo: true,
        ..sample.clone()
    })
}
