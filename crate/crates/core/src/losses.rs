//! Loss terms and their gradients with respect to the bin logits.
//!
//! Every per-sample term returns its value together with an exact
//! (sub)gradient. Hinges take a zero subgradient at the kink.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::head::{time_gradient_unchecked, time_unchecked, BinSchedule};
use crate::sample::Sample;
use crate::sigmoid;

/// Strengths of the regularisers and the pseudo-label weighting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    /// Early-learning regulariser strength.
    pub alpha: f64,
    /// Bin-ordering penalty strength.
    pub beta: f64,
    /// Ranking loss strength.
    pub delta: f64,
    /// Down-weight applied to pseudo-labelled samples in the squared error.
    pub tau: f64,
    /// Temporal-ensemble momentum.
    pub psi: f64,
    /// Floor for the argument of the early-learning logarithm.
    pub elr_eps: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 100.0,
            beta: 1e6,
            delta: 1.0,
            tau: 0.5,
            psi: 0.5,
            elr_eps: 1e-7,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let bad = |name: &str, v: f64, range: &str| {
            Err(Error::InvalidArgument(format!(
                "loss.{name} = {v} must be in {range}"
            )))
        };
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("delta", self.delta),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(name, v, "[0, inf)");
            }
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return bad("tau", self.tau, "(0, 1)");
        }
        if !(0.0..=1.0).contains(&self.psi) {
            return bad("psi", self.psi, "[0, 1]");
        }
        if !(self.elr_eps > 0.0 && self.elr_eps <= 0.1) {
            return bad("elr_eps", self.elr_eps, "(0, 0.1]");
        }
        Ok(())
    }
}

/// Momentum average of each training sample's logits, keyed by sample id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TemporalEnsemble {
    n_bins: usize,
    targets: HashMap<String, Vec<f64>>,
    /// Number of completed epochs.
    pub epoch: usize,
}

impl TemporalEnsemble {
    pub fn new(n_bins: usize) -> Self {
        Self {
            n_bins,
            targets: HashMap::new(),
            epoch: 0,
        }
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.targets.get(id).map(Vec::as_slice)
    }

    /// Stored momentum logits, or zeros for an unseen id.
    pub fn target_or_zero(&self, id: &str) -> Vec<f64> {
        self.targets
            .get(id)
            .cloned()
            .unwrap_or_else(|| vec![0.0; self.n_bins])
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// `q <- psi * q + (1 - psi) * p`, with `q` starting at zero.
    pub fn update(&mut self, id: &str, logits: &[f64], psi: f64) -> Result<()> {
        if logits.len() != self.n_bins {
            return Err(Error::Dimension {
                context: "temporal ensemble update",
                expected: self.n_bins,
                actual: logits.len(),
            });
        }
        let n = self.n_bins;
        let q = self
            .targets
            .entry(id.to_owned())
            .or_insert_with(|| vec![0.0; n]);
        for (qn, pn) in q.iter_mut().zip(logits) {
            *qn = psi * *qn + (1.0 - psi) * pn;
        }
        Ok(())
    }
}

/// Censor-aware squared error and its derivative with respect to `t_hat`.
///
/// Zero when the sample is censored and the prediction is already beyond
/// the censoring time; otherwise `tau^s (t_hat - y)^2`.
pub fn ca_mse(t_hat: f64, y: f64, censored: bool, pseudo: bool, tau: f64) -> (f64, f64) {
    if censored && t_hat > y {
        return (0.0, 0.0);
    }
    let w = if pseudo { tau } else { 1.0 };
    let r = t_hat - y;
    (w * r * r, 2.0 * w * r)
}

/// Early-learning regulariser `log(1 - sigmoid(p)·sigmoid(q) / N)`.
///
/// `q` is a constant target. The log argument is floored at `eps`; when the
/// floor is active the gradient is zero.
pub fn elr_loss(logits: &[f64], target: &[f64], eps: f64) -> Result<(f64, Vec<f64>)> {
    if logits.len() != target.len() {
        return Err(Error::Dimension {
            context: "elr target",
            expected: logits.len(),
            actual: target.len(),
        });
    }
    Ok(elr_unchecked(logits, target, eps))
}

fn elr_unchecked(logits: &[f64], target: &[f64], eps: f64) -> (f64, Vec<f64>) {
    let n = logits.len() as f64;
    let sp: Vec<f64> = logits.iter().map(|p| sigmoid(*p)).collect();
    let sq: Vec<f64> = target.iter().map(|q| sigmoid(*q)).collect();
    let dot: f64 = sp.iter().zip(&sq).map(|(a, b)| a * b).sum();
    let arg = 1.0 - dot / n;
    if arg <= eps {
        return (eps.ln(), vec![0.0; logits.len()]);
    }
    let grad = sp
        .iter()
        .zip(&sq)
        .map(|(s, q)| -(q * s * (1.0 - s)) / (n * arg))
        .collect();
    (arg.ln(), grad)
}

/// Penalty on any bin being more active than the bin before it.
pub fn pen_loss(logits: &[f64]) -> (f64, Vec<f64>) {
    let n = logits.len();
    let mut grad = vec![0.0; n];
    if n < 2 {
        return (0.0, grad);
    }
    let scale = 1.0 / (n - 1) as f64;
    let s: Vec<f64> = logits.iter().map(|p| sigmoid(*p)).collect();
    let mut loss = 0.0;
    for k in 0..n - 1 {
        let diff = s[k + 1] - s[k];
        if diff > 0.0 {
            loss += diff;
            grad[k + 1] += scale * s[k + 1] * (1.0 - s[k + 1]);
            grad[k] -= scale * s[k] * (1.0 - s[k]);
        }
    }
    (scale * loss, grad)
}

/// Target ordering of a pair: `+1` when `i` should outlive `j`, `-1` when
/// `j` should outlive `i`, `0` when the pair is not comparable.
pub fn rank_sign(y_i: f64, y_j: f64, censored_i: bool, censored_j: bool) -> i8 {
    if y_i > y_j && !censored_j {
        1
    } else if y_i <= y_j && !censored_i {
        -1
    } else {
        0
    }
}

/// Pairwise hinge `max(0, -g (t_i - t_j))` and its partials in `t_i`, `t_j`.
pub fn ca_rank_loss(t_i: f64, t_j: f64, g: i8) -> (f64, f64, f64) {
    let g = f64::from(g);
    let margin = -g * (t_i - t_j);
    if margin > 0.0 {
        (margin, -g, g)
    } else {
        (0.0, 0.0, 0.0)
    }
}

/// Weighted contribution of each term to a batch loss.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub ca_mse: f64,
    /// Part of `ca_mse` coming from pseudo-labelled samples.
    pub ca_mse_pseudo: f64,
    pub elr: f64,
    pub pen: f64,
    pub rank: f64,
}

impl LossTerms {
    pub fn total(&self) -> f64 {
        self.ca_mse + self.elr + self.pen + self.rank
    }

    /// First term that is not finite, if any.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        [
            ("ca_mse", self.ca_mse),
            ("elr", self.elr),
            ("pen", self.pen),
            ("rank", self.rank),
        ]
        .into_iter()
        .find(|(_, v)| !v.is_finite())
        .map(|(name, _)| name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchLoss {
    pub loss: f64,
    pub terms: LossTerms,
    /// Gradient of `loss` with respect to each sample's logits, in batch order.
    pub grads: Vec<Vec<f64>>,
}

/// Combined mini-batch loss.
///
/// `loss = mean_i [ca_mse_i + alpha elr_i + beta pen_i]
///       + (1/|B|^2) sum_i sum_j delta rank_ij`.
///
/// Terms whose weight is zero are skipped entirely. The ensemble is read,
/// never written.
pub fn batch_loss(
    batch: &[(&Sample, &[f64])],
    ensemble: &TemporalEnsemble,
    schedule: &BinSchedule,
    w: &LossWeights,
) -> Result<BatchLoss> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("batch_loss needs at least one sample"));
    }
    let n_bins = schedule.len();
    for (_, logits) in batch {
        if logits.len() != n_bins {
            return Err(Error::Dimension {
                context: "batch logits vs bin schedule",
                expected: n_bins,
                actual: logits.len(),
            });
        }
    }
    let size = batch.len() as f64;
    let inv_b = 1.0 / size;

    let t_hat: Vec<f64> = batch
        .iter()
        .map(|(_, p)| time_unchecked(p, schedule))
        .collect();
    // dloss/dt_hat accumulated per sample, chained through the head at the end
    let mut dt = vec![0.0; batch.len()];
    let mut grads = vec![vec![0.0; n_bins]; batch.len()];
    let mut terms = LossTerms::default();

    for (i, (sample, logits)) in batch.iter().enumerate() {
        let (mse, dmse) = ca_mse(t_hat[i], sample.y, sample.censored, sample.pseudo, w.tau);
        terms.ca_mse += inv_b * mse;
        if sample.pseudo {
            terms.ca_mse_pseudo += inv_b * mse;
        }
        dt[i] += inv_b * dmse;

        if w.alpha != 0.0 {
            let target = ensemble.target_or_zero(&sample.id);
            let (elr, delr) = elr_unchecked(logits, &target, w.elr_eps);
            terms.elr += inv_b * w.alpha * elr;
            for (g, d) in grads[i].iter_mut().zip(&delr) {
                *g += inv_b * w.alpha * d;
            }
        }

        if w.beta != 0.0 {
            let (pen, dpen) = pen_loss(logits);
            terms.pen += inv_b * w.beta * pen;
            for (g, d) in grads[i].iter_mut().zip(&dpen) {
                *g += inv_b * w.beta * d;
            }
        }
    }

    if w.delta != 0.0 {
        let scale = w.delta * inv_b * inv_b;
        for i in 0..batch.len() {
            let (si, _) = batch[i];
            for j in 0..batch.len() {
                let (sj, _) = batch[j];
                let g = rank_sign(si.y, sj.y, si.censored, sj.censored);
                if g == 0 {
                    continue;
                }
                let (l, di, dj) = ca_rank_loss(t_hat[i], t_hat[j], g);
                terms.rank += scale * l;
                dt[i] += scale * di;
                dt[j] += scale * dj;
            }
        }
    }

    for (i, (_, logits)) in batch.iter().enumerate() {
        if dt[i] != 0.0 {
            let dtdp = time_gradient_unchecked(logits, schedule);
            for (g, d) in grads[i].iter_mut().zip(&dtdp) {
                *g += dt[i] * d;
            }
        }
    }

    Ok(BatchLoss {
        loss: terms.total(),
        terms,
        grads,
    })
}
