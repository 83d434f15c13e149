//! Datasets: CSV ingestion, synthetic generation, censoring simulation and
//! patient-wise splitting.
//!
//! CSV layout (header required): `id,patient_id,y,e,f0,f1,...`, where `e`
//! is 1 for a censored row and 0 for an observed event.

use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sample::Sample;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
    feature_dim: usize,
    /// Where the data came from (file path or generator settings).
    pub provenance: String,
}

impl Dataset {
    /// Validates uniform feature width, unique ids, positive finite times and
    /// consistent labels within each patient.
    pub fn new(samples: Vec<Sample>, provenance: impl Into<String>) -> Result<Self> {
        let feature_dim = samples.first().map_or(0, |s| s.features.len());
        let mut ids = HashSet::with_capacity(samples.len());
        let mut labels: HashMap<&str, (f64, bool)> = HashMap::new();
        for s in &samples {
            if s.features.len() != feature_dim {
                return Err(Error::DataIntegrity(format!(
                    "sample {} has {} features, expected {feature_dim}",
                    s.id,
                    s.features.len()
                )));
            }
            if !(s.y.is_finite() && s.y > 0.0) {
                return Err(Error::DataIntegrity(format!(
                    "sample {} has non-positive time {}",
                    s.id, s.y
                )));
            }
            if !ids.insert(s.id.as_str()) {
                return Err(Error::DataIntegrity(format!(
                    "duplicate sample id {}",
                    s.id
                )));
            }
            let label = labels.entry(&s.patient_id).or_insert((s.y, s.censored));
            if *label != (s.y, s.censored) {
                return Err(Error::DataIntegrity(format!(
                    "patient {} has inconsistent labels",
                    s.patient_id
                )));
            }
        }
        Ok(Self {
            samples,
            feature_dim,
            provenance: provenance.into(),
        })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Sample> {
        self.samples
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.y).collect()
    }

    /// Patient ids in order of first appearance.
    pub fn patient_ids(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.samples
            .iter()
            .filter(|s| seen.insert(s.patient_id.as_str()))
            .map(|s| s.patient_id.clone())
            .collect()
    }

    /// Fraction of patients that are censored.
    pub fn censored_fraction(&self) -> f64 {
        let mut seen = HashSet::new();
        let (mut total, mut censored) = (0usize, 0usize);
        for s in &self.samples {
            if seen.insert(s.patient_id.as_str()) {
                total += 1;
                censored += usize::from(s.censored);
            }
        }
        if total == 0 {
            0.0
        } else {
            censored as f64 / total as f64
        }
    }

    /// A dataset containing only the samples of `patients`.
    pub fn subset(&self, patients: &HashSet<&str>, provenance: impl Into<String>) -> Self {
        Self {
            samples: self
                .samples
                .iter()
                .filter(|s| patients.contains(s.patient_id.as_str()))
                .cloned()
                .collect(),
            feature_dim: self.feature_dim,
            provenance: provenance.into(),
        }
    }

    /// Uncensored samples only.
    pub fn events_only(&self) -> Self {
        Self {
            samples: self
                .samples
                .iter()
                .filter(|s| !s.censored)
                .cloned()
                .collect(),
            feature_dim: self.feature_dim,
            provenance: format!("{} (events only)", self.provenance),
        }
    }
}

fn csv_err(row: usize, message: impl Into<String>) -> Error {
    Error::Csv {
        row,
        message: message.into(),
    }
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    read_csv(file, path.display().to_string())
}

/// Parse CSV from any reader. Row numbers in errors count the header as row 1.
pub fn read_csv<R: Read>(reader: R, provenance: impl Into<String>) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    for (i, expected) in ["id", "patient_id", "y", "e"].iter().enumerate() {
        match headers.get(i) {
            Some(h) if h == *expected => {}
            Some(h) => {
                return Err(csv_err(
                    1,
                    format!("column {i} should be `{expected}`, found `{h}`"),
                ))
            }
            None => return Err(csv_err(1, format!("missing column `{expected}`"))),
        }
    }
    let d = headers.len() - 4;
    for (k, h) in headers.iter().skip(4).enumerate() {
        if h != format!("f{k}") {
            return Err(csv_err(
                1,
                format!("feature column {k} should be `f{k}`, found `{h}`"),
            ));
        }
    }

    let mut samples = Vec::new();
    let mut ids = HashSet::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 2;
        let record = record?;
        if record.len() != d + 4 {
            return Err(csv_err(
                row,
                format!("expected {} fields, found {}", d + 4, record.len()),
            ));
        }
        let id = record[0].to_owned();
        if !ids.insert(id.clone()) {
            return Err(csv_err(row, format!("duplicate id `{id}`")));
        }
        let y: f64 = record[2]
            .parse()
            .map_err(|_| csv_err(row, format!("time `{}` is not a number", &record[2])))?;
        if !(y.is_finite() && y > 0.0) {
            return Err(csv_err(row, format!("time must be positive, found {y}")));
        }
        let censored = match &record[3] {
            "0" => false,
            "1" => true,
            other => {
                return Err(csv_err(
                    row,
                    format!("censor flag must be 0 or 1, found `{other}`"),
                ))
            }
        };
        let features = (0..d)
            .map(|k| {
                record[k + 4].parse::<f64>().map_err(|_| {
                    csv_err(
                        row,
                        format!("feature f{k} `{}` is not a number", &record[k + 4]),
                    )
                })
            })
            .collect::<Result<Vec<_>>>()?;
        samples.push(Sample::new(id, &record[1], features, y, censored));
    }
    Dataset::new(samples, provenance)
}

pub fn write_csv<W: Write>(dataset: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["id".to_owned(), "patient_id".into(), "y".into(), "e".into()];
    header.extend((0..dataset.feature_dim()).map(|k| format!("f{k}")));
    w.write_record(&header)?;
    for s in dataset.samples() {
        let mut row = vec![
            s.id.clone(),
            s.patient_id.clone(),
            s.y.to_string(),
            if s.censored { "1" } else { "0" }.to_owned(),
        ];
        row.extend(s.features.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    write_csv(dataset, &mut buf)?;
    crate::trainer::write_atomic(path.as_ref(), &buf)
}

/// Synthetic censored survival data.
///
/// Each patient has a latent feature vector `x ~ N(0, I)` and risk
/// `r = risk_scale * w·x` with a fixed unit-norm `w`. The event time is
/// `clamp(max_time * exp(-softplus(r)) * W, 1, max_time)` where `W` is a
/// unit-median Weibull draw (`weibull_shape = inf` gives `W = 1`). With
/// probability `censoring` the patient is censored at a time drawn uniformly
/// before the event. Each of the patient's samples sees `x` plus independent
/// Gaussian noise of standard deviation `noise`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub n_patients: usize,
    pub samples_per_patient: usize,
    pub n_features: usize,
    pub risk_seed: u64,
    pub seed: u64,
    pub risk_scale: f64,
    pub weibull_shape: f64,
    pub max_time: f64,
    pub censoring: f64,
    pub noise: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_patients: 1000,
            samples_per_patient: 2,
            n_features: 8,
            risk_seed: 7,
            seed: 0,
            risk_scale: 2.0,
            weibull_shape: 4.0,
            max_time: 3000.0,
            censoring: 0.5,
            noise: 1.0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidArgument(m));
        if self.n_patients == 0 || self.samples_per_patient == 0 || self.n_features == 0 {
            return fail("n_patients, samples_per_patient and n_features must be positive".into());
        }
        if !(0.0..1.0).contains(&self.censoring) {
            return fail(format!("censoring {} must be in [0, 1)", self.censoring));
        }
        if !(self.max_time.is_finite() && self.max_time > 1.0) {
            return fail(format!("max_time {} must exceed 1", self.max_time));
        }
        if self.weibull_shape.is_nan() || self.weibull_shape <= 0.0 {
            return fail(format!(
                "weibull_shape {} must be positive",
                self.weibull_shape
            ));
        }
        if !(self.noise >= 0.0 && self.risk_scale.is_finite()) {
            return fail("noise must be non-negative and risk_scale finite".into());
        }
        Ok(())
    }

    /// The unit-norm risk direction `w`.
    pub fn risk_weights(&self) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.risk_seed);
        let w: Vec<f64> = (0..self.n_features)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let norm = w
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
            .max(f64::MIN_POSITIVE);
        w.into_iter().map(|v| v / norm).collect()
    }

    /// Risk of a latent feature vector.
    pub fn risk(&self, weights: &[f64], x: &[f64]) -> f64 {
        self.risk_scale * weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }

    /// Noise-free event time for a given risk and Weibull factor.
    pub fn event_time(&self, risk: f64, weibull: f64) -> f64 {
        let softplus = if risk > 30.0 {
            risk
        } else {
            risk.exp().ln_1p()
        };
        (self.max_time * (-softplus).exp() * weibull).clamp(1.0, self.max_time)
    }
}

/// Unit-median Weibull draw by inversion; shape `inf` yields exactly 1.
fn unit_median_weibull<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    // -ln(1 - u) is Exp(1); rescale so that the median is 1
    let e = -(-u).ln_1p();
    (e / std::f64::consts::LN_2).powf(1.0 / shape)
}

/// Latent risk of each generated patient, aligned with the dataset's
/// patient order. Exposed for correlation checks.
pub fn generate_synthetic_with_risk(spec: &SynthSpec) -> Result<(Dataset, Vec<(f64, f64)>)> {
    spec.validate()?;
    let weights = spec.risk_weights();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut samples = Vec::with_capacity(spec.n_patients * spec.samples_per_patient);
    let mut latent = Vec::with_capacity(spec.n_patients);
    for p in 0..spec.n_patients {
        let x: Vec<f64> = (0..spec.n_features)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let r = spec.risk(&weights, &x);
        let t = spec.event_time(r, unit_median_weibull(spec.weibull_shape, &mut rng));
        let censor_draw: f64 = rng.random();
        let (y, censored) = if censor_draw < spec.censoring && t > 1.0 {
            (rng.random_range(1.0..t), true)
        } else {
            (t, false)
        };
        latent.push((r, t));
        let pid = format!("p{p}");
        for k in 0..spec.samples_per_patient {
            let features = x
                .iter()
                .map(|v| {
                    if spec.noise > 0.0 {
                        v + spec.noise * rng.sample::<f64, _>(StandardNormal)
                    } else {
                        *v
                    }
                })
                .collect();
            samples.push(Sample::new(
                format!("{pid}_s{k}"),
                pid.clone(),
                features,
                y,
                censored,
            ));
        }
    }
    let provenance = format!("synthetic {}", serde_json::to_string(spec)?);
    Ok((Dataset::new(samples, provenance)?, latent))
}

pub fn generate_synthetic(spec: &SynthSpec) -> Result<Dataset> {
    generate_synthetic_with_risk(spec).map(|(d, _)| d)
}

/// Censoring time drawn uniformly on `[min(1, y/2), y)`, strictly below `y`.
fn draw_censor_time<R: Rng + ?Sized>(y: f64, rng: &mut R) -> f64 {
    let lo = 1f64.min(0.5 * y);
    rng.random_range(lo..y)
}

/// Convert `round(rho * n)` of the `n` uncensored patients into censored
/// ones, each with a censoring time drawn uniformly below its event time.
pub fn simulate_censoring<R: Rng + ?Sized>(
    dataset: &Dataset,
    rho: f64,
    rng: &mut R,
) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::InvalidArgument(format!("rho {rho} outside [0, 1]")));
    }
    let mut seen = HashSet::new();
    let uncensored: Vec<(&str, f64)> = dataset
        .samples
        .iter()
        .filter(|s| !s.censored && seen.insert(s.patient_id.as_str()))
        .map(|s| (s.patient_id.as_str(), s.y))
        .collect();
    let k = ((rho * uncensored.len() as f64).round() as usize).min(uncensored.len());
    let mut new_times: HashMap<&str, f64> = HashMap::with_capacity(k);
    let mut picked: Vec<usize> = index::sample(rng, uncensored.len(), k).into_vec();
    // censoring times are drawn in index order
    picked.sort_unstable();
    for i in picked {
        let (pid, y) = uncensored[i];
        new_times.insert(pid, draw_censor_time(y, rng));
    }
    let samples = dataset
        .samples
        .iter()
        .map(|s| match new_times.get(s.patient_id.as_str()) {
            Some(&u) => Sample {
                y: u,
                censored: true,
                ..s.clone()
            },
            None => s.clone(),
        })
        .collect();
    Ok(Dataset {
        samples,
        feature_dim: dataset.feature_dim,
        provenance: format!("{} (censoring rho={rho})", dataset.provenance),
    })
}

/// Shuffle patients with `seed` and cut them into consecutive groups whose
/// sizes follow `fractions` (largest-remainder rounding).
pub fn split_patient_wise(dataset: &Dataset, fractions: &[f64], seed: u64) -> Result<Vec<Dataset>> {
    if fractions.is_empty() || fractions.iter().any(|f| f.is_nan() || *f <= 0.0) {
        return Err(Error::InvalidArgument(
            "split fractions must be positive".into(),
        ));
    }
    let sum: f64 = fractions.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "split fractions sum to {sum}, not 1"
        )));
    }
    let mut patients = dataset.patient_ids();
    let n = patients.len();
    if n < fractions.len() {
        return Err(Error::InvalidArgument(format!(
            "{n} patients cannot fill {} splits",
            fractions.len()
        )));
    }
    patients.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let exact: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut sizes: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|&a, &b| {
        (exact[b] - exact[b].floor())
            .total_cmp(&(exact[a] - exact[a].floor()))
            .then(a.cmp(&b))
    });
    let assigned: usize = sizes.iter().sum();
    for &i in order.iter().take(n - assigned) {
        sizes[i] += 1;
    }

    let mut out = Vec::with_capacity(sizes.len());
    let mut start = 0;
    for (i, size) in sizes.into_iter().enumerate() {
        let group: HashSet<&str> = patients[start..start + size]
            .iter()
            .map(String::as_str)
            .collect();
        out.push(dataset.subset(
            &group,
            format!("{} (split {i}, seed {seed})", dataset.provenance),
        ));
        start += size;
    }
    Ok(out)
}
