use serde::{Deserialize, Serialize};

/// One observation.
///
/// `y` is the observed time in days. When `censored` is false it is the event
/// time; otherwise it is only a lower bound on the hidden event time.
/// `pseudo` marks samples whose label was produced by the pseudo-labeller and
/// is never set on loaded or generated data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub patient_id: String,
    pub features: Vec<f64>,
    pub y: f64,
    pub censored: bool,
    #[serde(default)]
    pub pseudo: bool,
}

impl Sample {
    pub fn new(
        id: impl Into<String>,
        patient_id: impl Into<String>,
        features: Vec<f64>,
        y: f64,
        censored: bool,
    ) -> Self {
        Self {
            id: id.into(),
            patient_id: patient_id.into(),
            features,
            y,
            censored,
            pseudo: false,
        }
    }
}
