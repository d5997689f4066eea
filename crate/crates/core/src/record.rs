//! The prediction-record data model.
//!
//! A [`PredictionRecord`] is one logged model prediction: an id, a stream
//! index, optional input features, a payload (one of the four supported
//! prediction forms), optional ground truth of the matching kind, and a
//! set of subpopulation tags. Records are immutable once constructed and
//! safe to share across threads.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detect::{Detection, GroundTruthObject};
use crate::numeric;

/// Validation failures for domain types and records.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("probability vector needs at least 2 entries, got {0}")]
    TooFewClasses(usize),
    #[error("probability {0} is outside [0, 1]")]
    ProbabilityOutOfRange(f64),
    #[error("probabilities sum to {0}")]
    ProbabilitySum(f64),
    #[error("stddev must be a positive finite number, got {0}")]
    InvalidStddev(f64),
    #[error("gaussian mean must be finite, got {0}")]
    InvalidMean(f64),
    #[error("ensemble needs at least 2 members, got {0}")]
    TooFewMembers(usize),
    #[error("ensemble members disagree on class count ({0} vs {1})")]
    MemberLengthMismatch(usize, usize),
    #[error("record {id}: payload kind {payload} does not match truth kind {truth}")]
    TruthKindMismatch {
        id: String,
        payload: PayloadKind,
        truth: &'static str,
    },
    #[error("record {id}: class label {label} is out of range for {classes} classes")]
    LabelOutOfRange {
        id: String,
        label: usize,
        classes: usize,
    },
    #[error("record {id} has no ground truth")]
    MissingTruth { id: String },
    #[error("record {id} has no features")]
    MissingFeatures { id: String },
    #[error(transparent)]
    Detect(#[from] crate::detect::DetectError),
}

/// A probability distribution over classes: each entry in [0, 1], entries
/// summing to 1 within 1e-6, at least two classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ClassProbVector {
    probs: Vec<f64>,
}

impl ClassProbVector {
    pub fn new(probs: Vec<f64>) -> Result<Self, DataError> {
        if probs.len() < 2 {
            return Err(DataError::TooFewClasses(probs.len()));
        }
        for &p in &probs {
            if !p.is_finite() || !(0.0..=1.0).contains(&p) {
                return Err(DataError::ProbabilityOutOfRange(p));
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(DataError::ProbabilitySum(sum));
        }
        Ok(ClassProbVector { probs })
    }

    /// Build a uniform distribution over `k` classes.
    pub fn uniform(k: usize) -> Result<Self, DataError> {
        Self::new(vec![1.0 / k as f64; k])
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Index of the most probable class; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate().skip(1) {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    /// Log-probabilities after clamping, usable as recovered logits.
    pub fn log_probs(&self) -> Vec<f64> {
        self.probs.iter().map(|&p| numeric::ln_prob(p)).collect()
    }
}

impl TryFrom<Vec<f64>> for ClassProbVector {
    type Error = DataError;
    fn try_from(v: Vec<f64>) -> Result<Self, DataError> {
        ClassProbVector::new(v)
    }
}

impl From<ClassProbVector> for Vec<f64> {
    fn from(v: ClassProbVector) -> Vec<f64> {
        v.probs
    }
}

/// A Gaussian predictive distribution for regression: mean and stddev in
/// label units, stddev strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGaussian", into = "RawGaussian")]
pub struct GaussianPrediction {
    mean: f64,
    stddev: f64,
}

#[derive(Serialize, Deserialize)]
struct RawGaussian {
    mean: f64,
    stddev: f64,
}

impl GaussianPrediction {
    pub fn new(mean: f64, stddev: f64) -> Result<Self, DataError> {
        if !mean.is_finite() {
            return Err(DataError::InvalidMean(mean));
        }
        if !stddev.is_finite() || stddev <= 0.0 {
            return Err(DataError::InvalidStddev(stddev));
        }
        Ok(GaussianPrediction { mean, stddev })
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn stddev(&self) -> f64 {
        self.stddev
    }
}

impl TryFrom<RawGaussian> for GaussianPrediction {
    type Error = DataError;
    fn try_from(r: RawGaussian) -> Result<Self, DataError> {
        GaussianPrediction::new(r.mean, r.stddev)
    }
}

impl From<GaussianPrediction> for RawGaussian {
    fn from(g: GaussianPrediction) -> RawGaussian {
        RawGaussian {
            mean: g.mean,
            stddev: g.stddev,
        }
    }
}

/// Per-member class probabilities sampled from different parameter
/// settings of the same model: at least two members, all the same length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ClassProbVector>", into = "Vec<ClassProbVector>")]
pub struct EnsembleClassPrediction {
    members: Vec<ClassProbVector>,
}

impl EnsembleClassPrediction {
    pub fn new(members: Vec<ClassProbVector>) -> Result<Self, DataError> {
        if members.len() < 2 {
            return Err(DataError::TooFewMembers(members.len()));
        }
        let k = members[0].len();
        for m in &members {
            if m.len() != k {
                return Err(DataError::MemberLengthMismatch(k, m.len()));
            }
        }
        Ok(EnsembleClassPrediction { members })
    }

    pub fn members(&self) -> &[ClassProbVector] {
        &self.members
    }

    pub fn class_count(&self) -> usize {
        self.members[0].len()
    }
}

impl TryFrom<Vec<ClassProbVector>> for EnsembleClassPrediction {
    type Error = DataError;
    fn try_from(v: Vec<ClassProbVector>) -> Result<Self, DataError> {
        EnsembleClassPrediction::new(v)
    }
}

impl From<EnsembleClassPrediction> for Vec<ClassProbVector> {
    fn from(e: EnsembleClassPrediction) -> Vec<ClassProbVector> {
        e.members
    }
}

/// The four prediction forms a record can carry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    /// A committed class label plus the full predictive distribution.
    Classification {
        label: usize,
        probs: ClassProbVector,
    },
    /// A Gaussian predictive distribution for a regression target.
    Gaussian {
        #[serde(flatten)]
        prediction: GaussianPrediction,
    },
    /// A set of detections for one image.
    Detections { detections: Vec<Detection> },
    /// Ensemble member distributions over classes.
    Ensemble { members: EnsembleClassPrediction },
}

impl Payload {
    pub fn kind(&self) -> PayloadKind {
        match self {
            Payload::Classification { .. } => PayloadKind::Classification,
            Payload::Gaussian { .. } => PayloadKind::Gaussian,
            Payload::Detections { .. } => PayloadKind::Detections,
            Payload::Ensemble { .. } => PayloadKind::Ensemble,
        }
    }
}

/// Payload kind tag, also used as the log schema name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayloadKind {
    Classification,
    Gaussian,
    Detections,
    Ensemble,
}

impl std::fmt::Display for PayloadKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            PayloadKind::Classification => "classification",
            PayloadKind::Gaussian => "gaussian",
            PayloadKind::Detections => "detections",
            PayloadKind::Ensemble => "ensemble",
        };
        f.write_str(s)
    }
}

/// Ground truth of the kind matching a record's payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Truth {
    Class { class: usize },
    Value { value: f64 },
    Objects { objects: Vec<GroundTruthObject> },
}

impl Truth {
    fn kind_name(&self) -> &'static str {
        match self {
            Truth::Class { .. } => "class",
            Truth::Value { .. } => "value",
            Truth::Objects { .. } => "objects",
        }
    }
}

/// One logged model prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub index: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<f64>>,
    pub payload: Payload,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<Truth>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub tags: BTreeSet<String>,
}

impl PredictionRecord {
    pub fn new(
        id: impl Into<String>,
        index: u64,
        payload: Payload,
        truth: Option<Truth>,
    ) -> Result<Self, DataError> {
        let record = PredictionRecord {
            id: id.into(),
            index,
            features: None,
            payload,
            truth,
            tags: BTreeSet::new(),
        };
        record.validate()?;
        Ok(record)
    }

    pub fn with_features(mut self, features: Vec<f64>) -> Self {
        self.features = Some(features);
        self
    }

    pub fn with_tags<I: IntoIterator<Item = String>>(mut self, tags: I) -> Self {
        self.tags = tags.into_iter().collect();
        self
    }

    /// Check payload-internal and payload/truth agreement invariants.
    pub fn validate(&self) -> Result<(), DataError> {
        if let Payload::Classification { label, probs } = &self.payload {
            if *label >= probs.len() {
                return Err(DataError::LabelOutOfRange {
                    id: self.id.clone(),
                    label: *label,
                    classes: probs.len(),
                });
            }
        }
        if let Some(truth) = &self.truth {
            let ok = matches!(
                (&self.payload, truth),
                (Payload::Classification { .. }, Truth::Class { .. })
                    | (Payload::Ensemble { .. }, Truth::Class { .. })
                    | (Payload::Gaussian { .. }, Truth::Value { .. })
                    | (Payload::Detections { .. }, Truth::Objects { .. })
            );
            if !ok {
                return Err(DataError::TruthKindMismatch {
                    id: self.id.clone(),
                    payload: self.payload.kind(),
                    truth: truth.kind_name(),
                });
            }
        }
        Ok(())
    }

    /// The record's predictive distribution over classes, if it has one.
    /// Ensembles are averaged member-wise.
    pub fn predictive_probs(&self) -> Option<ClassProbVector> {
        match &self.payload {
            Payload::Classification { probs, .. } => Some(probs.clone()),
            Payload::Ensemble { members } => Some(crate::uncertainty::ensemble_mean(members)),
            _ => None,
        }
    }

    /// The committed class prediction: the explicit label for
    /// classification payloads, the argmax of the mean for ensembles.
    pub fn predicted_class(&self) -> Option<usize> {
        match &self.payload {
            Payload::Classification { label, .. } => Some(*label),
            Payload::Ensemble { members } => {
                Some(crate::uncertainty::ensemble_mean(members).argmax())
            }
            _ => None,
        }
    }

    pub fn gaussian(&self) -> Option<GaussianPrediction> {
        match &self.payload {
            Payload::Gaussian { prediction } => Some(*prediction),
            _ => None,
        }
    }

    pub fn truth_class(&self) -> Option<usize> {
        match &self.truth {
            Some(Truth::Class { class }) => Some(*class),
            _ => None,
        }
    }

    pub fn truth_value(&self) -> Option<f64> {
        match &self.truth {
            Some(Truth::Value { value }) => Some(*value),
            _ => None,
        }
    }

    /// Features, or the named error deployment logs produce when an
    /// operation needs them.
    pub fn require_features(&self) -> Result<&[f64], DataError> {
        self.features
            .as_deref()
            .ok_or_else(|| DataError::MissingFeatures {
                id: self.id.clone(),
            })
    }

    /// Ground truth, or the named error for truth-free deployment logs.
    pub fn require_truth(&self) -> Result<&Truth, DataError> {
        self.truth.as_ref().ok_or_else(|| DataError::MissingTruth {
            id: self.id.clone(),
        })
    }
}
