//! Pointwise error metrics and the failure predicate.
//!
//! A prediction *fails* when its error under the chosen metric strictly
//! exceeds an application-defined threshold. Equality passes; the boundary
//! is strict on purpose and every gate in the crate inherits it from
//! [`is_failure`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric;
use crate::record::{ClassProbVector, PredictionRecord, Truth};

#[derive(Debug, Error)]
pub enum LossError {
    #[error("inputs must be finite, got prediction {pred} and label {label}")]
    NonFiniteInput { pred: f64, label: f64 },
    #[error("class {class} is out of range for {classes} classes")]
    ClassOutOfRange { class: usize, classes: usize },
    #[error("unknown metric \"{0}\"; known metrics: {known}", known = Metric::names().join(", "))]
    UnknownMetric(String),
    #[error("record {id}: metric {metric} does not apply to payload kind {kind}")]
    PayloadMismatch {
        id: String,
        metric: &'static str,
        kind: crate::record::PayloadKind,
    },
    #[error(transparent)]
    Data(#[from] crate::record::DataError),
}

/// A non-negative, finite error value in metric-specific units.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ErrorValue(f64);

impl ErrorValue {
    pub fn new(value: f64) -> ErrorValue {
        debug_assert!(value.is_finite());
        ErrorValue(value)
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

/// The error budget delta a prediction may spend without failing.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FailureThreshold(f64);

impl FailureThreshold {
    pub fn new(delta: f64) -> FailureThreshold {
        assert!(delta.is_finite(), "failure threshold must be finite");
        FailureThreshold(delta)
    }

    pub fn delta(&self) -> f64 {
        self.0
    }
}

/// Squared difference between prediction and label.
pub fn squared_error(pred: f64, label: f64) -> Result<ErrorValue, LossError> {
    if !pred.is_finite() || !label.is_finite() {
        return Err(LossError::NonFiniteInput { pred, label });
    }
    let d = pred - label;
    Ok(ErrorValue(d * d))
}

/// Unsigned difference between prediction and label.
pub fn absolute_error(pred: f64, label: f64) -> Result<ErrorValue, LossError> {
    if !pred.is_finite() || !label.is_finite() {
        return Err(LossError::NonFiniteInput { pred, label });
    }
    Ok(ErrorValue((pred - label).abs()))
}

/// 0 when the classes agree, 1 otherwise.
pub fn zero_one_error(pred_class: usize, true_class: usize) -> ErrorValue {
    ErrorValue(if pred_class == true_class { 0.0 } else { 1.0 })
}

/// Negative log of the probability assigned to the true class, with the
/// crate-wide probability clamp keeping it finite.
pub fn negative_log_likelihood(
    probs: &ClassProbVector,
    true_class: usize,
) -> Result<ErrorValue, LossError> {
    let p = probs
        .probs()
        .get(true_class)
        .copied()
        .ok_or(LossError::ClassOutOfRange {
            class: true_class,
            classes: probs.len(),
        })?;
    Ok(ErrorValue(-numeric::ln_prob(p)))
}

/// The failure predicate: strictly greater than the threshold.
pub fn is_failure(err: ErrorValue, threshold: FailureThreshold) -> bool {
    err.0 > threshold.0
}

/// The named per-instance metrics a suite configuration can refer to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    SquaredError,
    AbsoluteError,
    ZeroOne,
    Nll,
}

impl Metric {
    pub fn from_name(name: &str) -> Result<Metric, LossError> {
        match name {
            "squared_error" => Ok(Metric::SquaredError),
            "absolute_error" => Ok(Metric::AbsoluteError),
            "zero_one" => Ok(Metric::ZeroOne),
            "nll" => Ok(Metric::Nll),
            other => Err(LossError::UnknownMetric(other.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Metric::SquaredError => "squared_error",
            Metric::AbsoluteError => "absolute_error",
            Metric::ZeroOne => "zero_one",
            Metric::Nll => "nll",
        }
    }

    pub fn names() -> Vec<&'static str> {
        vec!["squared_error", "absolute_error", "zero_one", "nll"]
    }

    /// Evaluate the metric on one record against its ground truth.
    ///
    /// Regression metrics read the Gaussian mean as the prediction;
    /// classification metrics use the committed label (ensembles commit to
    /// the argmax of the member mean).
    pub fn per_instance(&self, record: &PredictionRecord) -> Result<ErrorValue, LossError> {
        let truth = record.require_truth()?;
        match self {
            Metric::SquaredError | Metric::AbsoluteError => {
                let g = record.gaussian().ok_or_else(|| self.mismatch(record))?;
                let label = match truth {
                    Truth::Value { value } => *value,
                    _ => return Err(self.mismatch(record)),
                };
                match self {
                    Metric::SquaredError => squared_error(g.mean(), label),
                    _ => absolute_error(g.mean(), label),
                }
            }
            Metric::ZeroOne => {
                let pred = record.predicted_class().ok_or_else(|| self.mismatch(record))?;
                let class = match truth {
                    Truth::Class { class } => *class,
                    _ => return Err(self.mismatch(record)),
                };
                Ok(zero_one_error(pred, class))
            }
            Metric::Nll => {
                let probs = record.predictive_probs().ok_or_else(|| self.mismatch(record))?;
                let class = match truth {
                    Truth::Class { class } => *class,
                    _ => return Err(self.mismatch(record)),
                };
                negative_log_likelihood(&probs, class)
            }
        }
    }

    fn mismatch(&self, record: &PredictionRecord) -> LossError {
        LossError::PayloadMismatch {
            id: record.id.clone(),
            metric: self.name(),
            kind: record.payload.kind(),
        }
    }
}
