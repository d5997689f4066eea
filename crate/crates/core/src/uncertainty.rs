//! Predictive-probability self-assessment: confidence metrics over class
//! distributions, entropy for Gaussian regressors, ensemble averaging as a
//! posterior-predictive approximation, the epistemic/aleatoric
//! decomposition, and uncertainty sampling for labeling.
//!
//! All entropies are in nats.

use serde::{Deserialize, Serialize};

use crate::numeric;
use crate::record::{
    ClassProbVector, EnsembleClassPrediction, GaussianPrediction, PredictionRecord,
};

/// Names under which these metrics are exposed to suite configurations and
/// monitor definitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UncertaintyMetric {
    MaxProb,
    Margin,
    Entropy,
    GaussianEntropy,
    ModelVariance,
    Epistemic,
    Aleatoric,
}

impl UncertaintyMetric {
    pub fn from_name(name: &str) -> Option<UncertaintyMetric> {
        match name {
            "max_prob" => Some(UncertaintyMetric::MaxProb),
            "margin" => Some(UncertaintyMetric::Margin),
            "entropy" => Some(UncertaintyMetric::Entropy),
            "gaussian_entropy" => Some(UncertaintyMetric::GaussianEntropy),
            "model_variance" => Some(UncertaintyMetric::ModelVariance),
            "epistemic" => Some(UncertaintyMetric::Epistemic),
            "aleatoric" => Some(UncertaintyMetric::Aleatoric),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            UncertaintyMetric::MaxProb => "max_prob",
            UncertaintyMetric::Margin => "margin",
            UncertaintyMetric::Entropy => "entropy",
            UncertaintyMetric::GaussianEntropy => "gaussian_entropy",
            UncertaintyMetric::ModelVariance => "model_variance",
            UncertaintyMetric::Epistemic => "epistemic",
            UncertaintyMetric::Aleatoric => "aleatoric",
        }
    }
}

/// A scalar self-assessment with the metric that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyScore {
    pub value: f64,
    pub metric: UncertaintyMetric,
}

/// The model's confidence: its highest class probability.
pub fn max_prob(p: &ClassProbVector) -> UncertaintyScore {
    let value = p.probs().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    UncertaintyScore {
        value,
        metric: UncertaintyMetric::MaxProb,
    }
}

/// Gap between the highest and second-highest class probabilities.
pub fn margin(p: &ClassProbVector) -> UncertaintyScore {
    let mut best = f64::NEG_INFINITY;
    let mut second = f64::NEG_INFINITY;
    for &v in p.probs() {
        if v > best {
            second = best;
            best = v;
        } else if v > second {
            second = v;
        }
    }
    UncertaintyScore {
        value: best - second,
        metric: UncertaintyMetric::Margin,
    }
}

/// Shannon entropy of the class distribution, maximal for the uniform
/// distribution.
pub fn entropy(p: &ClassProbVector) -> UncertaintyScore {
    let value = -p
        .probs()
        .iter()
        .map(|&v| v * numeric::ln_prob(v))
        .sum::<f64>();
    UncertaintyScore {
        value,
        metric: UncertaintyMetric::Entropy,
    }
}

/// Differential entropy of a Gaussian: (1/2) ln(2 pi e sigma^2).
pub fn gaussian_entropy(g: &GaussianPrediction) -> UncertaintyScore {
    let sigma2 = g.stddev() * g.stddev();
    let value = 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * sigma2).ln();
    UncertaintyScore {
        value,
        metric: UncertaintyMetric::GaussianEntropy,
    }
}

/// Uniform-weight member average: the sample-mean approximation of the
/// posterior predictive.
pub fn ensemble_mean(e: &EnsembleClassPrediction) -> ClassProbVector {
    let k = e.class_count();
    let m = e.members().len() as f64;
    let mut mean = vec![0.0; k];
    for member in e.members() {
        for (slot, &p) in mean.iter_mut().zip(member.probs()) {
            *slot += p;
        }
    }
    for slot in &mut mean {
        *slot /= m;
    }
    ClassProbVector::new(mean).expect("mean of valid distributions is a valid distribution")
}

/// Mean over classes of the population variance of member probabilities.
/// Zero exactly when all members agree.
pub fn model_uncertainty_variance(e: &EnsembleClassPrediction) -> UncertaintyScore {
    let k = e.class_count();
    let m = e.members().len() as f64;
    let mean = ensemble_mean(e);
    let mut total = 0.0;
    for c in 0..k {
        let mu = mean.probs()[c];
        let var = e
            .members()
            .iter()
            .map(|member| {
                let d = member.probs()[c] - mu;
                d * d
            })
            .sum::<f64>()
            / m;
        total += var;
    }
    UncertaintyScore {
        value: total / k as f64,
        metric: UncertaintyMetric::ModelVariance,
    }
}

/// Total predictive entropy split into aleatoric and epistemic parts.
///
/// total is the entropy of the member mean; aleatoric is the mean member
/// entropy; epistemic is their difference, the mutual information between
/// the prediction and the member index. The identity
/// `total = aleatoric + epistemic` holds by construction and epistemic is
/// non-negative up to float rounding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyDecomposition {
    pub total: f64,
    pub aleatoric: f64,
    pub epistemic: f64,
}

pub fn decompose(e: &EnsembleClassPrediction) -> UncertaintyDecomposition {
    let total = entropy(&ensemble_mean(e)).value;
    let aleatoric = e
        .members()
        .iter()
        .map(|m| entropy(m).value)
        .sum::<f64>()
        / e.members().len() as f64;
    UncertaintyDecomposition {
        total,
        aleatoric,
        epistemic: total - aleatoric,
    }
}

/// Pick the `k` least-confident records for labeling.
///
/// Ordering is smallest max-prob first, ties broken by ascending id, so
/// the selection is deterministic. Asking for more than the pool holds
/// returns the whole pool in that order. Records without a class
/// distribution are skipped.
pub fn select_for_labeling(pool: &[PredictionRecord], k: usize) -> Vec<String> {
    let mut scored: Vec<(f64, &str)> = pool
        .iter()
        .filter_map(|r| {
            r.predictive_probs()
                .map(|p| (max_prob(&p).value, r.id.as_str()))
        })
        .collect();
    scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then_with(|| a.1.cmp(b.1)));
    scored
        .into_iter()
        .take(k)
        .map(|(_, id)| id.to_string())
        .collect()
}

/// Evaluate a self-assessment metric on one record, if its payload
/// supports the metric.
pub fn record_metric(record: &PredictionRecord, metric: UncertaintyMetric) -> Option<f64> {
    match metric {
        UncertaintyMetric::MaxProb => record.predictive_probs().map(|p| max_prob(&p).value),
        UncertaintyMetric::Margin => record.predictive_probs().map(|p| margin(&p).value),
        UncertaintyMetric::Entropy => record.predictive_probs().map(|p| entropy(&p).value),
        UncertaintyMetric::GaussianEntropy => record.gaussian().map(|g| gaussian_entropy(&g).value),
        UncertaintyMetric::ModelVariance => match &record.payload {
            crate::record::Payload::Ensemble { members } => {
                Some(model_uncertainty_variance(members).value)
            }
            _ => None,
        },
        UncertaintyMetric::Epistemic => match &record.payload {
            crate::record::Payload::Ensemble { members } => Some(decompose(members).epistemic),
            _ => None,
        },
        UncertaintyMetric::Aleatoric => match &record.payload {
            crate::record::Payload::Ensemble { members } => Some(decompose(members).aleatoric),
            _ => None,
        },
    }
}
