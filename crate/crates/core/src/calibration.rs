//! Calibration diagnostics and post-hoc correction.
//!
//! A calibrated classifier's stated confidence matches its empirical
//! accuracy: among predictions made at confidence 0.7, about 70% should be
//! correct. The binned expected calibration error ([`ece`]) measures the
//! gap; [`fit_temperature`] / [`apply_temperature`] correct it post hoc;
//! [`interval_coverage`] and [`sharpness`] are the regression analogues;
//! split conformal prediction ([`conformal_calibrate`]) turns any
//! classifier into a set-valued predictor with a marginal coverage
//! guarantee.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{self, central_interval_z};
use crate::record::{ClassProbVector, PredictionRecord};

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("no records to calibrate on")]
    NoRecords,
    #[error("record {id} has no ground truth")]
    MissingTruth { id: String },
    #[error("record {id} has no class distribution")]
    NotClassification { id: String },
    #[error("record {id} is not a Gaussian prediction")]
    NotGaussian { id: String },
    #[error("need at least one bin, got {0}")]
    NoBins(usize),
    #[error("need at least {needed} records, got {got}")]
    TooFewRecords { needed: usize, got: usize },
    #[error("temperature objective is flat: every probability vector is uniform")]
    FlatObjective,
    #[error("confidence level {0} is outside (0, 1)")]
    BadLevel(f64),
    #[error("confidence levels must be distinct and non-empty")]
    BadLevels,
    #[error("alpha {0} is outside (0, 1)")]
    BadAlpha(f64),
}

/// How confidences are grouped into reliability bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinningScheme {
    /// Fixed-width bins spanning `[1/K, 1]`; every bin appears in the
    /// report, empty or not.
    EqualWidth,
    /// Near-equal-count bins over the sorted confidences; only non-empty
    /// bins appear. Bin bounds are the observed min/max confidence, so
    /// lower == upper can occur when a bin holds one repeated confidence.
    EqualMass,
}

/// One confidence bin of a reliability diagram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin {
    pub lower: f64,
    pub upper: f64,
    pub mean_confidence: f64,
    pub accuracy: f64,
    pub count: usize,
}

/// Binned calibration summary for a classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    /// Count-weighted mean |accuracy - confidence| over bins, in [0, 1].
    pub ece: f64,
    pub bins: Vec<ReliabilityBin>,
    pub n: usize,
    pub scheme: BinningScheme,
}

impl CalibrationReport {
    /// Bins as CSV for external plotting.
    pub fn bins_csv(&self) -> String {
        let mut out = String::from("lower,upper,mean_confidence,accuracy,count\n");
        for b in &self.bins {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                b.lower, b.upper, b.mean_confidence, b.accuracy, b.count
            ));
        }
        out
    }
}

/// Confidence and correctness of one classification record: confidence is
/// the max predicted probability, correctness compares the argmax class to
/// the truth.
fn confidence_and_hit(record: &PredictionRecord) -> Result<(f64, bool), CalibrationError> {
    let probs = record
        .predictive_probs()
        .ok_or_else(|| CalibrationError::NotClassification {
            id: record.id.clone(),
        })?;
    let truth = record
        .truth_class()
        .ok_or_else(|| CalibrationError::MissingTruth {
            id: record.id.clone(),
        })?;
    let predicted = probs.argmax();
    let confidence = probs.probs()[predicted];
    Ok((confidence, predicted == truth))
}

/// Expected calibration error over classification records with truth.
///
/// Equal-width bins partition `[1/K, 1]` (the max probability can never
/// fall below 1/K); 15 bins is the conventional default.
pub fn ece(
    records: &[PredictionRecord],
    n_bins: usize,
    scheme: BinningScheme,
) -> Result<CalibrationReport, CalibrationError> {
    if records.is_empty() {
        return Err(CalibrationError::NoRecords);
    }
    if n_bins == 0 {
        return Err(CalibrationError::NoBins(n_bins));
    }
    let samples: Vec<(f64, bool)> = records
        .iter()
        .map(confidence_and_hit)
        .collect::<Result<_, _>>()?;
    let k_max = records
        .iter()
        .filter_map(|r| r.predictive_probs().map(|p| p.len()))
        .max()
        .unwrap_or(2);
    let n = samples.len();

    let bins = match scheme {
        BinningScheme::EqualWidth => {
            let lo = 1.0 / k_max as f64;
            let width = (1.0 - lo) / n_bins as f64;
            let mut grouped: Vec<Vec<(f64, bool)>> = vec![Vec::new(); n_bins];
            for &(c, hit) in &samples {
                let idx = (((c - lo) / width).floor() as usize).min(n_bins - 1);
                grouped[idx].push((c, hit));
            }
            grouped
                .into_iter()
                .enumerate()
                .map(|(i, group)| {
                    let lower = lo + i as f64 * width;
                    let upper = lo + (i + 1) as f64 * width;
                    make_bin(lower, upper, &group)
                })
                .collect()
        }
        BinningScheme::EqualMass => {
            let mut sorted = samples.clone();
            sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            let bins = n_bins.min(n);
            let mut out = Vec::with_capacity(bins);
            let mut start = 0;
            for i in 0..bins {
                if start >= n {
                    break;
                }
                // Aim for an even split of what remains, then extend the
                // boundary so tied confidences never straddle two bins.
                let remaining_bins = bins - i;
                let mut end = start + (n - start).div_ceil(remaining_bins);
                while end < n && sorted[end].0 == sorted[end - 1].0 {
                    end += 1;
                }
                let group = &sorted[start..end];
                start = end;
                let lower = group.first().unwrap().0;
                let upper = group.last().unwrap().0;
                out.push(make_bin(lower, upper, group));
            }
            out
        }
    };

    let ece = bins
        .iter()
        .map(|b| (b.count as f64 / n as f64) * (b.accuracy - b.mean_confidence).abs())
        .sum();
    Ok(CalibrationReport {
        ece,
        bins,
        n,
        scheme,
    })
}

fn make_bin(lower: f64, upper: f64, group: &[(f64, bool)]) -> ReliabilityBin {
    if group.is_empty() {
        return ReliabilityBin {
            lower,
            upper,
            mean_confidence: (lower + upper) / 2.0,
            accuracy: 0.0,
            count: 0,
        };
    }
    let count = group.len();
    let mean_confidence = group.iter().map(|&(c, _)| c).sum::<f64>() / count as f64;
    let accuracy = group.iter().filter(|&&(_, hit)| hit).count() as f64 / count as f64;
    ReliabilityBin {
        lower,
        upper,
        mean_confidence,
        accuracy,
        count,
    }
}

/// A fitted softmax temperature, strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Temperature(f64);

impl Temperature {
    pub fn new(t: f64) -> Temperature {
        assert!(t.is_finite() && t > 0.0, "temperature must be positive");
        Temperature(t)
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

/// Search bounds for temperature fitting.
pub const TEMPERATURE_BOUNDS: (f64, f64) = (0.05, 20.0);

/// Fit the temperature minimizing mean negative log-likelihood of the
/// records' probabilities rescaled by logit division.
///
/// Logits are recovered as clamped log-probabilities; the 1-D objective is
/// unimodal in the temperature, so a golden-section search over
/// [`TEMPERATURE_BOUNDS`] locates the optimum to well within 1e-4.
pub fn fit_temperature(records: &[PredictionRecord]) -> Result<Temperature, CalibrationError> {
    let mut observations: Vec<(Vec<f64>, usize)> = Vec::with_capacity(records.len());
    for r in records {
        let probs = r
            .predictive_probs()
            .ok_or_else(|| CalibrationError::NotClassification { id: r.id.clone() })?;
        let truth = r
            .truth_class()
            .ok_or_else(|| CalibrationError::MissingTruth { id: r.id.clone() })?;
        observations.push((probs.log_probs(), truth));
    }
    if observations.len() < 2 {
        return Err(CalibrationError::TooFewRecords {
            needed: 2,
            got: observations.len(),
        });
    }
    let degenerate = observations.iter().all(|(logits, _)| {
        logits
            .iter()
            .all(|&l| (l - logits[0]).abs() < 1e-12)
    });
    if degenerate {
        return Err(CalibrationError::FlatObjective);
    }

    let nll = |t: f64| -> f64 {
        observations
            .iter()
            .map(|(logits, truth)| {
                let scaled: Vec<f64> = logits.iter().map(|&l| l / t).collect();
                numeric::logsumexp(&scaled) - scaled[*truth]
            })
            .sum::<f64>()
            / observations.len() as f64
    };

    let (mut a, mut b) = TEMPERATURE_BOUNDS;
    let inv_phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = nll(c);
    let mut fd = nll(d);
    while b - a > 1e-6 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = nll(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = nll(d);
        }
    }
    Ok(Temperature::new((a + b) / 2.0))
}

/// Rescale a class distribution by the temperature:
/// `softmax(log(p) / t)`. A monotone transform of the probabilities, so
/// the argmax never changes.
pub fn apply_temperature(p: &ClassProbVector, t: Temperature) -> ClassProbVector {
    let scaled: Vec<f64> = p.log_probs().iter().map(|&l| l / t.value()).collect();
    ClassProbVector::new(numeric::softmax(&scaled)).expect("softmax output is a distribution")
}

fn gaussian_with_truth(
    record: &PredictionRecord,
) -> Result<(f64, f64, f64), CalibrationError> {
    let g = record
        .gaussian()
        .ok_or_else(|| CalibrationError::NotGaussian {
            id: record.id.clone(),
        })?;
    let truth = record
        .truth_value()
        .ok_or_else(|| CalibrationError::MissingTruth {
            id: record.id.clone(),
        })?;
    Ok((g.mean(), g.stddev(), truth))
}

/// Fraction of records whose truth lands inside the central interval
/// `[mu - sigma z(p), mu + sigma z(p)]` with `z(p) = sqrt(2) erf_inv(p)`.
pub fn interval_coverage(
    records: &[PredictionRecord],
    p: f64,
) -> Result<f64, CalibrationError> {
    if records.is_empty() {
        return Err(CalibrationError::NoRecords);
    }
    if !(0.0 < p && p < 1.0) {
        return Err(CalibrationError::BadLevel(p));
    }
    let z = central_interval_z(p);
    let mut inside = 0usize;
    for r in records {
        let (mean, stddev, truth) = gaussian_with_truth(r)?;
        if (truth - mean).abs() <= stddev * z {
            inside += 1;
        }
    }
    Ok(inside as f64 / records.len() as f64)
}

/// Mean absolute gap between requested and observed interval coverage
/// over the given confidence levels.
pub fn regression_calibration_error(
    records: &[PredictionRecord],
    levels: &[f64],
) -> Result<f64, CalibrationError> {
    if levels.is_empty() {
        return Err(CalibrationError::BadLevels);
    }
    for (i, &a) in levels.iter().enumerate() {
        if !(0.0 < a && a < 1.0) {
            return Err(CalibrationError::BadLevel(a));
        }
        if levels[..i].contains(&a) {
            return Err(CalibrationError::BadLevels);
        }
    }
    let mut total = 0.0;
    for &p in levels {
        total += (interval_coverage(records, p)? - p).abs();
    }
    Ok(total / levels.len() as f64)
}

/// Mean predicted stddev: the competing objective to interval calibration.
pub fn sharpness(records: &[PredictionRecord]) -> Result<f64, CalibrationError> {
    if records.is_empty() {
        return Err(CalibrationError::NoRecords);
    }
    let mut total = 0.0;
    for r in records {
        let g = r.gaussian().ok_or_else(|| CalibrationError::NotGaussian {
            id: r.id.clone(),
        })?;
        total += g.stddev();
    }
    Ok(total / records.len() as f64)
}

/// Split-conformal calibration state: the sorted nonconformity scores of a
/// held-out calibration set and the derived set-inclusion threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformalCalibration {
    scores: Vec<f64>,
    alpha: f64,
    threshold: f64,
}

/// Calibrate a split conformal predictor at miscoverage rate `alpha`.
///
/// Nonconformity is `1 - p(true class)`. The threshold is the
/// `ceil((n+1)(1-alpha))`-th smallest calibration score; when that rank
/// exceeds n the threshold saturates at the maximal score 1, so every
/// class is included.
pub fn conformal_calibrate(
    records: &[PredictionRecord],
    alpha: f64,
) -> Result<ConformalCalibration, CalibrationError> {
    if records.is_empty() {
        return Err(CalibrationError::NoRecords);
    }
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(CalibrationError::BadAlpha(alpha));
    }
    let mut scores = Vec::with_capacity(records.len());
    for r in records {
        let probs = r
            .predictive_probs()
            .ok_or_else(|| CalibrationError::NotClassification { id: r.id.clone() })?;
        let truth = r
            .truth_class()
            .ok_or_else(|| CalibrationError::MissingTruth { id: r.id.clone() })?;
        let p_true = probs.probs().get(truth).copied().unwrap_or(0.0);
        scores.push(1.0 - p_true);
    }
    scores.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = scores.len();
    let rank = ((n as f64 + 1.0) * (1.0 - alpha)).ceil() as usize;
    let threshold = if rank > n { 1.0 } else { scores[rank - 1] };
    Ok(ConformalCalibration {
        scores,
        alpha,
        threshold,
    })
}

impl ConformalCalibration {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn calibration_size(&self) -> usize {
        self.scores.len()
    }

    /// The prediction set: every class whose nonconformity `1 - p[c]` is
    /// at or below the calibrated threshold.
    pub fn prediction_set(&self, p: &ClassProbVector) -> Vec<usize> {
        p.probs()
            .iter()
            .enumerate()
            .filter(|&(_, &prob)| 1.0 - prob <= self.threshold)
            .map(|(c, _)| c)
            .collect()
    }
}
