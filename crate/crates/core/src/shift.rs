//! Distribution-shift estimation, correction, significance testing, and
//! heuristic out-of-distribution scoring.
//!
//! Label-shift estimation follows the black-box confusion-matrix
//! construction: with Ĉ the source joint (predicted, true) frequency
//! matrix and μ̂ the predicted-label distribution on unlabeled deployment
//! data, solving Ĉ w = μ̂ recovers the prior ratio vector
//! w_j ≈ p̃(y=j)/p(y=j) without ever touching deployment labels.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::chi_square_sf;
use crate::record::{ClassProbVector, PredictionRecord};
use crate::rng::Seed;
use crate::synth::{train_linear_classifier, LabeledExample, TrainConfig};
use crate::uncertainty::max_prob;

#[derive(Debug, Error)]
pub enum ShiftError {
    #[error("confusion matrix must be square and non-empty")]
    BadConfusionShape,
    #[error("confusion matrix has no counts")]
    EmptyConfusion,
    #[error("confusion matrix is singular; the classifier's predictions carry no label information")]
    SingularMatrix,
    #[error("weight vector length {got} does not match class count {want}")]
    LengthMismatch { got: usize, want: usize },
    #[error("all corrected probabilities are zero")]
    AllWeightsZero,
    #[error("histograms must share a class count of at least 2")]
    BadHistograms,
    #[error("feature dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("both feature sets must be non-empty")]
    EmptyFeatures,
    #[error("record {id} is not a classification record with truth")]
    NotClassification { id: String },
    #[error("k must be in 1..={len}, got {k}")]
    BadK { k: usize, len: usize },
    #[error("AUROC needs both classes present")]
    SingleClass,
    #[error(transparent)]
    Train(#[from] crate::synth::SynthError),
}

/// Counts of (predicted class i, true class j) from source validation
/// data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(counts: Vec<Vec<u64>>) -> Result<ConfusionMatrix, ShiftError> {
        let k = counts.len();
        if k == 0 || counts.iter().any(|row| row.len() != k) {
            return Err(ShiftError::BadConfusionShape);
        }
        if counts.iter().flatten().sum::<u64>() == 0 {
            return Err(ShiftError::EmptyConfusion);
        }
        Ok(ConfusionMatrix { counts })
    }

    /// Tally a confusion matrix from labeled classification records,
    /// using each record's committed prediction.
    pub fn from_records(records: &[PredictionRecord], k: usize) -> Result<ConfusionMatrix, ShiftError> {
        let mut counts = vec![vec![0u64; k]; k];
        for r in records {
            let (pred, truth) = match (r.predicted_class(), r.truth_class()) {
                (Some(p), Some(t)) if p < k && t < k => (p, t),
                _ => {
                    return Err(ShiftError::NotClassification { id: r.id.clone() });
                }
            };
            counts[pred][truth] += 1;
        }
        ConfusionMatrix::new(counts)
    }

    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Joint frequencies: counts normalized by the grand total.
    fn joint(&self) -> Vec<Vec<f64>> {
        let total = self.total() as f64;
        self.counts
            .iter()
            .map(|row| row.iter().map(|&c| c as f64 / total).collect())
            .collect()
    }
}

/// Estimated deployment/source prior ratios per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelShiftEstimate {
    /// w_j ≈ p̃(y=j)/p(y=j), clipped below at 0.
    pub weights: Vec<f64>,
    /// Set when the normalized confusion matrix's 1-norm condition
    /// estimate exceeds 1e6: the solve went through but deserves doubt.
    pub condition_flag: bool,
    pub condition_estimate: f64,
}

/// Condition-estimate level above which the estimate is flagged.
pub const CONDITION_FLAG_LIMIT: f64 = 1e6;

/// Solve Ĉ w = μ̂ for the prior ratio vector.
///
/// Plain Gaussian elimination with partial pivoting on the K x K
/// normalized matrix; K is a class count, so cost is irrelevant. Poor
/// conditioning is reported, not regularized away; pass a ridge term to
/// [`estimate_label_shift_ridged`] to opt into regularization.
pub fn estimate_label_shift(
    confusion: &ConfusionMatrix,
    target_pred_dist: &ClassProbVector,
) -> Result<LabelShiftEstimate, ShiftError> {
    estimate_label_shift_ridged(confusion, target_pred_dist, 0.0)
}

/// [`estimate_label_shift`] with a ridge term `ridge * I` added to the
/// normalized confusion matrix before solving.
pub fn estimate_label_shift_ridged(
    confusion: &ConfusionMatrix,
    target_pred_dist: &ClassProbVector,
    ridge: f64,
) -> Result<LabelShiftEstimate, ShiftError> {
    let k = confusion.k();
    if target_pred_dist.len() != k {
        return Err(ShiftError::LengthMismatch {
            got: target_pred_dist.len(),
            want: k,
        });
    }
    let mut matrix = confusion.joint();
    for (i, row) in matrix.iter_mut().enumerate() {
        row[i] += ridge;
    }
    let mu = target_pred_dist.probs().to_vec();

    let inverse = invert(&matrix).ok_or(ShiftError::SingularMatrix)?;
    let condition_estimate = norm1(&matrix) * norm1(&inverse);
    let weights: Vec<f64> = (0..k)
        .map(|j| {
            let w: f64 = (0..k).map(|i| inverse[j][i] * mu[i]).sum();
            w.max(0.0)
        })
        .collect();
    Ok(LabelShiftEstimate {
        weights,
        condition_flag: condition_estimate > CONDITION_FLAG_LIMIT,
        condition_estimate,
    })
}

fn norm1(m: &[Vec<f64>]) -> f64 {
    let k = m.len();
    (0..k)
        .map(|j| (0..k).map(|i| m[i][j].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Invert a small matrix by Gauss-Jordan elimination with partial
/// pivoting. `None` when a pivot degenerates to (near) zero.
fn invert(m: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let k = m.len();
    let scale = m
        .iter()
        .flatten()
        .map(|v| v.abs())
        .fold(0.0_f64, f64::max);
    if scale == 0.0 {
        return None;
    }
    let mut a: Vec<Vec<f64>> = m.to_vec();
    let mut inv: Vec<Vec<f64>> = (0..k)
        .map(|i| (0..k).map(|j| f64::from(u8::from(i == j))).collect())
        .collect();
    for col in 0..k {
        let pivot_row = (col..k)
            .max_by(|&a_row, &b_row| a[a_row][col].abs().partial_cmp(&a[b_row][col].abs()).unwrap())
            .unwrap();
        if a[pivot_row][col].abs() < scale * 1e-12 {
            return None;
        }
        a.swap(col, pivot_row);
        inv.swap(col, pivot_row);
        let pivot = a[col][col];
        for j in 0..k {
            a[col][j] /= pivot;
            inv[col][j] /= pivot;
        }
        for row in 0..k {
            if row != col {
                let factor = a[row][col];
                if factor != 0.0 {
                    for j in 0..k {
                        a[row][j] -= factor * a[col][j];
                        inv[row][j] -= factor * inv[col][j];
                    }
                }
            }
        }
    }
    Some(inv)
}

/// Reweigh a predictive distribution by estimated prior ratios and
/// renormalize. Unit weights are the identity.
pub fn correct_priors(
    p: &ClassProbVector,
    estimate: &LabelShiftEstimate,
) -> Result<ClassProbVector, ShiftError> {
    if p.len() != estimate.weights.len() {
        return Err(ShiftError::LengthMismatch {
            got: estimate.weights.len(),
            want: p.len(),
        });
    }
    let scaled: Vec<f64> = p
        .probs()
        .iter()
        .zip(&estimate.weights)
        .map(|(&prob, &w)| prob * w)
        .collect();
    let total: f64 = scaled.iter().sum();
    if total <= 0.0 {
        return Err(ShiftError::AllWeightsZero);
    }
    Ok(ClassProbVector::new(scaled.into_iter().map(|v| v / total).collect())
        .expect("renormalized vector is a distribution"))
}

/// Result of the two-sample label-shift significance test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftTestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub dof: usize,
    /// Set when either histogram totals fewer than 5 counts per class,
    /// the usual validity floor for the chi-square approximation.
    pub low_count_warning: bool,
}

/// Two-sample chi-square homogeneity test on predicted-label histograms.
/// Symmetric in its arguments; identical histograms give statistic 0 and
/// p-value 1. Classes empty in both samples are dropped from the degrees
/// of freedom.
pub fn label_shift_test(
    source_hist: &[u64],
    target_hist: &[u64],
) -> Result<ShiftTestResult, ShiftError> {
    let k = source_hist.len();
    if k < 2 || target_hist.len() != k {
        return Err(ShiftError::BadHistograms);
    }
    let n_source: u64 = source_hist.iter().sum();
    let n_target: u64 = target_hist.iter().sum();
    if n_source == 0 || n_target == 0 {
        return Err(ShiftError::BadHistograms);
    }
    let low_count_warning = n_source < 5 * k as u64 || n_target < 5 * k as u64;
    let grand = (n_source + n_target) as f64;

    let mut statistic = 0.0;
    let mut used_classes = 0usize;
    for c in 0..k {
        let col = (source_hist[c] + target_hist[c]) as f64;
        if col == 0.0 {
            continue;
        }
        used_classes += 1;
        for (row_total, observed) in [
            (n_source as f64, source_hist[c] as f64),
            (n_target as f64, target_hist[c] as f64),
        ] {
            let expected = row_total * col / grand;
            let d = observed - expected;
            statistic += d * d / expected;
        }
    }
    if used_classes < 2 {
        return Err(ShiftError::BadHistograms);
    }
    let dof = used_classes - 1;
    Ok(ShiftTestResult {
        statistic,
        p_value: chi_square_sf(statistic, dof),
        dof,
        low_count_warning,
    })
}

/// Histogram of committed predicted labels over `k` classes.
pub fn predicted_label_histogram(
    records: &[PredictionRecord],
    k: usize,
) -> Result<Vec<u64>, ShiftError> {
    let mut hist = vec![0u64; k];
    for r in records {
        match r.predicted_class() {
            Some(c) if c < k => hist[c] += 1,
            _ => return Err(ShiftError::NotClassification { id: r.id.clone() }),
        }
    }
    Ok(hist)
}

/// Normalized predicted-label distribution, the μ̂ of label-shift
/// estimation.
pub fn predicted_label_distribution(
    records: &[PredictionRecord],
    k: usize,
) -> Result<ClassProbVector, ShiftError> {
    let hist = predicted_label_histogram(records, k)?;
    let total: u64 = hist.iter().sum();
    if total == 0 {
        return Err(ShiftError::EmptyFeatures);
    }
    Ok(ClassProbVector::new(hist.into_iter().map(|c| c as f64 / total as f64).collect())
        .expect("histogram normalizes to a distribution"))
}

/// Clip range for importance weights.
pub const IMPORTANCE_WEIGHT_CLIP: (f64, f64) = (1e-3, 1e3);

/// Density-ratio importance weights for source instances via a logistic
/// domain discriminator.
///
/// A linear classifier is trained to tell target (class 1) from source
/// (class 0); each source instance gets weight
/// `(g(x)/(1-g(x))) * (n_source/n_target)`, clipped to
/// [`IMPORTANCE_WEIGHT_CLIP`]. The weights are produced, never silently
/// applied: pass them to the trainer's per-instance weight hook
/// deliberately.
pub fn importance_weights(
    source_features: &[Vec<f64>],
    target_features: &[Vec<f64>],
    seed: Seed,
) -> Result<Vec<f64>, ShiftError> {
    if source_features.is_empty() || target_features.is_empty() {
        return Err(ShiftError::EmptyFeatures);
    }
    let dim = source_features[0].len();
    for f in source_features.iter().chain(target_features) {
        if f.len() != dim {
            return Err(ShiftError::DimensionMismatch(dim, f.len()));
        }
    }
    let examples: Vec<LabeledExample> = source_features
        .iter()
        .map(|f| LabeledExample {
            features: f.clone(),
            label: 0,
        })
        .chain(target_features.iter().map(|f| LabeledExample {
            features: f.clone(),
            label: 1,
        }))
        .collect();
    let report = train_linear_classifier(
        &examples,
        2,
        TrainConfig {
            epochs: 400,
            learning_rate: 1.0,
        },
        seed,
        None,
    )?;
    let ratio_scale = source_features.len() as f64 / target_features.len() as f64;
    let (lo, hi) = IMPORTANCE_WEIGHT_CLIP;
    Ok(source_features
        .iter()
        .map(|f| {
            let g = report.model.predict_proba(f).probs()[1];
            let g = g.clamp(1e-9, 1.0 - 1e-9);
            (g / (1.0 - g) * ratio_scale).clamp(lo, hi)
        })
        .collect())
}

/// Which heuristic produced an OOD score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OodMethod {
    MaxProb,
    Knn,
}

/// A scalar out-of-distribution score; higher means more unfamiliar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OodScore {
    pub value: f64,
    pub method: OodMethod,
}

/// One minus the classifier's confidence.
pub fn ood_maxprob(p: &ClassProbVector) -> OodScore {
    OodScore {
        value: 1.0 - max_prob(p).value,
        method: OodMethod::MaxProb,
    }
}

/// Euclidean distance from `x` to its k-th nearest training sample,
/// brute force and exact.
pub fn ood_knn(train_sample: &[Vec<f64>], x: &[f64], k: usize) -> Result<OodScore, ShiftError> {
    if train_sample.is_empty() || k == 0 || k > train_sample.len() {
        return Err(ShiftError::BadK {
            k,
            len: train_sample.len(),
        });
    }
    let mut distances: Vec<f64> = Vec::with_capacity(train_sample.len());
    for sample in train_sample {
        if sample.len() != x.len() {
            return Err(ShiftError::DimensionMismatch(x.len(), sample.len()));
        }
        let d2: f64 = sample
            .iter()
            .zip(x)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        distances.push(d2.sqrt());
    }
    distances.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(OodScore {
        value: distances[k - 1],
        method: OodMethod::Knn,
    })
}

/// Probability that a random OOD score exceeds a random in-distribution
/// score, ties counted half (midrank construction).
pub fn auroc(scores: &[f64], is_ood: &[bool]) -> Result<f64, ShiftError> {
    assert_eq!(scores.len(), is_ood.len(), "one flag per score");
    let n_pos = is_ood.iter().filter(|&&o| o).count();
    let n_neg = scores.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(ShiftError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());

    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // midrank over the tie block [i, j], 1-based ranks
        let midrank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if is_ood[idx] {
                rank_sum_pos += midrank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}
