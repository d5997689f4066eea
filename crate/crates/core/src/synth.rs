//! Synthetic data generation and a toy linear trainer.
//!
//! A [`GeneratorSpec`] is a fully known joint distribution: class priors,
//! one diagonal Gaussian per class, and an optional label-noise rate.
//! Because the generating distribution is explicit, every shift in the
//! covariate/label/concept taxonomy can be constructed exactly and every
//! downstream estimator can be tested against ground truth.
//!
//! The trainer is deliberately plain: full-batch gradient descent on a
//! linear softmax (or least-squares) model, deterministic from zero
//! initialization, with an optional per-instance weight hook for
//! importance-weighted training.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::softmax;
use crate::record::{ClassProbVector, Payload, PredictionRecord, Truth};
use crate::rng::{Rng, Seed};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("priors must be a probability vector, got sum {0}")]
    BadPriors(f64),
    #[error("need one class Gaussian per prior: {priors} priors vs {classes} classes")]
    ClassCountMismatch { priors: usize, classes: usize },
    #[error("class {class}: mean/covariance dimension does not match feature dimension {dim}")]
    DimensionMismatch { class: usize, dim: usize },
    #[error("covariance entries must be positive and finite")]
    BadCovariance,
    #[error("label-noise rate {0} is outside [0, 0.5)")]
    BadNoiseRate(f64),
    #[error("shift translation has dimension {got}, spec has {want}")]
    BadTranslation { got: usize, want: usize },
    #[error("{0:?} is not a permutation of 0..{1}")]
    BadPermutation(Vec<usize>, usize),
    #[error("class {0} has positive target prior but no instances to resample")]
    MissingClass(usize),
    #[error("need at least 2 examples to train, got {0}")]
    TooFewExamples(usize),
    #[error("example {index} has dimension {got}, expected {want}")]
    ExampleDimension { index: usize, got: usize, want: usize },
    #[error("label {label} is out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("per-instance weights must match the example count")]
    WeightCountMismatch,
}

/// One Gaussian class-conditional: mean vector and diagonal covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassGaussian {
    pub mean: Vec<f64>,
    pub cov_diag: Vec<f64>,
}

/// A fully specified generating distribution P(x, y).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub priors: Vec<f64>,
    pub classes: Vec<ClassGaussian>,
    #[serde(default)]
    pub label_noise: f64,
    pub dim: usize,
}

impl GeneratorSpec {
    pub fn new(
        priors: Vec<f64>,
        classes: Vec<ClassGaussian>,
        label_noise: f64,
        dim: usize,
    ) -> Result<GeneratorSpec, SynthError> {
        let spec = GeneratorSpec {
            priors,
            classes,
            label_noise,
            dim,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let sum: f64 = self.priors.iter().sum();
        if self.priors.iter().any(|&p| !(0.0..=1.0).contains(&p)) || (sum - 1.0).abs() > 1e-6 {
            return Err(SynthError::BadPriors(sum));
        }
        if self.priors.len() != self.classes.len() {
            return Err(SynthError::ClassCountMismatch {
                priors: self.priors.len(),
                classes: self.classes.len(),
            });
        }
        for (class, g) in self.classes.iter().enumerate() {
            if g.mean.len() != self.dim || g.cov_diag.len() != self.dim {
                return Err(SynthError::DimensionMismatch {
                    class,
                    dim: self.dim,
                });
            }
            if g.cov_diag.iter().any(|&v| !v.is_finite() || v <= 0.0) {
                return Err(SynthError::BadCovariance);
            }
        }
        if !(0.0..0.5).contains(&self.label_noise) {
            return Err(SynthError::BadNoiseRate(self.label_noise));
        }
        Ok(())
    }

    pub fn class_count(&self) -> usize {
        self.priors.len()
    }
}

/// One generated instance: features plus its (possibly noise-flipped)
/// class label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub features: Vec<f64>,
    pub label: usize,
}

/// Draw `n` labeled examples from the spec. Bit-for-bit reproducible for
/// a given (spec, n, seed).
pub fn generate(spec: &GeneratorSpec, n: usize, seed: Seed) -> Result<Vec<LabeledExample>, SynthError> {
    spec.validate()?;
    let mut rng = Rng::from_seed(seed);
    let k = spec.class_count();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut label = rng.categorical(&spec.priors);
        let g = &spec.classes[label];
        let features: Vec<f64> = g
            .mean
            .iter()
            .zip(&g.cov_diag)
            .map(|(&m, &v)| m + v.sqrt() * rng.normal())
            .collect();
        if spec.label_noise > 0.0 && rng.next_f64() < spec.label_noise {
            // flip to a uniformly random *other* class
            let shifted = 1 + rng.below(k as u64 - 1) as usize;
            label = (label + shifted) % k;
        }
        out.push(LabeledExample { features, label });
    }
    Ok(out)
}

/// The three shift kinds from the covariate/label/concept taxonomy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShiftSpec {
    /// p(x) changes: every class mean moves by the same translation.
    /// The labeling rule p(y|x) is preserved exactly for translations
    /// along dimensions where all classes share mean and variance
    /// (those dimensions cancel out of the class posterior); a
    /// translation along a discriminative dimension shifts the
    /// posterior field along with the inputs.
    Covariate { translation: Vec<f64> },
    /// p(y) changes, p(x|y) fixed: priors are replaced.
    Label { new_priors: Vec<f64> },
    /// p(y|x) changes, p(x) fixed: class c takes Gaussian perm[c], and the
    /// priors follow the permutation so the feature mixture is unchanged.
    Concept { permutation: Vec<usize> },
}

/// Apply a shift to a spec, producing the deployment distribution.
pub fn apply_shift(spec: &GeneratorSpec, shift: &ShiftSpec) -> Result<GeneratorSpec, SynthError> {
    let mut out = spec.clone();
    match shift {
        ShiftSpec::Covariate { translation } => {
            if translation.len() != spec.dim {
                return Err(SynthError::BadTranslation {
                    got: translation.len(),
                    want: spec.dim,
                });
            }
            for g in &mut out.classes {
                for (m, t) in g.mean.iter_mut().zip(translation) {
                    *m += t;
                }
            }
        }
        ShiftSpec::Label { new_priors } => {
            out.priors = new_priors.clone();
        }
        ShiftSpec::Concept { permutation } => {
            let k = spec.class_count();
            let mut seen = vec![false; k];
            let valid = permutation.len() == k
                && permutation.iter().all(|&p| {
                    p < k && !std::mem::replace(&mut seen[p], true)
                });
            if !valid {
                return Err(SynthError::BadPermutation(permutation.clone(), k));
            }
            out.classes = permutation.iter().map(|&p| spec.classes[p].clone()).collect();
            out.priors = permutation.iter().map(|&p| spec.priors[p]).collect();
        }
    }
    out.validate()?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RebalanceMode {
    /// Remove instances from overrepresented classes, uniformly at random.
    Under,
    /// Duplicate instances of underrepresented classes, uniformly at random.
    Over,
}

/// Resample a dataset toward target class priors.
///
/// Under-sampling keeps the limiting class whole and trims the rest;
/// over-sampling keeps the largest class whole and duplicates the rest.
/// A class already at its target count is passed through untouched, so a
/// no-op rebalance returns the input unchanged.
pub fn rebalance(
    examples: &[LabeledExample],
    target_priors: &[f64],
    mode: RebalanceMode,
    seed: Seed,
) -> Result<Vec<LabeledExample>, SynthError> {
    let sum: f64 = target_priors.iter().sum();
    if target_priors.iter().any(|&p| !(0.0..=1.0).contains(&p)) || (sum - 1.0).abs() > 1e-6 {
        return Err(SynthError::BadPriors(sum));
    }
    let k = target_priors.len();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, ex) in examples.iter().enumerate() {
        if ex.label >= k {
            return Err(SynthError::LabelOutOfRange {
                label: ex.label,
                classes: k,
            });
        }
        by_class[ex.label].push(i);
    }
    for (c, &p) in target_priors.iter().enumerate() {
        if p > 0.0 && by_class[c].is_empty() {
            return Err(SynthError::MissingClass(c));
        }
    }

    // The achievable total: limited by the scarcest class under
    // under-sampling, by the most abundant under over-sampling.
    let ratios = by_class
        .iter()
        .zip(target_priors)
        .filter(|(_, &p)| p > 0.0)
        .map(|(members, &p)| members.len() as f64 / p);
    let total = match mode {
        RebalanceMode::Under => ratios.fold(f64::INFINITY, f64::min),
        RebalanceMode::Over => ratios.fold(0.0, f64::max),
    };

    let mut rng = Rng::from_seed(seed);
    let mut keep: Vec<LabeledExample> = Vec::new();
    for (c, members) in by_class.iter().enumerate() {
        let want = (target_priors[c] * total).round() as usize;
        let have = members.len();
        if want == have {
            keep.extend(members.iter().map(|&i| examples[i].clone()));
        } else if want < have {
            let mut pool: Vec<usize> = members.clone();
            // Partial Fisher-Yates: the first `want` slots become a
            // uniform sample without replacement.
            for slot in 0..want {
                let j = slot + rng.below((pool.len() - slot) as u64) as usize;
                pool.swap(slot, j);
            }
            let mut chosen: Vec<usize> = pool[..want].to_vec();
            chosen.sort_unstable();
            keep.extend(chosen.into_iter().map(|i| examples[i].clone()));
        } else {
            keep.extend(members.iter().map(|&i| examples[i].clone()));
            for _ in 0..(want - have) {
                let pick = members[rng.below(have as u64) as usize];
                keep.push(examples[pick].clone());
            }
        }
    }
    Ok(keep)
}

/// A linear model: K rows of weights plus K biases. K = 1 is a regressor,
/// K >= 2 a softmax classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
}

impl LinearModel {
    pub fn zeros(outputs: usize, dim: usize) -> LinearModel {
        LinearModel {
            weights: vec![vec![0.0; dim]; outputs],
            biases: vec![0.0; outputs],
        }
    }

    pub fn outputs(&self) -> usize {
        self.biases.len()
    }

    pub fn dim(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }

    /// Softmax class distribution (classifiers only).
    pub fn predict_proba(&self, x: &[f64]) -> ClassProbVector {
        assert!(self.outputs() >= 2, "predict_proba needs a classifier");
        ClassProbVector::new(softmax(&self.logits(x))).expect("softmax is a distribution")
    }

    /// Scalar prediction (regressors only).
    pub fn predict_value(&self, x: &[f64]) -> f64 {
        assert_eq!(self.outputs(), 1, "predict_value needs a regressor");
        self.logits(x)[0]
    }
}

/// Gradient-descent settings for the toy trainer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 300,
            learning_rate: 0.5,
        }
    }
}

/// A trained model plus its per-epoch loss trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub model: LinearModel,
    pub loss_history: Vec<f64>,
}

/// Full-batch gradient descent on softmax cross-entropy.
///
/// Optional per-instance weights multiply each instance's loss term, which
/// is the hook importance weighting uses. Training starts from zero
/// weights (zero epochs returns the uniform-probability model) and is
/// deterministic; the seed is accepted for interface symmetry with the
/// generators and recorded nowhere.
pub fn train_linear_classifier(
    examples: &[LabeledExample],
    classes: usize,
    config: TrainConfig,
    _seed: Seed,
    instance_weights: Option<&[f64]>,
) -> Result<TrainReport, SynthError> {
    if examples.len() < 2 {
        return Err(SynthError::TooFewExamples(examples.len()));
    }
    let dim = examples[0].features.len();
    for (index, ex) in examples.iter().enumerate() {
        if ex.features.len() != dim {
            return Err(SynthError::ExampleDimension {
                index,
                got: ex.features.len(),
                want: dim,
            });
        }
        if ex.label >= classes {
            return Err(SynthError::LabelOutOfRange {
                label: ex.label,
                classes,
            });
        }
    }
    if let Some(w) = instance_weights {
        if w.len() != examples.len() {
            return Err(SynthError::WeightCountMismatch);
        }
    }

    let n = examples.len() as f64;
    let mut model = LinearModel::zeros(classes, dim);
    let mut loss_history = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        let mut grad_w = vec![vec![0.0; dim]; classes];
        let mut grad_b = vec![0.0; classes];
        let mut loss = 0.0;
        for (i, ex) in examples.iter().enumerate() {
            let weight = instance_weights.map_or(1.0, |w| w[i]);
            let probs = softmax(&model.logits(&ex.features));
            loss += -weight * crate::numeric::ln_prob(probs[ex.label]);
            for c in 0..classes {
                let delta = weight * (probs[c] - f64::from(u8::from(c == ex.label)));
                for (g, &x) in grad_w[c].iter_mut().zip(&ex.features) {
                    *g += delta * x;
                }
                grad_b[c] += delta;
            }
        }
        loss_history.push(loss / n);
        for c in 0..classes {
            for (w, g) in model.weights[c].iter_mut().zip(&grad_w[c]) {
                *w -= config.learning_rate * g / n;
            }
            model.biases[c] -= config.learning_rate * grad_b[c] / n;
        }
    }
    Ok(TrainReport {
        model,
        loss_history,
    })
}

/// A labeled regression instance for the least-squares trainer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionExample {
    pub features: Vec<f64>,
    pub target: f64,
}

/// Full-batch gradient descent on mean squared error. Same conventions as
/// the classifier trainer.
pub fn train_linear_regressor(
    examples: &[RegressionExample],
    config: TrainConfig,
    _seed: Seed,
    instance_weights: Option<&[f64]>,
) -> Result<TrainReport, SynthError> {
    if examples.len() < 2 {
        return Err(SynthError::TooFewExamples(examples.len()));
    }
    let dim = examples[0].features.len();
    for (index, ex) in examples.iter().enumerate() {
        if ex.features.len() != dim {
            return Err(SynthError::ExampleDimension {
                index,
                got: ex.features.len(),
                want: dim,
            });
        }
    }
    if let Some(w) = instance_weights {
        if w.len() != examples.len() {
            return Err(SynthError::WeightCountMismatch);
        }
    }

    let n = examples.len() as f64;
    let mut model = LinearModel::zeros(1, dim);
    let mut loss_history = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        let mut grad_w = vec![0.0; dim];
        let mut grad_b = 0.0;
        let mut loss = 0.0;
        for (i, ex) in examples.iter().enumerate() {
            let weight = instance_weights.map_or(1.0, |w| w[i]);
            let pred = model.predict_value(&ex.features);
            let residual = pred - ex.target;
            loss += weight * residual * residual;
            for (g, &x) in grad_w.iter_mut().zip(&ex.features) {
                *g += 2.0 * weight * residual * x;
            }
            grad_b += 2.0 * weight * residual;
        }
        loss_history.push(loss / n);
        for (w, g) in model.weights[0].iter_mut().zip(&grad_w) {
            *w -= config.learning_rate * g / n;
        }
        model.biases[0] -= config.learning_rate * grad_b / n;
    }
    Ok(TrainReport {
        model,
        loss_history,
    })
}

/// Run a classifier over labeled examples and assemble prediction records
/// (features, class payload, truth, and a `class:<k>` tag per record).
pub fn prediction_records(model: &LinearModel, examples: &[LabeledExample]) -> Vec<PredictionRecord> {
    examples
        .iter()
        .enumerate()
        .map(|(i, ex)| {
            let probs = model.predict_proba(&ex.features);
            let label = probs.argmax();
            PredictionRecord::new(
                format!("r{i}"),
                i as u64,
                Payload::Classification { label, probs },
                Some(Truth::Class { class: ex.label }),
            )
            .expect("generated records are valid")
            .with_features(ex.features.clone())
            .with_tags([format!("class:{}", ex.label)])
        })
        .collect()
}
