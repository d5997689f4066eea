//! Black-box worst-case search over perturbation classes.
//!
//! The search only queries the model, never its gradients, so it works
//! against any adapter that maps features to an output. What it returns
//! is a certified *lower bound* on the worst-case loss: the true maximum
//! over a perturbation class is intractable in general, and every value
//! reported here was actually achieved by a concrete perturbation inside
//! the class.
//!
//! Search order per instance: the zero perturbation first, then uniform
//! random draws from the class, then greedy per-coordinate sign
//! refinement from the best point found, a second refinement sweep, and
//! finally the mirrored (sign-flipped) refined point. For a linear model
//! under squared loss with an L-inf ball this recovers the closed-form
//! optimum `eps * sign(w) * sign(residual)` whenever the query budget is
//! at least 2d + 1.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::losses::{self, Metric};
use crate::record::{ClassProbVector, PredictionRecord, Truth};
use crate::rng::{Rng, Seed};
use crate::synth::LinearModel;

#[derive(Debug, Error)]
pub enum AdvError {
    #[error("epsilon must be finite and >= 0, got {0}")]
    BadEpsilon(f64),
    #[error("sparse budget needs k >= 1 and positive magnitude")]
    BadSparseBudget,
    #[error("sparse budget k = {k} exceeds feature dimension {dim}")]
    SparseBudgetTooWide { k: usize, dim: usize },
    #[error("query budget must be at least 1")]
    NoBudget,
    #[error("model query failed: {0}")]
    QueryFailed(String),
    #[error("loss {metric} cannot score model output of this kind")]
    LossMismatch { metric: &'static str },
    #[error("record {id} lacks features or truth needed for adversarial search")]
    UnusableRecord { id: String },
    #[error("no usable instances")]
    EmptyDataset,
}

/// A constraint set for perturbations delta added to the features.
///
/// `LinfBall` bounds every coordinate by epsilon (epsilon 0 is the
/// degenerate ball holding only zero). `SparseBudget` allows at most `k`
/// coordinates to move, each by exactly +-magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PerturbationClass {
    LinfBall { epsilon: f64 },
    SparseBudget { k: usize, magnitude: f64 },
}

impl PerturbationClass {
    pub fn validate(&self, dim: usize) -> Result<(), AdvError> {
        match *self {
            PerturbationClass::LinfBall { epsilon } => {
                if !epsilon.is_finite() || epsilon < 0.0 {
                    return Err(AdvError::BadEpsilon(epsilon));
                }
            }
            PerturbationClass::SparseBudget { k, magnitude } => {
                if k == 0 || !magnitude.is_finite() || magnitude <= 0.0 {
                    return Err(AdvError::BadSparseBudget);
                }
                if k > dim {
                    return Err(AdvError::SparseBudgetTooWide { k, dim });
                }
            }
        }
        Ok(())
    }

    /// Membership check, used to certify every returned delta.
    pub fn contains(&self, delta: &[f64]) -> bool {
        match *self {
            PerturbationClass::LinfBall { epsilon } => {
                delta.iter().all(|&d| d.abs() <= epsilon + 1e-12)
            }
            PerturbationClass::SparseBudget { k, magnitude } => {
                let nonzero: Vec<f64> = delta.iter().copied().filter(|&d| d != 0.0).collect();
                nonzero.len() <= k
                    && nonzero.iter().all(|&d| (d.abs() - magnitude).abs() <= 1e-12)
            }
        }
    }
}

/// What a queried model returns for one input.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelOutput {
    Value(f64),
    Probs(ClassProbVector),
}

/// The ground truth a loss scores against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    Value(f64),
    Class(usize),
}

/// A black-box model adapter. Implementations must be safe for repeated
/// querying; the search never mutates them.
pub trait QueryModel {
    fn query(&self, x: &[f64]) -> Result<ModelOutput, AdvError>;
}

impl QueryModel for LinearModel {
    fn query(&self, x: &[f64]) -> Result<ModelOutput, AdvError> {
        Ok(if self.outputs() == 1 {
            ModelOutput::Value(self.predict_value(x))
        } else {
            ModelOutput::Probs(self.predict_proba(x))
        })
    }
}

/// Score one model output against the target with a named metric.
pub fn instance_loss(metric: Metric, output: &ModelOutput, target: &Target) -> Result<f64, AdvError> {
    let mismatch = || AdvError::LossMismatch {
        metric: metric.name(),
    };
    match (metric, output, target) {
        (Metric::SquaredError, ModelOutput::Value(v), Target::Value(y)) => {
            losses::squared_error(*v, *y)
                .map(|e| e.value())
                .map_err(|e| AdvError::QueryFailed(e.to_string()))
        }
        (Metric::AbsoluteError, ModelOutput::Value(v), Target::Value(y)) => {
            losses::absolute_error(*v, *y)
                .map(|e| e.value())
                .map_err(|e| AdvError::QueryFailed(e.to_string()))
        }
        (Metric::ZeroOne, ModelOutput::Probs(p), Target::Class(c)) => {
            Ok(losses::zero_one_error(p.argmax(), *c).value())
        }
        (Metric::Nll, ModelOutput::Probs(p), Target::Class(c)) => {
            losses::negative_log_likelihood(p, *c)
                .map(|e| e.value())
                .map_err(|e| AdvError::QueryFailed(e.to_string()))
        }
        _ => Err(mismatch()),
    }
}

/// Outcome of one worst-case search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstCaseResult {
    pub delta: Vec<f64>,
    pub perturbed_loss: f64,
    pub clean_loss: f64,
    pub queries_used: usize,
}

struct SearchState<'a> {
    model: &'a dyn QueryModel,
    metric: Metric,
    x: Vec<f64>,
    target: Target,
    budget: usize,
    queries: usize,
    best_delta: Vec<f64>,
    best_loss: f64,
}

impl<'a> SearchState<'a> {
    fn remaining(&self) -> usize {
        self.budget - self.queries
    }

    /// Query the model at x + delta; keep it if it beats the best so far.
    fn probe(&mut self, delta: &[f64]) -> Result<f64, AdvError> {
        debug_assert!(self.queries < self.budget);
        self.queries += 1;
        let point: Vec<f64> = self.x.iter().zip(delta).map(|(a, b)| a + b).collect();
        let output = self.model.query(&point)?;
        let loss = instance_loss(self.metric, &output, &self.target)?;
        if loss > self.best_loss {
            self.best_loss = loss;
            self.best_delta = delta.to_vec();
        }
        Ok(loss)
    }
}

/// Search for a high-loss perturbation of one instance within the class,
/// spending at most `budget` model queries. The zero perturbation is
/// always evaluated first, so the result's loss never falls below the
/// clean loss.
pub fn worst_case_search(
    model: &dyn QueryModel,
    x: &[f64],
    target: Target,
    metric: Metric,
    class: &PerturbationClass,
    budget: usize,
    seed: Seed,
) -> Result<WorstCaseResult, AdvError> {
    class.validate(x.len())?;
    if budget == 0 {
        return Err(AdvError::NoBudget);
    }
    let dim = x.len();
    let mut state = SearchState {
        model,
        metric,
        x: x.to_vec(),
        target,
        budget,
        queries: 0,
        best_delta: vec![0.0; dim],
        best_loss: f64::NEG_INFINITY,
    };

    let clean_loss = state.probe(&vec![0.0; dim])?;

    // Degenerate classes have nowhere to search.
    if matches!(class, PerturbationClass::LinfBall { epsilon } if *epsilon == 0.0) {
        return Ok(WorstCaseResult {
            delta: state.best_delta,
            perturbed_loss: state.best_loss,
            clean_loss,
            queries_used: state.queries,
        });
    }

    // Budget layout: random draws get whatever is left after reserving
    // the refinement sweeps and the mirror probe. With budget exactly
    // 2d + 1 the random phase is empty and refinement starts from zero,
    // which is what makes the linear closed form exactly recoverable.
    let refine_cost = match class {
        PerturbationClass::LinfBall { .. } => 2 * dim,
        PerturbationClass::SparseBudget { .. } => 2 * dim + 1,
    };
    let reserved = refine_cost + 1 + refine_cost;
    let random_draws = state.remaining().saturating_sub(reserved);

    let mut rng = Rng::from_seed(seed);
    for _ in 0..random_draws {
        let delta = random_member(class, dim, &mut rng);
        state.probe(&delta)?;
    }

    match class {
        PerturbationClass::LinfBall { epsilon } => {
            // Two greedy coordinate sweeps from the best point, then the
            // mirror of the refined corner.
            for _ in 0..2 {
                if state.remaining() == 0 {
                    break;
                }
                let mut current = state.best_delta.clone();
                let mut current_loss = state.best_loss;
                'sweep: for i in 0..dim {
                    for sign in [1.0, -1.0] {
                        if state.remaining() == 0 {
                            break 'sweep;
                        }
                        let mut candidate = current.clone();
                        candidate[i] = sign * epsilon;
                        let loss = state.probe(&candidate)?;
                        if loss > current_loss {
                            current_loss = loss;
                            current = candidate;
                        }
                    }
                }
                if state.remaining() > 0 {
                    let mirrored: Vec<f64> = current.iter().map(|d| -d).collect();
                    state.probe(&mirrored)?;
                }
            }
        }
        PerturbationClass::SparseBudget { k, magnitude } => {
            // Probe every single-coordinate move, rank coordinates by
            // their best singleton loss, then combine the top k.
            let mut singleton_best: Vec<(f64, f64)> = vec![(f64::NEG_INFINITY, 0.0); dim];
            'probe: for i in 0..dim {
                for sign in [1.0, -1.0] {
                    if state.remaining() == 0 {
                        break 'probe;
                    }
                    let mut delta = vec![0.0; dim];
                    delta[i] = sign * magnitude;
                    let loss = state.probe(&delta)?;
                    if loss > singleton_best[i].0 {
                        singleton_best[i] = (loss, sign * magnitude);
                    }
                }
            }
            if state.remaining() > 0 {
                let mut ranked: Vec<usize> = (0..dim).collect();
                ranked.sort_by(|&a, &b| {
                    singleton_best[b]
                        .0
                        .partial_cmp(&singleton_best[a].0)
                        .unwrap()
                        .then(a.cmp(&b))
                });
                let mut combo = vec![0.0; dim];
                for &i in ranked.iter().take(*k) {
                    if singleton_best[i].0 > f64::NEG_INFINITY {
                        combo[i] = singleton_best[i].1;
                    }
                }
                state.probe(&combo)?;
            }
            if state.remaining() > 0 && state.best_delta.iter().any(|&d| d != 0.0) {
                let mirrored: Vec<f64> = state.best_delta.iter().map(|d| -d).collect();
                state.probe(&mirrored)?;
            }
        }
    }

    debug_assert!(class.contains(&state.best_delta));
    debug_assert!(state.queries <= budget);
    Ok(WorstCaseResult {
        delta: state.best_delta,
        perturbed_loss: state.best_loss,
        clean_loss,
        queries_used: state.queries,
    })
}

fn random_member(class: &PerturbationClass, dim: usize, rng: &mut Rng) -> Vec<f64> {
    match *class {
        PerturbationClass::LinfBall { epsilon } => (0..dim)
            .map(|_| epsilon * (2.0 * rng.next_f64() - 1.0))
            .collect(),
        PerturbationClass::SparseBudget { k, magnitude } => {
            let mut indices: Vec<usize> = (0..dim).collect();
            for slot in 0..k.min(dim) {
                let j = slot + rng.below((dim - slot) as u64) as usize;
                indices.swap(slot, j);
            }
            let mut delta = vec![0.0; dim];
            for &i in indices.iter().take(k) {
                delta[i] = if rng.next_f64() < 0.5 { magnitude } else { -magnitude };
            }
            delta
        }
    }
}

/// One instance for adversarial evaluation: features plus the target the
/// loss scores against.
#[derive(Debug, Clone, PartialEq)]
pub struct AdvInstance {
    pub features: Vec<f64>,
    pub target: Target,
}

/// Pull features and truth out of prediction records.
pub fn instances_from_records(records: &[PredictionRecord]) -> Result<Vec<AdvInstance>, AdvError> {
    records
        .iter()
        .map(|r| {
            let features = r.features.clone();
            let target = match &r.truth {
                Some(Truth::Value { value }) => Some(Target::Value(*value)),
                Some(Truth::Class { class }) => Some(Target::Class(*class)),
                _ => None,
            };
            match (features, target) {
                (Some(features), Some(target)) => Ok(AdvInstance { features, target }),
                _ => Err(AdvError::UnusableRecord { id: r.id.clone() }),
            }
        })
        .collect()
}

/// A dataset-level adversarial risk estimate. The bound is the mean of
/// per-instance search results, so it is a lower bound on the true
/// adversarial risk and never falls below the clean empirical risk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskEstimate {
    pub adversarial_risk_lower_bound: f64,
    pub clean_risk: f64,
    pub instances: usize,
    pub queries_used: usize,
}

/// Run [`worst_case_search`] over a dataset and average. Each instance
/// gets its own budget and a decorrelated substream of the seed.
pub fn adversarial_risk_estimate(
    model: &dyn QueryModel,
    instances: &[AdvInstance],
    metric: Metric,
    class: &PerturbationClass,
    budget_per_instance: usize,
    seed: Seed,
) -> Result<RiskEstimate, AdvError> {
    if instances.is_empty() {
        return Err(AdvError::EmptyDataset);
    }
    let mut total = 0.0;
    let mut clean_total = 0.0;
    let mut queries = 0;
    for (i, instance) in instances.iter().enumerate() {
        let result = worst_case_search(
            model,
            &instance.features,
            instance.target,
            metric,
            class,
            budget_per_instance,
            seed.substream(i as u64),
        )?;
        total += result.perturbed_loss;
        clean_total += result.clean_loss;
        queries += result.queries_used;
    }
    let n = instances.len() as f64;
    Ok(RiskEstimate {
        adversarial_risk_lower_bound: total / n,
        clean_risk: clean_total / n,
        instances: instances.len(),
        queries_used: queries,
    })
}

/// Default query budget: enough for the full refinement guarantee plus a
/// hundred random draws.
pub fn default_budget(dim: usize) -> usize {
    100 + 2 * dim
}

#[cfg(test)]
mod tests {
    use super::*;

    fn regressor(weights: Vec<f64>, bias: f64) -> LinearModel {
        LinearModel {
            weights: vec![weights],
            biases: vec![bias],
        }
    }

    #[test]
    fn zero_epsilon_is_clean_loss() {
        let model = regressor(vec![1.0, -2.0], 0.5);
        let x = vec![1.0, 1.0];
        let result = worst_case_search(
            &model,
            &x,
            Target::Value(0.0),
            Metric::SquaredError,
            &PerturbationClass::LinfBall { epsilon: 0.0 },
            10,
            Seed(1),
        )
        .unwrap();
        assert_eq!(result.delta, vec![0.0, 0.0]);
        assert_eq!(result.perturbed_loss, result.clean_loss);
        assert_eq!(result.queries_used, 1);
    }

    fn closed_form_check(budget: usize) {
        let w = vec![2.0, -1.0, 0.5];
        let model = regressor(w.clone(), 0.25);
        let x = vec![0.3, -0.7, 1.1];
        let y = -1.0;
        let eps = 0.2;
        let result = worst_case_search(
            &model,
            &x,
            Target::Value(y),
            Metric::SquaredError,
            &PerturbationClass::LinfBall { epsilon: eps },
            budget,
            Seed(7),
        )
        .unwrap();
        let clean_pred = model.predict_value(&x);
        let residual = clean_pred - y;
        let expected_delta: Vec<f64> =
            w.iter().map(|wi| eps * wi.signum() * residual.signum()).collect();
        let expected_loss = {
            let worst = clean_pred
                + expected_delta
                    .iter()
                    .zip(&w)
                    .map(|(d, wi)| d * wi)
                    .sum::<f64>();
            (worst - y) * (worst - y)
        };
        for (d, e) in result.delta.iter().zip(&expected_delta) {
            assert!((d - e).abs() < 1e-12, "{:?} vs {:?}", result.delta, expected_delta);
        }
        assert!((result.perturbed_loss - expected_loss).abs() < 1e-9);
        assert!(result.queries_used <= budget);
    }

    #[test]
    fn linear_closed_form_at_minimal_budget() {
        closed_form_check(2 * 3 + 1);
    }

    #[test]
    fn linear_closed_form_with_random_phase() {
        closed_form_check(100 + 2 * 3);
        closed_form_check(2 * 3 + 2);
        closed_form_check(4 * 3 + 5);
    }

    #[test]
    fn perturbed_loss_never_below_clean() {
        let model = regressor(vec![1.0, 1.0], 0.0);
        for seed in 0..20 {
            let result = worst_case_search(
                &model,
                &[0.1, -0.2],
                Target::Value(0.05),
                Metric::SquaredError,
                &PerturbationClass::LinfBall { epsilon: 0.3 },
                9,
                Seed(seed),
            )
            .unwrap();
            assert!(result.perturbed_loss >= result.clean_loss - 1e-12);
        }
    }

    #[test]
    fn deltas_stay_inside_the_class() {
        let model = regressor(vec![0.5, -0.5, 2.0, 1.0], 0.0);
        let linf = PerturbationClass::LinfBall { epsilon: 0.25 };
        let sparse = PerturbationClass::SparseBudget { k: 2, magnitude: 0.4 };
        for class in [linf, sparse] {
            for seed in 0..10 {
                let result = worst_case_search(
                    &model,
                    &[1.0, 2.0, -0.5, 0.0],
                    Target::Value(1.0),
                    Metric::SquaredError,
                    &class,
                    25,
                    Seed(seed),
                )
                .unwrap();
                assert!(class.contains(&result.delta), "{:?}", result.delta);
            }
        }
    }

    #[test]
    fn search_is_deterministic() {
        let model = regressor(vec![1.0, -1.0], 0.0);
        let run = || {
            worst_case_search(
                &model,
                &[0.5, 0.5],
                Target::Value(0.0),
                Metric::SquaredError,
                &PerturbationClass::LinfBall { epsilon: 0.5 },
                50,
                Seed(99),
            )
            .unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn sparse_budget_picks_heavy_coordinates() {
        // Weight mass concentrated on coordinates 0 and 3.
        let model = regressor(vec![5.0, 0.1, 0.1, -4.0], 0.0);
        let result = worst_case_search(
            &model,
            &[0.0, 0.0, 0.0, 0.0],
            Target::Value(-1.0),
            Metric::SquaredError,
            &PerturbationClass::SparseBudget { k: 2, magnitude: 1.0 },
            100,
            Seed(3),
        )
        .unwrap();
        let moved: Vec<usize> = result
            .delta
            .iter()
            .enumerate()
            .filter(|(_, &d)| d != 0.0)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(moved, vec![0, 3]);
        // Residual is +1 at delta 0, so push both coordinates to raise it.
        assert_eq!(result.delta[0], 1.0);
        assert_eq!(result.delta[3], -1.0);
    }

    #[test]
    fn risk_estimate_monotone_in_epsilon() {
        let model = regressor(vec![1.0, -0.5], 0.0);
        let instances: Vec<AdvInstance> = (0..20)
            .map(|i| AdvInstance {
                features: vec![i as f64 * 0.1, 1.0 - i as f64 * 0.05],
                target: Target::Value(i as f64 * 0.07),
            })
            .collect();
        let mut prev = f64::NEG_INFINITY;
        for eps in [0.0, 0.1, 0.2, 0.4] {
            let estimate = adversarial_risk_estimate(
                &model,
                &instances,
                Metric::SquaredError,
                &PerturbationClass::LinfBall { epsilon: eps },
                default_budget(2),
                Seed(5),
            )
            .unwrap();
            assert!(estimate.adversarial_risk_lower_bound >= estimate.clean_risk - 1e-12);
            assert!(estimate.adversarial_risk_lower_bound >= prev - 1e-12);
            if eps == 0.0 {
                assert!(
                    (estimate.adversarial_risk_lower_bound - estimate.clean_risk).abs() < 1e-12
                );
            }
            prev = estimate.adversarial_risk_lower_bound;
        }
    }

    #[test]
    fn classifier_zero_one_attack() {
        // A confident but fragile 2-class linear classifier.
        let model = LinearModel {
            weights: vec![vec![1.0, 0.0], vec![-1.0, 0.0]],
            biases: vec![0.0, 0.0],
        };
        let result = worst_case_search(
            &model,
            &[0.2, 0.0],
            Target::Class(0),
            Metric::ZeroOne,
            &PerturbationClass::LinfBall { epsilon: 0.5 },
            30,
            Seed(11),
        )
        .unwrap();
        assert_eq!(result.clean_loss, 0.0);
        assert_eq!(result.perturbed_loss, 1.0); // flipped the prediction
    }

    #[test]
    fn more_budget_never_hurts_on_the_linear_fixture() {
        let model = regressor(vec![2.0, -1.0, 0.5], 0.25);
        let x = [0.3, -0.7, 1.1];
        let mut prev = f64::NEG_INFINITY;
        for budget in [1, 3, 5, 7, 2 * 3 + 1, 2 * 3 + 2, 4 * 3 + 2, 100 + 2 * 3] {
            let result = worst_case_search(
                &model,
                &x,
                Target::Value(-1.0),
                Metric::SquaredError,
                &PerturbationClass::LinfBall { epsilon: 0.2 },
                budget,
                Seed(7),
            )
            .unwrap();
            assert!(
                result.perturbed_loss >= prev - 1e-12,
                "budget {budget}: {} < {prev}",
                result.perturbed_loss
            );
            prev = result.perturbed_loss;
        }
    }

    #[test]
    fn budget_is_respected() {
        struct Counting<'a> {
            inner: &'a LinearModel,
            count: std::cell::Cell<usize>,
        }
        impl QueryModel for Counting<'_> {
            fn query(&self, x: &[f64]) -> Result<ModelOutput, AdvError> {
                self.count.set(self.count.get() + 1);
                self.inner.query(x)
            }
        }
        let inner = regressor(vec![1.0; 5], 0.0);
        for budget in [1, 3, 7, 11, 25, 200] {
            let model = Counting {
                inner: &inner,
                count: std::cell::Cell::new(0),
            };
            let result = worst_case_search(
                &model,
                &[0.0; 5],
                Target::Value(1.0),
                Metric::SquaredError,
                &PerturbationClass::LinfBall { epsilon: 0.1 },
                budget,
                Seed(2),
            )
            .unwrap();
            assert!(model.count.get() <= budget, "budget {budget}");
            assert_eq!(model.count.get(), result.queries_used);
        }
    }
}
