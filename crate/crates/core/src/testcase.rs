//! The test-case algebra: metric x slice x aggregator x optional
//! threshold, with two evaluation modes and suite execution.
//!
//! A case without a threshold is an *optimizing* test and only produces a
//! score. A case with a threshold is a *satisficing* test: a deployment
//! gate the model must pass. A suite is deployable exactly when every
//! satisficing case passes.
//!
//! In aggregate mode the aggregator combines per-instance errors and the
//! threshold applies to the combined score. In per-instance-failure mode
//! the threshold applies to each instance first and the aggregator
//! combines the resulting failures (a count, or an any-failure flag).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::losses::{is_failure, FailureThreshold, Metric};
use crate::record::PredictionRecord;
use crate::slice::{slice, DatasetSlice};

#[derive(Debug, Error)]
pub enum TestError {
    #[error("test case \"{case}\": slice \"{slice}\" selected no records; a test over zero instances is undefined")]
    EmptySlice { case: String, slice: String },
    #[error("test case \"{case}\": aggregator {aggregator:?} is not legal in {mode:?} mode")]
    IllegalAggregator {
        case: String,
        aggregator: Aggregator,
        mode: Mode,
    },
    #[error("test case \"{case}\": per-instance-failure mode requires a threshold")]
    MissingThreshold { case: String },
    #[error("test case \"{case}\": {source}")]
    Metric {
        case: String,
        #[source]
        source: crate::losses::LossError,
    },
    #[error("report does not contain a case named \"{0}\"")]
    UnknownCase(String),
    #[error("case \"{0}\" is not an optimizing case in both reports")]
    NotOptimizing(String),
    #[error("detection gate \"{case}\": {message}")]
    Detection { case: String, message: String },
}

/// How per-instance results are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregator {
    /// Unweighted average of errors (aggregate mode only).
    Mean,
    /// Worst-case error (aggregate mode only).
    Max,
    /// Number of failing instances (per-instance-failure mode only).
    CountFailures,
    /// 1 if any instance fails, else 0 (per-instance-failure mode only).
    AnyFailure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    AggregateThenThreshold,
    PerInstanceFailure,
}

/// Which side of the threshold counts as failing. Metrics where larger is
/// better (a recall gate, for instance) use `LessIsFailure`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    #[default]
    GreaterIsFailure,
    LessIsFailure,
}

/// One declarative evaluation unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestCase {
    pub name: String,
    pub slice: DatasetSlice,
    pub metric: Metric,
    pub aggregator: Aggregator,
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<FailureThreshold>,
    #[serde(default)]
    pub direction: Direction,
    /// For `CountFailures`: the case fails when the count exceeds this.
    #[serde(default)]
    pub count_bound: u64,
}

impl TestCase {
    /// A thresholded case is satisficing; an unthresholded one optimizing.
    pub fn is_satisficing(&self) -> bool {
        self.threshold.is_some()
    }

    pub fn validate(&self) -> Result<(), TestError> {
        let legal = match self.mode {
            Mode::AggregateThenThreshold => {
                matches!(self.aggregator, Aggregator::Mean | Aggregator::Max)
            }
            Mode::PerInstanceFailure => matches!(
                self.aggregator,
                Aggregator::CountFailures | Aggregator::AnyFailure
            ),
        };
        if !legal {
            return Err(TestError::IllegalAggregator {
                case: self.name.clone(),
                aggregator: self.aggregator,
                mode: self.mode,
            });
        }
        if self.mode == Mode::PerInstanceFailure && self.threshold.is_none() {
            return Err(TestError::MissingThreshold {
                case: self.name.clone(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    /// The case carries no threshold; the score stands on its own.
    ScoreOnly,
}

/// The result of one executed case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub case: String,
    pub score: f64,
    pub n: usize,
    pub verdict: Verdict,
    pub satisficing: bool,
    pub direction: Direction,
}

/// All outcomes of a suite plus the deployment verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub outcomes: Vec<TestOutcome>,
    /// True exactly when every satisficing outcome passed.
    pub deployable: bool,
    /// Set when the suite had no cases at all: the deployable flag is
    /// vacuous and should be treated with suspicion.
    pub empty_suite: bool,
}

/// Execute one test case against a dataset.
pub fn run_test_case(
    case: &TestCase,
    dataset: &[PredictionRecord],
) -> Result<TestOutcome, TestError> {
    case.validate()?;
    let selected = slice(dataset, &case.slice);
    if selected.is_empty() {
        return Err(TestError::EmptySlice {
            case: case.name.clone(),
            slice: case.slice.name.clone(),
        });
    }
    let errors: Vec<f64> = selected
        .iter()
        .map(|r| case.metric.per_instance(r).map(|e| e.value()))
        .collect::<Result<_, _>>()
        .map_err(|source| TestError::Metric {
            case: case.name.clone(),
            source,
        })?;
    let n = errors.len();

    let (score, verdict) = match case.mode {
        Mode::AggregateThenThreshold => {
            let score = match case.aggregator {
                Aggregator::Mean => errors.iter().sum::<f64>() / n as f64,
                Aggregator::Max => errors.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                _ => unreachable!("validated"),
            };
            let verdict = match case.threshold {
                None => Verdict::ScoreOnly,
                Some(threshold) => {
                    let failed = match case.direction {
                        Direction::GreaterIsFailure => score > threshold.delta(),
                        Direction::LessIsFailure => score < threshold.delta(),
                    };
                    if failed {
                        Verdict::Fail
                    } else {
                        Verdict::Pass
                    }
                }
            };
            (score, verdict)
        }
        Mode::PerInstanceFailure => {
            let threshold = case.threshold.expect("validated");
            let failures = errors
                .iter()
                .filter(|&&e| match case.direction {
                    Direction::GreaterIsFailure => {
                        is_failure(crate::losses::ErrorValue::new(e), threshold)
                    }
                    Direction::LessIsFailure => e < threshold.delta(),
                })
                .count() as u64;
            match case.aggregator {
                Aggregator::CountFailures => {
                    let verdict = if failures > case.count_bound {
                        Verdict::Fail
                    } else {
                        Verdict::Pass
                    };
                    (failures as f64, verdict)
                }
                Aggregator::AnyFailure => {
                    let fired = failures > 0;
                    (
                        if fired { 1.0 } else { 0.0 },
                        if fired { Verdict::Fail } else { Verdict::Pass },
                    )
                }
                _ => unreachable!("validated"),
            }
        }
    };

    Ok(TestOutcome {
        case: case.name.clone(),
        score,
        n,
        verdict,
        satisficing: case.is_satisficing(),
        direction: case.direction,
    })
}

fn assemble(outcomes: Vec<TestOutcome>, empty: bool) -> SuiteReport {
    let deployable = outcomes
        .iter()
        .filter(|o| o.satisficing)
        .all(|o| o.verdict == Verdict::Pass);
    SuiteReport {
        outcomes,
        deployable,
        empty_suite: empty,
    }
}

/// Execute every case in order. Per-case errors come back annotated with
/// the case name. An empty suite is vacuously deployable and flagged.
pub fn run_suite(
    cases: &[TestCase],
    dataset: &[PredictionRecord],
) -> Result<SuiteReport, TestError> {
    let outcomes = cases
        .iter()
        .map(|case| run_test_case(case, dataset))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(assemble(outcomes, cases.is_empty()))
}

/// Execute a suite across `threads` worker threads. Cases are pure, so
/// the report is identical to the sequential one regardless of scheduling.
pub fn run_suite_threads(
    cases: &[TestCase],
    dataset: &[PredictionRecord],
    threads: usize,
) -> Result<SuiteReport, TestError> {
    let threads = threads.max(1).min(cases.len().max(1));
    if threads <= 1 {
        return run_suite(cases, dataset);
    }
    let mut slots: Vec<Option<Result<TestOutcome, TestError>>> =
        (0..cases.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for worker in 0..threads {
            handles.push(scope.spawn(move || {
                let mut results = Vec::new();
                let mut i = worker;
                while i < cases.len() {
                    results.push((i, run_test_case(&cases[i], dataset)));
                    i += threads;
                }
                results
            }));
        }
        for handle in handles {
            for (i, result) in handle.join().expect("suite worker panicked") {
                slots[i] = Some(result);
            }
        }
    });
    let outcomes = slots
        .into_iter()
        .map(|slot| slot.expect("every case executed"))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(assemble(outcomes, cases.is_empty()))
}

/// Result of comparing two suite reports on a named optimizing case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    FirstWins,
    SecondWins,
    /// Ties are reported, never silently broken: picking between equal
    /// models is a human decision.
    Tie,
}

/// Compare two reports: a deployable model beats a non-deployable one;
/// between models with equal deployability the named optimizing case
/// decides (lower score wins when greater is failure, higher when less
/// is failure); equal scores tie.
pub fn compare_models(
    a: &SuiteReport,
    b: &SuiteReport,
    optimizing_case: &str,
) -> Result<Comparison, TestError> {
    let find = |report: &SuiteReport| {
        report
            .outcomes
            .iter()
            .find(|o| o.case == optimizing_case)
            .cloned()
            .ok_or_else(|| TestError::UnknownCase(optimizing_case.to_string()))
    };
    let oa = find(a)?;
    let ob = find(b)?;
    if oa.satisficing || ob.satisficing {
        return Err(TestError::NotOptimizing(optimizing_case.to_string()));
    }
    match (a.deployable, b.deployable) {
        (true, false) => return Ok(Comparison::FirstWins),
        (false, true) => return Ok(Comparison::SecondWins),
        _ => {}
    }
    let (better_a, better_b) = match oa.direction {
        Direction::GreaterIsFailure => (oa.score < ob.score, ob.score < oa.score),
        Direction::LessIsFailure => (oa.score > ob.score, ob.score > oa.score),
    };
    Ok(if better_a {
        Comparison::FirstWins
    } else if better_b {
        Comparison::SecondWins
    } else {
        Comparison::Tie
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::{GaussianPrediction, Payload, PredictionRecord, Truth};
    use crate::slice::Selector;

    fn gaussian_record(id: &str, index: u64, mean: f64, truth: f64) -> PredictionRecord {
        PredictionRecord::new(
            id,
            index,
            Payload::Gaussian {
                prediction: GaussianPrediction::new(mean, 1.0).unwrap(),
            },
            Some(Truth::Value { value: truth }),
        )
        .unwrap()
    }

    fn case(name: &str, aggregator: Aggregator, mode: Mode, threshold: Option<f64>) -> TestCase {
        TestCase {
            name: name.into(),
            slice: DatasetSlice::all(),
            metric: Metric::SquaredError,
            aggregator,
            mode,
            threshold: threshold.map(FailureThreshold::new),
            direction: Direction::GreaterIsFailure,
            count_bound: 0,
        }
    }

    #[test]
    fn mean_aggregation() {
        let data = vec![
            gaussian_record("a", 0, 80.5, 80.0),
            gaussian_record("b", 1, 81.0, 80.0),
        ];
        let outcome = run_test_case(
            &case("mean", Aggregator::Mean, Mode::AggregateThenThreshold, None),
            &data,
        )
        .unwrap();
        assert!((outcome.score - 0.625).abs() < 1e-12);
        assert_eq!(outcome.verdict, Verdict::ScoreOnly);
        assert_eq!(outcome.n, 2);
    }

    #[test]
    fn max_aggregation() {
        let data = vec![
            gaussian_record("a", 0, 80.5, 80.0),
            gaussian_record("b", 1, 20.0, 80.0),
        ];
        let outcome = run_test_case(
            &case("max", Aggregator::Max, Mode::AggregateThenThreshold, None),
            &data,
        )
        .unwrap();
        assert_eq!(outcome.score, 3600.0);
    }

    #[test]
    fn any_failure_fires() {
        let data = vec![
            gaussian_record("a", 0, 80.5, 80.0),
            gaussian_record("b", 1, 20.0, 80.0),
        ];
        let outcome = run_test_case(
            &case("any", Aggregator::AnyFailure, Mode::PerInstanceFailure, Some(1.0)),
            &data,
        )
        .unwrap();
        assert_eq!(outcome.verdict, Verdict::Fail);
        assert_eq!(outcome.score, 1.0);
    }

    #[test]
    fn count_failures_and_bound() {
        let data = vec![
            gaussian_record("a", 0, 80.5, 80.0),
            gaussian_record("b", 1, 20.0, 80.0),
            gaussian_record("c", 2, 70.0, 80.0),
        ];
        let mut c = case(
            "count",
            Aggregator::CountFailures,
            Mode::PerInstanceFailure,
            Some(1.0),
        );
        let outcome = run_test_case(&c, &data).unwrap();
        assert_eq!(outcome.score, 2.0);
        assert_eq!(outcome.verdict, Verdict::Fail);
        c.count_bound = 2;
        assert_eq!(run_test_case(&c, &data).unwrap().verdict, Verdict::Pass);
    }

    #[test]
    fn empty_slice_is_an_error() {
        let data = vec![gaussian_record("a", 0, 80.5, 80.0)];
        let mut c = case("gate", Aggregator::Mean, Mode::AggregateThenThreshold, Some(1.0));
        c.slice = DatasetSlice::new("nothing", Selector::Tag { tag: "missing".into() });
        let err = run_test_case(&c, &data).unwrap_err();
        assert!(matches!(err, TestError::EmptySlice { .. }), "{err}");
    }

    #[test]
    fn per_instance_mode_requires_threshold() {
        let c = case("bad", Aggregator::AnyFailure, Mode::PerInstanceFailure, None);
        assert!(matches!(
            c.validate(),
            Err(TestError::MissingThreshold { .. })
        ));
        let c = case("bad2", Aggregator::Mean, Mode::PerInstanceFailure, Some(1.0));
        assert!(matches!(
            c.validate(),
            Err(TestError::IllegalAggregator { .. })
        ));
    }

    #[test]
    fn suite_deployability() {
        let data = vec![
            gaussian_record("a", 0, 80.5, 80.0),
            gaussian_record("b", 1, 80.2, 80.0),
        ];
        let passing = case("gate", Aggregator::Mean, Mode::AggregateThenThreshold, Some(1.0));
        let optimizing = case("score", Aggregator::Mean, Mode::AggregateThenThreshold, None);
        let report = run_suite(&[passing.clone(), optimizing.clone()], &data).unwrap();
        assert!(report.deployable);
        assert!(!report.empty_suite);

        // One failing satisficing case blocks deployment; the optimizing
        // case still reports its score.
        let strict = case(
            "strict-gate",
            Aggregator::Mean,
            Mode::AggregateThenThreshold,
            Some(0.01),
        );
        let report = run_suite(&[strict, optimizing], &data).unwrap();
        assert!(!report.deployable);
        assert_eq!(report.outcomes[1].verdict, Verdict::ScoreOnly);
    }

    #[test]
    fn empty_suite_is_vacuously_deployable_with_warning() {
        let report = run_suite(&[], &[]).unwrap();
        assert!(report.deployable);
        assert!(report.empty_suite);
        assert!(report.outcomes.is_empty());
    }

    #[test]
    fn threaded_suite_matches_sequential() {
        let data: Vec<PredictionRecord> = (0..100)
            .map(|i| gaussian_record(&format!("r{i}"), i, 80.0 + i as f64 * 0.01, 80.0))
            .collect();
        let cases: Vec<TestCase> = (0..7)
            .map(|i| {
                let mut c = case(
                    &format!("case{i}"),
                    if i % 2 == 0 { Aggregator::Mean } else { Aggregator::Max },
                    Mode::AggregateThenThreshold,
                    if i % 3 == 0 { Some(0.5) } else { None },
                );
                c.slice = DatasetSlice::new("head", Selector::IndexRange { start: 0, end: 50 + i });
                c
            })
            .collect();
        let sequential = run_suite(&cases, &data).unwrap();
        for threads in [2, 4, 16] {
            let parallel = run_suite_threads(&cases, &data, threads).unwrap();
            assert_eq!(parallel, sequential);
        }
    }

    #[test]
    fn model_comparison() {
        let data = vec![gaussian_record("a", 0, 80.5, 80.0)];
        let gate = case("gate", Aggregator::Mean, Mode::AggregateThenThreshold, Some(1.0));
        let opt = case("opt", Aggregator::Mean, Mode::AggregateThenThreshold, None);
        let good = run_suite(&[gate.clone(), opt.clone()], &data).unwrap();

        let worse_data = vec![gaussian_record("a", 0, 83.0, 80.0)];
        let bad = run_suite(&[gate, opt], &worse_data).unwrap();

        assert_eq!(compare_models(&good, &bad, "opt").unwrap(), Comparison::FirstWins);
        assert_eq!(compare_models(&bad, &good, "opt").unwrap(), Comparison::SecondWins);
        assert_eq!(compare_models(&good, &good, "opt").unwrap(), Comparison::Tie);
        assert!(matches!(
            compare_models(&good, &bad, "nope"),
            Err(TestError::UnknownCase(_))
        ));
    }

    #[test]
    fn deployable_model_beats_lower_score() {
        let data = vec![gaussian_record("a", 0, 80.5, 80.0)];
        let gate = case("gate", Aggregator::Mean, Mode::AggregateThenThreshold, Some(1.0));
        let opt = case("opt", Aggregator::Mean, Mode::AggregateThenThreshold, None);
        let deployable = run_suite(&[gate.clone(), opt.clone()], &data).unwrap();

        // Lower optimizing score but fails its gate.
        let perfect_data = vec![gaussian_record("a", 0, 80.0, 80.0)];
        let strict_gate = case("gate", Aggregator::Mean, Mode::AggregateThenThreshold, Some(-1.0));
        let undeployable = run_suite(&[strict_gate, opt], &perfect_data).unwrap();
        assert!(!undeployable.deployable);

        assert_eq!(
            compare_models(&deployable, &undeployable, "opt").unwrap(),
            Comparison::FirstWins
        );
    }
}
