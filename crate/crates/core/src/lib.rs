//! surety — evaluate, calibrate, and monitor supervised ML models from
//! their prediction logs.
//!
//! The library is model-agnostic: it never runs inference itself (except
//! through black-box adapters in [`adversarial`]) and instead operates on
//! logged predictions — class distributions, Gaussian regression outputs,
//! detection sets, or ensemble members — with optional ground truth.
//!
//! The pieces fit together like this:
//!
//! - [`record`] and [`log`] define the prediction-record data model and
//!   the line-delimited log format everything consumes.
//! - [`losses`] holds pointwise error metrics and the strict failure
//!   predicate; [`testcase`] builds the metric x slice x aggregator x
//!   threshold algebra on top of them, with deployability verdicts.
//! - [`calibration`] and [`uncertainty`] quantify how trustworthy the
//!   model's own probabilities are and correct them post hoc.
//! - [`shift`] estimates and tests distribution shift and scores
//!   out-of-distribution inputs; [`monitor`] watches metric streams during
//!   deployment.
//! - [`detect`] evaluates object detectors (IoU/GIoU, matching, AP/AR).
//! - [`synth`] generates data from fully known distributions so every
//!   estimator above can be tested against ground truth; [`adversarial`]
//!   searches for worst-case perturbations through a query-only adapter.
//!
//! Determinism is a design contract: all randomness flows through
//! [`rng::Rng`], a portable seeded generator, and identical seeds produce
//! identical results on every platform.

pub mod adversarial;
pub mod calibration;
pub mod detect;
pub mod log;
pub mod losses;
pub mod monitor;
pub mod numeric;
pub mod record;
pub mod rng;
pub mod shift;
pub mod slice;
pub mod synth;
pub mod testcase;
pub mod uncertainty;

pub use record::{
    ClassProbVector, DataError, EnsembleClassPrediction, GaussianPrediction, Payload, PayloadKind,
    PredictionRecord, Truth,
};
pub use rng::{Rng, Seed};
pub use slice::{DatasetSlice, Selector};
