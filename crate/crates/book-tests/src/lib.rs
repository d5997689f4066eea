//! Doc-test host for the book.
//!
//! Each chapter of `book/` is included as module documentation, so every
//! Rust code block in the guide compiles and runs under
//! `cargo test --doc`. When a snippet in the book drifts from the
//! library, this crate is what catches it.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/prediction-logs.md")]
pub mod prediction_logs {}

#[doc = include_str!("../../../book/src/failures-and-tests.md")]
pub mod failures_and_tests {}

#[doc = include_str!("../../../book/src/calibration.md")]
pub mod calibration {}

#[doc = include_str!("../../../book/src/uncertainty.md")]
pub mod uncertainty {}

#[doc = include_str!("../../../book/src/shift.md")]
pub mod shift {}

#[doc = include_str!("../../../book/src/monitoring.md")]
pub mod monitoring {}

#[doc = include_str!("../../../book/src/detection.md")]
pub mod detection {}

#[doc = include_str!("../../../book/src/synthetic-data.md")]
pub mod synthetic_data {}

#[doc = include_str!("../../../book/src/adversarial.md")]
pub mod adversarial {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
