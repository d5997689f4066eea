//! Dataset slices: named, declarative selections of records for targeted
//! subpopulation tests.

use serde::{Deserialize, Serialize};

use crate::record::PredictionRecord;

/// A predicate over record tags, ids, and stream indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Selector {
    /// Every record.
    All,
    /// Records carrying the tag.
    Tag { tag: String },
    /// Records whose id is listed.
    IdIn { ids: Vec<String> },
    /// Records with `start <= index < end`.
    IndexRange { start: u64, end: u64 },
    /// Records the inner selector rejects.
    Not { inner: Box<Selector> },
    /// Records matching every listed selector.
    AllOf { selectors: Vec<Selector> },
    /// Records matching at least one listed selector.
    AnyOf { selectors: Vec<Selector> },
}

impl Selector {
    pub fn matches(&self, record: &PredictionRecord) -> bool {
        match self {
            Selector::All => true,
            Selector::Tag { tag } => record.tags.contains(tag),
            Selector::IdIn { ids } => ids.contains(&record.id),
            Selector::IndexRange { start, end } => record.index >= *start && record.index < *end,
            Selector::Not { inner } => !inner.matches(record),
            Selector::AllOf { selectors } => selectors.iter().all(|s| s.matches(record)),
            Selector::AnyOf { selectors } => selectors.iter().any(|s| s.matches(record)),
        }
    }
}

/// A named slice of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSlice {
    pub name: String,
    pub selector: Selector,
}

impl DatasetSlice {
    pub fn new(name: impl Into<String>, selector: Selector) -> DatasetSlice {
        DatasetSlice {
            name: name.into(),
            selector,
        }
    }

    /// The whole-dataset slice.
    pub fn all() -> DatasetSlice {
        DatasetSlice::new("all", Selector::All)
    }
}

/// Select the matching subset, preserving order. An empty result is valid.
pub fn slice(dataset: &[PredictionRecord], s: &DatasetSlice) -> Vec<PredictionRecord> {
    dataset
        .iter()
        .filter(|r| s.selector.matches(r))
        .cloned()
        .collect()
}
