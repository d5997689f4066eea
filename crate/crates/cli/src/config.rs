//! The run configuration file: one human-editable JSON document naming
//! the dataset, slices, test cases, monitors, calibration tasks, shift
//! tasks, and adversarial tasks for an `evaluate` run.
//!
//! Validation happens before any work: every referenced slice, metric,
//! and file must resolve, and all violations are reported together.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use surety::detect::{DetectionGate, DetectionMetric};
use surety::losses::Metric;
use surety::monitor::ThresholdDirection;
use surety::record::PayloadKind;
use surety::slice::{DatasetSlice, Selector};
use surety::testcase::{Aggregator, Direction, Mode, TestCase};
use surety::uncertainty::UncertaintyMetric;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetRef {
    pub path: PathBuf,
    pub schema: PayloadKind,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SliceDef {
    pub name: String,
    pub selector: Selector,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaseDef {
    pub name: String,
    /// Name of a slice defined in `slices`, or "all".
    pub slice: String,
    /// One of the registered metric names.
    pub metric: String,
    pub aggregator: Aggregator,
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default)]
    pub direction: Direction,
    #[serde(default)]
    pub count_bound: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectionGateDef {
    pub name: String,
    pub slice: String,
    #[serde(flatten)]
    pub metric: DetectionMetric,
    pub bound: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum CalibrationTask {
    Ece {
        #[serde(default = "default_bins")]
        bins: usize,
        #[serde(default = "default_scheme")]
        scheme: surety::calibration::BinningScheme,
    },
    Temperature,
    IntervalCoverage {
        levels: Vec<f64>,
    },
    Sharpness,
    Conformal {
        alpha: f64,
        /// Leading fraction of the log held out for calibration; the rest
        /// is scored for empirical coverage and set size.
        #[serde(default = "default_cal_fraction")]
        calibration_fraction: f64,
    },
}

fn default_bins() -> usize {
    15
}

fn default_scheme() -> surety::calibration::BinningScheme {
    surety::calibration::BinningScheme::EqualWidth
}

fn default_cal_fraction() -> f64 {
    0.5
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DetectorSpec {
    Threshold { theta: f64, direction: ThresholdDirection },
    ConsecutiveRule { theta: f64, m: usize },
    /// Profile built from the first `nominal_count` stream points; the
    /// remainder is monitored.
    Zscore { z: f64, nominal_count: usize },
    PageHinkley { delta: f64, lambda: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonitorDef {
    pub name: String,
    /// Self-assessment metric to stream, by registered name.
    pub metric: String,
    pub detector: DetectorSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum ShiftTask {
    /// Estimate label-shift ratio weights from a labeled source log and
    /// run the predicted-histogram significance test.
    LabelShift { source: DatasetRef },
    /// Density-ratio importance weights for the source log's instances.
    ImportanceWeights { source: DatasetRef },
    /// kNN distance of every dataset record to the source features.
    OodKnn { source: DatasetRef, k: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShiftTaskDef {
    pub name: String,
    #[serde(flatten)]
    pub task: ShiftTask,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelRef {
    /// A linear model saved as JSON (`surety simulate --model-out`).
    Linear { path: PathBuf },
    /// An external process speaking the line protocol on stdin/stdout.
    Exec { command: String, #[serde(default)] args: Vec<String> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdversarialTaskDef {
    pub name: String,
    pub model: ModelRef,
    pub loss: String,
    pub perturbation: surety::adversarial::PerturbationClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
    /// Cap on how many records to attack (front of the log).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_instances: Option<usize>,
}

/// The whole run configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub seed: u64,
    pub dataset: DatasetRef,
    #[serde(default)]
    pub slices: Vec<SliceDef>,
    #[serde(default)]
    pub cases: Vec<CaseDef>,
    #[serde(default)]
    pub detection_gates: Vec<DetectionGateDef>,
    #[serde(default)]
    pub calibration: Vec<CalibrationTask>,
    #[serde(default)]
    pub monitors: Vec<MonitorDef>,
    #[serde(default)]
    pub shift_tasks: Vec<ShiftTaskDef>,
    #[serde(default)]
    pub adversarial: Vec<AdversarialTaskDef>,
}

impl SuiteConfig {
    pub fn load(path: &Path) -> anyhow::Result<(SuiteConfig, String)> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("failed to read config {}: {e}", path.display()))?;
        let config: SuiteConfig = serde_json::from_str(&text)
            .map_err(|e| anyhow::anyhow!("config {}: {e}", path.display()))?;
        let hash = config_hash(&text)?;
        Ok((config, hash))
    }

    fn slice_by_name(&self, name: &str) -> Option<DatasetSlice> {
        if name == "all" {
            return Some(DatasetSlice::all());
        }
        self.slices
            .iter()
            .find(|s| s.name == name)
            .map(|s| DatasetSlice::new(s.name.clone(), s.selector.clone()))
    }

    /// Check every cross-reference, collecting all violations.
    pub fn validate(&self, base: &Path) -> Vec<String> {
        let mut problems = Vec::new();
        fn check_file(problems: &mut Vec<String>, base: &Path, path: &Path, what: &str) {
            if !base.join(path).exists() {
                problems.push(format!("{what} file {} does not exist", path.display()));
            }
        }
        check_file(&mut problems, base, &self.dataset.path, "dataset");

        let mut slice_names: Vec<&str> = vec!["all"];
        for s in &self.slices {
            if slice_names.contains(&s.name.as_str()) {
                problems.push(format!("slice \"{}\" is defined twice", s.name));
            }
            slice_names.push(&s.name);
        }
        let mut case_names: Vec<&str> = Vec::new();
        for c in &self.cases {
            if case_names.contains(&c.name.as_str()) {
                problems.push(format!("case \"{}\" is defined twice", c.name));
            }
            case_names.push(&c.name);
            if !slice_names.contains(&c.slice.as_str()) {
                problems.push(format!("case \"{}\" references unknown slice \"{}\"", c.name, c.slice));
            }
            if let Err(e) = Metric::from_name(&c.metric) {
                problems.push(format!("case \"{}\": {e}", c.name));
            }
            if let Ok(case) = self.build_case(c) {
                if let Err(e) = case.validate() {
                    problems.push(e.to_string());
                }
            }
        }
        for g in &self.detection_gates {
            if !slice_names.contains(&g.slice.as_str()) {
                problems.push(format!("gate \"{}\" references unknown slice \"{}\"", g.name, g.slice));
            }
            if self.dataset.schema != PayloadKind::Detections {
                problems.push(format!(
                    "gate \"{}\" needs a detections dataset, schema is {}",
                    g.name, self.dataset.schema
                ));
            }
        }
        for m in &self.monitors {
            if UncertaintyMetric::from_name(&m.metric).is_none() {
                problems.push(format!(
                    "monitor \"{}\" references unknown metric \"{}\"",
                    m.name, m.metric
                ));
            }
        }
        for t in &self.shift_tasks {
            match &t.task {
                ShiftTask::LabelShift { source }
                | ShiftTask::ImportanceWeights { source }
                | ShiftTask::OodKnn { source, .. } => {
                    check_file(&mut problems, base, &source.path, "shift source");
                }
            }
        }
        for a in &self.adversarial {
            if let Err(e) = Metric::from_name(&a.loss) {
                problems.push(format!("adversarial task \"{}\": {e}", a.name));
            }
            if let ModelRef::Linear { path } = &a.model {
                check_file(&mut problems, base, path, "model");
            }
        }
        problems
    }

    pub fn build_case(&self, def: &CaseDef) -> anyhow::Result<TestCase> {
        Ok(TestCase {
            name: def.name.clone(),
            slice: self
                .slice_by_name(&def.slice)
                .ok_or_else(|| anyhow::anyhow!("unknown slice {}", def.slice))?,
            metric: Metric::from_name(&def.metric)?,
            aggregator: def.aggregator,
            mode: def.mode,
            threshold: def.threshold.map(surety::losses::FailureThreshold::new),
            direction: def.direction,
            count_bound: def.count_bound,
        })
    }

    pub fn build_gate(&self, def: &DetectionGateDef) -> anyhow::Result<DetectionGate> {
        Ok(DetectionGate {
            name: def.name.clone(),
            slice: self
                .slice_by_name(&def.slice)
                .ok_or_else(|| anyhow::anyhow!("unknown slice {}", def.slice))?,
            metric: def.metric,
            bound: def.bound,
        })
    }
}

/// Hash of the canonicalized config: the JSON re-serialized with sorted
/// keys and no whitespace, digested with 64-bit FNV-1a.
pub fn config_hash(text: &str) -> anyhow::Result<String> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let canonical = canonical_json(&value);
    Ok(format!("fnv1a64:{:016x}", fnv1a64(canonical.as_bytes())))
}

fn canonical_json(value: &serde_json::Value) -> String {
    match value {
        serde_json::Value::Object(map) => {
            let sorted: BTreeMap<&String, &serde_json::Value> = map.iter().collect();
            let fields: Vec<String> = sorted
                .into_iter()
                .map(|(k, v)| format!("{}:{}", serde_json::to_string(k).unwrap(), canonical_json(v)))
                .collect();
            format!("{{{}}}", fields.join(","))
        }
        serde_json::Value::Array(items) => {
            let rendered: Vec<String> = items.iter().map(canonical_json).collect();
            format!("[{}]", rendered.join(","))
        }
        other => serde_json::to_string(other).unwrap(),
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}
