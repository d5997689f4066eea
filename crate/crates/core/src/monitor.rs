//! Streaming monitors over self-assessment metric streams.
//!
//! Each monitor is a stateful accumulator with a feed-one-value step, so
//! deployment can stream values in as they arrive; the free functions are
//! batch wrappers over the same state machines, which is why feeding a
//! stream in chunks produces exactly the events of a single pass.
//!
//! Monitors never require ground truth. Events carry the stream index, so
//! late-arriving labels can be joined to the event log offline.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::record::PredictionRecord;
use crate::uncertainty::{record_metric, UncertaintyMetric};

#[derive(Debug, Error)]
pub enum MonitorError {
    #[error("stream indices must be strictly increasing: {prev} then {next}")]
    IndexOrder { prev: u64, next: u64 },
    #[error("nominal window needs at least 2 points, got {0}")]
    ShortNominalWindow(usize),
    #[error("nominal window has zero variance; a z-score profile is undefined")]
    ZeroVariance,
    #[error("consecutive rule needs m >= 1")]
    BadRunLength,
    #[error("page-hinkley needs delta >= 0 and lambda > 0")]
    BadPageHinkleyParams,
    #[error("record {id} does not expose metric {metric}")]
    MetricUnavailable { id: String, metric: &'static str },
    #[error("failed to write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("event log line {line}: {message}")]
    MalformedEvent { line: usize, message: String },
}

/// One point of a metric stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StreamPoint {
    pub index: u64,
    pub value: f64,
}

/// An ordered metric stream with strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricStream {
    points: Vec<StreamPoint>,
}

impl MetricStream {
    pub fn new(points: Vec<StreamPoint>) -> Result<MetricStream, MonitorError> {
        for pair in points.windows(2) {
            if pair[1].index <= pair[0].index {
                return Err(MonitorError::IndexOrder {
                    prev: pair[0].index,
                    next: pair[1].index,
                });
            }
        }
        Ok(MetricStream { points })
    }

    pub fn from_values(values: &[f64]) -> MetricStream {
        MetricStream {
            points: values
                .iter()
                .enumerate()
                .map(|(i, &value)| StreamPoint {
                    index: i as u64,
                    value,
                })
                .collect(),
        }
    }

    /// Extract a self-assessment metric stream from a prediction log.
    pub fn from_records(
        records: &[PredictionRecord],
        metric: UncertaintyMetric,
    ) -> Result<MetricStream, MonitorError> {
        let points = records
            .iter()
            .map(|r| {
                record_metric(r, metric)
                    .map(|value| StreamPoint {
                        index: r.index,
                        value,
                    })
                    .ok_or_else(|| MonitorError::MetricUnavailable {
                        id: r.id.clone(),
                        metric: metric.name(),
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        MetricStream::new(points)
    }

    pub fn points(&self) -> &[StreamPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    ThresholdBreach,
    ConsecutiveRule,
    Anomaly,
    ChangePoint,
}

/// A timestamped alarm from a monitor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorEvent {
    pub index: u64,
    pub kind: EventKind,
    pub value: f64,
    pub detail: String,
}

/// Which side of a threshold triggers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdDirection {
    Below,
    Above,
}

/// Flags every value strictly beyond theta in the stated direction.
#[derive(Debug, Clone)]
pub struct ThresholdMonitor {
    theta: f64,
    direction: ThresholdDirection,
}

impl ThresholdMonitor {
    pub fn new(theta: f64, direction: ThresholdDirection) -> ThresholdMonitor {
        ThresholdMonitor { theta, direction }
    }

    pub fn feed(&mut self, index: u64, value: f64) -> Option<MonitorEvent> {
        let breached = match self.direction {
            ThresholdDirection::Below => value < self.theta,
            ThresholdDirection::Above => value > self.theta,
        };
        breached.then(|| MonitorEvent {
            index,
            kind: EventKind::ThresholdBreach,
            value,
            detail: format!(
                "value {value} {} theta {}",
                match self.direction {
                    ThresholdDirection::Below => "below",
                    ThresholdDirection::Above => "above",
                },
                self.theta
            ),
        })
    }
}

/// Batch wrapper over [`ThresholdMonitor`].
pub fn threshold_monitor(
    stream: &MetricStream,
    theta: f64,
    direction: ThresholdDirection,
) -> Vec<MonitorEvent> {
    let mut monitor = ThresholdMonitor::new(theta, direction);
    stream
        .points()
        .iter()
        .filter_map(|p| monitor.feed(p.index, p.value))
        .collect()
}

/// Fires when `m` consecutive values fall strictly below theta; the run
/// counter resets after each trigger, so repeated alarms need disjoint
/// runs.
#[derive(Debug, Clone)]
pub struct ConsecutiveRuleMonitor {
    theta: f64,
    m: usize,
    run: usize,
}

impl ConsecutiveRuleMonitor {
    pub fn new(theta: f64, m: usize) -> Result<ConsecutiveRuleMonitor, MonitorError> {
        if m == 0 {
            return Err(MonitorError::BadRunLength);
        }
        Ok(ConsecutiveRuleMonitor { theta, m, run: 0 })
    }

    pub fn feed(&mut self, index: u64, value: f64) -> Option<MonitorEvent> {
        if value < self.theta {
            self.run += 1;
            if self.run == self.m {
                self.run = 0;
                return Some(MonitorEvent {
                    index,
                    kind: EventKind::ConsecutiveRule,
                    value,
                    detail: format!("{} consecutive values below {}", self.m, self.theta),
                });
            }
        } else {
            self.run = 0;
        }
        None
    }
}

/// Earliest index at which `m` consecutive values fall strictly below
/// theta, if that ever happens.
pub fn consecutive_rule(stream: &MetricStream, theta: f64, m: usize) -> Option<u64> {
    let mut monitor = ConsecutiveRuleMonitor::new(theta, m).ok()?;
    stream
        .points()
        .iter()
        .find_map(|p| monitor.feed(p.index, p.value).map(|e| e.index))
}

/// Mean and spread of a metric over a declared nominal window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NominalProfile {
    pub mean: f64,
    pub stddev: f64,
    pub n: usize,
}

/// Summarize a nominal window (sample standard deviation, n - 1).
pub fn build_profile(nominal: &MetricStream) -> Result<NominalProfile, MonitorError> {
    let n = nominal.len();
    if n < 2 {
        return Err(MonitorError::ShortNominalWindow(n));
    }
    let mean = nominal.points().iter().map(|p| p.value).sum::<f64>() / n as f64;
    let var = nominal
        .points()
        .iter()
        .map(|p| (p.value - mean) * (p.value - mean))
        .sum::<f64>()
        / (n - 1) as f64;
    if var <= 0.0 {
        return Err(MonitorError::ZeroVariance);
    }
    Ok(NominalProfile {
        mean,
        stddev: var.sqrt(),
        n,
    })
}

/// Flags values more than `z` profile standard deviations from the
/// profile mean.
#[derive(Debug, Clone)]
pub struct ZScoreMonitor {
    profile: NominalProfile,
    z: f64,
}

impl ZScoreMonitor {
    pub fn new(profile: NominalProfile, z: f64) -> ZScoreMonitor {
        ZScoreMonitor { profile, z }
    }

    pub fn feed(&mut self, index: u64, value: f64) -> Option<MonitorEvent> {
        let score = (value - self.profile.mean).abs() / self.profile.stddev;
        (score > self.z).then(|| MonitorEvent {
            index,
            kind: EventKind::Anomaly,
            value,
            detail: format!("|z| = {score:.3} exceeds {}", self.z),
        })
    }
}

/// Batch wrapper over [`ZScoreMonitor`].
pub fn zscore_monitor(profile: NominalProfile, stream: &MetricStream, z: f64) -> Vec<MonitorEvent> {
    let mut monitor = ZScoreMonitor::new(profile, z);
    stream
        .points()
        .iter()
        .filter_map(|p| monitor.feed(p.index, p.value))
        .collect()
}

/// Page-Hinkley change-point detector for upward mean shifts.
///
/// Maintains the cumulative deviation `m_t = sum_{i<=t} (x_i - mean_i -
/// delta)` against its running minimum and alarms the first time the gap
/// exceeds lambda. `delta` is the drift allowance, `lambda` the alarm
/// threshold; `lambda = +inf` disables the detector. To detect decreases,
/// feed the negated stream.
#[derive(Debug, Clone)]
pub struct PageHinkley {
    delta: f64,
    lambda: f64,
    n: usize,
    mean: f64,
    cumulative: f64,
    min_cumulative: f64,
    alarmed: bool,
}

impl PageHinkley {
    pub fn new(delta: f64, lambda: f64) -> Result<PageHinkley, MonitorError> {
        if delta < 0.0 || lambda <= 0.0 || delta.is_nan() || lambda.is_nan() {
            return Err(MonitorError::BadPageHinkleyParams);
        }
        Ok(PageHinkley {
            delta,
            lambda,
            n: 0,
            mean: 0.0,
            cumulative: 0.0,
            min_cumulative: 0.0,
            alarmed: false,
        })
    }

    /// Feed one value; returns the change event the first time the alarm
    /// condition holds, then stays silent.
    pub fn feed(&mut self, index: u64, value: f64) -> Option<MonitorEvent> {
        if self.alarmed {
            return None;
        }
        self.n += 1;
        self.mean += (value - self.mean) / self.n as f64;
        self.cumulative += value - self.mean - self.delta;
        self.min_cumulative = self.min_cumulative.min(self.cumulative);
        if self.cumulative - self.min_cumulative > self.lambda {
            self.alarmed = true;
            return Some(MonitorEvent {
                index,
                kind: EventKind::ChangePoint,
                value,
                detail: format!(
                    "cumulative deviation {:.3} over minimum exceeds lambda {}",
                    self.cumulative - self.min_cumulative,
                    self.lambda
                ),
            });
        }
        None
    }
}

/// First index at which the Page-Hinkley statistic alarms, if any.
pub fn page_hinkley(stream: &MetricStream, delta: f64, lambda: f64) -> Option<u64> {
    let mut detector = PageHinkley::new(delta, lambda).ok()?;
    stream
        .points()
        .iter()
        .find_map(|p| detector.feed(p.index, p.value).map(|e| e.index))
}

/// An event as it appears in the durable event log: the event plus the
/// monitor that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedEvent {
    pub monitor: String,
    #[serde(flatten)]
    pub event: MonitorEvent,
}

/// Append events to the event log, one JSON line each, in the order
/// given. The file is append-only; an empty event list leaves it
/// untouched. Returns the number of lines written.
pub fn append_event_log(
    path: impl AsRef<Path>,
    monitor: &str,
    events: &[MonitorEvent],
) -> Result<usize, MonitorError> {
    if events.is_empty() {
        return Ok(0);
    }
    let path = path.as_ref();
    let io_err = |source| MonitorError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io_err)?;
    use std::io::Write;
    for event in events {
        let logged = LoggedEvent {
            monitor: monitor.to_string(),
            event: event.clone(),
        };
        let line = serde_json::to_string(&logged).expect("event serializes");
        writeln!(file, "{line}").map_err(io_err)?;
    }
    Ok(events.len())
}

/// Write a metric stream as one JSON point per line, the format monitors
/// consume and OOD scorers emit.
pub fn save_stream(path: impl AsRef<Path>, stream: &MetricStream) -> Result<(), MonitorError> {
    let path = path.as_ref();
    let mut out = String::new();
    for p in stream.points() {
        out.push_str(&serde_json::to_string(p).expect("point serializes"));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|source| MonitorError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Read a metric stream written by [`save_stream`].
pub fn load_stream(path: impl AsRef<Path>) -> Result<MetricStream, MonitorError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| MonitorError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let points = text
        .lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|e| MonitorError::MalformedEvent {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect::<Result<Vec<StreamPoint>, _>>()?;
    MetricStream::new(points)
}

/// Read an event log back, e.g. to join late-arriving ground truth by
/// stream index.
pub fn load_event_log(path: impl AsRef<Path>) -> Result<Vec<LoggedEvent>, MonitorError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| MonitorError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|e| MonitorError::MalformedEvent {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Rng, Seed};

    #[test]
    fn stream_indices_must_increase() {
        assert!(MetricStream::new(vec![
            StreamPoint { index: 3, value: 0.0 },
            StreamPoint { index: 3, value: 1.0 },
        ])
        .is_err());
    }

    #[test]
    fn threshold_monitor_cases() {
        let stream = MetricStream::from_values(&[0.99, 0.90]);
        let events = threshold_monitor(&stream, 0.95, ThresholdDirection::Below);
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].index, 1);
        assert_eq!(events[0].kind, EventKind::ThresholdBreach);

        // All above, watching for below: silent.
        let stream = MetricStream::from_values(&[0.99, 0.98]);
        assert!(threshold_monitor(&stream, 0.95, ThresholdDirection::Below).is_empty());

        // Exactly on the threshold: strict comparison, no event.
        let stream = MetricStream::from_values(&[0.95]);
        assert!(threshold_monitor(&stream, 0.95, ThresholdDirection::Below).is_empty());
        assert!(threshold_monitor(&stream, 0.95, ThresholdDirection::Above).is_empty());
    }

    #[test]
    fn consecutive_rule_cases() {
        // The 0.95/3 rule triggers on the third consecutive low frame.
        let stream = MetricStream::from_values(&[0.99, 0.90, 0.90, 0.90]);
        assert_eq!(consecutive_rule(&stream, 0.95, 3), Some(3));

        let broken = MetricStream::from_values(&[0.90, 0.90, 0.99, 0.90, 0.90]);
        assert_eq!(consecutive_rule(&broken, 0.95, 3), None);

        let high = MetricStream::from_values(&[0.99; 10]);
        assert_eq!(consecutive_rule(&high, 0.95, 3), None);
    }

    #[test]
    fn consecutive_rule_of_one_matches_threshold_monitor() {
        let stream = MetricStream::from_values(&[0.99, 0.97, 0.90, 0.80, 0.99]);
        let first_breach = threshold_monitor(&stream, 0.95, ThresholdDirection::Below)
            .first()
            .map(|e| e.index);
        assert_eq!(consecutive_rule(&stream, 0.95, 1), first_breach);
    }

    #[test]
    fn zscore_profile_and_events() {
        let nominal = MetricStream::from_values(&[1.0, 1.1, 0.9, 1.0, 1.05, 0.95]);
        let profile = build_profile(&nominal).unwrap();
        assert!((profile.mean - 1.0).abs() < 0.01);

        let mut monitor = ZScoreMonitor::new(profile, 3.0);
        assert!(monitor.feed(0, profile.mean).is_none());
        let event = monitor.feed(1, profile.mean + 10.0 * profile.stddev).unwrap();
        assert_eq!(event.kind, EventKind::Anomaly);

        let flat = MetricStream::from_values(&[2.0, 2.0, 2.0]);
        assert!(matches!(build_profile(&flat), Err(MonitorError::ZeroVariance)));
        assert!(matches!(
            build_profile(&MetricStream::from_values(&[1.0])),
            Err(MonitorError::ShortNominalWindow(1))
        ));
    }

    #[test]
    fn zscore_quiet_on_nominal_draws() {
        let mut rng = Rng::from_seed(Seed(31));
        let nominal = MetricStream::from_values(
            &(0..1000).map(|_| rng.normal()).collect::<Vec<_>>(),
        );
        let profile = build_profile(&nominal).unwrap();
        let fresh = MetricStream::from_values(
            &(0..1000).map(|_| rng.normal()).collect::<Vec<_>>(),
        );
        assert!(zscore_monitor(profile, &fresh, 6.0).is_empty());
    }

    #[test]
    fn zscore_invariant_under_affine_rescaling() {
        let mut rng = Rng::from_seed(Seed(32));
        let raw: Vec<f64> = (0..200).map(|_| rng.normal()).collect();
        let stream_raw: Vec<f64> = (0..200).map(|_| rng.normal() * 1.5).collect();
        let scale = |v: &[f64]| -> Vec<f64> { v.iter().map(|x| 7.0 * x - 3.0).collect() };

        let base_profile = build_profile(&MetricStream::from_values(&raw)).unwrap();
        let base = zscore_monitor(base_profile, &MetricStream::from_values(&stream_raw), 2.5);

        let scaled_profile = build_profile(&MetricStream::from_values(&scale(&raw))).unwrap();
        let scaled = zscore_monitor(
            scaled_profile,
            &MetricStream::from_values(&scale(&stream_raw)),
            2.5,
        );
        assert_eq!(
            base.iter().map(|e| e.index).collect::<Vec<_>>(),
            scaled.iter().map(|e| e.index).collect::<Vec<_>>()
        );
    }

    #[test]
    fn page_hinkley_constant_stream_is_silent() {
        let stream = MetricStream::from_values(&[1.0; 500]);
        assert_eq!(page_hinkley(&stream, 0.05, 50.0), None);
        assert_eq!(page_hinkley(&stream, 0.0, f64::INFINITY), None);
    }

    #[test]
    fn page_hinkley_catches_mean_step() {
        let mut rng = Rng::from_seed(Seed(33));
        let values: Vec<f64> = (0..1000)
            .map(|i| rng.normal() + if i >= 500 { 2.0 } else { 0.0 })
            .collect();
        let alarm = page_hinkley(&MetricStream::from_values(&values), 0.05, 50.0);
        let t = alarm.expect("a 2-sigma step must alarm");
        assert!((500..=650).contains(&t), "alarm at {t}");
    }

    #[test]
    fn page_hinkley_alarm_is_a_stopping_time() {
        let mut rng = Rng::from_seed(Seed(34));
        let values: Vec<f64> = (0..800)
            .map(|i| rng.normal() + if i >= 300 { 1.5 } else { 0.0 })
            .collect();
        let full = MetricStream::from_values(&values);
        let alarm = page_hinkley(&full, 0.05, 40.0).expect("alarms");
        // Truncating anywhere before the alarm never alarms.
        for cut in [100, 250, alarm as usize] {
            let prefix = MetricStream::from_values(&values[..cut]);
            assert_eq!(page_hinkley(&prefix, 0.05, 40.0), None);
        }
        // Truncating at or after the alarm reproduces it exactly.
        let at = MetricStream::from_values(&values[..=alarm as usize]);
        assert_eq!(page_hinkley(&at, 0.05, 40.0), Some(alarm));
    }

    #[test]
    fn chunked_feeding_matches_single_pass() {
        let mut rng = Rng::from_seed(Seed(35));
        let values: Vec<f64> = (0..400)
            .map(|i| 0.97 + 0.02 * rng.normal() - if i % 37 == 0 { 0.1 } else { 0.0 })
            .collect();
        let stream = MetricStream::from_values(&values);

        let one_pass: Vec<MonitorEvent> = {
            let mut m = ConsecutiveRuleMonitor::new(0.95, 2).unwrap();
            stream
                .points()
                .iter()
                .filter_map(|p| m.feed(p.index, p.value))
                .collect()
        };
        let chunked: Vec<MonitorEvent> = {
            let mut m = ConsecutiveRuleMonitor::new(0.95, 2).unwrap();
            let mut events = Vec::new();
            for chunk in stream.points().chunks(73) {
                for p in chunk {
                    events.extend(m.feed(p.index, p.value));
                }
            }
            events
        };
        assert_eq!(one_pass, chunked);

        // Same for Page-Hinkley state.
        let mut single = PageHinkley::new(0.01, 5.0).unwrap();
        let single_events: Vec<_> = stream
            .points()
            .iter()
            .filter_map(|p| single.feed(p.index, p.value))
            .collect();
        let mut chunky = PageHinkley::new(0.01, 5.0).unwrap();
        let mut chunked_events = Vec::new();
        for chunk in stream.points().chunks(41) {
            for p in chunk {
                chunked_events.extend(chunky.feed(p.index, p.value));
            }
        }
        assert_eq!(single_events, chunked_events);
    }

    #[test]
    fn event_log_round_trip_and_append() {
        let dir = std::env::temp_dir().join(format!("surety-monitor-test-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("events.jsonl");
        std::fs::remove_file(&path).ok();

        assert_eq!(append_event_log(&path, "m", &[]).unwrap(), 0);
        assert!(!path.exists());

        let events = vec![
            MonitorEvent {
                index: 3,
                kind: EventKind::ThresholdBreach,
                value: 0.9,
                detail: "t".into(),
            },
            MonitorEvent {
                index: 7,
                kind: EventKind::ChangePoint,
                value: 1.4,
                detail: "c".into(),
            },
        ];
        assert_eq!(append_event_log(&path, "conf", &events).unwrap(), 2);
        let loaded = load_event_log(&path).unwrap();
        assert_eq!(loaded.len(), 2);
        assert_eq!(loaded[0].monitor, "conf");
        assert_eq!(loaded[0].event, events[0]);

        // Appending again concatenates without truncation.
        append_event_log(&path, "conf2", &events[..1]).unwrap();
        let loaded = load_event_log(&path).unwrap();
        assert_eq!(loaded.len(), 3);
        assert_eq!(loaded[2].monitor, "conf2");
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn stream_from_records() {
        use crate::record::{ClassProbVector, Payload, PredictionRecord};
        let records: Vec<PredictionRecord> = [0.99, 0.90, 0.85]
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let probs = ClassProbVector::new(vec![c, 1.0 - c]).unwrap();
                PredictionRecord::new(
                    format!("r{i}"),
                    i as u64,
                    Payload::Classification { label: 0, probs },
                    None,
                )
                .unwrap()
            })
            .collect();
        let stream = MetricStream::from_records(&records, UncertaintyMetric::MaxProb).unwrap();
        assert_eq!(stream.len(), 3);
        assert!((stream.points()[1].value - 0.90).abs() < 1e-12);
        // Gaussian metric on classification records is unavailable.
        assert!(MetricStream::from_records(&records, UncertaintyMetric::GaussianEntropy).is_err());
    }
}
