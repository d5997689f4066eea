//! Object-detection evaluation: box overlap measures, one-to-one matching,
//! the two per-pair failure conditions, and confidence-ranked
//! precision/recall summaries (AP@tau, AR@tau, mAP).
//!
//! Two matching protocols are exposed on purpose. [`match_detections`]
//! computes the maximum-total-IoU one-to-one assignment (Hungarian on cost
//! 1 - IoU) and feeds the per-pair failure conditions. [`ap_at`] and
//! friends use the standard greedy confidence-ordered protocol, which is
//! what precision/recall curves are defined over.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::record::{Payload, PredictionRecord, Truth};

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("box corners must satisfy x_min < x_max and y_min < y_max, got [{0}, {1}] x [{2}, {3}]")]
    DegenerateBox(f64, f64, f64, f64),
    #[error("box coordinates must be finite")]
    NonFiniteBox,
    #[error("confidence {0} is outside [0, 1]")]
    ConfidenceOutOfRange(f64),
    #[error("record {id} does not carry a detection payload")]
    NotADetectionRecord { id: String },
    #[error("record {id} has no object ground truth")]
    MissingObjects { id: String },
    #[error("iou threshold {0} is outside [0, 1]")]
    BadIouThreshold(f64),
    #[error("no ground-truth objects in any image")]
    NoGroundTruth,
}

/// An axis-aligned box in corner format, strictly positive area.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

impl BBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<BBox, DetectError> {
        if ![x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite()) {
            return Err(DetectError::NonFiniteBox);
        }
        if x_min >= x_max || y_min >= y_max {
            return Err(DetectError::DegenerateBox(x_min, x_max, y_min, y_max));
        }
        Ok(BBox {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }

    fn intersection_area(&self, other: &BBox) -> f64 {
        let w = (self.x_max.min(other.x_max) - self.x_min.max(other.x_min)).max(0.0);
        let h = (self.y_max.min(other.y_max) - self.y_min.max(other.y_min)).max(0.0);
        w * h
    }

    fn enclosing_area(&self, other: &BBox) -> f64 {
        let w = self.x_max.max(other.x_max) - self.x_min.min(other.x_min);
        let h = self.y_max.max(other.y_max) - self.y_min.min(other.y_min);
        w * h
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = DetectError;
    fn try_from(v: [f64; 4]) -> Result<BBox, DetectError> {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> [f64; 4] {
        [b.x_min, b.y_min, b.x_max, b.y_max]
    }
}

/// A labeled ground-truth object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthObject {
    pub bbox: BBox,
    pub class_id: usize,
}

/// A predicted detection with its confidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDetection", into = "RawDetection")]
pub struct Detection {
    pub bbox: BBox,
    pub class_id: usize,
    pub confidence: f64,
}

#[derive(Serialize, Deserialize)]
struct RawDetection {
    bbox: BBox,
    class_id: usize,
    confidence: f64,
}

impl Detection {
    pub fn new(bbox: BBox, class_id: usize, confidence: f64) -> Result<Detection, DetectError> {
        if !confidence.is_finite() || !(0.0..=1.0).contains(&confidence) {
            return Err(DetectError::ConfidenceOutOfRange(confidence));
        }
        Ok(Detection {
            bbox,
            class_id,
            confidence,
        })
    }
}

impl TryFrom<RawDetection> for Detection {
    type Error = DetectError;
    fn try_from(r: RawDetection) -> Result<Detection, DetectError> {
        Detection::new(r.bbox, r.class_id, r.confidence)
    }
}

impl From<Detection> for RawDetection {
    fn from(d: Detection) -> RawDetection {
        RawDetection {
            bbox: d.bbox,
            class_id: d.class_id,
            confidence: d.confidence,
        }
    }
}

/// Intersection over union of two boxes, in [0, 1].
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Generalized IoU: IoU minus the enclosing-box slack, in (-1, 1].
/// Identical boxes score 1; far-apart boxes approach -1.
pub fn giou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    let enclosing = a.enclosing_area(b);
    iou(a, b) - (enclosing - union) / enclosing
}

/// One matched (detection, truth) pair and its IoU.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub detection: usize,
    pub truth: usize,
    pub iou: f64,
}

/// Result of one-to-one matching on a single image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub pairs: Vec<MatchedPair>,
    /// Detection indices with no matched truth (false positives).
    pub unmatched_detections: Vec<usize>,
    /// Truth indices with no matched detection (false negatives).
    pub unmatched_truths: Vec<usize>,
}

/// Maximum-total-IoU one-to-one assignment between detections and truths,
/// with pairs below the IoU threshold demoted to unmatched afterwards.
///
/// Hungarian assignment on cost 1 - IoU; ties between equal-total
/// assignments resolve deterministically with earlier detection indices
/// getting first pick.
pub fn match_detections(
    detections: &[Detection],
    truths: &[GroundTruthObject],
    tau: f64,
) -> Result<MatchResult, DetectError> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(DetectError::BadIouThreshold(tau));
    }
    let n_det = detections.len();
    let n_tru = truths.len();
    if n_det == 0 || n_tru == 0 {
        return Ok(MatchResult {
            pairs: Vec::new(),
            unmatched_detections: (0..n_det).collect(),
            unmatched_truths: (0..n_tru).collect(),
        });
    }

    // Square cost matrix padded with dummy rows/columns. A real pair costs
    // 1 - IoU; pairing a real item with a dummy costs 1 and dummy-with-dummy
    // costs 0, so the optimum always pairs min(n, m) real items.
    let side = n_det.max(n_tru);
    let mut cost = vec![vec![0.0f64; side]; side];
    for (i, row) in cost.iter_mut().enumerate() {
        for (j, c) in row.iter_mut().enumerate() {
            *c = if i < n_det && j < n_tru {
                1.0 - iou(&detections[i].bbox, &truths[j].bbox)
            } else if i < n_det || j < n_tru {
                1.0
            } else {
                0.0
            };
        }
    }
    let assignment = hungarian_min_cost(&cost);

    let mut pairs = Vec::new();
    let mut unmatched_detections = Vec::new();
    let mut matched_truths = vec![false; n_tru];
    for (det, &tru) in assignment.iter().enumerate().take(n_det) {
        if tru < n_tru {
            let overlap = iou(&detections[det].bbox, &truths[tru].bbox);
            if overlap >= tau {
                pairs.push(MatchedPair {
                    detection: det,
                    truth: tru,
                    iou: overlap,
                });
                matched_truths[tru] = true;
                continue;
            }
        }
        unmatched_detections.push(det);
    }
    let unmatched_truths = (0..n_tru).filter(|&t| !matched_truths[t]).collect();
    Ok(MatchResult {
        pairs,
        unmatched_detections,
        unmatched_truths,
    })
}

/// O(n^3) Hungarian algorithm (shortest augmenting paths with potentials)
/// on a square cost matrix. Returns, for each row, the assigned column.
fn hungarian_min_cost(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    // 1-based internals; row/column 0 is a sentinel.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut assigned_row = vec![0usize; n + 1]; // column -> row
    let mut way = vec![0usize; n + 1];

    for row in 1..=n {
        assigned_row[0] = row;
        let mut col0 = 0usize;
        let mut min_to = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let row0 = assigned_row[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0usize;
            for col in 1..=n {
                if !used[col] {
                    let reduced = cost[row0 - 1][col - 1] - u[row0] - v[col];
                    if reduced < min_to[col] {
                        min_to[col] = reduced;
                        way[col] = col0;
                    }
                    if min_to[col] < delta {
                        delta = min_to[col];
                        col1 = col;
                    }
                }
            }
            for col in 0..=n {
                if used[col] {
                    u[assigned_row[col]] += delta;
                    v[col] -= delta;
                } else {
                    min_to[col] -= delta;
                }
            }
            col0 = col1;
            if assigned_row[col0] == 0 {
                break;
            }
        }
        // Unwind the augmenting path.
        while col0 != 0 {
            let col1 = way[col0];
            assigned_row[col0] = assigned_row[col1];
            col0 = col1;
        }
    }

    let mut result = vec![usize::MAX; n];
    for col in 1..=n {
        if assigned_row[col] >= 1 {
            result[assigned_row[col] - 1] = col - 1;
        }
    }
    result
}

/// True when a matched pair disagrees on class (zero/one error of 1).
pub fn classification_failure(detection: &Detection, truth: &GroundTruthObject) -> bool {
    detection.class_id != truth.class_id
}

/// Default GIoU bound below which localization counts as a failure.
pub const DEFAULT_GIOU_FAILURE_THRESHOLD: f64 = 0.8;

/// True when a matched pair localizes at GIoU <= `tau_g` (inclusive).
pub fn localization_failure(detection: &Detection, truth: &GroundTruthObject, tau_g: f64) -> bool {
    giou(&detection.bbox, &truth.bbox) <= tau_g
}

/// Detections and ground truth for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSample {
    pub detections: Vec<Detection>,
    pub truths: Vec<GroundTruthObject>,
}

/// Pull per-image detection samples out of prediction records.
pub fn images_from_records(records: &[PredictionRecord]) -> Result<Vec<ImageSample>, DetectError> {
    records
        .iter()
        .map(|r| {
            let detections = match &r.payload {
                Payload::Detections { detections } => detections.clone(),
                _ => {
                    return Err(DetectError::NotADetectionRecord { id: r.id.clone() });
                }
            };
            let truths = match &r.truth {
                Some(Truth::Objects { objects }) => objects.clone(),
                _ => return Err(DetectError::MissingObjects { id: r.id.clone() }),
            };
            Ok(ImageSample { detections, truths })
        })
        .collect()
}

/// A class-averaged detection score plus the classes that had to be
/// skipped for lack of ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionScore {
    pub value: f64,
    pub per_class: BTreeMap<usize, f64>,
    pub excluded_classes: Vec<usize>,
}

struct RankedFlags {
    /// (is true positive) per detection, sorted by descending confidence.
    tp: Vec<bool>,
    total_truths: usize,
}

/// Greedy confidence-ordered matching for one class: each truth is used at
/// most once; a detection is a true positive when it finds an unused truth
/// of the same class in its image at IoU >= tau.
fn rank_class(images: &[ImageSample], class_id: usize, tau: f64) -> RankedFlags {
    let mut order: Vec<(usize, usize)> = Vec::new(); // (image, det index)
    for (img_idx, img) in images.iter().enumerate() {
        for (det_idx, det) in img.detections.iter().enumerate() {
            if det.class_id == class_id {
                order.push((img_idx, det_idx));
            }
        }
    }
    order.sort_by(|a, b| {
        let ca = images[a.0].detections[a.1].confidence;
        let cb = images[b.0].detections[b.1].confidence;
        cb.partial_cmp(&ca).unwrap().then(a.cmp(b))
    });

    let mut used: Vec<Vec<bool>> = images.iter().map(|img| vec![false; img.truths.len()]).collect();
    let total_truths = images
        .iter()
        .map(|img| img.truths.iter().filter(|t| t.class_id == class_id).count())
        .sum();

    let mut tp = Vec::with_capacity(order.len());
    for (img_idx, det_idx) in order {
        let img = &images[img_idx];
        let det = &img.detections[det_idx];
        let mut best: Option<(usize, f64)> = None;
        for (t_idx, truth) in img.truths.iter().enumerate() {
            if truth.class_id != class_id || used[img_idx][t_idx] {
                continue;
            }
            let overlap = iou(&det.bbox, &truth.bbox);
            if overlap >= tau {
                let better = match best {
                    None => true,
                    Some((_, b)) => overlap > b,
                };
                if better {
                    best = Some((t_idx, overlap));
                }
            }
        }
        match best {
            Some((t_idx, _)) => {
                used[img_idx][t_idx] = true;
                tp.push(true);
            }
            None => tp.push(false),
        }
    }
    RankedFlags { tp, total_truths }
}

fn class_ids(images: &[ImageSample]) -> Vec<usize> {
    let mut ids: Vec<usize> = images
        .iter()
        .flat_map(|img| {
            img.truths
                .iter()
                .map(|t| t.class_id)
                .chain(img.detections.iter().map(|d| d.class_id))
        })
        .collect();
    ids.sort_unstable();
    ids.dedup();
    ids
}

/// All-point-interpolated average precision from a ranked TP/FP sequence.
fn average_precision(flags: &RankedFlags) -> f64 {
    if flags.total_truths == 0 {
        return 0.0;
    }
    let mut points: Vec<(f64, f64)> = Vec::with_capacity(flags.tp.len()); // (recall, precision)
    let mut tp_count = 0usize;
    for (i, &is_tp) in flags.tp.iter().enumerate() {
        if is_tp {
            tp_count += 1;
        }
        let precision = tp_count as f64 / (i + 1) as f64;
        let recall = tp_count as f64 / flags.total_truths as f64;
        points.push((recall, precision));
    }
    // Precision envelope: at each point take the max precision at any
    // recall level at or beyond it, then integrate over recall steps.
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for i in 0..points.len() {
        let (recall, _) = points[i];
        if recall > prev_recall {
            let envelope = points[i..]
                .iter()
                .map(|&(_, p)| p)
                .fold(0.0f64, f64::max);
            ap += (recall - prev_recall) * envelope;
            prev_recall = recall;
        }
    }
    ap
}

fn per_class_scores<F>(images: &[ImageSample], tau: f64, score: F) -> Result<DetectionScore, DetectError>
where
    F: Fn(&RankedFlags) -> f64,
{
    if !(0.0..=1.0).contains(&tau) {
        return Err(DetectError::BadIouThreshold(tau));
    }
    let mut per_class = BTreeMap::new();
    let mut excluded = Vec::new();
    for class_id in class_ids(images) {
        let flags = rank_class(images, class_id, tau);
        if flags.total_truths == 0 {
            excluded.push(class_id);
            continue;
        }
        per_class.insert(class_id, score(&flags));
    }
    if per_class.is_empty() {
        return Err(DetectError::NoGroundTruth);
    }
    let value = per_class.values().sum::<f64>() / per_class.len() as f64;
    Ok(DetectionScore {
        value,
        per_class,
        excluded_classes: excluded,
    })
}

/// AP@tau: class-averaged all-point-interpolated average precision at the
/// given IoU threshold.
pub fn ap_at(images: &[ImageSample], tau: f64) -> Result<DetectionScore, DetectError> {
    per_class_scores(images, tau, average_precision)
}

/// AR@tau: class-averaged recall over all emitted detections, with no
/// confidence cutoff. 1 exactly when every object is detected.
pub fn ar_at(images: &[ImageSample], tau: f64) -> Result<DetectionScore, DetectError> {
    per_class_scores(images, tau, |flags| {
        let matched = flags.tp.iter().filter(|&&t| t).count();
        matched as f64 / flags.total_truths as f64
    })
}

/// Mean average precision: AP@tau averaged over the given IoU thresholds.
pub fn mean_average_precision(
    images: &[ImageSample],
    taus: &[f64],
) -> Result<DetectionScore, DetectError> {
    assert!(!taus.is_empty(), "mAP needs at least one IoU threshold");
    let mut per_class: BTreeMap<usize, f64> = BTreeMap::new();
    let mut excluded = Vec::new();
    let mut total = 0.0;
    for &tau in taus {
        let score = ap_at(images, tau)?;
        total += score.value;
        for (c, v) in score.per_class {
            *per_class.entry(c).or_insert(0.0) += v / taus.len() as f64;
        }
        for c in score.excluded_classes {
            if !excluded.contains(&c) {
                excluded.push(c);
            }
        }
    }
    Ok(DetectionScore {
        value: total / taus.len() as f64,
        per_class,
        excluded_classes: excluded,
    })
}

/// The detection metric a gate evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "metric", rename_all = "snake_case")]
pub enum DetectionMetric {
    ApAt { tau: f64 },
    ArAt { tau: f64 },
}

/// A satisficing deployment gate over a detection slice, e.g. "recall at
/// IoU 0.8 on the pedestrian slice must reach 1".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionGate {
    pub name: String,
    pub slice: crate::slice::DatasetSlice,
    #[serde(flatten)]
    pub metric: DetectionMetric,
    /// The score must be at least this to pass (less is failure).
    pub bound: f64,
}

/// Evaluate a detection gate over a dataset of detection records. An
/// empty slice is an error, never a vacuous pass.
pub fn detection_satisficing_gate(
    dataset: &[PredictionRecord],
    gate: &DetectionGate,
) -> Result<crate::testcase::TestOutcome, crate::testcase::TestError> {
    use crate::testcase::{Direction, TestError, TestOutcome, Verdict};
    let selected = crate::slice::slice(dataset, &gate.slice);
    if selected.is_empty() {
        return Err(TestError::EmptySlice {
            case: gate.name.clone(),
            slice: gate.slice.name.clone(),
        });
    }
    let images = images_from_records(&selected).map_err(|e| TestError::Detection {
        case: gate.name.clone(),
        message: e.to_string(),
    })?;
    let score = match gate.metric {
        DetectionMetric::ApAt { tau } => ap_at(&images, tau),
        DetectionMetric::ArAt { tau } => ar_at(&images, tau),
    }
    .map_err(|e| TestError::Detection {
        case: gate.name.clone(),
        message: e.to_string(),
    })?;
    let verdict = if score.value < gate.bound {
        Verdict::Fail
    } else {
        Verdict::Pass
    };
    Ok(TestOutcome {
        case: gate.name.clone(),
        score: score.value,
        n: selected.len(),
        verdict,
        satisficing: true,
        direction: Direction::LessIsFailure,
    })
}
