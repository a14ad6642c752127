//! Detection-to-ground-truth matching and the resulting metrics: recall,
//! precision, their trade-off `|recall - precision|`, and interpolated
//! average precision.
//!
//! Counts are micro-averaged: true/false positives and misses are summed over
//! all frames before dividing.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bin_stats::BinSpec;
use crate::geometry::{self, Box3D, IouKind};
use crate::kitti::{FramePair, KittiRecord};
use crate::threshold::{ThresholdError, ThresholdPolicy};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("average precision is undefined without ground-truth objects")]
    NoGroundTruth,
    #[error("invalid match config: {0}")]
    InvalidConfig(String),
    #[error("reports were produced with different match configs")]
    ConfigMismatch,
    #[error(transparent)]
    Threshold(#[from] ThresholdError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApInterpolation {
    /// Recall points 0, 0.1, ..., 1.0.
    #[default]
    ElevenPoint,
    /// Recall points 1/40, 2/40, ..., 1.
    FortyPoint,
}

impl ApInterpolation {
    pub fn recall_points(&self) -> Vec<f64> {
        match self {
            ApInterpolation::ElevenPoint => (0..=10).map(|i| i as f64 / 10.0).collect(),
            ApInterpolation::FortyPoint => (1..=40).map(|i| i as f64 / 40.0).collect(),
        }
    }
}

/// KITTI difficulty strata, applied to ground truth only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Difficulty {
    Easy,
    Moderate,
    Hard,
}

impl Difficulty {
    /// (min 2D box height px, max occlusion level, max truncation)
    fn limits(&self) -> (f64, i32, f64) {
        match self {
            Difficulty::Easy => (40.0, 0, 0.15),
            Difficulty::Moderate => (25.0, 1, 0.30),
            Difficulty::Hard => (25.0, 2, 0.50),
        }
    }

    pub fn admits(&self, r: &KittiRecord) -> bool {
        let (min_height, max_occlusion, max_truncation) = self.limits();
        r.bbox_height() >= min_height
            && r.occluded <= max_occlusion
            && r.truncated <= max_truncation
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    pub iou_kind: IouKind,
    pub iou_threshold: f64,
    pub class_name: String,
    pub ap_interpolation: ApInterpolation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub difficulty: Option<Difficulty>,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            iou_kind: IouKind::Bev,
            iou_threshold: 0.7,
            class_name: "Car".into(),
            ap_interpolation: ApInterpolation::ElevenPoint,
            difficulty: None,
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            return Err(EvalError::InvalidConfig(format!(
                "iou threshold {} not in (0, 1]",
                self.iou_threshold
            )));
        }
        if self.class_name.is_empty() {
            return Err(EvalError::InvalidConfig("empty class name".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub gt_index: usize,
    pub det_index: usize,
    pub iou: f64,
}

/// Matching of one frame. Indices refer to the lists passed to [`match_frame`].
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FrameMatch {
    /// In the order detections were processed (score descending).
    pub matches: Vec<Match>,
    pub unmatched_gt: Vec<usize>,
    pub unmatched_det: Vec<usize>,
}

/// Detection indices sorted by score descending, ties by index.
pub(crate) fn score_order(det: &[KittiRecord]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..det.len()).collect();
    let score = |i: usize| det[i].score.unwrap_or(f64::NEG_INFINITY);
    order.sort_by(|&a, &b| score(b).total_cmp(&score(a)).then(a.cmp(&b)));
    order
}

/// Greedy score-ordered matching.
///
/// Detections are visited by descending score; each takes the still-unmatched
/// ground-truth box with the highest IoU, provided it reaches the threshold.
/// IoU ties go to the lower ground-truth index. Both lists are expected to be
/// filtered to the evaluated class already (see [`prepare_frame`]).
pub fn match_frame(gt: &[KittiRecord], det: &[KittiRecord], cfg: &MatchConfig) -> FrameMatch {
    let gt_boxes: Vec<Option<Box3D>> = gt.iter().map(KittiRecord::box3d).collect();
    let mut taken = vec![false; gt.len()];
    let mut result = FrameMatch::default();
    for d in score_order(det) {
        let best = det[d].box3d().and_then(|db| {
            let mut best: Option<(usize, f64)> = None;
            for (g, gb) in gt_boxes.iter().enumerate() {
                let Some(gb) = gb else { continue };
                if taken[g] {
                    continue;
                }
                let iou = geometry::iou(cfg.iou_kind, gb, &db);
                if iou >= cfg.iou_threshold && best.is_none_or(|(_, b)| iou > b) {
                    best = Some((g, iou));
                }
            }
            best
        });
        match best {
            Some((g, iou)) => {
                taken[g] = true;
                result.matches.push(Match {
                    gt_index: g,
                    det_index: d,
                    iou,
                });
            }
            None => result.unmatched_det.push(d),
        }
    }
    result.unmatched_det.sort_unstable();
    result.unmatched_gt = (0..gt.len()).filter(|&g| !taken[g]).collect();
    result
}

/// A frame restricted to the evaluated class, DontCare rows removed.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedFrame {
    pub frame_id: String,
    pub ground_truth: Vec<KittiRecord>,
    pub detections: Vec<KittiRecord>,
    pub dont_care: usize,
}

pub fn prepare_frame(frame: &FramePair, cfg: &MatchConfig) -> PreparedFrame {
    let dont_care = frame
        .ground_truth
        .iter()
        .filter(|r| r.is_dont_care())
        .count();
    let ground_truth = frame
        .ground_truth
        .iter()
        .filter(|r| !r.is_dont_care() && r.class_name == cfg.class_name)
        .filter(|r| cfg.difficulty.is_none_or(|d| d.admits(r)))
        .cloned()
        .collect();
    let detections = frame
        .detections
        .iter()
        .filter(|r| r.class_name == cfg.class_name)
        .cloned()
        .collect();
    PreparedFrame {
        frame_id: frame.frame_id.clone(),
        ground_truth,
        detections,
        dont_care,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Counts {
    pub fn add(&mut self, other: Counts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }

    /// `tp / (tp + fn)`, or 1 when there is nothing to find.
    pub fn recall(&self) -> f64 {
        if self.tp + self.fn_ == 0 {
            1.0
        } else {
            self.tp as f64 / (self.tp + self.fn_) as f64
        }
    }

    /// `tp / (tp + fp)`, or 1 when nothing was detected.
    pub fn precision(&self) -> f64 {
        if self.tp + self.fp == 0 {
            1.0
        } else {
            self.tp as f64 / (self.tp + self.fp) as f64
        }
    }
}

impl From<&FrameMatch> for Counts {
    fn from(m: &FrameMatch) -> Self {
        Counts {
            tp: m.matches.len(),
            fp: m.unmatched_det.len(),
            fn_: m.unmatched_gt.len(),
        }
    }
}

pub fn trade_off(recall: f64, precision: f64) -> f64 {
    (recall - precision).abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointMetrics {
    #[serde(flatten)]
    pub counts: Counts,
    pub recall: f64,
    pub precision: f64,
    pub trade_off: f64,
}

impl From<Counts> for PointMetrics {
    fn from(counts: Counts) -> Self {
        let recall = counts.recall();
        let precision = counts.precision();
        Self {
            counts,
            recall,
            precision,
            trade_off: trade_off(recall, precision),
        }
    }
}

/// Recall, precision and trade-off over already-thresholded detections.
pub fn point_metrics(frames: &[FramePair], cfg: &MatchConfig) -> PointMetrics {
    let mut total = Counts::default();
    for frame in frames {
        let p = prepare_frame(frame, cfg);
        total.add(Counts::from(&match_frame(
            &p.ground_truth,
            &p.detections,
            cfg,
        )));
    }
    total.into()
}

/// Area under the interpolated precision/recall curve, as a percentage.
///
/// `labels` holds `(score, is_true_positive)` for every detection; they are
/// ranked by score with a stable sort, so callers control tie order.
pub fn ap_from_labels(
    labels: &[(f64, bool)],
    num_gt: usize,
    interpolation: ApInterpolation,
) -> Result<f64, EvalError> {
    if num_gt == 0 {
        return Err(EvalError::NoGroundTruth);
    }
    let mut ranked: Vec<(f64, bool)> = labels.to_vec();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut curve = Vec::with_capacity(ranked.len());
    let (mut tp, mut fp) = (0usize, 0usize);
    for (_, is_tp) in ranked {
        if is_tp {
            tp += 1;
        } else {
            fp += 1;
        }
        curve.push((tp as f64 / num_gt as f64, tp as f64 / (tp + fp) as f64));
    }
    // precision envelope: max precision at any recall to the right
    let mut envelope = curve.clone();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i].1 = envelope[i].1.max(envelope[i + 1].1);
    }
    let points = interpolation.recall_points();
    let sum: f64 = points
        .iter()
        .map(|&r| {
            envelope
                .iter()
                .find(|&&(recall, _)| recall >= r)
                .map_or(0.0, |&(_, precision)| precision)
        })
        .sum();
    Ok(100.0 * sum / points.len() as f64)
}

/// TP/FP label of every detection of every frame, in global rank order
/// (score descending, ties by frame id then detection index).
fn ranked_labels(frames: &[FramePair], cfg: &MatchConfig) -> (Vec<(f64, bool)>, usize) {
    struct Labelled<'a> {
        score: f64,
        frame_id: &'a str,
        det_index: usize,
        tp: bool,
    }
    let mut all = Vec::new();
    let mut num_gt = 0;
    let prepared: Vec<PreparedFrame> = frames.iter().map(|f| prepare_frame(f, cfg)).collect();
    for p in &prepared {
        num_gt += p.ground_truth.len();
        let m = match_frame(&p.ground_truth, &p.detections, cfg);
        let mut is_tp = vec![false; p.detections.len()];
        for mm in &m.matches {
            is_tp[mm.det_index] = true;
        }
        for (i, r) in p.detections.iter().enumerate() {
            all.push(Labelled {
                score: r.score.unwrap_or(f64::NEG_INFINITY),
                frame_id: &p.frame_id,
                det_index: i,
                tp: is_tp[i],
            });
        }
    }
    all.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.frame_id.cmp(b.frame_id))
            .then(a.det_index.cmp(&b.det_index))
    });
    (all.into_iter().map(|l| (l.score, l.tp)).collect(), num_gt)
}

/// Interpolated average precision (percent) sweeping the detection score.
/// Detections should not be thresholded beforehand.
pub fn average_precision(frames: &[FramePair], cfg: &MatchConfig) -> Result<f64, EvalError> {
    let (labels, num_gt) = ranked_labels(frames, cfg);
    ap_from_labels(&labels, num_gt, cfg.ap_interpolation)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinMetrics {
    pub bin_index: usize,
    pub lo_m: f64,
    pub hi_m: f64,
    #[serde(flatten)]
    pub counts: Counts,
    pub recall: f64,
    pub precision: f64,
}

/// Per-distance-bin counts. Hits and misses are binned by the ground-truth
/// distance, false positives by the detection distance.
pub fn per_bin_metrics(frames: &[FramePair], cfg: &MatchConfig, bins: &BinSpec) -> Vec<BinMetrics> {
    let mut counts = vec![Counts::default(); bins.num_bins()];
    let mut bump = |distance: f64, f: &dyn Fn(&mut Counts)| {
        if let Ok(Some(i)) = bins.assign_bin(distance) {
            f(&mut counts[i]);
        }
    };
    for frame in frames {
        let p = prepare_frame(frame, cfg);
        let m = match_frame(&p.ground_truth, &p.detections, cfg);
        for mm in &m.matches {
            bump(p.ground_truth[mm.gt_index].ego_distance(), &|c| c.tp += 1);
        }
        for &g in &m.unmatched_gt {
            bump(p.ground_truth[g].ego_distance(), &|c| c.fn_ += 1);
        }
        for &d in &m.unmatched_det {
            bump(p.detections[d].ego_distance(), &|c| c.fp += 1);
        }
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(bin_index, c)| {
            let (lo_m, hi_m) = bins.bounds(bin_index);
            BinMetrics {
                bin_index,
                lo_m,
                hi_m,
                counts: c,
                recall: c.recall(),
                precision: c.precision(),
            }
        })
        .collect()
}

/// Merge the counts of every bin that overlaps `[lo, hi)`.
pub fn range_counts(per_bin: &[BinMetrics], lo: f64, hi: f64) -> Counts {
    let mut total = Counts::default();
    for b in per_bin.iter().filter(|b| b.lo_m >= lo && b.hi_m <= hi) {
        total.add(b.counts);
    }
    total
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: MatchConfig,
    pub policy: ThresholdPolicy,
    pub frames: usize,
    pub dont_care: usize,
    #[serde(flatten)]
    pub metrics: PointMetrics,
    /// AP over the unthresholded detections ("mAP" for a single class).
    pub average_precision: f64,
    /// AP over the detections surviving the threshold.
    pub average_precision_filtered: f64,
    pub per_bin: Vec<BinMetrics>,
}

pub fn apply_policy(
    frames: &[FramePair],
    policy: &ThresholdPolicy,
) -> Result<Vec<FramePair>, ThresholdError> {
    frames
        .iter()
        .map(|f| {
            Ok(FramePair {
                frame_id: f.frame_id.clone(),
                ground_truth: f.ground_truth.clone(),
                detections: policy.apply(&f.detections)?,
            })
        })
        .collect()
}

/// Threshold `frames` with `policy` and compute the full report.
pub fn evaluate(
    frames: &[FramePair],
    policy: &ThresholdPolicy,
    cfg: &MatchConfig,
    bins: &BinSpec,
) -> Result<EvalReport, EvalError> {
    cfg.validate()?;
    let filtered = apply_policy(frames, policy)?;
    let ap = average_precision(frames, cfg)?;
    let ap_filtered = average_precision(&filtered, cfg)?;
    Ok(EvalReport {
        config: cfg.clone(),
        policy: *policy,
        frames: frames.len(),
        dont_care: frames
            .iter()
            .map(|f| f.ground_truth.iter().filter(|r| r.is_dont_care()).count())
            .sum(),
        metrics: point_metrics(&filtered, cfg),
        average_precision: ap,
        average_precision_filtered: ap_filtered,
        per_bin: per_bin_metrics(&filtered, cfg, bins),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricDelta {
    pub metric: String,
    pub before: f64,
    pub after: f64,
    /// `after - before`.
    pub delta: f64,
}

impl MetricDelta {
    pub fn annotation(&self) -> String {
        format_delta(self.delta)
    }
}

/// `(-0.015)` style annotation rounded to three decimals.
pub fn format_delta(delta: f64) -> String {
    let rounded = (delta * 1000.0).round() / 1000.0;
    if rounded == 0.0 {
        "(0.000)".to_string()
    } else {
        format!("({rounded:+.3})")
    }
}

/// Per-metric `b - a`.
pub fn compare_reports(a: &EvalReport, b: &EvalReport) -> Result<Vec<MetricDelta>, EvalError> {
    if a.config != b.config {
        return Err(EvalError::ConfigMismatch);
    }
    let pairs = [
        ("recall", a.metrics.recall, b.metrics.recall),
        ("precision", a.metrics.precision, b.metrics.precision),
        ("trade_off", a.metrics.trade_off, b.metrics.trade_off),
        ("map", a.average_precision, b.average_precision),
        (
            "map_filtered",
            a.average_precision_filtered,
            b.average_precision_filtered,
        ),
        ("tp", a.metrics.counts.tp as f64, b.metrics.counts.tp as f64),
        ("fp", a.metrics.counts.fp as f64, b.metrics.counts.fp as f64),
        (
            "fn",
            a.metrics.counts.fn_ as f64,
            b.metrics.counts.fn_ as f64,
        ),
    ];
    Ok(pairs
        .iter()
        .map(|&(metric, before, after)| MetricDelta {
            metric: metric.to_string(),
            before,
            after,
            delta: after - before,
        })
        .collect())
}
