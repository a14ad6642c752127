//! Seeded synthetic scenes with a distance-dependent score model.
//!
//! Every random draw comes from [`SplitMix64`], so a [`ScenarioSpec`] fully
//! determines the generated frames on every platform. Reference outputs for
//! seed 0 are `0xe220a8397b1dcdaf`, `0x6e789e6aa1b965f4`, `0x06c45d188009454f`.
//!
//! Real objects get car-sized boxes placed at least [`MIN_CENTER_SPACING`]
//! apart, so a detection of one object never overlaps another. A detection of
//! a real object is the object box with a few centimeters of jitter and score
//! `a·d² + b·d + c + noise`, clamped to `[0, 1]`. Each frame gets at most one
//! false positive per distance bin (with probability `fp_rate_per_bin`),
//! placed in free space inside that bin with a score uniform below the
//! true-positive mean at its distance. All reals are rounded to six decimals
//! so that writing and re-reading KITTI files reproduces them exactly.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bin_stats::BinSpec;
use crate::evaluation::Counts;
use crate::geometry::normalize_angle;
use crate::kitti::{FramePair, KittiRecord};
use crate::threshold::ThresholdModel;

pub const CAR_DIMS: [f64; 3] = [1.5, 1.7, 4.0];
pub const DIM_JITTER: f64 = 0.1;
pub const MIN_CENTER_SPACING: f64 = 6.0;
pub const DETECTION_JITTER: f64 = 0.05;
/// Half-angle of the horizontal field of view objects are placed in.
pub const HALF_FOV: f64 = PI / 3.0;
const CAMERA_HEIGHT: f64 = 1.7;
const MAX_PLACEMENT_ATTEMPTS: usize = 200;

// KITTI-like pinhole, only used to fill plausible 2D boxes
const FOCAL: f64 = 721.5377;
const PRINCIPAL: [f64; 2] = [609.5593, 172.854];
const IMAGE_SIZE: [f64; 2] = [1242.0, 375.0];

/// SplitMix64 (Steele, Lea & Flood): a 64-bit counter passed through a
/// fixed mixing function.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)` with 53 bits of resolution.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in `[lo, hi]`.
    pub fn range_inclusive(&mut self, lo: usize, hi: usize) -> usize {
        let span = (hi - lo) as u64 + 1;
        lo + (self.next_u64() % span) as usize
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    /// Box–Muller, one draw per call.
    pub fn normal(&mut self, mean: f64, std: f64) -> f64 {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        mean + std * (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreModel {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// Score noise std per distance bin; the last entry covers further bins.
    pub noise_std_per_bin: Vec<f64>,
}

impl ScoreModel {
    pub fn raw_score(&self, d: f64) -> f64 {
        self.a * d * d + self.b * d + self.c
    }

    /// Noise-free true-positive score at distance `d`, clamped to `[0, 1]`.
    pub fn mean_score(&self, d: f64) -> f64 {
        self.raw_score(d).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub seed: u64,
    pub n_frames: usize,
    /// Inclusive range.
    pub objects_per_frame: (usize, usize),
    pub distance_range: (f64, f64),
    pub score_model: ScoreModel,
    pub fp_rate_per_bin: Vec<f64>,
    pub fn_rate_per_bin: Vec<f64>,
    #[serde(default)]
    pub bins: BinSpec,
    #[serde(default = "default_class")]
    pub class_name: String,
}

fn default_class() -> String {
    "Car".to_string()
}

impl Default for ScenarioSpec {
    /// Confident near range, dim and lossy far range, clutter near the ego.
    fn default() -> Self {
        Self {
            seed: 0,
            n_frames: 200,
            objects_per_frame: (4, 12),
            distance_range: (2.0, 60.0),
            score_model: ScoreModel {
                a: -0.0001,
                b: -0.004,
                c: 0.95,
                noise_std_per_bin: vec![0.05, 0.05, 0.06, 0.08, 0.1, 0.1],
            },
            fp_rate_per_bin: vec![0.4, 0.4, 0.3, 0.2, 0.1, 0.1],
            fn_rate_per_bin: vec![0.0, 0.02, 0.05, 0.1, 0.15, 0.2],
            bins: BinSpec::default(),
            class_name: default_class(),
        }
    }
}

fn per_bin(values: &[f64], bin: usize) -> f64 {
    values.get(bin).or(values.last()).copied().unwrap_or(0.0)
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |m: &str| Err(ScenarioError::Invalid(m.to_string()));
        if self.n_frames == 0 {
            return invalid("n_frames must be positive");
        }
        let (lo_n, hi_n) = self.objects_per_frame;
        if lo_n > hi_n {
            return invalid("objects_per_frame range is reversed");
        }
        let (lo, hi) = self.distance_range;
        if !(0.0 <= lo && lo < hi && hi <= 120.0) {
            return invalid("distance_range must satisfy 0 <= lo < hi <= 120");
        }
        let rate_ok = |v: &[f64]| v.iter().all(|r| (0.0..=1.0).contains(r));
        if !rate_ok(&self.fp_rate_per_bin) || !rate_ok(&self.fn_rate_per_bin) {
            return invalid("rates must lie in [0, 1]");
        }
        if self
            .score_model
            .noise_std_per_bin
            .iter()
            .any(|s| !(s.is_finite() && *s >= 0.0))
        {
            return invalid("noise std must be non-negative");
        }
        let m = &self.score_model;
        if ![m.a, m.b, m.c].iter().all(|v| v.is_finite()) {
            return invalid("score model coefficients must be finite");
        }
        if self.class_name.is_empty() {
            return invalid("class_name must be nonempty");
        }
        Ok(())
    }

    fn bin_of(&self, d: f64) -> usize {
        match self.bins.assign_bin(d) {
            Ok(Some(b)) => b,
            _ => self.bins.num_bins(),
        }
    }
}

/// Provenance of one generated detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Origin {
    /// Detection of ground-truth object at this index.
    Object(usize),
    FalsePositive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub frames: Vec<FramePair>,
    /// Parallel to each frame's `detections`.
    pub origins: Vec<Vec<Origin>>,
}

fn quantize(v: f64) -> f64 {
    let q = (v * 1e6).round() / 1e6;
    if q == 0.0 {
        0.0
    } else {
        q
    }
}

fn sample_position(rng: &mut SplitMix64, lo: f64, hi: f64) -> [f64; 3] {
    let d = rng.uniform(lo, hi);
    let theta = rng.uniform(-HALF_FOV, HALF_FOV);
    [
        quantize(d * theta.sin()),
        CAMERA_HEIGHT,
        quantize(d * theta.cos()),
    ]
}

fn clear_of(center: [f64; 3], placed: &[[f64; 3]]) -> bool {
    placed
        .iter()
        .all(|p| (p[0] - center[0]).hypot(p[2] - center[2]) >= MIN_CENTER_SPACING)
}

fn place(rng: &mut SplitMix64, lo: f64, hi: f64, placed: &[[f64; 3]]) -> Option<[f64; 3]> {
    (0..MAX_PLACEMENT_ATTEMPTS)
        .map(|_| sample_position(rng, lo, hi))
        .find(|c| clear_of(*c, placed))
}

fn bbox_2d(center: [f64; 3], dims: [f64; 3]) -> [f64; 4] {
    let z = center[2].max(1.0);
    let u = FOCAL * center[0] / z + PRINCIPAL[0];
    let v_bottom = FOCAL * center[1] / z + PRINCIPAL[1];
    let half_w = 0.5 * FOCAL * dims[1].max(dims[2]) / z;
    let h = FOCAL * dims[0] / z;
    let clip = |x: f64, max: f64| quantize(x.clamp(0.0, max));
    let left = clip(u - half_w, IMAGE_SIZE[0]);
    let right = clip(u + half_w, IMAGE_SIZE[0]).max(left);
    let top = clip(v_bottom - h, IMAGE_SIZE[1]);
    let bottom = clip(v_bottom, IMAGE_SIZE[1]).max(top);
    [left, top, right, bottom]
}

fn record(
    class_name: &str,
    center: [f64; 3],
    dims: [f64; 3],
    yaw: f64,
    score: Option<f64>,
) -> KittiRecord {
    let yaw = quantize(normalize_angle(yaw));
    KittiRecord {
        class_name: class_name.to_string(),
        truncated: 0.0,
        occluded: 0,
        alpha: quantize(normalize_angle(yaw - center[0].atan2(center[2]))),
        bbox_2d: bbox_2d(center, dims),
        dimensions: dims.map(quantize),
        location: center,
        rotation_y: yaw,
        score: score.map(quantize),
    }
}

fn generate_frame(
    spec: &ScenarioSpec,
    rng: &mut SplitMix64,
) -> (Vec<KittiRecord>, Vec<KittiRecord>, Vec<Origin>) {
    let (lo, hi) = spec.distance_range;
    let n = rng.range_inclusive(spec.objects_per_frame.0, spec.objects_per_frame.1);
    let mut placed: Vec<[f64; 3]> = Vec::new();
    let mut gt = Vec::new();
    let mut det = Vec::new();
    let mut origins = Vec::new();
    let class = spec.class_name.as_str();

    for _ in 0..n {
        let Some(center) = place(rng, lo, hi, &placed) else {
            continue;
        };
        placed.push(center);
        let dims = CAR_DIMS.map(|d| quantize(d + rng.uniform(-DIM_JITTER, DIM_JITTER)));
        let yaw = rng.uniform(-PI, PI);
        let gt_record = record(class, center, dims, yaw, None);
        let distance = gt_record.ego_distance();
        let bin = spec.bin_of(distance);
        let gt_index = gt.len();
        gt.push(gt_record);

        let missed = rng.bernoulli(per_bin(&spec.fn_rate_per_bin, bin));
        let jitter = [
            rng.uniform(-DETECTION_JITTER, DETECTION_JITTER),
            rng.uniform(-DETECTION_JITTER, DETECTION_JITTER),
        ];
        let noise = rng.normal(0.0, per_bin(&spec.score_model.noise_std_per_bin, bin));
        if !missed {
            let det_center = [
                quantize(center[0] + jitter[0]),
                center[1],
                quantize(center[2] + jitter[1]),
            ];
            let score = (spec.score_model.raw_score(distance) + noise).clamp(0.0, 1.0);
            det.push(record(class, det_center, dims, yaw, Some(score)));
            origins.push(Origin::Object(gt_index));
        }
    }

    for bin in 0..spec.bins.num_bins() {
        if !rng.bernoulli(per_bin(&spec.fp_rate_per_bin, bin)) {
            continue;
        }
        let (bin_lo, bin_hi) = spec.bins.bounds(bin);
        let (fp_lo, fp_hi) = (bin_lo.max(lo), bin_hi.min(hi));
        if fp_lo >= fp_hi {
            continue;
        }
        if let Some(center) = place(rng, fp_lo, fp_hi, &placed) {
            placed.push(center);
            let dims = CAR_DIMS.map(|d| quantize(d + rng.uniform(-DIM_JITTER, DIM_JITTER)));
            let yaw = rng.uniform(-PI, PI);
            let d = center[0].hypot(center[2]);
            let score = rng.uniform(0.0, spec.score_model.mean_score(d));
            det.push(record(class, center, dims, yaw, Some(score)));
            origins.push(Origin::FalsePositive);
        }
    }
    (gt, det, origins)
}

/// Generate the scenario and keep the provenance of every detection.
pub fn generate_with_truth(spec: &ScenarioSpec) -> Result<SyntheticDataset, ScenarioError> {
    spec.validate()?;
    let mut rng = SplitMix64::new(spec.seed);
    let mut frames = Vec::with_capacity(spec.n_frames);
    let mut origins = Vec::with_capacity(spec.n_frames);
    for i in 0..spec.n_frames {
        let (ground_truth, detections, o) = generate_frame(spec, &mut rng);
        frames.push(FramePair {
            frame_id: format!("{i:06}"),
            ground_truth,
            detections,
        });
        origins.push(o);
    }
    Ok(SyntheticDataset { frames, origins })
}

pub fn generate(spec: &ScenarioSpec) -> Result<Vec<FramePair>, ScenarioError> {
    generate_with_truth(spec).map(|d| d.frames)
}

/// Expected `(tp, fp, fn)` after thresholding with `model`, counted from the
/// generator's provenance rather than by geometric matching.
pub fn known_optimal_counts(
    spec: &ScenarioSpec,
    model: &ThresholdModel,
) -> Result<Counts, ScenarioError> {
    let data = generate_with_truth(spec)?;
    Ok(counts_from_truth(&data, model))
}

pub fn counts_from_truth(data: &SyntheticDataset, model: &ThresholdModel) -> Counts {
    let mut total = Counts::default();
    for (frame, origins) in data.frames.iter().zip(&data.origins) {
        let mut tp = 0;
        for (r, origin) in frame.detections.iter().zip(origins) {
            let score = r.score.unwrap_or(f64::NEG_INFINITY);
            let threshold = model
                .threshold_at(r.ego_distance())
                .expect("distances are non-negative");
            if score < threshold {
                continue;
            }
            match origin {
                Origin::Object(_) => tp += 1,
                Origin::FalsePositive => total.fp += 1,
            }
        }
        total.tp += tp;
        total.fn_ += frame.ground_truth.len() - tp;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splitmix_reference_vectors() {
        let mut rng = SplitMix64::new(0);
        assert_eq!(rng.next_u64(), 0xe220a8397b1dcdaf);
        assert_eq!(rng.next_u64(), 0x6e789e6aa1b965f4);
        assert_eq!(rng.next_u64(), 0x06c45d188009454f);
        let mut rng = SplitMix64::new(1234567);
        assert_eq!(rng.next_u64(), 6457827717110365317);
        assert_eq!(rng.next_u64(), 3203168211198807973);
        assert_eq!(rng.next_u64(), 9817491932198370423);
    }

    #[test]
    fn uniform_draws_stay_in_range() {
        let mut rng = SplitMix64::new(7);
        for _ in 0..10_000 {
            let u = rng.next_f64();
            assert!((0.0..1.0).contains(&u));
            let k = rng.range_inclusive(3, 5);
            assert!((3..=5).contains(&k));
        }
    }

    #[test]
    fn normal_moments() {
        let mut rng = SplitMix64::new(11);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| rng.normal(1.0, 2.0)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.02);
        assert!((var.sqrt() - 2.0).abs() < 0.02);
    }

    #[test]
    fn spec_validation() {
        assert!(ScenarioSpec::default().validate().is_ok());
        let bad = ScenarioSpec {
            n_frames: 0,
            ..ScenarioSpec::default()
        };
        assert!(bad.validate().is_err());
        let bad = ScenarioSpec {
            distance_range: (0.0, 150.0),
            ..ScenarioSpec::default()
        };
        assert!(bad.validate().is_err());
        let bad = ScenarioSpec {
            fp_rate_per_bin: vec![1.5],
            ..ScenarioSpec::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn provenance_is_parallel_to_detections() {
        let data = generate_with_truth(&ScenarioSpec {
            n_frames: 20,
            ..ScenarioSpec::default()
        })
        .unwrap();
        for (f, o) in data.frames.iter().zip(&data.origins) {
            assert_eq!(f.detections.len(), o.len());
            for origin in o {
                if let Origin::Object(g) = origin {
                    assert!(*g < f.ground_truth.len());
                }
            }
        }
    }

    #[test]
    fn objects_keep_their_spacing() {
        let frames = generate(&ScenarioSpec {
            n_frames: 30,
            ..ScenarioSpec::default()
        })
        .unwrap();
        for f in &frames {
            let centers: Vec<_> = f.ground_truth.iter().map(|r| r.location).collect();
            for (i, a) in centers.iter().enumerate() {
                assert!(clear_of(*a, &centers[i + 1..]));
            }
        }
    }

    #[test]
    fn trivial_scene_counts() {
        let spec = ScenarioSpec {
            n_frames: 1,
            objects_per_frame: (1, 1),
            fp_rate_per_bin: vec![0.0],
            fn_rate_per_bin: vec![0.0],
            ..ScenarioSpec::default()
        };
        let counts = known_optimal_counts(&spec, &ThresholdModel::constant(0.0).unwrap()).unwrap();
        assert_eq!(
            counts,
            Counts {
                tp: 1,
                fp: 0,
                fn_: 0
            }
        );
    }

    #[test]
    fn all_false_positive_scene() {
        let spec = ScenarioSpec {
            n_frames: 5,
            objects_per_frame: (0, 0),
            fp_rate_per_bin: vec![1.0],
            ..ScenarioSpec::default()
        };
        let data = generate_with_truth(&spec).unwrap();
        let model = ThresholdModel::constant(0.3).unwrap();
        let survivors = data
            .frames
            .iter()
            .flat_map(|f| &f.detections)
            .filter(|r| r.score.unwrap() >= 0.3)
            .count();
        assert!(survivors > 0);
        assert_eq!(
            counts_from_truth(&data, &model),
            Counts {
                tp: 0,
                fp: survivors,
                fn_: 0
            }
        );
        assert!(data.frames.iter().all(|f| f.detections.len() == 6));
    }
}
