//! Distance-binned confidence statistics.
//!
//! The range `[0, max_distance)` is cut into half-open bins of `bin_width`
//! meters. Per bin we report the number of detections, their mean score and
//! the population standard deviation of the scores.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kitti::FramePair;

#[derive(Debug, Error, PartialEq)]
pub enum BinError {
    #[error("bin width must be positive and finite, got {0}")]
    InvalidWidth(f64),
    #[error("max distance {max_distance} is not a positive multiple of bin width {bin_width}")]
    NotAMultiple { bin_width: f64, max_distance: f64 },
    #[error("distance must be non-negative and finite, got {0}")]
    NegativeDistance(f64),
    #[error("invalid pre-filter: {0}")]
    InvalidPreFilter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinSpec {
    bin_width: f64,
    max_distance: f64,
}

impl Default for BinSpec {
    fn default() -> Self {
        Self {
            bin_width: 10.0,
            max_distance: 60.0,
        }
    }
}

impl BinSpec {
    pub fn new(bin_width: f64, max_distance: f64) -> Result<Self, BinError> {
        if !(bin_width.is_finite() && bin_width > 0.0) {
            return Err(BinError::InvalidWidth(bin_width));
        }
        let ratio = max_distance / bin_width;
        if !(ratio.is_finite() && ratio >= 1.0 && (ratio - ratio.round()).abs() <= 1e-9 * ratio) {
            return Err(BinError::NotAMultiple {
                bin_width,
                max_distance,
            });
        }
        Ok(Self {
            bin_width,
            max_distance,
        })
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_width
    }

    pub fn max_distance(&self) -> f64 {
        self.max_distance
    }

    pub fn num_bins(&self) -> usize {
        (self.max_distance / self.bin_width).round() as usize
    }

    /// `[lo, hi)` bounds of bin `index`.
    pub fn bounds(&self, index: usize) -> (f64, f64) {
        (
            index as f64 * self.bin_width,
            (index + 1) as f64 * self.bin_width,
        )
    }

    pub fn center(&self, index: usize) -> f64 {
        (index as f64 + 0.5) * self.bin_width
    }

    /// Bin holding `distance`, or `None` at or beyond `max_distance`.
    pub fn assign_bin(&self, distance: f64) -> Result<Option<usize>, BinError> {
        if distance.is_nan() || distance < 0.0 {
            return Err(BinError::NegativeDistance(distance));
        }
        if distance >= self.max_distance {
            return Ok(None);
        }
        let index = (distance / self.bin_width).floor() as usize;
        Ok(Some(index.min(self.num_bins() - 1)))
    }
}

/// How the per-bin spread is reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StdMode {
    /// `sqrt(Σ (s - mean)² / N)`.
    #[default]
    Population,
    /// Population std divided by the bin mean (coefficient of variation).
    NormalizedByMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinStats {
    pub bin_index: usize,
    pub count: usize,
    /// `None` for an empty bin.
    pub mean: Option<f64>,
    /// `None` for an empty bin.
    pub std: Option<f64>,
}

impl BinStats {
    pub fn is_defined(&self) -> bool {
        self.count > 0 && self.mean.is_some() && self.std.is_some()
    }
}

/// Per-bin score mean and spread for `(distance, score)` samples.
///
/// Returns one entry per bin, empty bins included. Samples at or beyond
/// `max_distance` are ignored. Each bin's scores are summed in sorted order,
/// so the result does not depend on input order.
pub fn compute_bin_stats(
    samples: &[(f64, f64)],
    spec: &BinSpec,
    mode: StdMode,
) -> Result<Vec<BinStats>, BinError> {
    let mut bins: Vec<Vec<f64>> = vec![Vec::new(); spec.num_bins()];
    for &(distance, score) in samples {
        if let Some(index) = spec.assign_bin(distance)? {
            bins[index].push(score);
        }
    }
    Ok(bins
        .into_iter()
        .enumerate()
        .map(|(bin_index, mut scores)| {
            let count = scores.len();
            if count == 0 {
                return BinStats {
                    bin_index,
                    count,
                    mean: None,
                    std: None,
                };
            }
            scores.sort_by(f64::total_cmp);
            let n = count as f64;
            let mean = scores.iter().sum::<f64>() / n;
            let var = scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
            let std = match mode {
                StdMode::Population => var.sqrt(),
                StdMode::NormalizedByMean => var.sqrt() / mean,
            };
            BinStats {
                bin_index,
                count,
                mean: Some(mean),
                std: Some(std),
            }
        })
        .collect())
}

/// Distance-dependent single threshold used before collecting statistics:
/// `near_threshold` below `distance_cutoff`, `far_threshold` at or beyond it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreFilter {
    pub distance_cutoff: f64,
    pub far_threshold: f64,
    pub near_threshold: f64,
}

impl Default for PreFilter {
    fn default() -> Self {
        Self {
            distance_cutoff: 40.0,
            far_threshold: 0.3,
            near_threshold: 0.5,
        }
    }
}

impl PreFilter {
    /// A filter that keeps every scored detection.
    pub fn none() -> Self {
        Self {
            distance_cutoff: 0.0,
            far_threshold: 0.0,
            near_threshold: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), BinError> {
        let unit = |t: f64| (0.0..=1.0).contains(&t);
        if !(self.distance_cutoff >= 0.0 && self.distance_cutoff.is_finite()) {
            return Err(BinError::InvalidPreFilter(format!(
                "distance cutoff {} must be non-negative",
                self.distance_cutoff
            )));
        }
        if !unit(self.far_threshold) || !unit(self.near_threshold) {
            return Err(BinError::InvalidPreFilter(
                "thresholds must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }

    pub fn threshold_at(&self, distance: f64) -> f64 {
        if distance < self.distance_cutoff {
            self.near_threshold
        } else {
            self.far_threshold
        }
    }

    pub fn keeps(&self, distance: f64, score: f64) -> bool {
        score >= self.threshold_at(distance)
    }
}

/// `(distance, score)` of every detection of `class_name` that carries a
/// score and passes `prefilter`.
pub fn collect_samples(
    frames: &[FramePair],
    class_name: &str,
    prefilter: &PreFilter,
) -> Vec<(f64, f64)> {
    frames
        .iter()
        .flat_map(|f| f.detections.iter())
        .filter(|r| r.class_name == class_name)
        .filter_map(|r| r.score.map(|s| (r.ego_distance(), s)))
        .filter(|&(d, s)| prefilter.keeps(d, s))
        .collect()
}
