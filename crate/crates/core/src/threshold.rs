//! Distance-adaptive score threshold.
//!
//! ```text
//! threshold(d) = alpha·d² + beta·d + gamma   for 0 ≤ d ≤ delta
//!              = k                           for d > delta
//! ```
//!
//! The quadratic is fitted to per-bin mean scores by weighted least squares
//! with inverse-variance weights.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bin_stats::{BinSpec, BinStats};
use crate::kitti::KittiRecord;

/// Spread below which a bin's weight stops growing.
pub const SIGMA_FLOOR: f64 = 1e-3;

#[derive(Debug, Error, PartialEq)]
pub enum ThresholdError {
    #[error("delta must be positive and finite, got {0}")]
    InvalidDelta(f64),
    #[error("k must lie in [0, 1], got {0}")]
    InvalidK(f64),
    #[error("coefficients must be finite")]
    NonFinite,
    #[error("threshold leaves [0, 1] on [0, delta]: {value} at d = {distance} m")]
    OutOfRange { distance: f64, value: f64 },
    #[error("distance must be non-negative, got {0}")]
    NegativeDistance(f64),
    #[error("single threshold must lie in [0, 1], got {0}")]
    InvalidSingle(f64),
    #[error("detection #{index} ({class}) has no score")]
    MissingScore { index: usize, class: String },
}

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error("need at least 3 bins with defined statistics, found {0}")]
    TooFewBins(usize),
    #[error("bin {0} has a non-finite mean or std")]
    NonFinite(usize),
    #[error("bin {bin_index} is outside the bin spec ({num_bins} bins)")]
    UnknownBin { bin_index: usize, num_bins: usize },
    #[error("normal equations are singular (bin centers not distinct)")]
    Singular,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelFile")]
pub struct ThresholdModel {
    alpha: f64,
    beta: f64,
    gamma: f64,
    delta: f64,
    k: f64,
}

fn quadratic(alpha: f64, beta: f64, gamma: f64, d: f64) -> f64 {
    alpha * d * d + beta * d + gamma
}

impl ThresholdModel {
    pub const CAR_ALPHA: f64 = -0.00002;
    pub const CAR_BETA: f64 = -0.0061;
    pub const CAR_GAMMA: f64 = 0.6828;
    pub const DEFAULT_DELTA: f64 = 60.0;
    pub const DEFAULT_K: f64 = 0.6;

    /// Validates that the curve stays inside `[0, 1]` over `[0, delta]`;
    /// nothing is clamped.
    pub fn new(
        alpha: f64,
        beta: f64,
        gamma: f64,
        delta: f64,
        k: f64,
    ) -> Result<Self, ThresholdError> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(ThresholdError::InvalidDelta(delta));
        }
        if !(0.0..=1.0).contains(&k) {
            return Err(ThresholdError::InvalidK(k));
        }
        if ![alpha, beta, gamma].iter().all(|c| c.is_finite()) {
            return Err(ThresholdError::NonFinite);
        }
        let mut probes = vec![0.0, delta];
        if alpha != 0.0 {
            let vertex = -beta / (2.0 * alpha);
            if vertex > 0.0 && vertex < delta {
                probes.push(vertex);
            }
        }
        for d in probes {
            let value = quadratic(alpha, beta, gamma, d);
            if !(0.0..=1.0).contains(&value) {
                return Err(ThresholdError::OutOfRange { distance: d, value });
            }
        }
        Ok(Self {
            alpha,
            beta,
            gamma,
            delta,
            k,
        })
    }

    /// Reference car-class parameters with the default `delta` and `k`.
    pub fn reference_car() -> Self {
        Self::new(
            Self::CAR_ALPHA,
            Self::CAR_BETA,
            Self::CAR_GAMMA,
            Self::DEFAULT_DELTA,
            Self::DEFAULT_K,
        )
        .expect("reference parameters are valid")
    }

    /// A flat curve equivalent to a single threshold `t`.
    pub fn constant(t: f64) -> Result<Self, ThresholdError> {
        if !(0.0..=1.0).contains(&t) {
            return Err(ThresholdError::InvalidSingle(t));
        }
        Self::new(0.0, 0.0, t, Self::DEFAULT_DELTA, t)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn delta(&self) -> f64 {
        self.delta
    }
    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn threshold_at(&self, d: f64) -> Result<f64, ThresholdError> {
        if d.is_nan() || d < 0.0 {
            return Err(ThresholdError::NegativeDistance(d));
        }
        Ok(self.threshold_unchecked(d))
    }

    fn threshold_unchecked(&self, d: f64) -> f64 {
        if d > self.delta {
            self.k
        } else {
            quadratic(self.alpha, self.beta, self.gamma, d)
        }
    }
}

#[derive(Deserialize)]
struct ModelFile {
    alpha: f64,
    beta: f64,
    gamma: f64,
    delta: f64,
    k: f64,
}

impl TryFrom<ModelFile> for ThresholdModel {
    type Error = ThresholdError;

    fn try_from(raw: ModelFile) -> Result<Self, Self::Error> {
        Self::new(raw.alpha, raw.beta, raw.gamma, raw.delta, raw.k)
    }
}

fn score_of(index: usize, r: &KittiRecord) -> Result<f64, ThresholdError> {
    r.score.ok_or_else(|| ThresholdError::MissingScore {
        index,
        class: r.class_name.clone(),
    })
}

/// Keep detections whose score is at least the threshold at their distance.
pub fn apply_adaptive(
    detections: &[KittiRecord],
    model: &ThresholdModel,
) -> Result<Vec<KittiRecord>, ThresholdError> {
    let mut kept = Vec::with_capacity(detections.len());
    for (i, r) in detections.iter().enumerate() {
        if score_of(i, r)? >= model.threshold_unchecked(r.ego_distance()) {
            kept.push(r.clone());
        }
    }
    Ok(kept)
}

/// Keep detections whose score is at least `t`.
pub fn apply_single(
    detections: &[KittiRecord],
    t: f64,
) -> Result<Vec<KittiRecord>, ThresholdError> {
    if !(0.0..=1.0).contains(&t) {
        return Err(ThresholdError::InvalidSingle(t));
    }
    let mut kept = Vec::with_capacity(detections.len());
    for (i, r) in detections.iter().enumerate() {
        if score_of(i, r)? >= t {
            kept.push(r.clone());
        }
    }
    Ok(kept)
}

/// Either a constant cutoff or a distance-adaptive curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ThresholdPolicy {
    Single { threshold: f64 },
    Adaptive { model: ThresholdModel },
}

impl ThresholdPolicy {
    pub fn apply(&self, detections: &[KittiRecord]) -> Result<Vec<KittiRecord>, ThresholdError> {
        match self {
            ThresholdPolicy::Single { threshold } => apply_single(detections, *threshold),
            ThresholdPolicy::Adaptive { model } => apply_adaptive(detections, model),
        }
    }

    pub fn threshold_at(&self, d: f64) -> Result<f64, ThresholdError> {
        match self {
            ThresholdPolicy::Single { threshold } => {
                if d >= 0.0 {
                    Ok(*threshold)
                } else {
                    Err(ThresholdError::NegativeDistance(d))
                }
            }
            ThresholdPolicy::Adaptive { model } => model.threshold_at(d),
        }
    }
}

/// How the far-range constant is chosen when fitting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KMode {
    Explicit(f64),
    /// `k = alpha·delta² + beta·delta + gamma`.
    Continuity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinResidual {
    pub bin_index: usize,
    /// Abscissa used in the fit (bin center).
    pub x: f64,
    pub mean: f64,
    pub std: f64,
    pub weight: f64,
    pub fitted: f64,
    /// `fitted - mean`.
    pub residual: f64,
}

/// Outcome of [`fit_quadratic`]. The coefficients are not range-checked;
/// [`FitResult::model`] validates them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub k: f64,
    pub residuals: Vec<BinResidual>,
    /// `sqrt(Σ w r² / Σ w)`.
    pub weighted_rmse: f64,
    pub bins_used: usize,
}

impl FitResult {
    pub fn model(&self) -> Result<ThresholdModel, ThresholdError> {
        ThresholdModel::new(self.alpha, self.beta, self.gamma, self.delta, self.k)
    }

    pub fn weighted_sse(&self) -> f64 {
        self.residuals
            .iter()
            .map(|r| r.weight * r.residual * r.residual)
            .sum()
    }
}

/// Weighted sum of squared residuals of an arbitrary quadratic against the
/// bins used by a fit.
pub fn weighted_sse(residuals: &[BinResidual], alpha: f64, beta: f64, gamma: f64) -> f64 {
    residuals
        .iter()
        .map(|r| {
            let e = quadratic(alpha, beta, gamma, r.x) - r.mean;
            r.weight * e * e
        })
        .sum()
}

/// Least-squares solution of an overdetermined `m × 3` system by Householder
/// QR. Returns `None` when the columns are numerically dependent.
#[allow(clippy::needless_range_loop)]
fn solve_least_squares(mut a: Vec<[f64; 3]>, mut b: Vec<f64>) -> Option<[f64; 3]> {
    let m = a.len();
    let mut diag = [0.0f64; 3];
    for j in 0..3 {
        let norm = (j..m).map(|i| a[i][j] * a[i][j]).sum::<f64>().sqrt();
        if norm == 0.0 {
            return None;
        }
        let r_jj = if a[j][j] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (j..m).map(|i| a[i][j]).collect();
        v[0] -= r_jj;
        let vv: f64 = v.iter().map(|x| x * x).sum();
        if vv > 0.0 {
            for col in j..3 {
                let dot: f64 = (j..m).map(|i| v[i - j] * a[i][col]).sum();
                let f = 2.0 * dot / vv;
                for i in j..m {
                    a[i][col] -= f * v[i - j];
                }
            }
            let dot: f64 = (j..m).map(|i| v[i - j] * b[i]).sum();
            let f = 2.0 * dot / vv;
            for i in j..m {
                b[i] -= f * v[i - j];
            }
        }
        diag[j] = a[j][j];
    }
    let scale = diag.iter().fold(0.0f64, |acc, d| acc.max(d.abs()));
    if diag.iter().any(|d| d.abs() <= 1e-12 * scale) {
        return None;
    }
    let mut x = [0.0f64; 3];
    for j in (0..3).rev() {
        let tail: f64 = (j + 1..3).map(|c| a[j][c] * x[c]).sum();
        x[j] = (b[j] - tail) / a[j][j];
    }
    Some(x)
}

/// Fit `alpha·x² + beta·x + gamma` to the bin means at the bin centers,
/// weighting each bin by `1 / max(std, SIGMA_FLOOR)²`. Empty bins are skipped.
pub fn fit_quadratic(
    stats: &[BinStats],
    spec: &BinSpec,
    delta: f64,
    k_mode: KMode,
) -> Result<FitResult, FitError> {
    let num_bins = spec.num_bins();
    let mut points = Vec::new();
    for s in stats.iter().filter(|s| s.is_defined()) {
        let (mean, std) = (s.mean.unwrap_or(f64::NAN), s.std.unwrap_or(f64::NAN));
        if !mean.is_finite() || !std.is_finite() {
            return Err(FitError::NonFinite(s.bin_index));
        }
        if s.bin_index >= num_bins {
            return Err(FitError::UnknownBin {
                bin_index: s.bin_index,
                num_bins,
            });
        }
        points.push((s.bin_index, spec.center(s.bin_index), mean, std));
    }
    if points.len() < 3 {
        return Err(FitError::TooFewBins(points.len()));
    }

    // Work in u = x / scale so the design matrix is well conditioned.
    let scale = points.iter().fold(0.0f64, |acc, p| acc.max(p.1.abs()));
    let sigma = |std: f64| std.abs().max(SIGMA_FLOOR);
    let rows: Vec<[f64; 3]> = points
        .iter()
        .map(|&(_, x, _, std)| {
            let u = x / scale;
            let sw = 1.0 / sigma(std);
            [sw, sw * u, sw * u * u]
        })
        .collect();
    let rhs: Vec<f64> = points
        .iter()
        .map(|&(_, _, mean, std)| mean / sigma(std))
        .collect();
    let [c0, c1, c2] = solve_least_squares(rows, rhs).ok_or(FitError::Singular)?;
    let (alpha, beta, gamma) = (c2 / (scale * scale), c1 / scale, c0);

    let residuals: Vec<BinResidual> = points
        .iter()
        .map(|&(bin_index, x, mean, std)| {
            let fitted = quadratic(alpha, beta, gamma, x);
            BinResidual {
                bin_index,
                x,
                mean,
                std,
                weight: 1.0 / (sigma(std) * sigma(std)),
                fitted,
                residual: fitted - mean,
            }
        })
        .collect();
    let total_weight: f64 = residuals.iter().map(|r| r.weight).sum();
    let weighted_rmse = (weighted_sse(&residuals, alpha, beta, gamma) / total_weight).sqrt();
    let k = match k_mode {
        KMode::Explicit(k) => k,
        KMode::Continuity => quadratic(alpha, beta, gamma, delta),
    };
    Ok(FitResult {
        alpha,
        beta,
        gamma,
        delta,
        k,
        bins_used: residuals.len(),
        residuals,
        weighted_rmse,
    })
}
