//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use adathresh_core::evaluation::{Counts, MatchConfig};
use adathresh_core::geometry::{self, Box3D};
use adathresh_core::kitti::KittiRecord;
use adathresh_core::synthetic::SplitMix64;
use nalgebra::{DMatrix, DVector};

/// Is the ground-plane point inside the box footprint? Works in the box's
/// own frame instead of clipping polygons.
pub fn footprint_contains(b: &Box3D, x: f64, z: f64) -> bool {
    let [cx, _, cz] = b.center();
    let (dx, dz) = (x - cx, z - cz);
    let (sin, cos) = b.yaw().sin_cos();
    let along = cos * dx - sin * dz;
    let across = sin * dx + cos * dz;
    along.abs() <= 0.5 * b.length() && across.abs() <= 0.5 * b.width()
}

fn footprint_bounds(b: &Box3D) -> [f64; 4] {
    let [cx, _, cz] = b.center();
    let r = 0.5 * b.length().hypot(b.width());
    [cx - r, cx + r, cz - r, cz + r]
}

/// BEV IoU estimated from `samples` uniform points over a square covering both
/// footprints.
pub fn monte_carlo_iou_bev(a: &Box3D, b: &Box3D, samples: usize, rng: &mut SplitMix64) -> f64 {
    let (ba, bb) = (footprint_bounds(a), footprint_bounds(b));
    let (x0, x1) = (ba[0].min(bb[0]), ba[1].max(bb[1]));
    let (z0, z1) = (ba[2].min(bb[2]), ba[3].max(bb[3]));
    let (mut both, mut either) = (0usize, 0usize);
    for _ in 0..samples {
        let x = rng.uniform(x0, x1);
        let z = rng.uniform(z0, z1);
        let (ia, ib) = (footprint_contains(a, x, z), footprint_contains(b, x, z));
        both += (ia && ib) as usize;
        either += (ia || ib) as usize;
    }
    if either == 0 {
        0.0
    } else {
        both as f64 / either as f64
    }
}

/// Greedy matching re-derived as a sweep over all (detection, gt) pairs
/// sorted by (score desc, det index, IoU desc, gt index).
pub fn brute_force_greedy(
    gt: &[KittiRecord],
    det: &[KittiRecord],
    cfg: &MatchConfig,
) -> (Counts, Vec<(usize, usize)>) {
    let mut pairs = Vec::new();
    for (d, dr) in det.iter().enumerate() {
        for (g, gr) in gt.iter().enumerate() {
            let iou = match (gr.box3d(), dr.box3d()) {
                (Some(gb), Some(db)) => geometry::iou(cfg.iou_kind, &gb, &db),
                _ => 0.0,
            };
            pairs.push((dr.score.unwrap(), d, iou, g));
        }
    }
    pairs.sort_by(|p, q| {
        q.0.total_cmp(&p.0)
            .then(p.1.cmp(&q.1))
            .then(q.2.total_cmp(&p.2))
            .then(p.3.cmp(&q.3))
    });
    let mut det_done = vec![false; det.len()];
    let mut gt_used = vec![false; gt.len()];
    let mut matched = Vec::new();
    for (_, d, iou, g) in pairs {
        if det_done[d] || gt_used[g] || iou < cfg.iou_threshold {
            continue;
        }
        det_done[d] = true;
        gt_used[g] = true;
        matched.push((g, d));
    }
    matched.sort();
    let tp = matched.len();
    (
        Counts {
            tp,
            fp: det.len() - tp,
            fn_: gt.len() - tp,
        },
        matched,
    )
}

/// Exhaustive one-to-one assignment maximizing the number of matches, then
/// the total IoU. Returns (matches, total IoU).
pub fn optimal_assignment(iou: &[Vec<f64>], threshold: f64) -> (usize, f64) {
    fn search(d: usize, iou: &[Vec<f64>], thr: f64, used: &mut Vec<bool>) -> (usize, f64) {
        if d == iou.len() {
            return (0, 0.0);
        }
        let mut best = search(d + 1, iou, thr, used);
        for g in 0..used.len() {
            if used[g] || iou[d][g] < thr {
                continue;
            }
            used[g] = true;
            let (n, s) = search(d + 1, iou, thr, used);
            used[g] = false;
            let cand = (n + 1, s + iou[d][g]);
            if cand.0 > best.0 || (cand.0 == best.0 && cand.1 > best.1) {
                best = cand;
            }
        }
        best
    }
    let n_gt = iou.first().map_or(0, |r| r.len());
    search(0, iou, threshold, &mut vec![false; n_gt])
}

/// Weighted quadratic least squares via SVD on the raw Vandermonde matrix.
pub fn svd_weighted_quadratic(x: &[f64], y: &[f64], w: &[f64]) -> [f64; 3] {
    let n = x.len();
    let a = DMatrix::from_fn(n, 3, |i, j| w[i].sqrt() * x[i].powi(2 - j as i32));
    let b = DVector::from_fn(n, |i, _| w[i].sqrt() * y[i]);
    let sol = a.svd(true, true).solve(&b, 1e-15).expect("svd solve");
    [sol[0], sol[1], sol[2]]
}

pub fn car(x: f64, z: f64, dims: [f64; 3], yaw: f64, score: Option<f64>) -> KittiRecord {
    KittiRecord {
        class_name: "Car".into(),
        truncated: 0.0,
        occluded: 0,
        alpha: 0.0,
        bbox_2d: [0.0, 0.0, 50.0, 50.0],
        dimensions: dims,
        location: [x, 1.7, z],
        rotation_y: yaw,
        score,
    }
}
