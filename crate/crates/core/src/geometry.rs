//! Oriented boxes in the KITTI camera frame and their overlap measures.
//!
//! The camera frame has x pointing right, y pointing down and z pointing
//! forward, so the ground plane is spanned by (x, z). A box `location` is the
//! center of its bottom face: the box occupies `[y - height, y]` vertically.

use std::cmp::Ordering;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Intersections smaller than this (m²) are reported as empty.
pub const AREA_EPSILON: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("box dimensions must be finite and positive, got {0:?}")]
    InvalidDimensions([f64; 3]),
    #[error("box center and yaw must be finite")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IouKind {
    Bev,
    #[serde(rename = "3d")]
    ThreeD,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box3D {
    center: [f64; 3],
    /// height, width, length
    dims: [f64; 3],
    yaw: f64,
}

/// Wrap an angle into `[-π, π)`.
pub fn normalize_angle(angle: f64) -> f64 {
    let wrapped = (angle + PI).rem_euclid(2.0 * PI) - PI;
    // rem_euclid can round up to exactly 2π for tiny negative inputs
    if wrapped >= PI {
        wrapped - 2.0 * PI
    } else {
        wrapped
    }
}

impl Box3D {
    pub fn new(center: [f64; 3], dims: [f64; 3], yaw: f64) -> Result<Self, GeometryError> {
        if dims.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(GeometryError::InvalidDimensions(dims));
        }
        if center.iter().any(|c| !c.is_finite()) || !yaw.is_finite() {
            return Err(GeometryError::NonFinite);
        }
        Ok(Self {
            center,
            dims,
            yaw: normalize_angle(yaw),
        })
    }

    pub fn center(&self) -> [f64; 3] {
        self.center
    }

    pub fn height(&self) -> f64 {
        self.dims[0]
    }

    pub fn width(&self) -> f64 {
        self.dims[1]
    }

    pub fn length(&self) -> f64 {
        self.dims[2]
    }

    pub fn yaw(&self) -> f64 {
        self.yaw
    }

    pub fn volume(&self) -> f64 {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    /// Vertical extent `(top, bottom)` in camera y (y grows downward).
    pub fn vertical_extent(&self) -> (f64, f64) {
        (self.center[1] - self.height(), self.center[1])
    }
}

/// Horizontal distance of the box center from the sensor origin, `sqrt(x² + z²)`.
pub fn ego_distance(b: &Box3D) -> f64 {
    b.center[0].hypot(b.center[2])
}

/// A convex polygon in the (x, z) ground plane, counter-clockwise.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Polygon2D {
    pub vertices: Vec<[f64; 2]>,
}

impl Polygon2D {
    pub fn new(vertices: Vec<[f64; 2]>) -> Self {
        Self { vertices }
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.len() < 3
    }

    /// Shoelace signed area; positive for counter-clockwise order.
    pub fn signed_area(&self) -> f64 {
        let n = self.vertices.len();
        if n < 3 {
            return 0.0;
        }
        let mut twice = 0.0;
        for i in 0..n {
            let [x0, y0] = self.vertices[i];
            let [x1, y1] = self.vertices[(i + 1) % n];
            twice += x0 * y1 - x1 * y0;
        }
        0.5 * twice
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    fn ensure_ccw(mut self) -> Self {
        if self.signed_area() < 0.0 {
            self.vertices.reverse();
        }
        self
    }
}

/// Ground-plane footprint of a box, rotated by its yaw, counter-clockwise.
///
/// The length runs along the heading: with yaw 0 it is aligned with +x.
pub fn bev_polygon(b: &Box3D) -> Polygon2D {
    let (sin, cos) = b.yaw.sin_cos();
    let hl = 0.5 * b.length();
    let hw = 0.5 * b.width();
    let [cx, _, cz] = b.center;
    let vertices = [(hl, -hw), (hl, hw), (-hl, hw), (-hl, -hw)]
        .iter()
        .map(|&(x, z)| [cx + cos * x + sin * z, cz - sin * x + cos * z])
        .collect();
    Polygon2D::new(vertices).ensure_ccw()
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn segment_line_intersection(p: [f64; 2], q: [f64; 2], a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    let dp = cross(a, b, p);
    let dq = cross(a, b, q);
    let t = dp / (dp - dq);
    [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
}

/// Sutherland–Hodgman: clip `subject` against every edge of the convex `clip`.
fn clip_convex(subject: &Polygon2D, clip: &Polygon2D) -> Polygon2D {
    let mut output = subject.vertices.clone();
    let n = clip.vertices.len();
    for i in 0..n {
        if output.is_empty() {
            break;
        }
        let a = clip.vertices[i];
        let b = clip.vertices[(i + 1) % n];
        let input = std::mem::take(&mut output);
        let m = input.len();
        for j in 0..m {
            let cur = input[j];
            let prev = input[(j + m - 1) % m];
            let cur_in = cross(a, b, cur) >= 0.0;
            let prev_in = cross(a, b, prev) >= 0.0;
            if cur_in {
                if !prev_in {
                    output.push(segment_line_intersection(prev, cur, a, b));
                }
                output.push(cur);
            } else if prev_in {
                output.push(segment_line_intersection(prev, cur, a, b));
            }
        }
    }
    Polygon2D::new(output)
}

fn lexicographic(a: &Polygon2D, b: &Polygon2D) -> Ordering {
    let flat = |p: &Polygon2D| p.vertices.iter().flatten().copied().collect::<Vec<f64>>();
    let (fa, fb) = (flat(a), flat(b));
    fa.iter()
        .zip(&fb)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or_else(|| fa.len().cmp(&fb.len()))
}

/// Area of the intersection of two convex counter-clockwise polygons.
///
/// The arguments are put in a canonical order before clipping so the result is
/// bit-identical under swapping.
pub fn polygon_intersection_area(a: &Polygon2D, b: &Polygon2D) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let (subject, clip) = if lexicographic(a, b) == Ordering::Greater {
        (b, a)
    } else {
        (a, b)
    };
    let area = clip_convex(subject, clip).area();
    if area < AREA_EPSILON {
        0.0
    } else {
        area
    }
}

fn ratio(intersection: f64, size_a: f64, size_b: f64) -> f64 {
    if intersection <= 0.0 {
        return 0.0;
    }
    let union = size_a + size_b - intersection;
    (intersection / union).clamp(0.0, 1.0)
}

pub fn bev_intersection_area(a: &Box3D, b: &Box3D) -> f64 {
    polygon_intersection_area(&bev_polygon(a), &bev_polygon(b))
}

/// Bird's-eye-view IoU of the box footprints.
pub fn iou_bev(a: &Box3D, b: &Box3D) -> f64 {
    let pa = bev_polygon(a);
    let pb = bev_polygon(b);
    ratio(polygon_intersection_area(&pa, &pb), pa.area(), pb.area())
}

/// Volumetric IoU: footprint overlap times vertical overlap.
pub fn iou_3d(a: &Box3D, b: &Box3D) -> f64 {
    let (top_a, bottom_a) = a.vertical_extent();
    let (top_b, bottom_b) = b.vertical_extent();
    let overlap = (bottom_a.min(bottom_b) - top_a.max(top_b)).max(0.0);
    if overlap == 0.0 {
        return 0.0;
    }
    let inter = bev_intersection_area(a, b) * overlap;
    ratio(inter, a.volume(), b.volume())
}

pub fn iou(kind: IouKind, a: &Box3D, b: &Box3D) -> f64 {
    match kind {
        IouKind::Bev => iou_bev(a, b),
        IouKind::ThreeD => iou_3d(a, b),
    }
}
