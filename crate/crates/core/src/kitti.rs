//! KITTI label and detection file I/O.
//!
//! Ground-truth files carry 15 whitespace-separated fields per line, detector
//! result files carry a 16th field with the confidence score:
//!
//! ```text
//! type truncated occluded alpha left top right bottom h w l x y z rotation_y [score]
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Box3D;

pub const DONT_CARE: &str = "DontCare";

const GT_FIELDS: usize = 15;
const DET_FIELDS: usize = 16;

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("line {line}: expected {expected} fields, found {found}")]
    FieldCount {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: field {field} ({name}) is not a number: {value:?}")]
    NotNumeric {
        line: usize,
        field: usize,
        name: &'static str,
        value: String,
    },
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("line {line}: invalid record: {message}")]
    InvalidRecord { line: usize, message: String },
}

impl ParseError {
    pub fn line(&self) -> usize {
        match self {
            ParseError::FieldCount { line, .. }
            | ParseError::NotNumeric { line, .. }
            | ParseError::Format { line, .. }
            | ParseError::InvalidRecord { line, .. } => *line,
        }
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: ParseError,
    },
    #[error("detection file for frame {frame_id:?} has no ground-truth counterpart")]
    OrphanDetections { frame_id: String },
}

/// One row of a KITTI label or detection file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KittiRecord {
    pub class_name: String,
    pub truncated: f64,
    /// 0..=3, or -1 when unknown.
    pub occluded: i32,
    pub alpha: f64,
    /// left, top, right, bottom in pixels.
    pub bbox_2d: [f64; 4],
    /// height, width, length in meters.
    pub dimensions: [f64; 3],
    /// Bottom-face center in camera coordinates (x right, y down, z forward).
    pub location: [f64; 3],
    pub rotation_y: f64,
    pub score: Option<f64>,
}

impl KittiRecord {
    pub fn is_dont_care(&self) -> bool {
        self.class_name == DONT_CARE
    }

    /// Ground-plane distance of the box center from the sensor origin.
    pub fn ego_distance(&self) -> f64 {
        self.location[0].hypot(self.location[2])
    }

    /// The oriented box, or `None` when the dimensions are not all positive
    /// (e.g. DontCare rows).
    pub fn box3d(&self) -> Option<Box3D> {
        let [h, w, l] = self.dimensions;
        Box3D::new(self.location, [h, w, l], self.rotation_y).ok()
    }

    pub fn bbox_height(&self) -> f64 {
        self.bbox_2d[3] - self.bbox_2d[1]
    }

    fn validate(&self, line: usize) -> Result<(), ParseError> {
        let invalid = |message: String| ParseError::InvalidRecord { line, message };
        if self.class_name.is_empty() {
            return Err(invalid("empty class name".into()));
        }
        let [left, top, right, bottom] = self.bbox_2d;
        if right < left || bottom < top {
            return Err(invalid(format!(
                "2D box has negative extent ({left}, {top}, {right}, {bottom})"
            )));
        }
        if !self.is_dont_care() && self.dimensions.iter().any(|&d| d.is_nan() || d <= 0.0) {
            return Err(invalid(format!(
                "dimensions must be positive, got {:?}",
                self.dimensions
            )));
        }
        if let Some(score) = self.score {
            if !score.is_finite() {
                return Err(invalid(format!("score is not finite: {score}")));
            }
        }
        Ok(())
    }
}

/// One frame's ground truth and detections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramePair {
    pub frame_id: String,
    pub ground_truth: Vec<KittiRecord>,
    pub detections: Vec<KittiRecord>,
}

const FIELD_NAMES: [&str; DET_FIELDS] = [
    "type",
    "truncated",
    "occluded",
    "alpha",
    "bbox_left",
    "bbox_top",
    "bbox_right",
    "bbox_bottom",
    "height",
    "width",
    "length",
    "x",
    "y",
    "z",
    "rotation_y",
    "score",
];

/// Parse the contents of a label (`expect_score = false`) or detection
/// (`expect_score = true`) file. Blank lines are skipped; line numbers in
/// errors are 1-based.
pub fn parse_label_file(text: &str, expect_score: bool) -> Result<Vec<KittiRecord>, ParseError> {
    let mut records = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let fields: Vec<&str> = raw.split_ascii_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        records.push(parse_fields(&fields, line, expect_score)?);
    }
    Ok(records)
}

fn parse_fields(
    fields: &[&str],
    line: usize,
    expect_score: bool,
) -> Result<KittiRecord, ParseError> {
    let expected = if expect_score { DET_FIELDS } else { GT_FIELDS };
    match (fields.len(), expect_score) {
        (n, _) if n == expected => {}
        (GT_FIELDS, true) => {
            return Err(ParseError::Format {
                line,
                message: "detection line is missing the score field".into(),
            })
        }
        (DET_FIELDS, false) => {
            return Err(ParseError::Format {
                line,
                message: "ground-truth line carries a score field".into(),
            })
        }
        (found, _) => {
            return Err(ParseError::FieldCount {
                line,
                expected,
                found,
            })
        }
    }

    let real = |i: usize| -> Result<f64, ParseError> {
        fields[i]
            .parse::<f64>()
            .map_err(|_| ParseError::NotNumeric {
                line,
                field: i + 1,
                name: FIELD_NAMES[i],
                value: fields[i].to_string(),
            })
    };
    let occluded = fields[2]
        .parse::<i32>()
        .map_err(|_| ParseError::NotNumeric {
            line,
            field: 3,
            name: FIELD_NAMES[2],
            value: fields[2].to_string(),
        })?;

    let record = KittiRecord {
        class_name: fields[0].to_string(),
        truncated: real(1)?,
        occluded,
        alpha: real(3)?,
        bbox_2d: [real(4)?, real(5)?, real(6)?, real(7)?],
        dimensions: [real(8)?, real(9)?, real(10)?],
        location: [real(11)?, real(12)?, real(13)?],
        rotation_y: real(14)?,
        score: if expect_score { Some(real(15)?) } else { None },
    };
    record.validate(line)?;
    Ok(record)
}

/// Serialize records one per line, LF-terminated, reals with six fractional
/// digits.
pub fn serialize_records(records: &[KittiRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let _ = write!(
            out,
            "{} {:.6} {} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6}",
            r.class_name,
            r.truncated,
            r.occluded,
            r.alpha,
            r.bbox_2d[0],
            r.bbox_2d[1],
            r.bbox_2d[2],
            r.bbox_2d[3],
            r.dimensions[0],
            r.dimensions[1],
            r.dimensions[2],
            r.location[0],
            r.location[1],
            r.location[2],
            r.rotation_y,
        );
        if let Some(score) = r.score {
            let _ = write!(out, " {score:.6}");
        }
        out.push('\n');
    }
    out
}

fn list_frames(dir: &Path) -> Result<BTreeMap<String, PathBuf>, DatasetError> {
    let io_err = |source| DatasetError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut frames = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(io_err)? {
        let path = entry.map_err(io_err)?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("txt") || !path.is_file() {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            frames.insert(stem.to_string(), path);
        }
    }
    Ok(frames)
}

pub fn read_label_file(path: &Path, expect_score: bool) -> Result<Vec<KittiRecord>, DatasetError> {
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_label_file(&text, expect_score).map_err(|source| DatasetError::Parse {
        path: path.to_path_buf(),
        source,
    })
}

/// Pair `<frame_id>.txt` files from a ground-truth and a detection directory.
///
/// Frames are returned sorted by `frame_id`. Frames without a detection file
/// get an empty detection list; a detection file without a ground-truth
/// counterpart is an error. Files are parsed in parallel on the current rayon
/// pool.
pub fn load_dataset(gt_dir: &Path, det_dir: &Path) -> Result<Vec<FramePair>, DatasetError> {
    let gt_files = list_frames(gt_dir)?;
    let det_files = list_frames(det_dir)?;
    if let Some(orphan) = det_files.keys().find(|id| !gt_files.contains_key(*id)) {
        return Err(DatasetError::OrphanDetections {
            frame_id: orphan.clone(),
        });
    }

    let jobs: Vec<(&String, &PathBuf, Option<&PathBuf>)> = gt_files
        .iter()
        .map(|(id, gt)| (id, gt, det_files.get(id)))
        .collect();
    jobs.into_par_iter()
        .map(|(frame_id, gt_path, det_path)| {
            let ground_truth = read_label_file(gt_path, false)?;
            let detections = match det_path {
                Some(p) => read_label_file(p, true)?,
                None => Vec::new(),
            };
            Ok(FramePair {
                frame_id: frame_id.clone(),
                ground_truth,
                detections,
            })
        })
        .collect()
}

/// Read every `<frame_id>.txt` in one directory, sorted by `frame_id`.
pub fn load_label_dir(
    dir: &Path,
    expect_score: bool,
) -> Result<Vec<(String, Vec<KittiRecord>)>, DatasetError> {
    let files: Vec<(String, PathBuf)> = list_frames(dir)?.into_iter().collect();
    files
        .into_par_iter()
        .map(|(id, path)| Ok((id, read_label_file(&path, expect_score)?)))
        .collect()
}

/// Write one `<frame_id>.txt` per frame; `detections` selects which list.
pub fn write_frames(dir: &Path, frames: &[FramePair], detections: bool) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    for frame in frames {
        let records = if detections {
            &frame.detections
        } else {
            &frame.ground_truth
        };
        fs::write(
            dir.join(format!("{}.txt", frame.frame_id)),
            serialize_records(records),
        )?;
    }
    Ok(())
}
