//! Settings resolution: command-line flag, then config file, then built-in
//! default.

use std::path::{Path, PathBuf};

use adathresh_core::bin_stats::{BinSpec, PreFilter, StdMode};
use adathresh_core::evaluation::{ApInterpolation, Difficulty, MatchConfig};
use adathresh_core::geometry::IouKind;
use adathresh_core::threshold::{KMode, ThresholdModel, ThresholdPolicy};
use serde::Deserialize;

use crate::args::{BinArgs, DataArgs, MatchArgs, SampleArgs};
use crate::output::read_json;
use crate::CliError;

/// Far-range constant as written in a config file: a number or "continuity".
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum KSetting {
    Value(f64),
    Named(String),
}

/// Pre-filter as written in a config file: "none", "default" or the triple.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum PreFilterSetting {
    Named(String),
    Custom(PreFilter),
}

/// Contents of a `--config` file. Every key is optional. Relative paths are
/// taken relative to the file's directory.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub gt_dir: Option<PathBuf>,
    pub det_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub class_name: Option<String>,
    pub bin_width: Option<f64>,
    pub max_distance: Option<f64>,
    pub prefilter: Option<PreFilterSetting>,
    pub std_mode: Option<StdMode>,
    pub iou: Option<IouKind>,
    pub iou_threshold: Option<f64>,
    /// 11 or 40.
    pub ap: Option<u32>,
    pub difficulty: Option<Difficulty>,
    /// `single:<t>`, `adaptive` or `adaptive:<model.json>`.
    pub threshold_mode: Option<String>,
    pub delta: Option<f64>,
    pub k: Option<KSetting>,
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Default)]
pub struct Settings {
    file: FileConfig,
    base: PathBuf,
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub fn parse_k(text: &str) -> Result<KMode, CliError> {
    if text.eq_ignore_ascii_case("continuity") {
        return Ok(KMode::Continuity);
    }
    text.parse::<f64>().map(KMode::Explicit).map_err(|_| {
        usage(format!(
            "--k expects a number or 'continuity', got '{text}'"
        ))
    })
}

/// Parse a threshold mode; `base` anchors a relative model path.
pub fn parse_threshold_mode(text: &str, base: &Path) -> Result<ThresholdPolicy, CliError> {
    let (kind, arg) = match text.split_once(':') {
        Some((k, a)) => (k, Some(a)),
        None => (text, None),
    };
    match (kind, arg) {
        ("single", Some(t)) => {
            let threshold: f64 = t
                .parse()
                .map_err(|_| usage(format!("single threshold must be a number, got '{t}'")))?;
            if !(0.0..=1.0).contains(&threshold) {
                return Err(usage(format!(
                    "single threshold must lie in [0, 1], got {threshold}"
                )));
            }
            Ok(ThresholdPolicy::Single { threshold })
        }
        ("adaptive", None) => Ok(ThresholdPolicy::Adaptive {
            model: ThresholdModel::reference_car(),
        }),
        ("adaptive", Some(path)) => Ok(ThresholdPolicy::Adaptive {
            model: read_json(&base.join(path))?,
        }),
        _ => Err(usage(format!(
            "threshold mode must be single:<t>, adaptive or adaptive:<model.json>, got '{text}'"
        ))),
    }
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let file: FileConfig = read_json(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { file, base })
    }

    fn config_path(&self, p: &Option<PathBuf>) -> Option<PathBuf> {
        p.as_ref().map(|p| self.base.join(p))
    }

    pub fn gt_dir(&self, args: &DataArgs) -> Result<PathBuf, CliError> {
        args.gt
            .clone()
            .or_else(|| self.config_path(&self.file.gt_dir))
            .ok_or_else(|| usage("ground-truth directory missing (--gt or gt_dir)"))
    }

    pub fn det_dir(&self, args: &DataArgs) -> Result<PathBuf, CliError> {
        args.det
            .clone()
            .or_else(|| self.config_path(&self.file.det_dir))
            .ok_or_else(|| usage("detection directory missing (--det or det_dir)"))
    }

    pub fn class_name(&self, args: &DataArgs) -> String {
        args.class
            .clone()
            .or_else(|| self.file.class_name.clone())
            .unwrap_or_else(|| "Car".into())
    }

    pub fn out_dir(&self, flag: &Option<PathBuf>) -> PathBuf {
        flag.clone()
            .or_else(|| self.config_path(&self.file.out_dir))
            .unwrap_or_else(|| PathBuf::from("."))
    }

    pub fn bins(&self, args: &BinArgs) -> Result<BinSpec, CliError> {
        let default = BinSpec::default();
        let width = args
            .bin_width
            .or(self.file.bin_width)
            .unwrap_or(default.bin_width());
        let max = args
            .max_distance
            .or(self.file.max_distance)
            .unwrap_or(default.max_distance());
        Ok(BinSpec::new(width, max)?)
    }

    pub fn sampling(&self, args: &SampleArgs) -> Result<(PreFilter, StdMode), CliError> {
        let base = match &self.file.prefilter {
            None => PreFilter::default(),
            Some(PreFilterSetting::Custom(p)) => *p,
            Some(PreFilterSetting::Named(n)) if n == "none" => PreFilter::none(),
            Some(PreFilterSetting::Named(n)) if n == "default" => PreFilter::default(),
            Some(PreFilterSetting::Named(n)) => {
                return Err(usage(format!(
                    "prefilter must be 'none', 'default' or an object, got '{n}'"
                )))
            }
        };
        let prefilter = if args.no_prefilter {
            PreFilter::none()
        } else {
            PreFilter {
                distance_cutoff: args.distance_cutoff.unwrap_or(base.distance_cutoff),
                near_threshold: args.near_threshold.unwrap_or(base.near_threshold),
                far_threshold: args.far_threshold.unwrap_or(base.far_threshold),
            }
        };
        prefilter.validate()?;
        let std_mode = args
            .std_mode
            .map(Into::into)
            .or(self.file.std_mode)
            .unwrap_or_default();
        Ok((prefilter, std_mode))
    }

    pub fn matching(&self, args: &MatchArgs, class_name: String) -> Result<MatchConfig, CliError> {
        let default = MatchConfig::default();
        let ap_interpolation = match args.ap.map(Into::into).or(self.file.ap) {
            None => default.ap_interpolation,
            Some(11) => ApInterpolation::ElevenPoint,
            Some(40) => ApInterpolation::FortyPoint,
            Some(n) => return Err(usage(format!("ap must be 11 or 40, got {n}"))),
        };
        let cfg = MatchConfig {
            iou_kind: args
                .iou
                .map(Into::into)
                .or(self.file.iou)
                .unwrap_or(default.iou_kind),
            iou_threshold: args
                .iou_thr
                .or(self.file.iou_threshold)
                .unwrap_or(default.iou_threshold),
            class_name,
            ap_interpolation,
            difficulty: args.difficulty.map(Into::into).or(self.file.difficulty),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Defaults to the reference adaptive curve.
    pub fn policy(&self, flag: &Option<String>) -> Result<ThresholdPolicy, CliError> {
        match (flag, &self.file.threshold_mode) {
            (Some(text), _) => parse_threshold_mode(text, Path::new("")),
            (None, Some(text)) => parse_threshold_mode(text, &self.base),
            (None, None) => Ok(ThresholdPolicy::Adaptive {
                model: ThresholdModel::reference_car(),
            }),
        }
    }

    pub fn delta(&self, flag: Option<f64>) -> f64 {
        flag.or(self.file.delta)
            .unwrap_or(ThresholdModel::DEFAULT_DELTA)
    }

    /// Defaults to the reference far-range constant.
    pub fn k_mode(&self, flag: &Option<String>) -> Result<KMode, CliError> {
        match (flag, &self.file.k) {
            (Some(text), _) => parse_k(text),
            (None, Some(KSetting::Value(v))) => Ok(KMode::Explicit(*v)),
            (None, Some(KSetting::Named(n))) => parse_k(n),
            (None, None) => Ok(KMode::Explicit(ThresholdModel::DEFAULT_K)),
        }
    }

    pub fn jobs(&self, flag: Option<usize>) -> Option<usize> {
        flag.or(self.file.jobs)
    }
}
