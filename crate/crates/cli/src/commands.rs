use std::path::Path;

use adathresh_core::bin_stats::{
    collect_samples, compute_bin_stats, BinSpec, BinStats, PreFilter, StdMode,
};
use adathresh_core::evaluation::{compare_reports, evaluate, EvalReport, MetricDelta};
use adathresh_core::kitti::{load_dataset, load_label_dir, serialize_records, FramePair};
use adathresh_core::synthetic::{generate, ScenarioSpec};
use adathresh_core::threshold::{fit_quadratic, ThresholdModel, ThresholdPolicy};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::args::{
    BinArgs, CompareCmd, DataArgs, EvalCmd, FilterCmd, FitCmd, ReportCmd, SampleArgs, StatsCmd,
    SynthCmd,
};
use crate::config::Settings;
use crate::output::{ensure_dir, read_json, write_atomic, write_csv, write_json};
use crate::plot;
use crate::CliError;

/// One row of `bin_stats.csv`; empty bins leave mean and std blank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinRow {
    pub bin_index: usize,
    pub lo_m: f64,
    pub hi_m: f64,
    pub count: usize,
    pub mean: Option<f64>,
    pub std: Option<f64>,
}

/// `bin_stats.json`: the rows plus everything needed to reproduce them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsFile {
    pub class_name: String,
    pub bin_width: f64,
    pub max_distance: f64,
    pub std_mode: StdMode,
    pub prefilter: PreFilter,
    pub bins: Vec<BinRow>,
}

impl StatsFile {
    pub fn spec(&self) -> Result<BinSpec, CliError> {
        Ok(BinSpec::new(self.bin_width, self.max_distance)?)
    }

    pub fn bin_stats(&self) -> Vec<BinStats> {
        self.bins
            .iter()
            .map(|b| BinStats {
                bin_index: b.bin_index,
                count: b.count,
                mean: b.mean,
                std: b.std,
            })
            .collect()
    }
}

#[derive(Serialize)]
struct FitRow {
    bin: usize,
    x: f64,
    mean: f64,
    std: f64,
    fitted: f64,
    residual: f64,
}

#[derive(Serialize)]
struct MetricsRow {
    policy: String,
    tp: usize,
    fp: usize,
    #[serde(rename = "fn")]
    fn_: usize,
    recall: f64,
    precision: f64,
    trade_off: f64,
    average_precision: f64,
    average_precision_filtered: f64,
}

#[derive(Serialize)]
struct PerBinRow {
    bin_index: usize,
    lo_m: f64,
    hi_m: f64,
    tp: usize,
    fp: usize,
    #[serde(rename = "fn")]
    fn_: usize,
    recall: f64,
    precision: f64,
}

#[derive(Serialize)]
struct CompareRow {
    metric: String,
    before: f64,
    after: f64,
    delta: f64,
    annotation: String,
    /// Table-style cell, e.g. `0.101 (-0.137)`.
    cell: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    scenario: &'a ScenarioSpec,
    frames: usize,
    ground_truth_objects: usize,
    detections: usize,
}

fn say(line: impl AsRef<str>) {
    println!("{}", line.as_ref());
}

fn policy_label(policy: &ThresholdPolicy) -> String {
    match policy {
        ThresholdPolicy::Single { threshold } => format!("single:{threshold}"),
        ThresholdPolicy::Adaptive { .. } => "adaptive".to_string(),
    }
}

fn compute_stats(
    settings: &Settings,
    data: &DataArgs,
    bins: &BinArgs,
    sample: &SampleArgs,
) -> Result<StatsFile, CliError> {
    let gt = settings.gt_dir(data)?;
    let det = settings.det_dir(data)?;
    let class_name = settings.class_name(data);
    let spec = settings.bins(bins)?;
    let (prefilter, std_mode) = settings.sampling(sample)?;
    let frames = load_dataset(&gt, &det)?;
    let samples = collect_samples(&frames, &class_name, &prefilter);
    let stats = compute_bin_stats(&samples, &spec, std_mode)?;
    Ok(StatsFile {
        class_name,
        bin_width: spec.bin_width(),
        max_distance: spec.max_distance(),
        std_mode,
        prefilter,
        bins: stats
            .iter()
            .map(|s| {
                let (lo_m, hi_m) = spec.bounds(s.bin_index);
                BinRow {
                    bin_index: s.bin_index,
                    lo_m,
                    hi_m,
                    count: s.count,
                    mean: s.mean,
                    std: s.std,
                }
            })
            .collect(),
    })
}

pub fn stats(settings: &Settings, cmd: &StatsCmd) -> Result<(), CliError> {
    let file = compute_stats(settings, &cmd.data, &cmd.bins, &cmd.sample)?;
    let out = settings.out_dir(&cmd.out);
    write_csv(&out.join("bin_stats.csv"), &file.bins)?;
    write_json(&out.join("bin_stats.json"), &file)?;
    let total: usize = file.bins.iter().map(|b| b.count).sum();
    say(format!(
        "{} bins, {total} detections -> {}",
        file.bins.len(),
        out.join("bin_stats.csv").display()
    ));
    Ok(())
}

pub fn fit(settings: &Settings, cmd: &FitCmd) -> Result<(), CliError> {
    let stats = match &cmd.stats {
        Some(path) => read_json::<StatsFile>(path)?,
        None => compute_stats(settings, &cmd.data, &cmd.bins, &cmd.sample)?,
    };
    let spec = stats.spec()?;
    let delta = settings.delta(cmd.delta);
    let k_mode = settings.k_mode(&cmd.k)?;
    let fit = fit_quadratic(&stats.bin_stats(), &spec, delta, k_mode)?;

    let out = settings.out_dir(&cmd.out);
    let rows: Vec<FitRow> = fit
        .residuals
        .iter()
        .map(|r| FitRow {
            bin: r.bin_index,
            x: r.x,
            mean: r.mean,
            std: r.std,
            fitted: r.fitted,
            residual: r.residual,
        })
        .collect();
    write_csv(&out.join("fit_report.csv"), &rows)?;
    // The report is still useful when the curve is rejected below.
    let model = fit.model()?;
    write_json(&out.join("model.json"), &model)?;
    say(format!(
        "alpha={} beta={} gamma={} delta={} k={} (weighted rmse {:.6}, {} bins)",
        model.alpha(),
        model.beta(),
        model.gamma(),
        model.delta(),
        model.k(),
        fit.weighted_rmse,
        fit.bins_used
    ));
    Ok(())
}

fn same_dir(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => false,
    }
}

pub fn filter(settings: &Settings, cmd: &FilterCmd) -> Result<(), CliError> {
    let det = settings.det_dir(&DataArgs {
        det: cmd.det.clone(),
        ..DataArgs::default()
    })?;
    let out = cmd
        .out
        .clone()
        .ok_or_else(|| CliError::Usage("filter needs an explicit --out directory".into()))?;
    let policy = settings.policy(&cmd.threshold_mode)?;
    let frames = load_label_dir(&det, true)?;
    ensure_dir(&out)?;
    if same_dir(&det, &out) {
        return Err(CliError::Usage(
            "--out must differ from the detection directory".into(),
        ));
    }
    let kept: Vec<(String, Vec<_>)> = frames
        .par_iter()
        .map(|(id, records)| Ok((id.clone(), policy.apply(records)?)))
        .collect::<Result<_, CliError>>()?;
    for (id, records) in &kept {
        write_atomic(
            &out.join(format!("{id}.txt")),
            serialize_records(records).as_bytes(),
        )?;
    }
    let before: usize = frames.iter().map(|(_, r)| r.len()).sum();
    let after: usize = kept.iter().map(|(_, r)| r.len()).sum();
    say(format!(
        "{}: kept {after} of {before} detections in {} frames",
        policy_label(&policy),
        kept.len()
    ));
    Ok(())
}

pub fn eval(settings: &Settings, cmd: &EvalCmd) -> Result<(), CliError> {
    let gt = settings.gt_dir(&cmd.data)?;
    let det = settings.det_dir(&cmd.data)?;
    let cfg = settings.matching(&cmd.matching, settings.class_name(&cmd.data))?;
    let bins = settings.bins(&cmd.bins)?;
    let policy = settings.policy(&cmd.threshold_mode)?;
    let frames: Vec<FramePair> = load_dataset(&gt, &det)?;
    let report = evaluate(&frames, &policy, &cfg, &bins)?;

    let out = settings.out_dir(&cmd.out);
    write_json(&out.join("report.json"), &report)?;
    let m = &report.metrics;
    let row = MetricsRow {
        policy: policy_label(&policy),
        tp: m.counts.tp,
        fp: m.counts.fp,
        fn_: m.counts.fn_,
        recall: m.recall,
        precision: m.precision,
        trade_off: m.trade_off,
        average_precision: report.average_precision,
        average_precision_filtered: report.average_precision_filtered,
    };
    write_csv(&out.join("metrics.csv"), &[row])?;
    let per_bin: Vec<PerBinRow> = report
        .per_bin
        .iter()
        .map(|b| PerBinRow {
            bin_index: b.bin_index,
            lo_m: b.lo_m,
            hi_m: b.hi_m,
            tp: b.counts.tp,
            fp: b.counts.fp,
            fn_: b.counts.fn_,
            recall: b.recall,
            precision: b.precision,
        })
        .collect();
    write_csv(&out.join("per_bin.csv"), &per_bin)?;
    say(format!(
        "{}: recall {:.3} precision {:.3} trade-off {:.3} AP {:.2} ({} frames)",
        policy_label(&policy),
        m.recall,
        m.precision,
        m.trade_off,
        report.average_precision,
        report.frames
    ));
    Ok(())
}

fn is_count(metric: &str) -> bool {
    matches!(metric, "tp" | "fp" | "fn")
}

fn compare_row(d: &MetricDelta) -> CompareRow {
    let is_count = is_count(&d.metric);
    let is_percent = d.metric.starts_with("map");
    let cell = if is_count {
        format!("{} ({:+})", d.after, d.delta)
    } else if is_percent {
        format!("{:.2} ({:+.2})", d.after, d.delta)
    } else {
        format!("{:.3} {}", d.after, d.annotation())
    };
    CompareRow {
        metric: d.metric.clone(),
        before: d.before,
        after: d.after,
        delta: d.delta,
        annotation: d.annotation(),
        cell,
    }
}

pub fn compare(cmd: &CompareCmd) -> Result<(), CliError> {
    let before: EvalReport = read_json(&cmd.before)?;
    let after: EvalReport = read_json(&cmd.after)?;
    let rows: Vec<CompareRow> = compare_reports(&before, &after)?
        .iter()
        .map(compare_row)
        .collect();
    if let Some(path) = &cmd.out {
        write_csv(path, &rows)?;
    }
    say(format!(
        "{:<20} {:>10} {:>10}  {}",
        "metric",
        policy_label(&before.policy),
        policy_label(&after.policy),
        "change"
    ));
    for r in &rows {
        let value = |v: f64| {
            if is_count(&r.metric) {
                format!("{v}")
            } else {
                format!("{v:.4}")
            }
        };
        say(format!(
            "{:<20} {:>10} {:>10}  {}",
            r.metric,
            value(r.before),
            value(r.after),
            r.cell
        ));
    }
    Ok(())
}

pub fn synth(settings: &Settings, cmd: &SynthCmd) -> Result<(), CliError> {
    let mut scenario = match &cmd.scenario {
        Some(path) => read_json::<ScenarioSpec>(path)?,
        None => ScenarioSpec::default(),
    };
    if let Some(seed) = cmd.seed {
        scenario.seed = seed;
    }
    if let Some(n) = cmd.frames {
        scenario.n_frames = n;
    }
    let frames = generate(&scenario)?;
    let out = settings.out_dir(&cmd.out);
    let (gt_dir, det_dir) = (out.join("gt"), out.join("det"));
    ensure_dir(&gt_dir)?;
    ensure_dir(&det_dir)?;
    for f in &frames {
        let name = format!("{}.txt", f.frame_id);
        write_atomic(
            &gt_dir.join(&name),
            serialize_records(&f.ground_truth).as_bytes(),
        )?;
        write_atomic(
            &det_dir.join(&name),
            serialize_records(&f.detections).as_bytes(),
        )?;
    }
    let manifest = Manifest {
        scenario: &scenario,
        frames: frames.len(),
        ground_truth_objects: frames.iter().map(|f| f.ground_truth.len()).sum(),
        detections: frames.iter().map(|f| f.detections.len()).sum(),
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    say(format!(
        "{} frames, {} objects, {} detections -> {}",
        manifest.frames,
        manifest.ground_truth_objects,
        manifest.detections,
        out.display()
    ));
    Ok(())
}

pub fn report(settings: &Settings, cmd: &ReportCmd) -> Result<(), CliError> {
    let stats = cmd
        .stats
        .as_deref()
        .map(read_json::<StatsFile>)
        .transpose()?;
    let model = match &cmd.model {
        Some(path) => read_json::<ThresholdModel>(path)?,
        None => ThresholdModel::reference_car(),
    };
    let out = settings.out_dir(&cmd.out);
    let svg = plot::render_svg(&model, stats.as_ref());
    write_atomic(&out.join("threshold_curve.svg"), svg.as_bytes())?;
    let md = plot::summary_markdown(&model, stats.as_ref());
    write_atomic(&out.join("summary.md"), md.as_bytes())?;
    say(format!(
        "wrote {}",
        out.join("threshold_curve.svg").display()
    ));
    Ok(())
}
