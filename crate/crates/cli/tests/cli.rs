use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_adathresh"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn adathresh")
}

fn core_fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "status {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn synth(dir: &Path, seed: &str, frames: &str) {
    ok(&run(&[
        "synth",
        "--seed",
        seed,
        "--frames",
        frames,
        "-o",
        p(dir),
    ]));
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
    assert_eq!(run(&["eval", "--help"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&[]).status.code(), Some(1));
    assert_eq!(run(&["stats", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(run(&["eval", "--iou", "2d"]).status.code(), Some(1));
    // missing --gt
    let out = run(&["stats", "--det", "x"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--gt"));
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), "1", "3");
    let gt = tmp.path().join("gt");
    let det = tmp.path().join("det");
    let bad_mode = run(&[
        "eval",
        "--gt",
        p(&gt),
        "--det",
        p(&det),
        "--threshold-mode",
        "single:1.5",
        "-o",
        p(tmp.path()),
    ]);
    assert_eq!(bad_mode.status.code(), Some(1));
    let zero_jobs = run(&[
        "-j",
        "0",
        "stats",
        "--gt",
        p(&gt),
        "--det",
        p(&det),
        "-o",
        p(tmp.path()),
    ]);
    assert_eq!(zero_jobs.status.code(), Some(1));
}

#[test]
fn full_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    synth(root, "7", "80");
    let manifest = json(&root.join("manifest.json"));
    assert_eq!(manifest["frames"], 80);
    assert_eq!(manifest["scenario"]["seed"], 7);
    let (gt, det) = (root.join("gt"), root.join("det"));
    assert_eq!(fs::read_dir(&gt).unwrap().count(), 80);

    let stats_dir = root.join("stats");
    ok(&run(&[
        "stats",
        "--gt",
        p(&gt),
        "--det",
        p(&det),
        "-o",
        p(&stats_dir),
    ]));
    let csv = fs::read_to_string(stats_dir.join("bin_stats.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("bin_index,lo_m,hi_m,count,mean,std"));
    assert_eq!(lines.count(), 6);

    let fit_dir = root.join("fit");
    ok(&run(&[
        "fit",
        "--stats",
        p(&stats_dir.join("bin_stats.json")),
        "--k",
        "continuity",
        "-o",
        p(&fit_dir),
    ]));
    let model_text = fs::read_to_string(fit_dir.join("model.json")).unwrap();
    let at = |k: &str| model_text.find(&format!("\"{k}\"")).unwrap();
    assert!(
        at("alpha") < at("beta")
            && at("beta") < at("gamma")
            && at("gamma") < at("delta")
            && at("delta") < at("k")
    );
    let report_csv = fs::read_to_string(fit_dir.join("fit_report.csv")).unwrap();
    assert!(report_csv.starts_with("bin,x,mean,std,fitted,residual\n"));

    let model_path = fit_dir.join("model.json");
    let adaptive_mode = format!("adaptive:{}", p(&model_path));
    let filtered = root.join("filtered");
    ok(&run(&[
        "filter",
        "--det",
        p(&det),
        "--threshold-mode",
        &adaptive_mode,
        "-o",
        p(&filtered),
    ]));
    assert_eq!(fs::read_dir(&filtered).unwrap().count(), 80);

    let single = root.join("single");
    let adaptive = root.join("adaptive");
    ok(&run(&[
        "eval",
        "--gt",
        p(&gt),
        "--det",
        p(&det),
        "--threshold-mode",
        "single:0.5",
        "-o",
        p(&single),
    ]));
    ok(&run(&[
        "eval",
        "--gt",
        p(&gt),
        "--det",
        p(&det),
        "--threshold-mode",
        &adaptive_mode,
        "-o",
        p(&adaptive),
    ]));
    let a = json(&single.join("report.json"));
    let b = json(&adaptive.join("report.json"));
    assert_eq!(a["policy"]["mode"], "single");
    assert_eq!(b["policy"]["mode"], "adaptive");
    // filtering on disk and filtering inside eval agree
    let refiltered = root.join("refiltered");
    ok(&run(&[
        "eval",
        "--gt",
        p(&gt),
        "--det",
        p(&filtered),
        "--threshold-mode",
        "single:0",
        "-o",
        p(&refiltered),
    ]));
    let c = json(&refiltered.join("report.json"));
    for key in ["tp", "fp", "fn"] {
        assert_eq!(b[key], c[key], "{key}");
    }
    assert_eq!(b["average_precision_filtered"], c["average_precision"]);

    let metrics = fs::read_to_string(single.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with(
        "policy,tp,fp,fn,recall,precision,trade_off,average_precision,average_precision_filtered\n"
    ));
    assert_eq!(
        fs::read_to_string(single.join("per_bin.csv"))
            .unwrap()
            .lines()
            .count(),
        7
    );

    let cmp = root.join("compare.csv");
    let out = run(&[
        "compare",
        p(&single.join("report.json")),
        p(&adaptive.join("report.json")),
        "-o",
        p(&cmp),
    ]);
    ok(&out);
    let text = fs::read_to_string(&cmp).unwrap();
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(
        header,
        ["metric", "before", "after", "delta", "annotation", "cell"]
    );
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    let trade = rows.iter().find(|r| &r[0] == "trade_off").unwrap();
    let before: f64 = trade[1].parse().unwrap();
    let after: f64 = trade[2].parse().unwrap();
    assert!((before - a["trade_off"].as_f64().unwrap()).abs() < 1e-12);
    assert!(trade[4].starts_with('(') && trade[4].ends_with(')'));
    assert!(trade[5].starts_with(&format!("{after:.3} (")));

    let report_dir = root.join("report");
    ok(&run(&[
        "report",
        "--stats",
        p(&stats_dir.join("bin_stats.json")),
        "--model",
        p(&model_path),
        "-o",
        p(&report_dir),
    ]));
    let svg = fs::read_to_string(report_dir.join("threshold_curve.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    assert!(svg.contains("std-band"));
    let md = fs::read_to_string(report_dir.join("summary.md")).unwrap();
    assert!(md.contains("| alpha |"));
}

#[test]
fn stats_on_fixture_dataset_and_empty_detections() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = core_fixtures().join("dataset");
    ok(&run(&[
        "stats",
        "--gt",
        p(&ds.join("label_2")),
        "--det",
        p(&ds.join("pred")),
        "--no-prefilter",
        "-o",
        p(tmp.path()),
    ]));
    let csv = fs::read_to_string(tmp.path().join("bin_stats.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);

    let empty = tmp.path().join("empty");
    fs::create_dir_all(&empty).unwrap();
    let out_dir = tmp.path().join("empty_out");
    ok(&run(&[
        "stats",
        "--gt",
        p(&ds.join("label_2")),
        "--det",
        p(&empty),
        "-o",
        p(&out_dir),
    ]));
    let stats = json(&out_dir.join("bin_stats.json"));
    assert!(stats["bins"]
        .as_array()
        .unwrap()
        .iter()
        .all(|b| b["count"] == 0 && b["mean"].is_null()));
}

#[test]
fn parse_errors_exit_two_with_location() {
    let tmp = tempfile::tempdir().unwrap();
    let (gt, det) = (tmp.path().join("gt"), tmp.path().join("det"));
    fs::create_dir_all(&gt).unwrap();
    fs::create_dir_all(&det).unwrap();
    fs::write(
        gt.join("000004.txt"),
        "Car 0 0 0 0 0 10 10 1.5 1.7 4 0 1.7 10 0\n",
    )
    .unwrap();
    fs::write(det.join("000004.txt"), "Car 0 0 0 0 0 10 10 1.5 1.7 4 0 1.7 10 0 0.9\nCar 0 0 0 0 0 10 10 1.5 1.7 4 0 1.7 x 0 0.9\n").unwrap();
    let out = run(&[
        "eval",
        "--gt",
        p(&gt),
        "--det",
        p(&det),
        "-o",
        p(tmp.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("000004.txt") && err.contains("line 2"),
        "{err}"
    );

    // orphan detection file
    fs::write(det.join("000009.txt"), "").unwrap();
    fs::write(det.join("000004.txt"), "").unwrap();
    assert_eq!(
        run(&[
            "eval",
            "--gt",
            p(&gt),
            "--det",
            p(&det),
            "-o",
            p(tmp.path())
        ])
        .status
        .code(),
        Some(2)
    );

    // out-of-range model file is bad input
    let model = tmp.path().join("model.json");
    fs::write(
        &model,
        r#"{"alpha": 0, "beta": 0, "gamma": 1.4, "delta": 60, "k": 0.5}"#,
    )
    .unwrap();
    let mode = format!("adaptive:{}", p(&model));
    let out = run(&[
        "filter",
        "--det",
        p(&det),
        "--threshold-mode",
        &mode,
        "-o",
        p(&tmp.path().join("f")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn numerical_failures_exit_three() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), "3", "20");
    let (gt, det) = (tmp.path().join("gt"), tmp.path().join("det"));
    // two bins cannot determine a quadratic
    let out = run(&[
        "fit",
        "--gt",
        p(&gt),
        "--det",
        p(&det),
        "--max-distance",
        "20",
        "-o",
        p(tmp.path()),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("at least 3 bins"));

    // a fit that leaves [0, 1] is rejected, but its residual report is kept
    let stats = r#"{"class_name": "Car", "bin_width": 10, "max_distance": 30, "std_mode": "population",
        "prefilter": {"distance_cutoff": 40, "far_threshold": 0.3, "near_threshold": 0.5},
        "bins": [
          {"bin_index": 0, "lo_m": 0, "hi_m": 10, "count": 5, "mean": 0.9, "std": 0.05},
          {"bin_index": 1, "lo_m": 10, "hi_m": 20, "count": 5, "mean": 0.1, "std": 0.05},
          {"bin_index": 2, "lo_m": 20, "hi_m": 30, "count": 5, "mean": 0.9, "std": 0.05}]}"#;
    let stats_path = tmp.path().join("odd.json");
    fs::write(&stats_path, stats).unwrap();
    let out_dir = tmp.path().join("odd");
    let out = run(&["fit", "--stats", p(&stats_path), "-o", p(&out_dir)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(out_dir.join("fit_report.csv").exists());
    assert!(!out_dir.join("model.json").exists());
}

#[test]
fn perfect_detector_scores_full_marks() {
    let tmp = tempfile::tempdir().unwrap();
    let fx = core_fixtures().join("perfect");
    for ap in ["11", "40"] {
        let out_dir = tmp.path().join(ap);
        ok(&run(&[
            "eval",
            "--gt",
            p(&fx.join("label_2")),
            "--det",
            p(&fx.join("pred")),
            "--threshold-mode",
            "single:0",
            "--ap",
            ap,
            "-o",
            p(&out_dir),
        ]));
        let r = json(&out_dir.join("report.json"));
        assert_eq!(r["recall"], 1.0);
        assert_eq!(r["precision"], 1.0);
        assert_eq!(r["average_precision"], 100.0);
        assert_eq!(r["dont_care"], 2);
    }
}

#[test]
fn flags_override_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), "5", "20");
    let cfg = tmp.path().join("run.json");
    fs::write(
        &cfg,
        r#"{"gt_dir": "gt", "det_dir": "det", "out_dir": "from_config",
            "iou_threshold": 0.5, "ap": 40, "threshold_mode": "single:0.3"}"#,
    )
    .unwrap();
    ok(&run(&["--config", p(&cfg), "eval"]));
    let r = json(&tmp.path().join("from_config/report.json"));
    assert_eq!(r["config"]["iou_threshold"], 0.5);
    assert_eq!(r["config"]["ap_interpolation"], "forty_point");
    assert_eq!(r["policy"]["threshold"], 0.3);

    let flagged = tmp.path().join("flagged");
    ok(&run(&[
        "--config",
        p(&cfg),
        "eval",
        "--iou-thr",
        "0.6",
        "--threshold-mode",
        "single:0.7",
        "-o",
        p(&flagged),
    ]));
    let r = json(&flagged.join("report.json"));
    assert_eq!(r["config"]["iou_threshold"], 0.6);
    assert_eq!(r["config"]["ap_interpolation"], "forty_point");
    assert_eq!(r["policy"]["threshold"], 0.7);

    fs::write(&cfg, r#"{"iou_treshold": 0.5}"#).unwrap();
    assert_eq!(run(&["--config", p(&cfg), "eval"]).status.code(), Some(2));
}

#[test]
fn outputs_do_not_depend_on_job_count() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), "11", "120");
    let (gt, det) = (tmp.path().join("gt"), tmp.path().join("det"));
    let mut reports = Vec::new();
    for jobs in ["1", "4"] {
        let out_dir = tmp.path().join(format!("j{jobs}"));
        ok(&run(&[
            "-j",
            jobs,
            "eval",
            "--gt",
            p(&gt),
            "--det",
            p(&det),
            "-o",
            p(&out_dir),
        ]));
        ok(&run(&[
            "-j",
            jobs,
            "stats",
            "--gt",
            p(&gt),
            "--det",
            p(&det),
            "-o",
            p(&out_dir),
        ]));
        let mut files: Vec<_> = fs::read_dir(&out_dir)
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        files.sort();
        // nothing but the final outputs: no leftover temp files
        let names: Vec<_> = files
            .iter()
            .map(|f| f.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        assert_eq!(
            names,
            [
                "bin_stats.csv",
                "bin_stats.json",
                "metrics.csv",
                "per_bin.csv",
                "report.json"
            ]
        );
        reports.push(
            files
                .iter()
                .map(|f| fs::read(f).unwrap())
                .collect::<Vec<_>>(),
        );
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn synth_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    synth(&a, "21", "10");
    synth(&b, "21", "10");
    for sub in ["gt", "det"] {
        for entry in fs::read_dir(a.join(sub)).unwrap() {
            let path = entry.unwrap().path();
            let twin = b.join(sub).join(path.file_name().unwrap());
            assert_eq!(fs::read(&path).unwrap(), fs::read(&twin).unwrap());
        }
    }
    assert_eq!(
        fs::read(a.join("manifest.json")).unwrap(),
        fs::read(b.join("manifest.json")).unwrap()
    );
}

#[test]
fn default_report_plots_reference_curve() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&run(&["report", "-o", p(tmp.path())]));
    let md = fs::read_to_string(tmp.path().join("summary.md")).unwrap();
    assert!(
        md.contains("Threshold at 0 m: 0.6828. Threshold at 60 m: 0.2448."),
        "{md}"
    );
    let svg = fs::read_to_string(tmp.path().join("threshold_curve.svg")).unwrap();
    assert!(!svg.contains("bin-mean"));
}

#[test]
fn model_coefficients_survive_a_file_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), "7", "80");
    let (gt, det) = (tmp.path().join("gt"), tmp.path().join("det"));
    ok(&run(&[
        "fit",
        "--gt",
        p(&gt),
        "--det",
        p(&det),
        "-o",
        p(tmp.path()),
    ]));
    let text = fs::read_to_string(tmp.path().join("model.json")).unwrap();
    let alpha = text
        .lines()
        .find_map(|l| l.trim().strip_prefix("\"alpha\": "))
        .unwrap()
        .trim_end_matches(',');
    ok(&run(&[
        "report",
        "--model",
        p(&tmp.path().join("model.json")),
        "-o",
        p(tmp.path()),
    ]));
    let md = fs::read_to_string(tmp.path().join("summary.md")).unwrap();
    assert!(
        md.contains(&format!("| alpha | {alpha} |")),
        "{alpha}\n{md}"
    );
}
