//! Threshold curve plot as plain SVG, plus a markdown summary.

use std::fmt::Write;

use adathresh_core::threshold::ThresholdModel;

use crate::commands::StatsFile;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 56.0;
const CURVE_SAMPLES: usize = 240;

struct Frame {
    x_max: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + x / self.x_max * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        TOP + (1.0 - y.clamp(0.0, 1.0)) * (HEIGHT - TOP - BOTTOM)
    }

    fn point(&self, x: f64, y: f64) -> String {
        format!("{:.2},{:.2}", self.px(x), self.py(y))
    }
}

fn threshold(model: &ThresholdModel, d: f64) -> f64 {
    // d is never negative here, the only error case
    model.threshold_at(d).unwrap_or(f64::NAN)
}

/// Points of the curve on `[0, x_max]`, with an explicit step at delta.
fn curve_points(model: &ThresholdModel, x_max: f64) -> Vec<(f64, f64)> {
    let end = model.delta().min(x_max);
    let mut pts: Vec<(f64, f64)> = (0..=CURVE_SAMPLES)
        .map(|i| {
            let d = end * i as f64 / CURVE_SAMPLES as f64;
            (d, threshold(model, d))
        })
        .collect();
    if model.delta() < x_max {
        pts.push((model.delta(), model.k()));
        pts.push((x_max, model.k()));
    }
    pts
}

fn defined_bins(stats: Option<&StatsFile>) -> Vec<(f64, f64, f64)> {
    stats
        .map(|s| {
            s.bins
                .iter()
                .filter_map(|b| Some((0.5 * (b.lo_m + b.hi_m), b.mean?, b.std?)))
                .collect()
        })
        .unwrap_or_default()
}

pub fn render_svg(model: &ThresholdModel, stats: Option<&StatsFile>) -> String {
    let x_max = stats.map_or(60.0, |s| s.max_distance);
    let step = stats.map_or(10.0, |s| s.bin_width);
    let f = Frame { x_max };
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        svg,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );

    let (x0, x1, y0, y1) = (f.px(0.0), f.px(x_max), f.py(0.0), f.py(1.0));
    for i in 0..=5 {
        let y = i as f64 / 5.0;
        let py = f.py(y);
        let _ = writeln!(
            svg,
            r##"<line x1="{x0:.2}" y1="{py:.2}" x2="{x1:.2}" y2="{py:.2}" stroke="#dddddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{y:.1}</text>"##,
            x0 - 6.0,
            py + 4.0
        );
    }
    let ticks = (x_max / step).round() as usize;
    for i in 0..=ticks {
        let x = step * i as f64;
        let px = f.px(x);
        let _ = writeln!(
            svg,
            r##"<line x1="{px:.2}" y1="{y0:.2}" x2="{px:.2}" y2="{y1:.2}" stroke="#dddddd"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{x}</text>"##,
            y0 + 18.0
        );
    }
    let _ = writeln!(
        svg,
        r##"<rect x="{x0:.2}" y="{y1:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#333333"/>"##,
        x1 - x0,
        y0 - y1
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">distance from ego vehicle (m)</text>"#,
        0.5 * (x0 + x1),
        HEIGHT - 14.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">confidence</text>"#,
        0.5 * (y0 + y1),
        0.5 * (y0 + y1)
    );

    let bins = defined_bins(stats);
    if !bins.is_empty() {
        let upper = bins.iter().map(|&(x, m, s)| f.point(x, m + s));
        let lower = bins.iter().rev().map(|&(x, m, s)| f.point(x, m - s));
        let points: Vec<String> = upper.chain(lower).collect();
        let _ = writeln!(
            svg,
            r##"<polygon class="std-band" points="{}" fill="#7fc97f" fill-opacity="0.35" stroke="none"/>"##,
            points.join(" ")
        );
    }

    let curve: Vec<String> = curve_points(model, x_max)
        .iter()
        .map(|&(x, y)| f.point(x, y))
        .collect();
    let _ = writeln!(
        svg,
        r##"<polyline class="threshold" points="{}" fill="none" stroke="#d62728" stroke-width="2"/>"##,
        curve.join(" ")
    );
    for &(x, m, _) in &bins {
        let _ = writeln!(
            svg,
            r##"<circle class="bin-mean" cx="{:.2}" cy="{:.2}" r="3.5" fill="#1f77b4"/>"##,
            f.px(x),
            f.py(m)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{LEFT}" y="22">threshold curve (red), bin mean (blue), mean ± std (green)</text>"#
    );
    svg.push_str("</svg>\n");
    svg
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"))
}

pub fn summary_markdown(model: &ThresholdModel, stats: Option<&StatsFile>) -> String {
    let x_max = stats.map_or(60.0, |s| s.max_distance);
    let mut md = String::from("# Threshold curve\n\n| parameter | value |\n|---|---|\n");
    for (name, v) in [
        ("alpha", model.alpha()),
        ("beta", model.beta()),
        ("gamma", model.gamma()),
        ("delta", model.delta()),
        ("k", model.k()),
    ] {
        let _ = writeln!(md, "| {name} | {v} |");
    }
    let _ = writeln!(
        md,
        "\nThreshold at 0 m: {:.4}. Threshold at {x_max} m: {:.4}.",
        threshold(model, 0.0),
        threshold(model, x_max)
    );
    if let Some(s) = stats {
        let _ = writeln!(
            md,
            "\n## Bins ({}, {:?} spread)\n\n| bin | range (m) | count | mean | std | threshold at center |\n|---|---|---|---|---|---|",
            s.class_name, s.std_mode
        );
        for b in &s.bins {
            let center = 0.5 * (b.lo_m + b.hi_m);
            let _ = writeln!(
                md,
                "| {} | [{}, {}) | {} | {} | {} | {:.4} |",
                b.bin_index,
                b.lo_m,
                b.hi_m,
                b.count,
                opt(b.mean),
                opt(b.std),
                threshold(model, center)
            );
        }
    }
    md
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::commands::BinRow;
    use adathresh_core::bin_stats::{PreFilter, StdMode};

    fn ys(svg: &str) -> Vec<f64> {
        let start = svg.find(r#"class="threshold" points=""#).unwrap() + 26;
        let end = start + svg[start..].find('"').unwrap();
        svg[start..end]
            .split(' ')
            .map(|p| p.split(',').nth(1).unwrap().parse().unwrap())
            .collect()
    }

    #[test]
    fn constant_model_is_a_horizontal_line() {
        let svg = render_svg(&ThresholdModel::constant(0.5).unwrap(), None);
        let y = ys(&svg);
        assert!(y.iter().all(|v| *v == y[0]));
        assert!(!svg.contains("std-band"));
        assert!(!svg.contains("bin-mean"));
    }

    #[test]
    fn reference_curve_endpoints() {
        let svg = render_svg(&ThresholdModel::reference_car(), None);
        let y = ys(&svg);
        let f = Frame { x_max: 60.0 };
        assert_eq!(y[0], (f.py(0.6828) * 100.0).round() / 100.0);
        assert_eq!(*y.last().unwrap(), (f.py(0.2448) * 100.0).round() / 100.0);
        let md = summary_markdown(&ThresholdModel::reference_car(), None);
        assert!(md.contains("Threshold at 0 m: 0.6828. Threshold at 60 m: 0.2448."));
    }

    #[test]
    fn stats_add_band_and_points() {
        let stats = StatsFile {
            class_name: "Car".into(),
            bin_width: 10.0,
            max_distance: 30.0,
            std_mode: StdMode::Population,
            prefilter: PreFilter::default(),
            bins: vec![
                BinRow {
                    bin_index: 0,
                    lo_m: 0.0,
                    hi_m: 10.0,
                    count: 4,
                    mean: Some(0.8),
                    std: Some(0.1),
                },
                BinRow {
                    bin_index: 1,
                    lo_m: 10.0,
                    hi_m: 20.0,
                    count: 0,
                    mean: None,
                    std: None,
                },
                BinRow {
                    bin_index: 2,
                    lo_m: 20.0,
                    hi_m: 30.0,
                    count: 2,
                    mean: Some(0.6),
                    std: Some(0.05),
                },
            ],
        };
        let svg = render_svg(&ThresholdModel::reference_car(), Some(&stats));
        assert_eq!(svg.matches("bin-mean").count(), 2);
        assert_eq!(svg.matches("std-band").count(), 1);
        let md = summary_markdown(&ThresholdModel::reference_car(), Some(&stats));
        assert!(md.contains("| 1 | [10, 20) | 0 | - | - |"));
    }

    #[test]
    fn step_at_delta_is_drawn() {
        let model = ThresholdModel::new(0.0, -0.01, 0.8, 30.0, 0.2).unwrap();
        let pts = curve_points(&model, 60.0);
        let n = pts.len();
        assert_eq!(pts[n - 3], (30.0, 0.5));
        assert_eq!(pts[n - 2], (30.0, 0.2));
        assert_eq!(pts[n - 1], (60.0, 0.2));
    }
}
