//! SVG line charts of sweep results, one chart per section.

use std::fmt::Write;

use skymemory_core::mapping::Strategy;
use skymemory_core::simnet::{SweepParam, SweepRow, MIB};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const TICKS: usize = 5;

fn color(strategy: Strategy) -> &'static str {
    match strategy {
        Strategy::RotationAware => "#d62728",
        Strategy::HopAware => "#1f77b4",
        Strategy::RotationHopAware => "#2ca02c",
    }
}

/// Axis label and the factor taking raw sweep values to display units.
fn x_axis(param: SweepParam) -> (&'static str, f64) {
    match param {
        SweepParam::KvcBytes => ("KV cache size (MiB)", 1.0 / MIB),
        SweepParam::Servers => ("servers", 1.0),
        SweepParam::ChunkProcessingTime => ("chunk processing time (ms)", 1e3),
        SweepParam::Altitude => ("altitude (km)", 1e-3),
    }
}

fn label(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

/// Chart of `rows` for one section; rows of other sections are ignored.
/// The output depends only on the rows, so it is stable across runs.
pub fn sweep_chart(param: SweepParam, rows: &[SweepRow]) -> String {
    let rows: Vec<&SweepRow> = rows.iter().filter(|r| r.section == param).collect();
    let (x_label, x_scale) = x_axis(param);
    let xs = rows.iter().map(|r| r.value * x_scale);
    let x_lo = xs.clone().fold(f64::INFINITY, f64::min);
    let x_hi = xs.fold(f64::NEG_INFINITY, f64::max);
    let y_hi = rows
        .iter()
        .map(|r| r.max_latency_s * 1e3)
        .fold(0.0, f64::max);
    let (x_lo, x_hi) = if rows.is_empty() {
        (0.0, 1.0)
    } else if x_hi > x_lo {
        (x_lo, x_hi)
    } else {
        (x_lo - 0.5, x_hi + 0.5)
    };
    let y_hi = if y_hi > 0.0 { y_hi * 1.05 } else { 1.0 };

    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w;
    let py = |y: f64| TOP + plot_h - y / y_hi * plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        s,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">max latency vs {}</text>"#,
        LEFT + plot_w / 2.0,
        param.name()
    );
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    for i in 0..=TICKS {
        let f = i as f64 / TICKS as f64;
        let (x, y) = (x_lo + f * (x_hi - x_lo), f * y_hi);
        let _ = writeln!(
            s,
            r##"<line x1="{0:.1}" y1="{1:.1}" x2="{0:.1}" y2="{2:.1}" stroke="#ddd"/><text x="{0:.1}" y="{3:.1}" text-anchor="middle">{4}</text>"##,
            px(x),
            TOP,
            TOP + plot_h,
            TOP + plot_h + 16.0,
            label(x)
        );
        let _ = writeln!(
            s,
            r##"<line x1="{0:.1}" y1="{1:.1}" x2="{2:.1}" y2="{1:.1}" stroke="#ddd"/><text x="{3:.1}" y="{4:.1}" text-anchor="end">{5}</text>"##,
            LEFT,
            py(y),
            LEFT + plot_w,
            LEFT - 6.0,
            py(y) + 4.0,
            label(y)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{x_label}</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{0:.1}" text-anchor="middle" transform="rotate(-90 16 {0:.1})">max latency (ms)</text>"#,
        TOP + plot_h / 2.0
    );

    let mut strategies: Vec<Strategy> = rows.iter().map(|r| r.strategy).collect();
    strategies.sort();
    strategies.dedup();
    for (k, strategy) in strategies.iter().enumerate() {
        let points: Vec<String> = rows
            .iter()
            .filter(|r| r.strategy == *strategy)
            .map(|r| {
                format!(
                    "{:.1},{:.1}",
                    px(r.value * x_scale),
                    py(r.max_latency_s * 1e3)
                )
            })
            .collect();
        let c = color(*strategy);
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{c}" stroke-width="2" points="{}"/>"#,
            points.join(" ")
        );
        for p in &points {
            let (x, y) = p.split_once(',').unwrap_or(("0", "0"));
            let _ = writeln!(s, r#"<circle cx="{x}" cy="{y}" r="3" fill="{c}"/>"#);
        }
        let ly = TOP + 10.0 + 20.0 * k as f64;
        let lx = WIDTH - RIGHT + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{c}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{strategy}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use skymemory_core::simnet::{run_sweep, SimConfig, SweepRanges};

    #[test]
    fn one_polyline_per_strategy() {
        let rows = run_sweep(
            &SimConfig::midpoint(),
            &SweepRanges::default(),
            &Strategy::ALL,
        )
        .unwrap();
        for p in SweepParam::ALL {
            let svg = sweep_chart(p, &rows);
            assert_eq!(svg.matches("<polyline").count(), 3);
            assert!(svg.contains(p.name()));
            assert_eq!(svg, sweep_chart(p, &rows));
        }
    }

    #[test]
    fn handles_empty_and_single_points() {
        assert!(sweep_chart(SweepParam::Servers, &[]).ends_with("</svg>\n"));
        let ranges = SweepRanges {
            servers: (9, 9),
            ..SweepRanges::default()
        };
        let rows = run_sweep(&SimConfig::midpoint(), &ranges, &[Strategy::HopAware]).unwrap();
        let svg = sweep_chart(SweepParam::Servers, &rows);
        assert!(!svg.contains("NaN"));
    }

    #[test]
    fn tick_labels_are_trimmed() {
        assert_eq!(label(2.5), "2.5");
        assert_eq!(label(10.0), "10");
        assert_eq!(label(-0.0), "0");
    }
}
