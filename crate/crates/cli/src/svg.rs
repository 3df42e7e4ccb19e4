//! Self-contained SVG plots: score timelines and ROC curves.

use std::fmt::Write;

use tad_core::evaluation::{AnomalyAnnotation, RocResult};
use tad_core::scoring::ScoreSeries;

const COLORS: [&str; 5] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd"];

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

struct Frame {
    left: f64,
    top: f64,
    width: f64,
    height: f64,
}

impl Frame {
    fn x(&self, u: f64) -> f64 {
        self.left + u * self.width
    }

    fn y(&self, v: f64) -> f64 {
        self.top + (1.0 - v) * self.height
    }

    fn open(&self, out: &mut String, total: (u32, u32), title: &str) {
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}" font-family="sans-serif" font-size="12">"#,
            total.0, total.1, total.0, total.1
        );
        let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="14">{}</text>"#,
            self.x(0.5),
            self.top - 12.0,
            escape(title)
        );
    }

    /// Axes with ticks at the given fractions and their labels.
    fn axes(
        &self,
        out: &mut String,
        xticks: &[(f64, String)],
        yticks: &[(f64, String)],
        xlabel: &str,
        ylabel: &str,
    ) {
        let _ = writeln!(
            out,
            r#"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="black"/>"#,
            self.left, self.top, self.width, self.height
        );
        for (u, label) in xticks {
            let x = self.x(*u);
            let y = self.y(0.0);
            let _ = writeln!(
                out,
                r#"<line x1="{x:.1}" y1="{y:.1}" x2="{x:.1}" y2="{:.1}" stroke="black"/>"#,
                y + 4.0
            );
            let _ = writeln!(
                out,
                r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                y + 17.0,
                escape(label)
            );
        }
        for (v, label) in yticks {
            let x = self.x(0.0);
            let y = self.y(*v);
            let _ = writeln!(
                out,
                r#"<line x1="{:.1}" y1="{y:.1}" x2="{x:.1}" y2="{y:.1}" stroke="black"/>"#,
                x - 4.0
            );
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
                x - 7.0,
                y + 4.0,
                escape(label)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            self.x(0.5),
            self.y(0.0) + 34.0,
            escape(xlabel)
        );
        let (lx, ly) = (self.left - 42.0, self.y(0.5));
        let _ = writeln!(
            out,
            r#"<text x="{lx:.1}" y="{ly:.1}" text-anchor="middle" transform="rotate(-90 {lx:.1} {ly:.1})">{}</text>"#,
            escape(ylabel)
        );
    }

    fn polyline(
        &self,
        out: &mut String,
        points: impl Iterator<Item = (f64, f64)>,
        color: &str,
        extra: &str,
    ) {
        let pts: Vec<String> = points
            .map(|(u, v)| format!("{:.2},{:.2}", self.x(u), self.y(v)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"{extra}/>"#,
            pts.join(" ")
        );
    }
}

fn unit_ticks() -> Vec<(f64, String)> {
    (0..=4)
        .map(|i| (i as f64 / 4.0, format!("{:.2}", i as f64 / 4.0)))
        .collect()
}

/// Normalized score over time with the annotated window shaded.
pub fn timeline(series: &ScoreSeries, window: Option<&AnomalyAnnotation>, title: &str) -> String {
    let total = (900, 320);
    let plot = Frame {
        left: 70.0,
        top: 40.0,
        width: 800.0,
        height: 220.0,
    };
    let mut out = String::new();
    plot.open(&mut out, total, title);
    let first = series.scores.first().map_or(0, |s| s.frame);
    let last = series.scores.last().map_or(0, |s| s.frame);
    // each frame occupies one unit so a one-frame window stays visible
    let span = (last - first + 1) as f64;
    let u = |frame: usize| (frame - first) as f64 / span;
    if let Some(a) = window {
        let (x0, x1) = (
            plot.x(u(a.start.max(first))),
            plot.x(u(a.end.min(last) + 1)),
        );
        let _ = writeln!(
            out,
            r##"<rect x="{x0:.2}" y="{:.1}" width="{:.2}" height="{:.1}" fill="#d62728" fill-opacity="0.18"><title>annotated frames {}-{}</title></rect>"##,
            plot.top,
            x1 - x0,
            plot.height,
            a.start,
            a.end
        );
    }
    let step = ((span / 8.0).ceil() as usize).max(1);
    let xticks: Vec<(f64, String)> = (first..=last)
        .step_by(step)
        .map(|f| (u(f) + 0.5 / span, f.to_string()))
        .collect();
    plot.axes(
        &mut out,
        &xticks,
        &unit_ticks(),
        "frame",
        "normalized score",
    );
    let points = series
        .scores
        .iter()
        .zip(&series.normalized)
        .map(|(s, n)| (u(s.frame) + 0.5 / span, *n));
    plot.polyline(&mut out, points, COLORS[0], "");
    out.push_str("</svg>\n");
    out
}

/// One ROC curve per labelled result, with the chance diagonal.
pub fn roc(curves: &[(String, RocResult)], title: &str) -> String {
    let total = (560, 520);
    let plot = Frame {
        left: 70.0,
        top: 40.0,
        width: 420.0,
        height: 420.0,
    };
    let mut out = String::new();
    plot.open(&mut out, total, title);
    plot.axes(
        &mut out,
        &unit_ticks(),
        &unit_ticks(),
        "false positive rate",
        "true positive rate",
    );
    plot.polyline(
        &mut out,
        [(0.0, 0.0), (1.0, 1.0)].into_iter(),
        "#999999",
        r#" stroke-dasharray="4 4""#,
    );
    for (i, (label, r)) in curves.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        plot.polyline(
            &mut out,
            r.fpr.iter().copied().zip(r.tpr.iter().copied()),
            color,
            "",
        );
        let y = plot.y(0.0) - 12.0 - 18.0 * (curves.len() - 1 - i) as f64;
        let x = plot.x(0.55);
        let _ = writeln!(
            out,
            r#"<line x1="{x:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{color}" stroke-width="3"/>"#,
            y - 4.0,
            x + 18.0,
            y - 4.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{y:.1}">{} (AUC {:.4})</text>"#,
            x + 24.0,
            escape(label),
            r.auc
        );
    }
    out.push_str("</svg>\n");
    out
}
