//! Minimal SVG line charts for ROC, PR, reliability and coverage plots.

use std::fmt::Write;

use super::report::{select, stat, RunReport};
use crate::calibration::reliability_bins;
use crate::error::Result;
use crate::metrics::{pr_curve, roc_curve};
use crate::splits::nested::LevelResult;

const W: f64 = 480.0;
const H: f64 = 400.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    /// Draw markers instead of a connected line.
    pub markers: bool,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Chart on the unit square with an optional dashed reference line.
pub fn line_chart(
    title: &str,
    xlabel: &str,
    ylabel: &str,
    series: &[Series],
    reference: Option<[(f64, f64); 2]>,
) -> String {
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let sx = |x: f64| LEFT + x.clamp(0.0, 1.0) * pw;
    let sy = |y: f64| TOP + (1.0 - y.clamp(0.0, 1.0)) * ph;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        s,
        r#"<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for i in 0..=5 {
        let t = i as f64 / 5.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{t:.1}</text>"#,
            sx(t),
            TOP + ph + 16.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{t:.1}</text>"#,
            LEFT - 6.0,
            sy(t) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        H - 12.0,
        escape(xlabel)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(ylabel)
    );
    if let Some([a, b]) = reference {
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="gray" stroke-dasharray="4 4"/>"#,
            sx(a.0),
            sy(a.1),
            sx(b.0),
            sy(b.1)
        );
    }
    for (i, ser) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        if ser.markers {
            for &(x, y) in &ser.points {
                let _ = writeln!(
                    s,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                    sx(x),
                    sy(y)
                );
            }
        } else if !ser.points.is_empty() {
            let pts: Vec<String> = ser
                .points
                .iter()
                .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                pts.join(" ")
            );
        }
        let ly = TOP + 14.0 + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#,
            LEFT + pw - 130.0,
            LEFT + pw - 112.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}">{}</text>"#,
            LEFT + pw - 106.0,
            ly + 4.0,
            escape(&ser.name)
        );
    }
    s.push_str("</svg>\n");
    s
}

#[derive(Default)]
struct Scores {
    raw: Vec<f64>,
    calibrated: Vec<f64>,
    labels: Vec<bool>,
}

impl Scores {
    fn extend(&mut self, l: &LevelResult) {
        self.raw.extend(&l.raw);
        self.calibrated.extend(&l.calibrated);
        self.labels.extend(&l.labels);
    }
}

fn curve_plots(
    prefix: &str,
    label: &str,
    cougher: &Scores,
    waveform: &Scores,
    bins: usize,
) -> Result<Vec<(String, String)>> {
    let labels = &cougher.labels;
    let roc = roc_curve(&cougher.calibrated, labels)?;
    let pr = pr_curve(&cougher.calibrated, labels)?;
    let roc_raw = roc_curve(&cougher.raw, labels)?;
    let prevalence = labels.iter().filter(|&&y| y).count() as f64 / labels.len() as f64;
    let rel = |p: &[f64]| -> Result<Vec<(f64, f64)>> {
        Ok(reliability_bins(p, &waveform.labels, bins)?
            .into_iter()
            .filter(|b| b.count > 0)
            .map(|b| (b.mean_confidence, b.accuracy))
            .collect())
    };
    let line = |name: &str, points: Vec<(f64, f64)>| Series {
        name: name.into(),
        points,
        markers: false,
    };
    Ok(vec![
        (
            format!("{prefix}_roc.svg"),
            line_chart(
                &format!("ROC, {label}"),
                "False positive rate",
                "True positive rate",
                &[line("isotonic", roc.points), line("raw", roc_raw.points)],
                Some([(0.0, 0.0), (1.0, 1.0)]),
            ),
        ),
        (
            format!("{prefix}_pr.svg"),
            line_chart(
                &format!("Precision-recall, {label}"),
                "Recall",
                "Precision",
                &[line("isotonic", pr.points)],
                Some([(0.0, prevalence), (1.0, prevalence)]),
            ),
        ),
        (
            format!("{prefix}_reliability.svg"),
            line_chart(
                &format!("Reliability, {label}"),
                "Mean predicted probability",
                "Observed frequency",
                &[
                    line("isotonic", rel(&waveform.calibrated)?),
                    line("raw", rel(&waveform.raw)?),
                ],
                Some([(0.0, 0.0), (1.0, 1.0)]),
            ),
        ),
    ])
}

/// Every plot of a report with its relative path. ROC and PR use cougher
/// scores; reliability uses waveform scores. The coverage plot is skipped
/// when no alphas were requested.
pub fn render_all(report: &RunReport) -> Result<Vec<(String, String)>> {
    let bins = report.config.ece_bins;
    let mut out = Vec::new();
    for block in &report.blocks {
        let tag = format!("{}_{}", block.mode.as_str(), block.family.as_str());
        let mut pooled_c = Scores::default();
        let mut pooled_w = Scores::default();
        for f in &block.folds {
            let mut c = Scores::default();
            let mut w = Scores::default();
            c.extend(&f.cougher);
            w.extend(&f.waveform);
            out.extend(curve_plots(
                &format!("plots/{tag}_fold{:02}", f.fold),
                &format!("{tag} fold {}", f.fold),
                &c,
                &w,
                bins,
            )?);
            pooled_c.extend(&f.cougher);
            pooled_w.extend(&f.waveform);
        }
        if !block.folds.is_empty() {
            out.extend(curve_plots(
                &format!("plots/{tag}_pooled"),
                &format!("{tag} pooled"),
                &pooled_c,
                &pooled_w,
                bins,
            )?);
        }
    }
    if !report.config.alphas.is_empty() {
        for t in &report.tables {
            let mut series = Vec::new();
            for block in report.blocks.iter().filter(|b| b.mode == t.mode) {
                let mut points: Vec<(f64, f64)> = report
                    .config
                    .alphas
                    .iter()
                    .filter_map(|&a| {
                        let v = select(
                            &report.fold_rows,
                            t.mode,
                            block.family,
                            "cougher",
                            Some(a),
                            "coverage",
                        );
                        stat(&v).map(|s| (a, s.mean))
                    })
                    .collect();
                points.sort_by(|a, b| a.0.total_cmp(&b.0));
                series.push(Series {
                    name: block.family.as_str().into(),
                    points,
                    markers: true,
                });
            }
            out.push((
                format!("plots/{}_coverage.svg", t.mode.as_str()),
                line_chart(
                    &format!("Coverage vs alpha, {}", t.mode.as_str()),
                    "alpha",
                    "Empirical coverage",
                    &series,
                    Some([(0.0, 1.0), (1.0, 0.0)]),
                ),
            ));
        }
    }
    Ok(out)
}
