//! Prediction-file parsing and report rendering (CSV, aligned table, PR
//! curves as CSV and SVG).

use std::fmt::Write as _;

use thiserror::Error;

use super::{Detection, MetricsReport};
use crate::geometry::BBox;
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("line {line}: {message}")]
pub struct PredictionError {
    pub line: usize,
    pub message: String,
}

/// One detection per line: `image_id class_id confidence cx cy w h`, with
/// normalized box fields. Blank lines are skipped.
pub fn parse_predictions(text: &str) -> Result<Vec<Detection<f64>>, PredictionError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let err = |message: String| PredictionError { line: i + 1, message };
        let f: Vec<&str> = raw.split_ascii_whitespace().collect();
        if f.len() != 7 {
            return Err(err(format!("expected 7 fields, found {}", f.len())));
        }
        if !f[1].bytes().all(|b| b.is_ascii_digit()) {
            return Err(err(format!("bad class id `{}`", f[1])));
        }
        let class_id: usize = f[1].parse().map_err(|_| err(format!("bad class id `{}`", f[1])))?;
        let mut v = [0.0f64; 5];
        for (k, tok) in f[2..].iter().enumerate() {
            v[k] = match tok.parse::<f64>() {
                Ok(x) if x.is_finite() => x,
                _ => return Err(err(format!("bad number `{tok}`"))),
            };
        }
        let [confidence, cx, cy, w, h] = v;
        if !(0.0..=1.0).contains(&confidence) {
            return Err(err(format!("confidence {confidence} outside [0, 1]")));
        }
        if !(0.0..=1.0).contains(&cx) || !(0.0..=1.0).contains(&cy) {
            return Err(err(format!("center ({cx}, {cy}) outside [0, 1]")));
        }
        if !(w > 0.0 && w <= 1.0 && h > 0.0 && h <= 1.0) {
            return Err(err(format!("size ({w}, {h}) outside (0, 1]")));
        }
        out.push(Detection {
            image_id: f[0].to_string(),
            class_id,
            bbox: BBox { cx, cy, w, h },
            confidence,
        });
    }
    Ok(out)
}

fn pct<T: Scalar>(v: T) -> String {
    format!("{:.1}", v.as_f64() * 100.0)
}

impl<T: Scalar> MetricsReport<T> {
    /// One row per class plus a trailing `all` row; AP columns per threshold.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,num_gt,num_det,precision,recall");
        for t in &self.thresholds {
            write!(out, ",ap{:.0}", t.as_f64() * 100.0).unwrap();
        }
        out.push_str(",ap50_95\n");
        for c in &self.classes {
            write!(
                out,
                "{},{},{},{:.6},{:.6}",
                c.name,
                c.num_gt,
                c.num_det,
                c.precision.as_f64(),
                c.recall.as_f64()
            )
            .unwrap();
            let mut sum = 0.0;
            for a in &c.ap {
                write!(out, ",{:.6}", a.as_f64()).unwrap();
                sum += a.as_f64();
            }
            writeln!(out, ",{:.6}", sum / 10.0).unwrap();
        }
        let gt: usize = self.classes.iter().map(|c| c.num_gt).sum();
        let det: usize = self.classes.iter().map(|c| c.num_det).sum();
        write!(
            out,
            "all,{gt},{det},{:.6},{:.6}",
            self.precision.as_f64(),
            self.recall.as_f64()
        )
        .unwrap();
        for m in &self.map {
            write!(out, ",{:.6}", m.as_f64()).unwrap();
        }
        writeln!(out, ",{:.6}", self.map50_95.as_f64()).unwrap();
        out
    }

    /// Aligned text table in percent with one decimal, `all` row first.
    pub fn to_table(&self) -> String {
        let width = self.classes.iter().map(|c| c.name.len()).max().unwrap_or(0).max(5);
        let mut out = String::new();
        writeln!(
            out,
            "# AP: all-points envelope; P/R at max-F1 confidence >= {:.4} (IoU 0.50); mAP over {} scored classes",
            self.confidence_threshold.as_f64(),
            (0..self.classes.len()).filter(|&c| self.is_scored(c)).count()
        )
        .unwrap();
        writeln!(
            out,
            "{:<width$}  {:>6}  {:>6}  {:>9}  {:>6}  {:>6}  {:>8}",
            "Class", "GT", "Det", "Precision", "Recall", "mAP50", "mAP50-95"
        )
        .unwrap();
        let gt: usize = self.classes.iter().map(|c| c.num_gt).sum();
        let det: usize = self.classes.iter().map(|c| c.num_det).sum();
        writeln!(
            out,
            "{:<width$}  {:>6}  {:>6}  {:>9}  {:>6}  {:>6}  {:>8}",
            "all",
            gt,
            det,
            pct(self.precision),
            pct(self.recall),
            pct(self.map50),
            pct(self.map50_95)
        )
        .unwrap();
        for c in &self.classes {
            let mean = c.ap.iter().fold(T::zero(), |s, &a| s + a) / T::lit(10.0);
            writeln!(
                out,
                "{:<width$}  {:>6}  {:>6}  {:>9}  {:>6}  {:>6}  {:>8}",
                c.name,
                c.num_gt,
                c.num_det,
                pct(c.precision),
                pct(c.recall),
                pct(c.ap[0]),
                pct(mean)
            )
            .unwrap();
        }
        writeln!(
            out,
            "# counts at operating point: TP {} FP {} FN {}",
            self.counts.tp, self.counts.fp, self.counts.fn_
        )
        .unwrap();
        out
    }
}

/// `class,rank,recall,precision` rows of the IoU 0.50 curves.
pub fn pr_curves_csv<T: Scalar>(report: &MetricsReport<T>) -> String {
    let mut out = String::from("class,rank,recall,precision\n");
    for (c, curve) in report.classes.iter().zip(&report.curves) {
        for (i, (r, p)) in curve.iter().enumerate() {
            writeln!(out, "{},{},{:.6},{:.6}", c.name, i + 1, r.as_f64(), p.as_f64()).unwrap();
        }
    }
    out
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

/// Minimal SVG line plot of the IoU 0.50 precision-recall curves.
pub fn pr_curves_svg<T: Scalar>(report: &MetricsReport<T>) -> String {
    let (w, h, m) = (480.0, 360.0, 40.0);
    let (pw, ph) = (w - 2.0 * m, h - 2.0 * m);
    let mut out = String::new();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    )
    .unwrap();
    writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#).unwrap();
    writeln!(
        out,
        r#"<rect x="{m}" y="{m}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    )
    .unwrap();
    writeln!(
        out,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">Recall</text>"#,
        w / 2.0,
        h - 10.0
    )
    .unwrap();
    writeln!(
        out,
        r#"<text x="12" y="{}" font-size="12" text-anchor="middle" transform="rotate(-90 12 {})">Precision</text>"#,
        h / 2.0,
        h / 2.0
    )
    .unwrap();
    for (i, (c, curve)) in report.classes.iter().zip(&report.curves).enumerate() {
        if curve.is_empty() {
            continue;
        }
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = curve
            .iter()
            .map(|(r, p)| format!("{:.2},{:.2}", m + r.as_f64() * pw, m + (1.0 - p.as_f64()) * ph))
            .collect();
        writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        )
        .unwrap();
        writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="10" fill="{color}">{} AP50={:.3}</text>"#,
            m + 6.0,
            m + 14.0 + 12.0 * i as f64,
            c.name,
            c.ap[0].as_f64()
        )
        .unwrap();
    }
    out.push_str("</svg>\n");
    out
}
