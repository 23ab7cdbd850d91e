//! YOLO text labels: one `class_id cx cy w h` record per line, normalized.

use std::fmt::Write as _;

use thiserror::Error;

use super::Label;
use crate::geometry::BBox;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabelErrorKind {
    #[error("label file is not valid UTF-8")]
    NotUtf8,
    #[error("expected 5 fields, found {0}")]
    FieldCount(usize),
    #[error("bad class id `{0}`")]
    BadClassId(String),
    #[error("bad number `{0}`")]
    BadNumber(String),
    #[error("{field} = {value} outside [0, 1]")]
    OutOfRange { field: &'static str, value: f64 },
    #[error("{field} must be positive, got {value}")]
    NonPositive { field: &'static str, value: f64 },
    #[error("class id {class_id} not below class count {num_classes}")]
    UnknownClass { class_id: usize, num_classes: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("line {line}: {kind}")]
pub struct LabelError {
    /// 1-based; 0 when the error is not tied to a line.
    pub line: usize,
    pub kind: LabelErrorKind,
}

fn parse_coord(tok: &str) -> Result<f64, LabelErrorKind> {
    let v: f64 = tok.parse().map_err(|_| LabelErrorKind::BadNumber(tok.to_string()))?;
    if !v.is_finite() {
        return Err(LabelErrorKind::BadNumber(tok.to_string()));
    }
    Ok(v)
}

fn parse_line(line: &str, num_classes: Option<usize>) -> Result<Label, LabelErrorKind> {
    let fields: Vec<&str> = line.split_ascii_whitespace().collect();
    if fields.len() != 5 {
        return Err(LabelErrorKind::FieldCount(fields.len()));
    }
    if !fields[0].bytes().all(|b| b.is_ascii_digit()) {
        return Err(LabelErrorKind::BadClassId(fields[0].to_string()));
    }
    let class_id: usize = fields[0]
        .parse()
        .map_err(|_| LabelErrorKind::BadClassId(fields[0].to_string()))?;
    if let Some(n) = num_classes {
        if class_id >= n {
            return Err(LabelErrorKind::UnknownClass {
                class_id,
                num_classes: n,
            });
        }
    }
    let names = ["cx", "cy", "w", "h"];
    let mut v = [0.0; 4];
    for (i, tok) in fields[1..].iter().enumerate() {
        let x = parse_coord(tok)?;
        if !(0.0..=1.0).contains(&x) {
            return Err(LabelErrorKind::OutOfRange {
                field: names[i],
                value: x,
            });
        }
        if i >= 2 && x <= 0.0 {
            return Err(LabelErrorKind::NonPositive {
                field: names[i],
                value: x,
            });
        }
        v[i] = x;
    }
    Ok(Label {
        class_id,
        bbox: BBox {
            cx: v[0],
            cy: v[1],
            w: v[2],
            h: v[3],
        },
    })
}

/// Strict parse of a YOLO label file. Blank lines are skipped; when
/// `num_classes` is given, class ids must be below it.
pub fn parse_yolo_label(text: &str, num_classes: Option<usize>) -> Result<Vec<Label>, LabelError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_line(l, num_classes).map_err(|kind| LabelError { line: i + 1, kind }))
        .collect()
}

pub fn parse_yolo_label_bytes(bytes: &[u8], num_classes: Option<usize>) -> Result<Vec<Label>, LabelError> {
    let text = std::str::from_utf8(bytes).map_err(|_| LabelError {
        line: 0,
        kind: LabelErrorKind::NotUtf8,
    })?;
    parse_yolo_label(text, num_classes)
}

/// Serializes labels with 6 fractional digits, one per line.
pub fn write_yolo_label(labels: &[Label]) -> String {
    let mut out = String::new();
    for l in labels {
        let b = &l.bbox;
        writeln!(out, "{} {:.6} {:.6} {:.6} {:.6}", l.class_id, b.cx, b.cy, b.w, b.h).unwrap();
    }
    out
}
