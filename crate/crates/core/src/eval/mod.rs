//! Detection scoring: greedy matching, precision/recall curves, all-points
//! AP, mAP50 and mAP50-95, and P/R at the max-F1 operating point.

mod report;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{iou, BBox};
use crate::scalar::Scalar;

pub use report::{parse_predictions, pr_curves_csv, pr_curves_svg, PredictionError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("detection {index}: confidence {confidence} outside [0, 1]")]
    Confidence { index: usize, confidence: f64 },
    #[error("{what} {index}: class {class_id} not below class count {num_classes}")]
    UnknownClass {
        what: &'static str,
        index: usize,
        class_id: usize,
        num_classes: usize,
    },
    #[error("{what} {index}: invalid box")]
    InvalidBox { what: &'static str, index: usize },
    #[error("class list is empty")]
    NoClasses,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection<T> {
    pub image_id: String,
    pub class_id: usize,
    pub bbox: BBox<T>,
    pub confidence: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth<T> {
    pub image_id: String,
    pub class_id: usize,
    pub bbox: BBox<T>,
}

/// The ten thresholds 0.50, 0.55, …, 0.95.
pub fn iou_thresholds<T: Scalar>() -> [T; 10] {
    std::array::from_fn(|i| T::lit((50 + 5 * i) as f64 / 100.0))
}

/// Detection indices sorted by confidence descending, ties in input order.
fn confidence_order<T: Scalar>(dets: &[Detection<T>]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .confidence
            .partial_cmp(&dets[a].confidence)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    order
}

/// Greedy matching within each (image, class). Returns `(detection, gt)`
/// pairs in confidence order; each detection takes the unmatched ground
/// truth of highest IoU (lowest index on ties) if that IoU reaches the
/// threshold.
pub fn match_detections<T: Scalar>(
    dets: &[Detection<T>],
    gts: &[GroundTruth<T>],
    iou_threshold: T,
) -> Vec<(usize, Option<usize>)> {
    let mut by_key: HashMap<(&str, usize), Vec<usize>> = HashMap::new();
    for (i, g) in gts.iter().enumerate() {
        by_key.entry((g.image_id.as_str(), g.class_id)).or_default().push(i);
    }
    let mut taken = vec![false; gts.len()];
    confidence_order(dets)
        .into_iter()
        .map(|d| {
            let det = &dets[d];
            let mut best: Option<(usize, T)> = None;
            if let Some(cands) = by_key.get(&(det.image_id.as_str(), det.class_id)) {
                for &g in cands {
                    if taken[g] {
                        continue;
                    }
                    let v = iou(&det.bbox, &gts[g].bbox);
                    if v >= iou_threshold && best.is_none_or(|(_, b)| v > b) {
                        best = Some((g, v));
                    }
                }
            }
            let m = best.map(|(g, _)| g);
            if let Some(g) = m {
                taken[g] = true;
            }
            (d, m)
        })
        .collect()
}

/// Cumulative (recall, precision) after each ranked detection. Recall is 0
/// when there is no ground truth.
pub fn pr_curve<T: Scalar>(tp_flags: &[bool], num_gt: usize) -> Vec<(T, T)> {
    let mut tp = 0usize;
    tp_flags
        .iter()
        .enumerate()
        .map(|(i, &hit)| {
            tp += hit as usize;
            let recall = if num_gt == 0 {
                T::zero()
            } else {
                T::lit(tp as f64) / T::lit(num_gt as f64)
            };
            (recall, T::lit(tp as f64) / T::lit((i + 1) as f64))
        })
        .collect()
}

/// Area under the monotone precision envelope, integrated stepwise over recall.
pub fn average_precision<T: Scalar>(curve: &[(T, T)]) -> T {
    let mut pts = curve.to_vec();
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    for i in (0..pts.len().saturating_sub(1)).rev() {
        pts[i].1 = pts[i].1.max(pts[i + 1].1);
    }
    let mut ap = T::zero();
    let mut prev = T::zero();
    for (r, p) in pts {
        ap = ap + (r - prev) * p;
        prev = r;
    }
    ap
}

/// Counts at the report operating point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics<T> {
    pub name: String,
    pub num_gt: usize,
    pub num_det: usize,
    /// AP at each of the ten thresholds.
    pub ap: [T; 10],
    pub precision: T,
    pub recall: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport<T> {
    pub classes: Vec<ClassMetrics<T>>,
    pub thresholds: [T; 10],
    /// Mean AP over the scored classes at each threshold.
    pub map: [T; 10],
    pub map50: T,
    pub map50_95: T,
    pub precision: T,
    pub recall: T,
    pub f1: T,
    /// Detections with confidence at or above this count at the operating point.
    pub confidence_threshold: T,
    pub counts: Counts,
    /// Per-class (recall, precision) curves at IoU 0.50.
    pub curves: Vec<Vec<(T, T)>>,
}

impl<T: Scalar> MetricsReport<T> {
    /// A class is scored when it has at least one ground truth or detection.
    pub fn is_scored(&self, class: usize) -> bool {
        let c = &self.classes[class];
        c.num_gt > 0 || c.num_det > 0
    }
}

fn validate<T: Scalar>(dets: &[Detection<T>], gts: &[GroundTruth<T>], num_classes: usize) -> Result<(), EvalError> {
    if num_classes == 0 {
        return Err(EvalError::NoClasses);
    }
    for (index, d) in dets.iter().enumerate() {
        let c = d.confidence;
        if !(c >= T::zero() && c <= T::one()) {
            return Err(EvalError::Confidence {
                index,
                confidence: c.as_f64(),
            });
        }
        if d.class_id >= num_classes {
            return Err(EvalError::UnknownClass {
                what: "detection",
                index,
                class_id: d.class_id,
                num_classes,
            });
        }
        d.bbox.validate().map_err(|_| EvalError::InvalidBox {
            what: "detection",
            index,
        })?;
    }
    for (index, g) in gts.iter().enumerate() {
        if g.class_id >= num_classes {
            return Err(EvalError::UnknownClass {
                what: "ground truth",
                index,
                class_id: g.class_id,
                num_classes,
            });
        }
        g.bbox.validate().map_err(|_| EvalError::InvalidBox {
            what: "ground truth",
            index,
        })?;
    }
    Ok(())
}

fn ratio<T: Scalar>(a: usize, b: usize) -> T {
    if b == 0 {
        T::zero()
    } else {
        T::lit(a as f64) / T::lit(b as f64)
    }
}

fn mean<T: Scalar>(vals: impl Iterator<Item = T>) -> T {
    let (mut s, mut n) = (T::zero(), 0usize);
    for v in vals {
        s = s + v;
        n += 1;
    }
    if n == 0 {
        T::zero()
    } else {
        s / T::lit(n as f64)
    }
}

/// Full protocol over `classes`. mAP averages the scored classes only; P/R
/// are pooled over all classes at the confidence cutoff maximizing F1 on the
/// 0.50 matching, preferring the higher cutoff on ties.
pub fn evaluate<T: Scalar>(
    dets: &[Detection<T>],
    gts: &[GroundTruth<T>],
    classes: &[String],
) -> Result<MetricsReport<T>, EvalError> {
    let nc = classes.len();
    validate(dets, gts, nc)?;
    let thresholds = iou_thresholds::<T>();
    let mut num_gt = vec![0usize; nc];
    for g in gts {
        num_gt[g.class_id] += 1;
    }
    let mut num_det = vec![0usize; nc];
    for d in dets {
        num_det[d.class_id] += 1;
    }

    let mut ap = vec![[T::zero(); 10]; nc];
    let mut curves = vec![Vec::new(); nc];
    let mut ranked50 = Vec::new();
    for (ti, &t) in thresholds.iter().enumerate() {
        let matches = match_detections(dets, gts, t);
        let mut flags = vec![Vec::new(); nc];
        for &(d, g) in &matches {
            flags[dets[d].class_id].push(g.is_some());
        }
        for c in 0..nc {
            let curve = pr_curve::<T>(&flags[c], num_gt[c]);
            ap[c][ti] = average_precision(&curve);
            if ti == 0 {
                curves[c] = curve;
            }
        }
        if ti == 0 {
            ranked50 = matches;
        }
    }

    let scored: Vec<usize> = (0..nc).filter(|&c| num_gt[c] > 0 || num_det[c] > 0).collect();
    let map: [T; 10] = std::array::from_fn(|ti| mean(scored.iter().map(|&c| ap[c][ti])));
    let map50_95 = mean(map.iter().copied());

    // Operating point: walk the ranked 0.50 matches, evaluating only at the
    // end of each run of equal confidences.
    let total_gt = gts.len();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut best = (T::zero(), 0usize, 0usize, T::one());
    for (pos, &(d, g)) in ranked50.iter().enumerate() {
        if g.is_some() {
            tp += 1;
        } else {
            fp += 1;
        }
        let conf = dets[d].confidence;
        let run_ends = ranked50
            .get(pos + 1)
            .is_none_or(|&(next, _)| dets[next].confidence != conf);
        if !run_ends {
            continue;
        }
        let p: T = ratio(tp, tp + fp);
        let r: T = ratio(tp, total_gt);
        let f1 = if p + r > T::zero() {
            T::two() * p * r / (p + r)
        } else {
            T::zero()
        };
        if f1 > best.0 {
            best = (f1, tp, fp, conf);
        }
    }
    let (f1, tp, fp, cutoff) = best;
    let confidence_threshold = if tp + fp == 0 { T::one() } else { cutoff };

    let mut per_tp = vec![0usize; nc];
    let mut per_fp = vec![0usize; nc];
    for &(d, g) in ranked50.iter().take(tp + fp) {
        let c = dets[d].class_id;
        if g.is_some() {
            per_tp[c] += 1;
        } else {
            per_fp[c] += 1;
        }
    }
    let class_metrics = (0..nc)
        .map(|c| ClassMetrics {
            name: classes[c].clone(),
            num_gt: num_gt[c],
            num_det: num_det[c],
            ap: ap[c],
            precision: ratio(per_tp[c], per_tp[c] + per_fp[c]),
            recall: ratio(per_tp[c], num_gt[c]),
        })
        .collect();

    Ok(MetricsReport {
        classes: class_metrics,
        thresholds,
        map,
        map50: map[0],
        map50_95,
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, total_gt),
        f1,
        confidence_threshold,
        counts: Counts {
            tp,
            fp,
            fn_: total_gt - tp,
        },
        curves,
    })
}
