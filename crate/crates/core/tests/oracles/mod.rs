//! Independent reference implementations shared by the integration tests and
//! the acceptance suite. Written from the defining formulas in corner
//! coordinates, without reusing library helpers.
#![allow(dead_code, clippy::needless_range_loop, clippy::type_complexity)]

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub mod cbam;

/// Axis-aligned box as (x1, y1, x2, y2).
#[derive(Debug, Clone, Copy)]
pub struct Corners(pub f64, pub f64, pub f64, pub f64);

impl Corners {
    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Corners(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)
    }
    fn w(&self) -> f64 {
        self.2 - self.0
    }
    fn h(&self) -> f64 {
        self.3 - self.1
    }
    fn cx(&self) -> f64 {
        (self.0 + self.2) / 2.0
    }
    fn cy(&self) -> f64 {
        (self.1 + self.3) / 2.0
    }
}

pub fn oracle_iou(a: Corners, b: Corners) -> f64 {
    let iw = (a.2.min(b.2) - a.0.max(b.0)).max(0.0);
    let ih = (a.3.min(b.3) - a.1.max(b.1)).max(0.0);
    let inter = iw * ih;
    inter / (a.w() * a.h() + b.w() * b.h() - inter)
}

fn enclosing(a: Corners, b: Corners) -> (f64, f64) {
    (a.2.max(b.2) - a.0.min(b.0), a.3.max(b.3) - a.1.min(b.1))
}

/// SIoU: 1 - IoU + (Δ + Ω)/2 with Λ = 1 - 2 sin²(asin(c_h/σ) - π/4),
/// Δ = Σ_t (1 - exp(-(2-Λ) ρ_t)), Ω = Σ_t (1 - exp(-ω_t))^θ.
pub fn oracle_siou(pred: Corners, gt: Corners, theta: f64) -> f64 {
    let iou = oracle_iou(pred, gt);
    let dx = gt.cx() - pred.cx();
    let dy = gt.cy() - pred.cy();
    let sigma = (dx * dx + dy * dy).sqrt();
    let lambda = if sigma < 1e-9 {
        0.0
    } else {
        let c_h = dy.abs();
        1.0 - 2.0 * ((c_h / sigma).min(1.0).asin() - PI / 4.0).sin().powi(2)
    };
    let gamma = 2.0 - lambda;
    let (cw, ch) = enclosing(pred, gt);
    let rho_x = (dx / cw).powi(2);
    let rho_y = (dy / ch).powi(2);
    let delta = (1.0 - (-gamma * rho_x).exp()) + (1.0 - (-gamma * rho_y).exp());
    let omega_w = (pred.w() - gt.w()).abs() / pred.w().max(gt.w());
    let omega_h = (pred.h() - gt.h()).abs() / pred.h().max(gt.h());
    let omega = (1.0 - (-omega_w).exp()).powf(theta) + (1.0 - (-omega_h).exp()).powf(theta);
    1.0 - iou + (delta + omega) / 2.0
}

/// CIoU: 1 - IoU + d²/c² + αv.
pub fn oracle_ciou(pred: Corners, gt: Corners) -> f64 {
    let iou = oracle_iou(pred, gt);
    let d2 = (gt.cx() - pred.cx()).powi(2) + (gt.cy() - pred.cy()).powi(2);
    let (cw, ch) = enclosing(pred, gt);
    let c2 = cw * cw + ch * ch;
    let v = 4.0 / (PI * PI) * ((gt.w() / gt.h()).atan() - (pred.w() / pred.h()).atan()).powi(2);
    let alpha = if (1.0 - iou) + v > 0.0 {
        v / ((1.0 - iou) + v)
    } else {
        0.0
    };
    1.0 - iou + d2 / c2 + alpha * v
}

/// One detection for the protocol oracle: (image, class, box, confidence).
#[derive(Debug, Clone)]
pub struct ODet {
    pub image: String,
    pub class: usize,
    pub bbox: Corners,
    pub conf: f64,
}

#[derive(Debug, Clone)]
pub struct OGt {
    pub image: String,
    pub class: usize,
    pub bbox: Corners,
}

/// Result of the brute-force protocol.
#[derive(Debug, Clone)]
pub struct OReport {
    /// [class][threshold]
    pub ap: Vec<[f64; 10]>,
    pub num_gt: Vec<usize>,
    pub num_det: Vec<usize>,
    pub map: [f64; 10],
    pub map50_95: f64,
    pub precision: f64,
    pub recall: f64,
    pub class_precision: Vec<f64>,
    pub class_recall: Vec<f64>,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

/// Ranks detections by confidence with a plain insertion sort (stable), then
/// scans every ground truth for each one. Returns TP flags in rank order with
/// the ranked detection indices.
pub fn oracle_match(dets: &[ODet], gts: &[OGt], thr: f64) -> Vec<(usize, bool)> {
    let mut order: Vec<usize> = Vec::new();
    for i in 0..dets.len() {
        let mut pos = order.len();
        while pos > 0 && dets[order[pos - 1]].conf < dets[i].conf {
            pos -= 1;
        }
        order.insert(pos, i);
    }
    let mut used = vec![false; gts.len()];
    let mut out = Vec::new();
    for &d in &order {
        let mut best_iou = -1.0;
        let mut best_gt = None;
        for (g, gt) in gts.iter().enumerate() {
            if used[g] || gt.image != dets[d].image || gt.class != dets[d].class {
                continue;
            }
            let v = oracle_iou(dets[d].bbox, gt.bbox);
            if v >= thr && v > best_iou {
                best_iou = v;
                best_gt = Some(g);
            }
        }
        if let Some(g) = best_gt {
            used[g] = true;
        }
        out.push((d, best_gt.is_some()));
    }
    out
}

/// AP as (1/num_gt) Σ over TPs at rank k of max_{j ≥ k} precision_j.
pub fn oracle_ap(flags: &[bool], num_gt: usize) -> f64 {
    if num_gt == 0 {
        return 0.0;
    }
    let mut prec = Vec::new();
    let mut tp = 0;
    for (i, &f) in flags.iter().enumerate() {
        if f {
            tp += 1;
        }
        prec.push(tp as f64 / (i + 1) as f64);
    }
    let mut sum = 0.0;
    for k in 0..flags.len() {
        if flags[k] {
            sum += prec[k..].iter().cloned().fold(0.0, f64::max);
        }
    }
    sum / num_gt as f64
}

pub fn oracle_evaluate(dets: &[ODet], gts: &[OGt], num_classes: usize) -> OReport {
    let thresholds: Vec<f64> = (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect();
    let num_gt: Vec<usize> = (0..num_classes)
        .map(|c| gts.iter().filter(|g| g.class == c).count())
        .collect();
    let num_det: Vec<usize> = (0..num_classes)
        .map(|c| dets.iter().filter(|d| d.class == c).count())
        .collect();
    let mut ap = vec![[0.0; 10]; num_classes];
    for (ti, &t) in thresholds.iter().enumerate() {
        let m = oracle_match(dets, gts, t);
        for c in 0..num_classes {
            let flags: Vec<bool> = m.iter().filter(|(d, _)| dets[*d].class == c).map(|(_, f)| *f).collect();
            ap[c][ti] = oracle_ap(&flags, num_gt[c]);
        }
    }
    let scored: Vec<usize> = (0..num_classes).filter(|&c| num_gt[c] + num_det[c] > 0).collect();
    let mut map = [0.0; 10];
    for ti in 0..10 {
        if !scored.is_empty() {
            map[ti] = scored.iter().map(|&c| ap[c][ti]).sum::<f64>() / scored.len() as f64;
        }
    }
    let map50_95 = map.iter().sum::<f64>() / 10.0;

    // Operating point: try every distinct confidence as a cutoff, rematching
    // the kept subset from scratch; highest F1 wins, higher cutoff on ties.
    let mut cutoffs: Vec<f64> = dets.iter().map(|d| d.conf).collect();
    cutoffs.sort_by(|a, b| b.partial_cmp(a).unwrap());
    cutoffs.dedup();
    let total_gt = gts.len();
    let mut best: Option<(f64, Vec<ODet>, Vec<(usize, bool)>)> = None;
    for &c in &cutoffs {
        let kept: Vec<ODet> = dets.iter().filter(|d| d.conf >= c).cloned().collect();
        let m = oracle_match(&kept, gts, 0.5);
        let tp = m.iter().filter(|(_, f)| *f).count();
        let p = tp as f64 / kept.len() as f64;
        let r = if total_gt == 0 {
            0.0
        } else {
            tp as f64 / total_gt as f64
        };
        let f1 = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        if f1 > 0.0 && best.as_ref().is_none_or(|(b, _, _)| f1 > *b) {
            best = Some((f1, kept, m));
        }
    }
    let (kept, m) = best.map(|(_, k, m)| (k, m)).unwrap_or_default();
    let tp = m.iter().filter(|(_, f)| *f).count();
    let fp = m.len() - tp;
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let class_precision = (0..num_classes)
        .map(|c| {
            let hits = m.iter().filter(|(d, f)| kept[*d].class == c && *f).count();
            let all = m.iter().filter(|(d, _)| kept[*d].class == c).count();
            ratio(hits, all)
        })
        .collect();
    let class_recall = (0..num_classes)
        .map(|c| ratio(m.iter().filter(|(d, f)| kept[*d].class == c && *f).count(), num_gt[c]))
        .collect();
    OReport {
        ap,
        num_gt,
        num_det,
        map,
        map50_95,
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, total_gt),
        class_precision,
        class_recall,
        tp,
        fp,
        fn_: total_gt - tp,
    }
}

/// Same CSV layout as the library report.
pub fn oracle_csv(r: &OReport, classes: &[String]) -> String {
    let mut out = String::from("class,num_gt,num_det,precision,recall");
    for i in 0..10 {
        out += &format!(",ap{}", 50 + 5 * i);
    }
    out += ",ap50_95\n";
    for c in 0..classes.len() {
        out += &format!(
            "{},{},{},{:.6},{:.6}",
            classes[c], r.num_gt[c], r.num_det[c], r.class_precision[c], r.class_recall[c]
        );
        for a in r.ap[c] {
            out += &format!(",{a:.6}");
        }
        out += &format!(",{:.6}\n", r.ap[c].iter().sum::<f64>() / 10.0);
    }
    let gt: usize = r.num_gt.iter().sum();
    let det: usize = r.num_det.iter().sum();
    out += &format!("all,{gt},{det},{:.6},{:.6}", r.precision, r.recall);
    for m in r.map {
        out += &format!(",{m:.6}");
    }
    out += &format!(",{:.6}\n", r.map50_95);
    out
}

/// Reads the YOLO-format files of the toy fixture without the library parser.
pub fn read_plain_labels(text: &str, image: &str) -> Vec<OGt> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f: Vec<f64> = l.split_whitespace().map(|t| t.parse().unwrap()).collect();
            OGt {
                image: image.to_string(),
                class: f[0] as usize,
                bbox: Corners::from_center(f[1], f[2], f[3], f[4]),
            }
        })
        .collect()
}

pub fn read_plain_predictions(text: &str) -> Vec<ODet> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split_whitespace().collect();
            let n: Vec<f64> = f[1..].iter().map(|t| t.parse().unwrap()).collect();
            ODet {
                image: f[0].to_string(),
                class: n[0] as usize,
                conf: n[1],
                bbox: Corners::from_center(n[2], n[3], n[4], n[5]),
            }
        })
        .collect()
}

/// Small random dataset: jittered copies of ground truths plus clutter, with
/// distinct confidences on a coarse grid.
pub fn random_dataset(seed: u64, classes: usize) -> (Vec<ODet>, Vec<OGt>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gts = Vec::new();
    let mut dets = Vec::new();
    let mut confs: Vec<u32> = (1..=1000).collect();
    confs.shuffle(&mut rng);
    let mut next_conf = confs.into_iter().map(|c| c as f64 / 1000.0);
    for img in 0..rng.random_range(1..4) {
        let image = format!("im{img}");
        for _ in 0..rng.random_range(0..6) {
            let (cx, cy) = (rng.random_range(0.2..0.8), rng.random_range(0.2..0.8));
            let (w, h) = (rng.random_range(0.05..0.3), rng.random_range(0.05..0.3));
            let class = rng.random_range(0..classes);
            gts.push(OGt {
                image: image.clone(),
                class,
                bbox: Corners::from_center(cx, cy, w, h),
            });
            for _ in 0..rng.random_range(0..3) {
                let j = rng.random_range(0.0..0.4);
                let b = Corners::from_center(
                    cx + j * w * rng.random_range(-1.0..1.0),
                    cy + j * h * rng.random_range(-1.0..1.0),
                    w * rng.random_range(0.7..1.3),
                    h * rng.random_range(0.7..1.3),
                );
                let c = if rng.random_bool(0.9) {
                    class
                } else {
                    rng.random_range(0..classes)
                };
                dets.push(ODet {
                    image: image.clone(),
                    class: c,
                    bbox: b,
                    conf: next_conf.next().unwrap(),
                });
            }
        }
        for _ in 0..rng.random_range(0..3) {
            let b = Corners::from_center(rng.random_range(0.2..0.8), rng.random_range(0.2..0.8), 0.1, 0.1);
            dets.push(ODet {
                image: image.clone(),
                class: rng.random_range(0..classes),
                bbox: b,
                conf: next_conf.next().unwrap(),
            });
        }
    }
    (dets, gts)
}
