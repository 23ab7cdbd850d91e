//! Bounding-box regression losses: SIoU and the CIoU baseline, each with a
//! closed-form gradient with respect to the predicted box `(cx, cy, w, h)`.

mod gradcheck;

pub use gradcheck::{loss_gradient_check, nonsmooth_clearance, sample_smooth_pair, GRAD_CHECK_FLOOR};

use thiserror::Error;

use crate::geometry::{BBox, GeometryError};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("invalid {which} box: {source}")]
    InvalidBox {
        which: &'static str,
        #[source]
        source: GeometryError,
    },
    #[error("shape exponent {0} outside [1, 8]")]
    ThetaOutOfRange(f64),
    #[error("sigma epsilon must be positive, got {0}")]
    BadSigmaEpsilon(f64),
    #[error("finite-difference step must be positive and finite, got {0}")]
    BadStep(f64),
    #[error("evaluation point is {clearance:e} from a non-smooth locus; need at least {required:e}")]
    NearKink { clearance: f64, required: f64 },
}

/// Tunables for SIoU.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SIoUParams<T> {
    /// Exponent on the shape term, `(1 - e^{-ω})^θ`.
    pub theta_exponent: T,
    /// Below this center distance the angle cost is taken as 0.
    pub sigma_epsilon: T,
}

impl<T: Scalar> SIoUParams<T> {
    pub fn new(theta_exponent: T, sigma_epsilon: T) -> Result<Self, LossError> {
        if !(theta_exponent >= T::one() && theta_exponent <= T::lit(8.0)) {
            return Err(LossError::ThetaOutOfRange(theta_exponent.as_f64()));
        }
        if !(sigma_epsilon > T::zero() && sigma_epsilon.is_finite()) {
            return Err(LossError::BadSigmaEpsilon(sigma_epsilon.as_f64()));
        }
        Ok(Self {
            theta_exponent,
            sigma_epsilon,
        })
    }
}

impl<T: Scalar> Default for SIoUParams<T> {
    fn default() -> Self {
        Self {
            theta_exponent: T::lit(4.0),
            sigma_epsilon: T::lit(1e-9),
        }
    }
}

/// Gradient with respect to the predicted box, in `(cx, cy, w, h)` order.
pub type Grad4<T> = [T; 4];

/// Loss value, its components and its gradient for one (pred, gt) pair.
///
/// For SIoU the components are Λ, Δ, Ω and `total = 1 - iou + (Δ + Ω) / 2`.
/// For CIoU `distance_delta` holds `d²/c²`, `shape_omega` holds `αv`, the
/// angle term is 0 and `total = 1 - iou + Δ + Ω`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown<T> {
    pub iou: T,
    pub angle_lambda: T,
    pub distance_delta: T,
    pub shape_omega: T,
    pub total: T,
    pub gradient: Grad4<T>,
}

/// Which loss to evaluate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoxLoss<T> {
    Siou(SIoUParams<T>),
    Ciou,
}

impl<T: Scalar> BoxLoss<T> {
    pub fn evaluate(&self, pred: &BBox<T>, gt: &BBox<T>) -> Result<LossBreakdown<T>, LossError> {
        match self {
            BoxLoss::Siou(p) => siou_loss(pred, gt, p),
            BoxLoss::Ciou => ciou_loss(pred, gt),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            BoxLoss::Siou(_) => "SIoU",
            BoxLoss::Ciou => "CIoU",
        }
    }
}

fn check_boxes<T: Scalar>(pred: &BBox<T>, gt: &BBox<T>) -> Result<(), LossError> {
    pred.validate().map_err(|source| LossError::InvalidBox {
        which: "predicted",
        source,
    })?;
    gt.validate().map_err(|source| LossError::InvalidBox {
        which: "ground-truth",
        source,
    })?;
    Ok(())
}

fn indicator<T: Scalar>(cond: bool) -> T {
    if cond {
        T::one()
    } else {
        T::zero()
    }
}

fn scale<T: Scalar>(g: Grad4<T>, k: T) -> Grad4<T> {
    g.map(|v| v * k)
}

fn add<T: Scalar>(a: Grad4<T>, b: Grad4<T>) -> Grad4<T> {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]]
}

/// Overlap, enclosing box and center offsets shared by both losses, with
/// derivatives w.r.t. the predicted box.
struct PairTerms<T> {
    iou: T,
    d_iou: Grad4<T>,
    /// gt center minus pred center.
    ux: T,
    uy: T,
    enclose_w: T,
    enclose_h: T,
    d_enclose_w: Grad4<T>,
    d_enclose_h: Grad4<T>,
}

/// One axis of the overlap/enclosure computation. Returns
/// (overlap, d overlap/d center, d overlap/d size, enclose, d enclose/d center, d enclose/d size).
fn axis_terms<T: Scalar>(c: T, s: T, cg: T, sg: T) -> (T, T, T, T, T, T) {
    let half = T::half();
    let (p0, p1) = (c - s * half, c + s * half);
    let (g0, g1) = (cg - sg * half, cg + sg * half);

    let right_is_pred = p1 < g1;
    let left_is_pred = p0 > g0;
    let raw = p1.min(g1) - p0.max(g0);
    let (overlap, d_oc, d_os) = if raw > T::zero() {
        let dc = indicator::<T>(right_is_pred) - indicator::<T>(left_is_pred);
        let ds = (indicator::<T>(right_is_pred) + indicator::<T>(left_is_pred)) * half;
        (raw, dc, ds)
    } else {
        (T::zero(), T::zero(), T::zero())
    };

    let max_is_pred = p1 > g1;
    let min_is_pred = p0 < g0;
    let enclose = p1.max(g1) - p0.min(g0);
    let d_ec = indicator::<T>(max_is_pred) - indicator::<T>(min_is_pred);
    let d_es = (indicator::<T>(max_is_pred) + indicator::<T>(min_is_pred)) * half;
    (overlap, d_oc, d_os, enclose, d_ec, d_es)
}

fn pair_terms<T: Scalar>(p: &BBox<T>, g: &BBox<T>) -> PairTerms<T> {
    let z = T::zero();
    let (iw, diw_x, diw_w, cw, dcw_x, dcw_w) = axis_terms(p.cx, p.w, g.cx, g.w);
    let (ih, dih_y, dih_h, ch, dch_y, dch_h) = axis_terms(p.cy, p.h, g.cy, g.h);

    let inter = iw * ih;
    let d_inter = [diw_x * ih, dih_y * iw, diw_w * ih, dih_h * iw];
    // areas from edge extents keep IoU of a box with itself at exactly 1
    let (pw, ph) = (p.x_max() - p.x_min(), p.y_max() - p.y_min());
    let (gw, gh) = (g.x_max() - g.x_min(), g.y_max() - g.y_min());
    let union = pw * ph + gw * gh - inter;
    let d_union = [-d_inter[0], -d_inter[1], ph - d_inter[2], pw - d_inter[3]];
    let iou = inter / union;
    let u2 = union * union;
    let mut d_iou = [z; 4];
    for k in 0..4 {
        d_iou[k] = (d_inter[k] * union - inter * d_union[k]) / u2;
    }

    PairTerms {
        iou,
        d_iou,
        ux: g.cx - p.cx,
        uy: g.cy - p.cy,
        enclose_w: cw,
        enclose_h: ch,
        d_enclose_w: [dcw_x, z, dcw_w, z],
        d_enclose_h: [z, dch_y, z, dch_h],
    }
}

fn signum0<T: Scalar>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// Relative size difference `|s - s_gt| / max(s, s_gt)` and its derivative in `s`.
fn shape_ratio<T: Scalar>(s: T, sg: T) -> (T, T) {
    if s > sg {
        (T::one() - sg / s, sg / (s * s))
    } else {
        ((sg - s) / sg, -T::one() / sg)
    }
}

/// SIoU loss of `pred` against `gt`.
///
/// Angle cost: with center offsets `dx, dy` and distance `σ`,
/// `Λ = 1 - 2 sin²(asin(dy/σ) - π/4)`, which equals `2·dx·dy/σ²`; the latter
/// form is used for the gradient. `ρ_t` normalizes the center offset by the
/// enclosing box (`enclose_w`, `enclose_h`), not by the center height gap.
pub fn siou_loss<T: Scalar>(
    pred: &BBox<T>,
    gt: &BBox<T>,
    params: &SIoUParams<T>,
) -> Result<LossBreakdown<T>, LossError> {
    check_boxes(pred, gt)?;
    let z = T::zero();
    let one = T::one();
    let two = T::two();
    let t = pair_terms(pred, gt);
    let (ux, uy) = (t.ux, t.uy);
    let (center_dx, center_dy) = (ux.abs(), uy.abs());
    let sigma = center_dx.hypot(center_dy);

    // angle
    let (lambda, d_lambda) = if sigma < params.sigma_epsilon {
        (z, [z; 4])
    } else {
        let s = (center_dy / sigma).max(z).min(one);
        let a = s.asin() - T::FRAC_PI_4();
        let lambda = one - two * a.sin() * a.sin();
        let q = ux * ux + uy * uy;
        let pp = center_dx * center_dy;
        let dp_dux = signum0(ux) * center_dy;
        let dp_duy = center_dx * signum0(uy);
        let q2 = q * q;
        let dl_dux = two * (dp_dux * q - pp * two * ux) / q2;
        let dl_duy = two * (dp_duy * q - pp * two * uy) / q2;
        // ux = gx - x, so d/dx = -d/dux
        (lambda, [-dl_dux, -dl_duy, z, z])
    };

    // distance
    let gamma = two - lambda;
    let d_gamma = scale(d_lambda, -one);
    let cw = t.enclose_w;
    let ch = t.enclose_h;
    let rho_x = (ux / cw) * (ux / cw);
    let rho_y = (uy / ch) * (uy / ch);
    let cw3 = cw * cw * cw;
    let ch3 = ch * ch * ch;
    let mut d_rho_x = scale(t.d_enclose_w, -two * ux * ux / cw3);
    d_rho_x[0] = d_rho_x[0] - two * ux / (cw * cw);
    let mut d_rho_y = scale(t.d_enclose_h, -two * uy * uy / ch3);
    d_rho_y[1] = d_rho_y[1] - two * uy / (ch * ch);

    let ex = (-gamma * rho_x).exp();
    let ey = (-gamma * rho_y).exp();
    let delta = (one - ex) + (one - ey);
    let mut d_delta = [z; 4];
    for k in 0..4 {
        d_delta[k] = ex * (d_gamma[k] * rho_x + gamma * d_rho_x[k]) + ey * (d_gamma[k] * rho_y + gamma * d_rho_y[k]);
    }

    // shape
    let theta = params.theta_exponent;
    let (omega_w, d_omega_w) = shape_ratio(pred.w, gt.w);
    let (omega_h, d_omega_h) = shape_ratio(pred.h, gt.h);
    let term = |om: T| {
        let e = (-om).exp();
        let base = one - e;
        (base.powf(theta), theta * base.powf(theta - one) * e)
    };
    let (sw, dsw) = term(omega_w);
    let (sh, dsh) = term(omega_h);
    let omega = sw + sh;
    let d_omega = [z, z, dsw * d_omega_w, dsh * d_omega_h];

    let total = one - t.iou + (delta + omega) * T::half();
    let gradient = add(scale(t.d_iou, -one), scale(add(d_delta, d_omega), T::half()));

    Ok(LossBreakdown {
        iou: t.iou,
        angle_lambda: lambda,
        distance_delta: delta,
        shape_omega: omega,
        total,
        gradient,
    })
}

/// CIoU loss: `1 - IoU + d²/c² + αv`, with `v = (4/π²)(atan(w_gt/h_gt) - atan(w/h))²`
/// and `α = v / ((1 - IoU) + v)`. The gradient includes the dependence of α on the box.
pub fn ciou_loss<T: Scalar>(pred: &BBox<T>, gt: &BBox<T>) -> Result<LossBreakdown<T>, LossError> {
    check_boxes(pred, gt)?;
    let z = T::zero();
    let one = T::one();
    let two = T::two();
    let t = pair_terms(pred, gt);

    let d2 = t.ux * t.ux + t.uy * t.uy;
    let d_d2 = [-two * t.ux, -two * t.uy, z, z];
    let c2 = t.enclose_w * t.enclose_w + t.enclose_h * t.enclose_h;
    let d_c2 = add(
        scale(t.d_enclose_w, two * t.enclose_w),
        scale(t.d_enclose_h, two * t.enclose_h),
    );
    let center_term = d2 / c2;
    let mut d_center = [z; 4];
    for k in 0..4 {
        d_center[k] = (d_d2[k] * c2 - d2 * d_c2[k]) / (c2 * c2);
    }

    let k = T::lit(4.0) / (T::PI() * T::PI());
    let angle_gap = (gt.w / gt.h).atan() - (pred.w / pred.h).atan();
    let v = k * angle_gap * angle_gap;
    let r2 = pred.w * pred.w + pred.h * pred.h;
    let d_v = [
        z,
        z,
        two * k * angle_gap * (-pred.h / r2),
        two * k * angle_gap * (pred.w / r2),
    ];

    let denom = one - t.iou + v;
    let (aspect_term, d_aspect) = if denom > z {
        let mut d = [z; 4];
        for i in 0..4 {
            let d_denom = d_v[i] - t.d_iou[i];
            d[i] = (two * v * d_v[i] * denom - v * v * d_denom) / (denom * denom);
        }
        (v * v / denom, d)
    } else {
        (z, [z; 4])
    };

    let total = one - t.iou + center_term + aspect_term;
    let gradient = add(scale(t.d_iou, -one), add(d_center, d_aspect));
    Ok(LossBreakdown {
        iou: t.iou,
        angle_lambda: z,
        distance_delta: center_term,
        shape_omega: aspect_term,
        total,
        gradient,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn bx(cx: f64, cy: f64, w: f64, h: f64) -> BBox<f64> {
        BBox::new(cx, cy, w, h).unwrap()
    }

    #[test]
    fn coincident_boxes_zero_loss() {
        let b = bx(0.4, 0.6, 0.2, 0.1);
        let l = siou_loss(&b, &b, &SIoUParams::default()).unwrap();
        assert_eq!(l.iou, 1.0);
        assert_eq!(l.angle_lambda, 0.0);
        assert_eq!(l.distance_delta, 0.0);
        assert_eq!(l.shape_omega, 0.0);
        assert_eq!(l.total, 0.0);
        assert!(l.gradient.iter().all(|g| g.is_finite()));

        let c = ciou_loss(&b, &b).unwrap();
        assert_eq!(c.total, 0.0);
    }

    #[test]
    fn lambda_endpoints() {
        let p = SIoUParams::default();
        let l = siou_loss(&bx(0.3, 0.5, 0.1, 0.1), &bx(0.6, 0.5, 0.1, 0.1), &p).unwrap();
        assert_abs_diff_eq!(l.angle_lambda, 0.0, epsilon = 1e-12);
        let l = siou_loss(&bx(0.3, 0.3, 0.1, 0.1), &bx(0.5, 0.5, 0.1, 0.1), &p).unwrap();
        assert_abs_diff_eq!(l.angle_lambda, 1.0, epsilon = 1e-12);
        // vertical alignment also gives 0 under the sin² form
        let l = siou_loss(&bx(0.5, 0.2, 0.1, 0.1), &bx(0.5, 0.6, 0.1, 0.1), &p).unwrap();
        assert_abs_diff_eq!(l.angle_lambda, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn rejects_invalid_boxes() {
        let good = bx(0.5, 0.5, 0.1, 0.1);
        let bad = BBox {
            cx: 0.5,
            cy: 0.5,
            w: 0.0,
            h: 0.1,
        };
        assert!(matches!(
            siou_loss(&bad, &good, &SIoUParams::default()),
            Err(LossError::InvalidBox { which: "predicted", .. })
        ));
        assert!(ciou_loss(&good, &bad).is_err());
        assert!(SIoUParams::new(0.5, 1e-9).is_err());
        assert!(SIoUParams::new(4.0, 0.0).is_err());
    }

    #[test]
    fn ciou_same_aspect_ratio_has_no_aspect_term() {
        let p = bx(0.4, 0.45, 0.2, 0.1);
        let g = bx(0.55, 0.5, 0.4, 0.2);
        let c = ciou_loss(&p, &g).unwrap();
        assert_abs_diff_eq!(c.shape_omega, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.total, 1.0 - c.iou + c.distance_delta, epsilon = 1e-12);
    }

    #[test]
    fn generic_over_f32() {
        let p = BBox::<f32>::new(0.5, 0.5, 0.2, 0.2).unwrap();
        let g = BBox::<f32>::new(0.6, 0.55, 0.25, 0.2).unwrap();
        let a = siou_loss(&p, &g, &SIoUParams::default()).unwrap();
        let b = siou_loss(&p.cast::<f64>(), &g.cast::<f64>(), &SIoUParams::default()).unwrap();
        assert!((a.total as f64 - b.total).abs() < 1e-5);
    }

    fn arb_box() -> impl Strategy<Value = BBox<f64>> {
        (0.1..0.9f64, 0.1..0.9f64, 0.01..0.5f64, 0.01..0.5f64).prop_map(|(cx, cy, w, h)| BBox { cx, cy, w, h })
    }

    proptest! {
        #[test]
        fn siou_range_and_bounds(p in arb_box(), g in arb_box()) {
            let l = siou_loss(&p, &g, &SIoUParams::default()).unwrap();
            prop_assert!((0.0..=1.0).contains(&l.iou));
            prop_assert!((0.0..=1.0 + 1e-12).contains(&l.angle_lambda));
            prop_assert!(l.distance_delta >= 0.0 && l.distance_delta < 2.0);
            prop_assert!(l.shape_omega >= 0.0 && l.shape_omega < 2.0);
            prop_assert!(l.total >= 0.0 && l.total < 3.0);
            prop_assert!(l.total >= 1.0 - l.iou - 1e-15);
            let recomposed = 1.0 - l.iou + (l.distance_delta + l.shape_omega) / 2.0;
            prop_assert!((l.total - recomposed).abs() <= 1e-12);
        }

        #[test]
        fn siou_translation_invariant(p in arb_box(), g in arb_box(), sx in -0.3..0.3f64, sy in -0.3..0.3f64) {
            let a = siou_loss(&p, &g, &SIoUParams::default()).unwrap();
            let b = siou_loss(&p.translated(sx, sy), &g.translated(sx, sy), &SIoUParams::default()).unwrap();
            prop_assert!((a.iou - b.iou).abs() <= 1e-12);
            prop_assert!((a.angle_lambda - b.angle_lambda).abs() <= 1e-12);
            prop_assert!((a.distance_delta - b.distance_delta).abs() <= 1e-12);
            prop_assert!((a.shape_omega - b.shape_omega).abs() <= 1e-12);
            prop_assert!((a.total - b.total).abs() <= 1e-12);
        }

        #[test]
        fn siou_scale_invariant(p in arb_box(), g in arb_box(), k in 0.2..5.0f64) {
            let s = |b: BBox<f64>| BBox { cx: b.cx * k, cy: b.cy * k, w: b.w * k, h: b.h * k };
            let a = siou_loss(&p, &g, &SIoUParams::default()).unwrap();
            let b = siou_loss(&s(p), &s(g), &SIoUParams::default()).unwrap();
            prop_assert!((a.iou - b.iou).abs() <= 1e-12);
            prop_assert!((a.angle_lambda - b.angle_lambda).abs() <= 1e-12);
            prop_assert!((a.distance_delta - b.distance_delta).abs() <= 1e-12);
            prop_assert!((a.shape_omega - b.shape_omega).abs() <= 1e-12);
        }

        // Λ depends on (dx, dy) only through dx·dy/σ², so swapping axes leaves it unchanged.
        #[test]
        fn lambda_axis_swap(dx in 0.001..0.3f64, dy in 0.001..0.3f64) {
            let p = SIoUParams::default();
            let g = bx(0.5, 0.5, 0.1, 0.1);
            let a = siou_loss(&bx(0.5 - dx, 0.5 - dy, 0.1, 0.1), &g, &p).unwrap();
            let b = siou_loss(&bx(0.5 - dy, 0.5 - dx, 0.1, 0.1), &g, &p).unwrap();
            prop_assert!((a.angle_lambda - b.angle_lambda).abs() <= 1e-12);
        }

        #[test]
        fn ciou_at_least_one_minus_iou(p in arb_box(), g in arb_box()) {
            let c = ciou_loss(&p, &g).unwrap();
            prop_assert!(c.total >= 1.0 - c.iou - 1e-15);
            prop_assert!(c.distance_delta >= 0.0 && c.distance_delta <= 1.0);
        }
    }
}
