use rand::Rng;

use super::{BoxLoss, LossError};
use crate::geometry::BBox;
use crate::scalar::Scalar;

/// Lower bound on the scale used to turn absolute gradient differences into
/// relative ones; components smaller than this are compared absolutely.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

/// Distance from the pair to the nearest place where the loss is not differentiable:
/// coinciding edges (min/max switches), zero overlap width, and for SIoU the
/// zeros of the center offsets and size differences plus the σ cutoff.
pub fn nonsmooth_clearance<T: Scalar>(loss: &BoxLoss<T>, pred: &BBox<T>, gt: &BBox<T>) -> T {
    let mut gaps = vec![
        pred.x_min() - gt.x_min(),
        pred.x_max() - gt.x_max(),
        pred.y_min() - gt.y_min(),
        pred.y_max() - gt.y_max(),
        pred.x_max().min(gt.x_max()) - pred.x_min().max(gt.x_min()),
        pred.y_max().min(gt.y_max()) - pred.y_min().max(gt.y_min()),
    ];
    if let BoxLoss::Siou(params) = loss {
        let (ux, uy) = (gt.cx - pred.cx, gt.cy - pred.cy);
        gaps.extend([
            ux,
            uy,
            pred.w - gt.w,
            pred.h - gt.h,
            ux.hypot(uy) - params.sigma_epsilon,
        ]);
    }
    gaps.into_iter().map(|g| g.abs()).fold(T::infinity(), |a, b| a.min(b))
}

/// Central finite differences of `total` along each of the predicted box's
/// four parameters, compared against the analytic gradient. Returns the
/// largest relative error `|a - n| / max(|a|, |n|, GRAD_CHECK_FLOOR)`.
pub fn loss_gradient_check<T: Scalar>(
    loss: &BoxLoss<T>,
    pred: &BBox<T>,
    gt: &BBox<T>,
    step: T,
) -> Result<T, LossError> {
    if !(step > T::zero() && step.is_finite()) {
        return Err(LossError::BadStep(step.as_f64()));
    }
    let analytic = loss.evaluate(pred, gt)?.gradient;
    let clearance = nonsmooth_clearance(loss, pred, gt);
    let required = T::lit(10.0) * step;
    if clearance < required {
        return Err(LossError::NearKink {
            clearance: clearance.as_f64(),
            required: required.as_f64(),
        });
    }

    let floor = T::lit(GRAD_CHECK_FLOOR);
    let mut worst = T::zero();
    for (k, a) in analytic.iter().enumerate() {
        let shifted = |d: T| {
            let mut b = *pred;
            match k {
                0 => b.cx = b.cx + d,
                1 => b.cy = b.cy + d,
                2 => b.w = b.w + d,
                _ => b.h = b.h + d,
            }
            b
        };
        let plus = loss.evaluate(&shifted(step), gt)?.total;
        let minus = loss.evaluate(&shifted(-step), gt)?.total;
        let numeric = (plus - minus) / (T::two() * step);
        let denom = a.abs().max(numeric.abs()).max(floor);
        worst = worst.max((*a - numeric).abs() / denom);
    }
    Ok(worst)
}

/// Draws a (pred, gt) pair at least `10 * step` away from every non-smooth locus.
/// About half the draws overlap.
pub fn sample_smooth_pair<T: Scalar, R: Rng + ?Sized>(rng: &mut R, loss: &BoxLoss<T>, step: T) -> (BBox<T>, BBox<T>) {
    let required = T::lit(10.0) * step;
    loop {
        let gt = BBox {
            cx: T::lit(rng.random_range(0.2..0.8)),
            cy: T::lit(rng.random_range(0.2..0.8)),
            w: T::lit(rng.random_range(0.02..0.4)),
            h: T::lit(rng.random_range(0.02..0.4)),
        };
        let spread = if rng.random_bool(0.5) { 0.5 } else { 1.5 };
        let pred = BBox {
            cx: gt.cx + T::lit(rng.random_range(-spread..spread)) * gt.w,
            cy: gt.cy + T::lit(rng.random_range(-spread..spread)) * gt.h,
            w: gt.w * T::lit(rng.random_range(0.5..2.0)),
            h: gt.h * T::lit(rng.random_range(0.5..2.0)),
        };
        if nonsmooth_clearance(loss, &pred, &gt) >= required {
            return (pred, gt);
        }
    }
}
