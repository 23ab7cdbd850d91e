//! Affine math on normalized image coordinates and axis-aligned boxes.
//!
//! Coordinates are normalized so that the image spans `[0, 1]²`. Matrices built
//! here follow the math convention (positive rotation is counterclockwise with
//! x to the right and y up); the raster adapter that flips orientation for
//! y-down images lives in [`crate::augment`].

use std::ops::Mul;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("shear coefficients ({sh_x}, {sh_y}) must satisfy |sh| < 1")]
    ShearOutOfRange { sh_x: f64, sh_y: f64 },
    #[error("matrix is not invertible (det = {0})")]
    Singular(f64),
    #[error("bottom row of an affine matrix must be (0, 0, 1)")]
    NotAffine,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid box: w = {w}, h = {h} (both must be positive and finite)")]
    InvalidBox { w: f64, h: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point<T> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> Point<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }
}

/// 3×3 homogeneous 2-D affine transform, row-major.
///
/// ```text
/// | S_x  Sh_x T_x |
/// | Sh_y S_y  T_y |
/// | 0    0    1   |
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineMatrix<T> {
    rows: [[T; 3]; 3],
}

impl<T: Scalar> AffineMatrix<T> {
    pub fn identity() -> Self {
        let (o, z) = (T::one(), T::zero());
        Self {
            rows: [[o, z, z], [z, o, z], [z, z, o]],
        }
    }

    /// Builds a matrix from its rows, checking the affine bottom row and invertibility.
    pub fn from_rows(rows: [[T; 3]; 3]) -> Result<Self, GeometryError> {
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite("matrix"));
        }
        if rows[2] != [T::zero(), T::zero(), T::one()] {
            return Err(GeometryError::NotAffine);
        }
        let m = Self { rows };
        let det = m.det();
        if det == T::zero() {
            return Err(GeometryError::Singular(det.as_f64()));
        }
        Ok(m)
    }

    /// Shear with unit scale and zero translation: `[[1, sh_x], [sh_y, 1]]`.
    pub fn shear(sh_x: T, sh_y: T) -> Result<Self, GeometryError> {
        if !sh_x.is_finite() || !sh_y.is_finite() || sh_x.abs() >= T::one() || sh_y.abs() >= T::one() {
            return Err(GeometryError::ShearOutOfRange {
                sh_x: sh_x.as_f64(),
                sh_y: sh_y.as_f64(),
            });
        }
        let mut m = Self::identity();
        m.rows[0][1] = sh_x;
        m.rows[1][0] = sh_y;
        // |sh| < 1 on both axes already implies det = 1 - sh_x*sh_y > 0
        debug_assert!(m.det() > T::zero());
        Ok(m)
    }

    /// Counterclockwise rotation by `theta` radians (x right, y up).
    pub fn rotation(theta: T) -> Self {
        let (s, c) = theta.sin_cos();
        let mut m = Self::identity();
        m.rows[0][0] = c;
        m.rows[0][1] = -s;
        m.rows[1][0] = s;
        m.rows[1][1] = c;
        m
    }

    pub fn translation(tx: T, ty: T) -> Self {
        let mut m = Self::identity();
        m.rows[0][2] = tx;
        m.rows[1][2] = ty;
        m
    }

    pub fn scaling(sx: T, sy: T) -> Result<Self, GeometryError> {
        let mut m = Self::identity();
        m.rows[0][0] = sx;
        m.rows[1][1] = sy;
        Self::from_rows(m.rows)
    }

    pub fn rows(&self) -> &[[T; 3]; 3] {
        &self.rows
    }

    pub fn scale_x(&self) -> T {
        self.rows[0][0]
    }
    pub fn scale_y(&self) -> T {
        self.rows[1][1]
    }
    pub fn shear_x(&self) -> T {
        self.rows[0][1]
    }
    pub fn shear_y(&self) -> T {
        self.rows[1][0]
    }
    pub fn translate_x(&self) -> T {
        self.rows[0][2]
    }
    pub fn translate_y(&self) -> T {
        self.rows[1][2]
    }

    /// Determinant of the upper-left 2×2 block.
    pub fn det(&self) -> T {
        let r = &self.rows;
        r[0][0] * r[1][1] - r[0][1] * r[1][0]
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::identity()
    }

    pub fn inverse(&self) -> Result<Self, GeometryError> {
        let det = self.det();
        if det == T::zero() || !det.is_finite() {
            return Err(GeometryError::Singular(det.as_f64()));
        }
        let r = &self.rows;
        let (a, b, c, d) = (r[0][0], r[0][1], r[1][0], r[1][1]);
        let (tx, ty) = (r[0][2], r[1][2]);
        let ia = d / det;
        let ib = -b / det;
        let ic = -c / det;
        let id = a / det;
        let (z, o) = (T::zero(), T::one());
        Ok(Self {
            rows: [
                [ia, ib, -(ia * tx + ib * ty)],
                [ic, id, -(ic * tx + id * ty)],
                [z, z, o],
            ],
        })
    }

    pub fn apply(&self, p: Point<T>) -> Point<T> {
        let r = &self.rows;
        Point {
            x: r[0][0] * p.x + r[0][1] * p.y + r[0][2],
            y: r[1][0] * p.x + r[1][1] * p.y + r[1][2],
        }
    }

    /// The same transform pivoting at the image center: `T(c) · self · T(-c)`, c = (0.5, 0.5).
    pub fn about_center(&self) -> Self {
        let h = T::half();
        AffineMatrix::translation(h, h) * *self * AffineMatrix::translation(-h, -h)
    }

    pub fn apply_about_center(&self, p: Point<T>) -> Point<T> {
        if self.is_identity() {
            return p;
        }
        let h = T::half();
        let q = self.apply(Point::new(p.x - h, p.y - h));
        Point::new(q.x + h, q.y + h)
    }

    pub fn cast<U: Scalar>(&self) -> AffineMatrix<U> {
        let c = |v: T| U::lit(v.as_f64());
        AffineMatrix {
            rows: self.rows.map(|row| row.map(c)),
        }
    }
}

impl<T: Scalar> Mul for AffineMatrix<T> {
    type Output = Self;

    fn mul(self, rhs: Self) -> Self {
        let mut out = [[T::zero(); 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).fold(T::zero(), |acc, k| acc + self.rows[i][k] * rhs.rows[k][j]);
            }
        }
        Self { rows: out }
    }
}

/// Normalized axis-aligned box in center format.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox<T> {
    pub cx: T,
    pub cy: T,
    pub w: T,
    pub h: T,
}

impl<T: Scalar> BBox<T> {
    pub fn new(cx: T, cy: T, w: T, h: T) -> Result<Self, GeometryError> {
        let b = Self { cx, cy, w, h };
        b.validate()?;
        Ok(b)
    }

    /// Builds a box from corner extents `[x0, x1] × [y0, y1]`.
    pub fn from_extent(x0: T, y0: T, x1: T, y1: T) -> Result<Self, GeometryError> {
        let h = T::half();
        Self::new((x0 + x1) * h, (y0 + y1) * h, x1 - x0, y1 - y0)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.cx.is_finite() && self.cy.is_finite()) {
            return Err(GeometryError::NonFinite("box center"));
        }
        if !(self.w.is_finite() && self.h.is_finite() && self.w > T::zero() && self.h > T::zero()) {
            return Err(GeometryError::InvalidBox {
                w: self.w.as_f64(),
                h: self.h.as_f64(),
            });
        }
        Ok(())
    }

    pub fn x_min(&self) -> T {
        self.cx - self.w * T::half()
    }
    pub fn x_max(&self) -> T {
        self.cx + self.w * T::half()
    }
    pub fn y_min(&self) -> T {
        self.cy - self.h * T::half()
    }
    pub fn y_max(&self) -> T {
        self.cy + self.h * T::half()
    }

    pub fn area(&self) -> T {
        self.w * self.h
    }

    /// Corners in order top-left, top-right, bottom-right, bottom-left (y down).
    pub fn corners(&self) -> [Point<T>; 4] {
        let (x0, x1, y0, y1) = (self.x_min(), self.x_max(), self.y_min(), self.y_max());
        [
            Point::new(x0, y0),
            Point::new(x1, y0),
            Point::new(x1, y1),
            Point::new(x0, y1),
        ]
    }

    /// True when the box extent lies inside `region`'s extent (boundaries inclusive).
    pub fn is_inside(&self, region: &BBox<T>) -> bool {
        self.x_min() >= region.x_min()
            && self.x_max() <= region.x_max()
            && self.y_min() >= region.y_min()
            && self.y_max() <= region.y_max()
    }

    pub fn translated(&self, dx: T, dy: T) -> Self {
        Self {
            cx: self.cx + dx,
            cy: self.cy + dy,
            ..*self
        }
    }

    pub fn cast<U: Scalar>(&self) -> BBox<U> {
        BBox {
            cx: U::lit(self.cx.as_f64()),
            cy: U::lit(self.cy.as_f64()),
            w: U::lit(self.w.as_f64()),
            h: U::lit(self.h.as_f64()),
        }
    }
}

/// The unit square `[0, 1]²` as a box.
pub fn unit_square<T: Scalar>() -> BBox<T> {
    BBox {
        cx: T::half(),
        cy: T::half(),
        w: T::one(),
        h: T::one(),
    }
}

/// Maps the four corners of `b` through `m` pivoted at the image center and
/// returns their axis-aligned envelope. The result is not clipped.
pub fn transform_bbox<T: Scalar>(m: &AffineMatrix<T>, b: &BBox<T>) -> BBox<T> {
    if m.is_identity() {
        return *b;
    }
    let corners = b.corners().map(|p| m.apply_about_center(p));
    let (mut x0, mut y0) = (T::infinity(), T::infinity());
    let (mut x1, mut y1) = (T::neg_infinity(), T::neg_infinity());
    for p in corners {
        x0 = x0.min(p.x);
        x1 = x1.max(p.x);
        y0 = y0.min(p.y);
        y1 = y1.max(p.y);
    }
    let h = T::half();
    BBox {
        cx: (x0 + x1) * h,
        cy: (y0 + y1) * h,
        w: x1 - x0,
        h: y1 - y0,
    }
}

/// Intersects `b` with `region`. Returns the clipped box (if it has positive
/// width and height) and the fraction of `b`'s area that was retained.
pub fn clip_bbox<T: Scalar>(b: &BBox<T>, region: &BBox<T>) -> (Option<BBox<T>>, T) {
    if b.is_inside(region) {
        return (Some(*b), T::one());
    }
    let x0 = b.x_min().max(region.x_min());
    let x1 = b.x_max().min(region.x_max());
    let y0 = b.y_min().max(region.y_min());
    let y1 = b.y_max().min(region.y_max());
    if x1 <= x0 || y1 <= y0 {
        return (None, T::zero());
    }
    let (w, h) = (x1 - x0, y1 - y0);
    let fraction = ((w * h) / b.area()).min(T::one());
    let half = T::half();
    (
        Some(BBox {
            cx: (x0 + x1) * half,
            cy: (y0 + y1) * half,
            w,
            h,
        }),
        fraction,
    )
}

/// Area of the intersection of two boxes.
pub fn intersection_area<T: Scalar>(a: &BBox<T>, b: &BBox<T>) -> T {
    let iw = (a.x_max().min(b.x_max()) - a.x_min().max(b.x_min())).max(T::zero());
    let ih = (a.y_max().min(b.y_max()) - a.y_min().max(b.y_min())).max(T::zero());
    iw * ih
}

/// Box area measured from its edges, so that a box's intersection with itself
/// equals its own area exactly.
fn extent_area<T: Scalar>(b: &BBox<T>) -> T {
    (b.x_max() - b.x_min()) * (b.y_max() - b.y_min())
}

pub fn iou<T: Scalar>(a: &BBox<T>, b: &BBox<T>) -> T {
    let inter = intersection_area(a, b);
    let union = extent_area(a) + extent_area(b) - inter;
    if union <= T::zero() {
        return T::zero();
    }
    (inter / union).max(T::zero()).min(T::one())
}
