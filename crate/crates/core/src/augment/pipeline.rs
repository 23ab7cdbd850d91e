use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::raster::{gaussian_blur, resize, warp_image_with_fill, Image};
use super::rng::{keyed_rng, rng_key};
use super::AugmentError;
use crate::dataset::Label;
use crate::geometry::{clip_bbox, transform_bbox, unit_square, AffineMatrix, BBox};

/// When a clipped label is kept.
///
/// A label that was not clipped at all is always kept. A clipped label is
/// dropped when less than `min_fraction` of its area survived or when either
/// clipped side is shorter than `min_side_px` pixels of the image it lands in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetentionPolicy {
    pub min_fraction: f64,
    pub min_side_px: f64,
}

impl Default for RetentionPolicy {
    fn default() -> Self {
        Self {
            min_fraction: 0.25,
            min_side_px: 2.0,
        }
    }
}

impl RetentionPolicy {
    pub fn keep_all() -> Self {
        Self {
            min_fraction: 0.0,
            min_side_px: 0.0,
        }
    }

    fn validate(&self) -> Result<(), AugmentError> {
        if !(0.0..=1.0).contains(&self.min_fraction) {
            return Err(AugmentError::InvalidSpec(format!(
                "retention fraction {} outside [0, 1]",
                self.min_fraction
            )));
        }
        if !(self.min_side_px >= 0.0 && self.min_side_px.is_finite()) {
            return Err(AugmentError::InvalidSpec(format!(
                "minimum side {} px must be a nonnegative number",
                self.min_side_px
            )));
        }
        Ok(())
    }

    /// Clips `b` to `region` and re-expresses it in `region`-local normalized
    /// coordinates. `region_px` is the pixel size of the region.
    fn apply(&self, b: &BBox<f64>, region: &BBox<f64>, region_px: (usize, usize)) -> Option<BBox<f64>> {
        let (clipped, fraction) = clip_bbox(b, region);
        let clipped = clipped?;
        let local = BBox {
            cx: (clipped.cx - region.x_min()) / region.w,
            cy: (clipped.cy - region.y_min()) / region.h,
            w: clipped.w / region.w,
            h: clipped.h / region.h,
        };
        if fraction < 1.0 {
            // Slack so a label sitting exactly on the threshold is kept.
            if fraction < self.min_fraction - 1e-12 {
                return None;
            }
            if local.w * (region_px.0 as f64) < self.min_side_px || local.h * (region_px.1 as f64) < self.min_side_px {
                return None;
            }
        }
        Some(local)
    }
}

/// How a `±limit` parameter is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Uniform on `[-limit, +limit]`.
    #[default]
    Uniform,
    /// Exactly `-limit` or `+limit`, sign chosen at random.
    Endpoints,
}

impl FromStr for SamplingMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "endpoints" => Ok(Self::Endpoints),
            other => Err(format!("unknown sampling mode `{other}` (uniform|endpoints)")),
        }
    }
}

impl fmt::Display for SamplingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Uniform => "uniform",
            Self::Endpoints => "endpoints",
        })
    }
}

/// Draws `u` uniform on [-1, 1] and maps it to the parameter. Scaling a shared
/// `u` keeps draws for the same item comparable across different limits.
fn draw<R: Rng>(rng: &mut R, limit: f64, mode: SamplingMode) -> f64 {
    let u: f64 = rng.random_range(-1.0..=1.0);
    match mode {
        SamplingMode::Uniform => u * limit,
        SamplingMode::Endpoints if u < 0.0 => -limit,
        SamplingMode::Endpoints => limit,
    }
}

/// A simulated viewpoint change, expressed in the math convention (y up).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ViewTransform {
    Shear { sh_x: f64, sh_y: f64 },
    Rotate { degrees: f64 },
}

impl ViewTransform {
    pub fn matrix(&self) -> Result<AffineMatrix<f64>, AugmentError> {
        Ok(match *self {
            ViewTransform::Shear { sh_x, sh_y } => AffineMatrix::shear(sh_x, sh_y)?,
            ViewTransform::Rotate { degrees } => AffineMatrix::rotation(degrees.to_radians()),
        })
    }

    /// Matrix acting on y-down normalized image coordinates.
    pub fn image_matrix(&self) -> Result<AffineMatrix<f64>, AugmentError> {
        Ok(image_frame(&self.matrix()?))
    }

    pub fn describe(&self) -> String {
        match *self {
            ViewTransform::Shear { sh_x, sh_y } => format!("shear({sh_x:+.6},{sh_y:+.6})"),
            ViewTransform::Rotate { degrees } => format!("rot({degrees:+.6})"),
        }
    }
}

/// Conjugates a math-convention matrix by the y-flip `diag(1, -1)` so it acts
/// on raster coordinates where y grows downward. A counterclockwise rotation
/// by θ becomes a raster rotation by −θ, which looks counterclockwise on screen.
pub fn image_frame(m: &AffineMatrix<f64>) -> AffineMatrix<f64> {
    let r = m.rows();
    AffineMatrix::from_rows([
        [r[0][0], -r[0][1], r[0][2]],
        [-r[1][0], r[1][1], -r[1][2]],
        [0.0, 0.0, 1.0],
    ])
    .expect("conjugation preserves invertibility")
}

/// One recorded processing step of a derived item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Step {
    Shear { sh_x: f64, sh_y: f64, rng_key: String },
    Rotate { degrees: f64, rng_key: String },
    Warp { matrix: [[f64; 3]; 3] },
    Tile { index: usize },
    Blur { radius: usize, rng_key: String },
    Resize { size: usize },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Provenance {
    /// Identifier of the source item the derivation started from.
    pub origin: String,
    pub steps: Vec<Step>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    pub image: Image,
    pub labels: Vec<Label>,
    pub source_id: String,
    pub provenance: Provenance,
}

impl LabeledImage {
    pub fn new(image: Image, labels: Vec<Label>, source_id: impl Into<String>) -> Self {
        let source_id = source_id.into();
        Self {
            image,
            labels,
            provenance: Provenance {
                origin: source_id.clone(),
                steps: Vec::new(),
            },
            source_id,
        }
    }

    fn derive(&self, image: Image, labels: Vec<Label>, suffix: &str, step: Step) -> Self {
        let mut provenance = self.provenance.clone();
        provenance.steps.push(step);
        Self {
            image,
            labels,
            source_id: format!("{}{}", self.source_id, suffix),
            provenance,
        }
    }
}

fn warp_with(
    li: &LabeledImage,
    m: &AffineMatrix<f64>,
    retention: &RetentionPolicy,
    fill: u8,
    suffix: &str,
    step: Step,
) -> Result<LabeledImage, AugmentError> {
    let image = warp_image_with_fill(&li.image, m, fill)?;
    let unit = unit_square();
    let px = (image.width(), image.height());
    let labels = li
        .labels
        .iter()
        .filter_map(|l| {
            let moved = transform_bbox(m, &l.bbox);
            retention.apply(&moved, &unit, px).map(|bbox| Label {
                class_id: l.class_id,
                bbox,
            })
        })
        .collect();
    Ok(li.derive(image, labels, suffix, step))
}

/// Warps image and labels by `m` (raster frame, pivot at the image center),
/// clips labels to the image and drops those failing `retention`.
pub fn warp_labeled(
    li: &LabeledImage,
    m: &AffineMatrix<f64>,
    retention: &RetentionPolicy,
) -> Result<LabeledImage, AugmentError> {
    let r = m.rows();
    let suffix = format!(
        "@affine({:.6},{:.6},{:.6},{:.6},{:.6},{:.6})",
        r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2]
    );
    warp_with(li, m, retention, 0, &suffix, Step::Warp { matrix: *r })
}

/// Splits into quadrants ordered top-left, top-right, bottom-left, bottom-right.
/// Odd dimensions put the extra column/row in the right/bottom tiles. Labels
/// are clipped per quadrant and rescaled to tile-local coordinates; a label
/// spanning the split may appear in several tiles.
pub fn tile_2x2(li: &LabeledImage, retention: &RetentionPolicy) -> Result<Vec<LabeledImage>, AugmentError> {
    let (w, h) = (li.image.width(), li.image.height());
    if w < 2 || h < 2 {
        return Err(AugmentError::TooSmallToTile { width: w, height: h });
    }
    let (xs, ys) = (w / 2, h / 2);
    let cells = [
        (0, 0, xs, ys),
        (xs, 0, w - xs, ys),
        (0, ys, xs, h - ys),
        (xs, ys, w - xs, h - ys),
    ];
    cells
        .iter()
        .enumerate()
        .map(|(index, &(x0, y0, tw, th))| {
            let image = li.image.crop(x0, y0, tw, th)?;
            let region = BBox {
                cx: (x0 as f64 + tw as f64 / 2.0) / w as f64,
                cy: (y0 as f64 + th as f64 / 2.0) / h as f64,
                w: tw as f64 / w as f64,
                h: th as f64 / h as f64,
            };
            let labels = li
                .labels
                .iter()
                .filter_map(|l| {
                    retention.apply(&l.bbox, &region, (tw, th)).map(|bbox| Label {
                        class_id: l.class_id,
                        bbox,
                    })
                })
                .collect();
            Ok(li.derive(image, labels, &format!("#t{index}"), Step::Tile { index }))
        })
        .collect()
}

/// Settings for the expanded training set (original + sheared + rotated, then tiled, blurred, resized).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentSpec {
    /// Shear coefficients are drawn from `[-shear_limit, shear_limit]` (unitless).
    pub shear_limit: f64,
    /// Rotation is drawn from `[-rotate_limit, rotate_limit]` degrees.
    pub rotate_limit: f64,
    /// Blur radius in pixels, drawn per tile from `[blur_radius_min, blur_radius_max]`.
    pub blur_radius_min: usize,
    pub blur_radius_max: usize,
    /// Side of the square output tiles, pixels.
    pub output_size: usize,
    pub seed: u64,
    pub retention: RetentionPolicy,
    pub sampling: SamplingMode,
    /// Gray level for pixels warped in from outside the canvas.
    pub fill: u8,
}

impl Default for AugmentSpec {
    fn default() -> Self {
        Self {
            shear_limit: 0.06,
            rotate_limit: 10.0,
            blur_radius_min: 1,
            blur_radius_max: 5,
            output_size: 640,
            seed: 0,
            retention: RetentionPolicy::default(),
            sampling: SamplingMode::Uniform,
            fill: 0,
        }
    }
}

fn check_limits(shear_limit: f64, rotate_limit: f64) -> Result<(), AugmentError> {
    if !(0.0..1.0).contains(&shear_limit) {
        return Err(AugmentError::InvalidSpec(format!(
            "shear limit {shear_limit} outside [0, 1)"
        )));
    }
    if !(0.0..90.0).contains(&rotate_limit) {
        return Err(AugmentError::InvalidSpec(format!(
            "rotation limit {rotate_limit} outside [0, 90) degrees"
        )));
    }
    Ok(())
}

impl AugmentSpec {
    pub fn validate(&self) -> Result<(), AugmentError> {
        check_limits(self.shear_limit, self.rotate_limit)?;
        if self.blur_radius_min > self.blur_radius_max {
            return Err(AugmentError::InvalidSpec(format!(
                "empty blur radius range [{}, {}]",
                self.blur_radius_min, self.blur_radius_max
            )));
        }
        if self.output_size < 32 {
            return Err(AugmentError::InvalidSpec(format!(
                "output size {} below 32 px",
                self.output_size
            )));
        }
        self.retention.validate()
    }
}

/// The three pre-tiling members derived from one image: the original, one
/// sheared copy (both axes drawn) and one rotated copy.
pub fn shear_rotate_variants(li: &LabeledImage, spec: &AugmentSpec) -> Result<[LabeledImage; 3], AugmentError> {
    let id = &li.source_id;
    let mut rng = keyed_rng(spec.seed, id, "shear");
    let sh_x = draw(&mut rng, spec.shear_limit, spec.sampling);
    let sh_y = draw(&mut rng, spec.shear_limit, spec.sampling);
    let shear = ViewTransform::Shear { sh_x, sh_y };
    let sheared = warp_with(
        li,
        &shear.image_matrix()?,
        &spec.retention,
        spec.fill,
        &format!("@{}", shear.describe()),
        Step::Shear {
            sh_x,
            sh_y,
            rng_key: rng_key(spec.seed, id, "shear"),
        },
    )?;

    let mut rng = keyed_rng(spec.seed, id, "rotate");
    let degrees = draw(&mut rng, spec.rotate_limit, spec.sampling);
    let rot = ViewTransform::Rotate { degrees };
    let rotated = warp_with(
        li,
        &rot.image_matrix()?,
        &spec.retention,
        spec.fill,
        &format!("@{}", rot.describe()),
        Step::Rotate {
            degrees,
            rng_key: rng_key(spec.seed, id, "rotate"),
        },
    )?;
    Ok([li.clone(), sheared, rotated])
}

fn refine_tile(tile: LabeledImage, spec: &AugmentSpec) -> Result<LabeledImage, AugmentError> {
    let id = &tile.source_id;
    let radius = keyed_rng(spec.seed, id, "blur").random_range(spec.blur_radius_min..=spec.blur_radius_max);
    let blurred = gaussian_blur(&tile.image, radius);
    let out = resize(&blurred, spec.output_size)?;
    let mut provenance = tile.provenance;
    provenance.steps.push(Step::Blur {
        radius,
        rng_key: rng_key(spec.seed, id, "blur"),
    });
    provenance.steps.push(Step::Resize { size: spec.output_size });
    Ok(LabeledImage {
        image: out,
        labels: tile.labels,
        source_id: tile.source_id,
        provenance,
    })
}

/// Builds the expanded training set: every image yields 3 variants × 4 tiles,
/// each tile blurred with its own radius and resized to `output_size`.
/// Output order follows input order, then variant, then tile.
pub fn build_shear_rotate_dataset(
    dataset: &[LabeledImage],
    spec: &AugmentSpec,
) -> Result<Vec<LabeledImage>, AugmentError> {
    spec.validate()?;
    if dataset.is_empty() {
        return Err(AugmentError::EmptyDataset);
    }
    let per_item: Vec<Vec<LabeledImage>> = dataset
        .par_iter()
        .map(|li| {
            let mut out = Vec::with_capacity(12);
            for variant in shear_rotate_variants(li, spec)? {
                for tile in tile_2x2(&variant, &spec.retention)? {
                    out.push(refine_tile(tile, spec)?);
                }
            }
            Ok(out)
        })
        .collect::<Result<_, AugmentError>>()?;
    Ok(per_item.into_iter().flatten().collect())
}

/// Settings for a viewpoint-shifted replacement of a test set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContrastSpec {
    pub shear_limit: f64,
    pub rotate_limit: f64,
    pub seed: u64,
    pub sampling: SamplingMode,
    pub retention: RetentionPolicy,
    pub fill: u8,
}

impl ContrastSpec {
    pub fn new(shear_limit: f64, rotate_limit: f64, seed: u64) -> Self {
        Self {
            shear_limit,
            rotate_limit,
            seed,
            sampling: SamplingMode::Uniform,
            retention: RetentionPolicy::default(),
            fill: 0,
        }
    }

    pub fn validate(&self) -> Result<(), AugmentError> {
        check_limits(self.shear_limit, self.rotate_limit)?;
        self.retention.validate()
    }
}

/// The four named viewpoint-shift test configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ContrastPreset {
    Shear000Rotate00,
    Shear003Rotate05,
    Shear006Rotate05,
    Shear006Rotate10,
}

impl ContrastPreset {
    pub const ALL: [ContrastPreset; 4] = [
        ContrastPreset::Shear000Rotate00,
        ContrastPreset::Shear003Rotate05,
        ContrastPreset::Shear006Rotate05,
        ContrastPreset::Shear006Rotate10,
    ];

    /// (shear limit, rotation limit in degrees).
    pub fn limits(&self) -> (f64, f64) {
        match self {
            ContrastPreset::Shear000Rotate00 => (0.0, 0.0),
            ContrastPreset::Shear003Rotate05 => (0.03, 5.0),
            ContrastPreset::Shear006Rotate05 => (0.06, 5.0),
            ContrastPreset::Shear006Rotate10 => (0.06, 10.0),
        }
    }

    /// Command-line name, e.g. `shear006-rotate10`.
    pub fn name(&self) -> &'static str {
        match self {
            ContrastPreset::Shear000Rotate00 => "shear000-rotate00",
            ContrastPreset::Shear003Rotate05 => "shear003-rotate05",
            ContrastPreset::Shear006Rotate05 => "shear006-rotate05",
            ContrastPreset::Shear006Rotate10 => "shear006-rotate10",
        }
    }

    /// Report label, e.g. `Shear006+Rotate10`.
    pub fn label(&self) -> &'static str {
        match self {
            ContrastPreset::Shear000Rotate00 => "Shear000+Rotate00",
            ContrastPreset::Shear003Rotate05 => "Shear003+Rotate05",
            ContrastPreset::Shear006Rotate05 => "Shear006+Rotate05",
            ContrastPreset::Shear006Rotate10 => "Shear006+Rotate10",
        }
    }

    pub fn spec(&self, seed: u64) -> ContrastSpec {
        let (s, r) = self.limits();
        ContrastSpec::new(s, r, seed)
    }
}

impl FromStr for ContrastPreset {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.to_ascii_lowercase().replace('+', "-");
        Self::ALL.into_iter().find(|p| p.name() == norm).ok_or_else(|| {
            let names: Vec<_> = Self::ALL.iter().map(|p| p.name()).collect();
            format!("unknown preset `{s}` (expected one of {})", names.join(", "))
        })
    }
}

impl fmt::Display for ContrastPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Replaces every test image by one sheared or rotated copy (chosen per image
/// at random). Output has the same length and order as the input.
pub fn build_contrast_dataset(
    testset: &[LabeledImage],
    spec: &ContrastSpec,
) -> Result<Vec<LabeledImage>, AugmentError> {
    spec.validate()?;
    if testset.is_empty() {
        return Err(AugmentError::EmptyDataset);
    }
    testset
        .par_iter()
        .map(|li| {
            let id = &li.source_id;
            let mut rng = keyed_rng(spec.seed, id, "contrast");
            let use_shear = rng.random_bool(0.5);
            let sh_x = draw(&mut rng, spec.shear_limit, spec.sampling);
            let sh_y = draw(&mut rng, spec.shear_limit, spec.sampling);
            let degrees = draw(&mut rng, spec.rotate_limit, spec.sampling);
            let key = rng_key(spec.seed, id, "contrast");
            let (view, step) = if use_shear {
                (
                    ViewTransform::Shear { sh_x, sh_y },
                    Step::Shear {
                        sh_x,
                        sh_y,
                        rng_key: key,
                    },
                )
            } else {
                (
                    ViewTransform::Rotate { degrees },
                    Step::Rotate { degrees, rng_key: key },
                )
            };
            warp_with(
                li,
                &view.image_matrix()?,
                &spec.retention,
                spec.fill,
                &format!("@{}", view.describe()),
                step,
            )
        })
        .collect()
}
