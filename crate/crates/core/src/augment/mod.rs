//! Diversified scene enhancement: shear/rotation with label transformation,
//! 2×2 tiling, Gaussian blur, resize, and the derived-dataset builders.

mod pipeline;
mod raster;
pub mod rng;

use thiserror::Error;

pub use pipeline::{
    build_contrast_dataset, build_shear_rotate_dataset, image_frame, shear_rotate_variants, tile_2x2, warp_labeled,
    AugmentSpec, ContrastPreset, ContrastSpec, LabeledImage, Provenance, RetentionPolicy, SamplingMode, Step,
    ViewTransform,
};
pub use raster::{gaussian_blur, gaussian_kernel, resize, warp_image, warp_image_with_fill, Image};

use crate::geometry::GeometryError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AugmentError {
    #[error("image must have nonzero width and height")]
    EmptyImage,
    #[error("unsupported channel count {0} (expected 1 or 3)")]
    Channels(usize),
    #[error("pixel buffer has {actual} bytes, expected {expected}")]
    DataLength { expected: usize, actual: usize },
    #[error("crop rectangle exceeds the image")]
    CropOutOfBounds,
    #[error("invalid output size {0}")]
    BadSize(usize),
    #[error("image {width}×{height} is too small to tile (need at least 2×2)")]
    TooSmallToTile { width: usize, height: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid augmentation setting: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}
