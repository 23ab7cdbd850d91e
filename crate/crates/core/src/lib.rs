//! Viewpoint-robustness toolkit for PCB defect detection.
//!
//! Core types are generic over [`scalar::Scalar`] (`f32` or `f64`); the
//! aliases below fix the scalar to `f64` for ordinary use.

pub mod augment;
pub mod cbam;
pub mod dataset;
pub mod eval;
pub mod fixtures;
pub mod geometry;
pub mod losses;
pub mod scalar;

pub type BBox = geometry::BBox<f64>;
pub type AffineMatrix = geometry::AffineMatrix<f64>;
pub type Point = geometry::Point<f64>;
pub type SIoUParams = losses::SIoUParams<f64>;
pub type LossBreakdown = losses::LossBreakdown<f64>;
pub type BoxLoss = losses::BoxLoss<f64>;
pub type Detection = eval::Detection<f64>;
pub type GroundTruth = eval::GroundTruth<f64>;
pub type MetricsReport = eval::MetricsReport<f64>;
