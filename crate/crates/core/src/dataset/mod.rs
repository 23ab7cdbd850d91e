//! Annotation formats, dataset manifests and the train/validation split.

mod imageio;
mod manifest;
mod split;
mod voc;
mod yolo;

use serde::{Deserialize, Serialize};

pub use imageio::{load_image, load_labeled_item, save_png, ImageIoError};
pub use manifest::{read_manifest, write_manifest, DatasetManifest, ManifestError, ManifestItem, Split};
pub use split::{split_dataset, SplitError, SplitSpec};
pub use voc::{parse_voc_xml, voc_image_size, ClassMap, VocError};
pub use yolo::{parse_yolo_label, parse_yolo_label_bytes, write_yolo_label, LabelError, LabelErrorKind};

use crate::geometry::BBox;

/// The six PCB defect categories, in their canonical id order.
pub const PCB_DEFECT_CLASSES: [&str; 6] = [
    "missing_hole",
    "mouse_bite",
    "open_circuit",
    "short",
    "spur",
    "spurious_copper",
];

/// A class-labeled normalized box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Label {
    pub class_id: usize,
    pub bbox: BBox<f64>,
}
