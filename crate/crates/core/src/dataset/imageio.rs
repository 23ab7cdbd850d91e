use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageFormat};
use thiserror::Error;

use super::manifest::ManifestItem;
use super::yolo::{parse_yolo_label, LabelError};
use crate::augment::{Image, LabeledImage};

#[derive(Debug, Error)]
pub enum ImageIoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Decode { path: PathBuf, message: String },
    #[error("{path}: unsupported pixel format {format} (need 8-bit grayscale or RGB)")]
    PixelFormat { path: PathBuf, format: String },
    #[error("{path}: {error}")]
    Label { path: PathBuf, error: LabelError },
}

/// Decodes a PNG or JPEG. Only 8-bit grayscale and RGB are accepted.
pub fn load_image(path: &Path) -> Result<Image, ImageIoError> {
    let bytes = std::fs::read(path).map_err(|source| ImageIoError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let decoded = image::load_from_memory(&bytes).map_err(|e| ImageIoError::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    let (channels, data) = match decoded {
        DynamicImage::ImageLuma8(buf) => (1, buf.into_raw()),
        DynamicImage::ImageRgb8(buf) => (3, buf.into_raw()),
        other => {
            return Err(ImageIoError::PixelFormat {
                path: path.to_path_buf(),
                format: format!("{:?}", other.color()),
            })
        }
    };
    Image::new(w, h, channels, data).map_err(|e| ImageIoError::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn save_png(path: &Path, img: &Image) -> Result<(), ImageIoError> {
    let color = if img.channels() == 1 {
        image::ExtendedColorType::L8
    } else {
        image::ExtendedColorType::Rgb8
    };
    image::save_buffer_with_format(
        path,
        img.data(),
        img.width() as u32,
        img.height() as u32,
        color,
        ImageFormat::Png,
    )
    .map_err(|e| ImageIoError::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Loads the image and label of a manifest item, resolving paths against
/// `base`. The image file stem becomes the source id.
pub fn load_labeled_item(base: &Path, item: &ManifestItem, num_classes: usize) -> Result<LabeledImage, ImageIoError> {
    let image_path = base.join(&item.image);
    let image = load_image(&image_path)?;
    let label_path = base.join(&item.label);
    let text = std::fs::read_to_string(&label_path).map_err(|source| ImageIoError::Io {
        path: label_path.clone(),
        source,
    })?;
    let labels = parse_yolo_label(&text, Some(num_classes)).map_err(|error| ImageIoError::Label {
        path: label_path,
        error,
    })?;
    let id = image_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut li = LabeledImage::new(image, labels, id);
    if !item.provenance.origin.is_empty() {
        li.provenance = item.provenance.clone();
    }
    Ok(li)
}
