//! The Pascal VOC annotation subset used by the PCB defect dataset:
//! `object/name` and `object/bndbox/{xmin,ymin,xmax,ymax}` in pixels.

use thiserror::Error;

use super::{Label, PCB_DEFECT_CLASSES};
use crate::geometry::BBox;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VocError {
    #[error("annotation is not valid UTF-8")]
    NotUtf8,
    #[error("malformed XML: {0}")]
    Xml(String),
    #[error("object {index}: missing <{element}>")]
    Missing { index: usize, element: &'static str },
    #[error("object {index}: <{element}> is not a number: `{text}`")]
    BadNumber {
        index: usize,
        element: &'static str,
        text: String,
    },
    #[error("object {index}: unknown class `{name}`")]
    UnknownClass { index: usize, name: String },
    #[error("object {index}: inverted or empty box ({xmin}, {ymin}, {xmax}, {ymax})")]
    InvertedBox {
        index: usize,
        xmin: f64,
        ymin: f64,
        xmax: f64,
        ymax: f64,
    },
    #[error("object {index}: box exceeds the {width}×{height} image")]
    OutsideImage { index: usize, width: u32, height: u32 },
    #[error("image size must be positive, got {width}×{height}")]
    BadImageSize { width: u32, height: u32 },
}

/// Ordered class names with case-insensitive lookup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassMap {
    names: Vec<String>,
}

impl ClassMap {
    pub fn new<S: AsRef<str>>(names: &[S]) -> Self {
        Self {
            names: names.iter().map(|s| s.as_ref().to_string()).collect(),
        }
    }

    pub fn pcb_defects() -> Self {
        Self::new(&PCB_DEFECT_CLASSES)
    }

    pub fn id_of(&self, name: &str) -> Option<usize> {
        let name = name.trim();
        self.names.iter().position(|n| n.eq_ignore_ascii_case(name))
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

fn parse_doc(text: &str) -> Result<roxmltree::Document<'_>, VocError> {
    roxmltree::Document::parse(text).map_err(|e| VocError::Xml(e.to_string()))
}

fn child<'a, 'i>(node: roxmltree::Node<'a, 'i>, name: &str) -> Option<roxmltree::Node<'a, 'i>> {
    node.children().find(|c| c.is_element() && c.has_tag_name(name))
}

fn number(node: roxmltree::Node<'_, '_>, element: &'static str, index: usize) -> Result<f64, VocError> {
    let el = child(node, element).ok_or(VocError::Missing { index, element })?;
    let text = el.text().unwrap_or("").trim();
    match text.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(VocError::BadNumber {
            index,
            element,
            text: text.to_string(),
        }),
    }
}

/// Reads `<size><width>/<height>` when present.
pub fn voc_image_size(text: &str) -> Result<Option<(u32, u32)>, VocError> {
    let doc = parse_doc(text)?;
    let Some(size) = child(doc.root_element(), "size") else {
        return Ok(None);
    };
    let w = number(size, "width", 0)?;
    let h = number(size, "height", 0)?;
    if w < 1.0 || h < 1.0 || w > u32::MAX as f64 || h > u32::MAX as f64 {
        return Err(VocError::BadImageSize {
            width: w.max(0.0) as u32,
            height: h.max(0.0) as u32,
        });
    }
    Ok(Some((w as u32, h as u32)))
}

/// Converts every `<object>` to a normalized center-format label:
/// `cx = (xmin + xmax) / 2W`, `w = (xmax - xmin) / W`, likewise for y.
pub fn parse_voc_xml(
    text: &str,
    image_width: u32,
    image_height: u32,
    classes: &ClassMap,
) -> Result<Vec<Label>, VocError> {
    if image_width == 0 || image_height == 0 {
        return Err(VocError::BadImageSize {
            width: image_width,
            height: image_height,
        });
    }
    let doc = parse_doc(text)?;
    let (wf, hf) = (image_width as f64, image_height as f64);
    doc.root_element()
        .children()
        .filter(|n| n.is_element() && n.has_tag_name("object"))
        .enumerate()
        .map(|(index, obj)| {
            let name_el = child(obj, "name").ok_or(VocError::Missing { index, element: "name" })?;
            let name = name_el.text().unwrap_or("").trim().to_string();
            let class_id = classes.id_of(&name).ok_or_else(|| VocError::UnknownClass {
                index,
                name: name.clone(),
            })?;
            let bb = child(obj, "bndbox").ok_or(VocError::Missing {
                index,
                element: "bndbox",
            })?;
            let xmin = number(bb, "xmin", index)?;
            let ymin = number(bb, "ymin", index)?;
            let xmax = number(bb, "xmax", index)?;
            let ymax = number(bb, "ymax", index)?;
            if xmax <= xmin || ymax <= ymin {
                return Err(VocError::InvertedBox {
                    index,
                    xmin,
                    ymin,
                    xmax,
                    ymax,
                });
            }
            if xmin < 0.0 || ymin < 0.0 || xmax > wf || ymax > hf {
                return Err(VocError::OutsideImage {
                    index,
                    width: image_width,
                    height: image_height,
                });
            }
            Ok(Label {
                class_id,
                bbox: BBox {
                    cx: (xmin + xmax) / (2.0 * wf),
                    cy: (ymin + ymax) / (2.0 * hf),
                    w: (xmax - xmin) / wf,
                    h: (ymax - ymin) / hf,
                },
            })
        })
        .collect()
}
