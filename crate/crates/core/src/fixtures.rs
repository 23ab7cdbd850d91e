//! Synthetic PCB-like boards for smoke tests and demos: a dark textured
//! substrate with bright axis-aligned defect patches whose green level
//! encodes the class.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::augment::{Image, LabeledImage};
use crate::dataset::{
    save_png, write_manifest, write_yolo_label, DatasetManifest, ImageIoError, Label, ManifestError, ManifestItem,
    Split, PCB_DEFECT_CLASSES,
};
use crate::geometry::BBox;

/// Red level of every defect patch; the substrate stays below 64.
pub const PATCH_RED: u8 = 230;

/// Green level that marks `class_id` inside a patch.
pub fn class_green(class_id: usize) -> u8 {
    (60 + 30 * class_id) as u8
}

/// Inverse of [`class_green`], nearest class.
pub fn class_from_green(g: u8) -> usize {
    let k = ((g as f64 - 60.0) / 30.0).round();
    k.clamp(0.0, (PCB_DEFECT_CLASSES.len() - 1) as f64) as usize
}

/// One `size`×`size` RGB board with 3 to 6 non-overlapping patches of 8 to
/// 16% of the side, all inside the central [0.15, 0.85] band.
pub fn synthetic_board(index: usize, seed: u64, size: usize) -> LabeledImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ index as u64);
    let s = size as f64;
    let mut rects: Vec<(usize, usize, usize, usize, usize)> = Vec::new();
    let target = rng.random_range(3..=6);
    let mut attempts = 0;
    while rects.len() < target && attempts < 500 {
        attempts += 1;
        let w = (s * rng.random_range(0.08..0.16)).round().max(2.0) as usize;
        let h = (s * rng.random_range(0.08..0.16)).round().max(2.0) as usize;
        let lo = (0.15 * s).ceil() as usize;
        let hi_x = (0.85 * s).floor() as usize - w;
        let hi_y = (0.85 * s).floor() as usize - h;
        if hi_x <= lo || hi_y <= lo {
            break;
        }
        let x0 = rng.random_range(lo..hi_x);
        let y0 = rng.random_range(lo..hi_y);
        let gap = (0.03 * s).ceil() as usize;
        let clear = rects.iter().all(|&(ax, ay, aw, ah, _)| {
            x0 + w + gap <= ax || ax + aw + gap <= x0 || y0 + h + gap <= ay || ay + ah + gap <= y0
        });
        if clear {
            rects.push((x0, y0, w, h, rng.random_range(0..PCB_DEFECT_CLASSES.len())));
        }
    }
    let texture: Vec<u8> = (0..size * size).map(|_| rng.random_range(0..24)).collect();
    let image = Image::from_fn(size, size, 3, |x, y, c| {
        for &(x0, y0, w, h, k) in &rects {
            if x >= x0 && x < x0 + w && y >= y0 && y < y0 + h {
                return [PATCH_RED, class_green(k), 40][c];
            }
        }
        let t = texture[y * size + x];
        [20 + t, 80 + t, 40 + t / 2][c]
    })
    .expect("nonzero board size");
    let labels = rects
        .iter()
        .map(|&(x0, y0, w, h, k)| Label {
            class_id: k,
            bbox: BBox {
                cx: (x0 as f64 + w as f64 / 2.0) / s,
                cy: (y0 as f64 + h as f64 / 2.0) / s,
                w: w as f64 / s,
                h: h as f64 / s,
            },
        })
        .collect();
    LabeledImage::new(image, labels, format!("board{index:04}"))
}

#[derive(Debug, thiserror::Error)]
pub enum FixtureError {
    #[error(transparent)]
    Image(#[from] ImageIoError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Writes `count` boards as `images/*.png`, `labels/*.txt` and
/// `manifest.jsonl` under `dir`, returning the manifest.
pub fn write_synthetic_dataset(
    dir: &Path,
    count: usize,
    seed: u64,
    size: usize,
) -> Result<DatasetManifest, FixtureError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| FixtureError::Io { path, source }
    };
    for sub in ["images", "labels"] {
        std::fs::create_dir_all(dir.join(sub)).map_err(io(&dir.join(sub)))?;
    }
    let mut manifest = DatasetManifest::new(PCB_DEFECT_CLASSES.iter().map(|s| s.to_string()).collect());
    for i in 0..count {
        let board = synthetic_board(i, seed, size);
        let image = Path::new("images").join(format!("{}.png", board.source_id));
        let label = Path::new("labels").join(format!("{}.txt", board.source_id));
        save_png(&dir.join(&image), &board.image)?;
        std::fs::write(dir.join(&label), write_yolo_label(&board.labels)).map_err(io(&dir.join(&label)))?;
        manifest.items.push(ManifestItem {
            image,
            label,
            split: Split::Unassigned,
            group: "board".into(),
            provenance: board.provenance.clone(),
        });
    }
    write_manifest(&dir.join("manifest.jsonl"), &manifest)?;
    Ok(manifest)
}
