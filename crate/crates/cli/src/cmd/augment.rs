use std::collections::HashSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::Serialize;
use vrkit::augment::{
    build_contrast_dataset, build_shear_rotate_dataset, AugmentSpec, ContrastPreset, ContrastSpec, LabeledImage,
    RetentionPolicy, SamplingMode,
};
use vrkit::dataset::{
    load_labeled_item, read_manifest, save_png, write_yolo_label, DatasetManifest, ManifestItem, Split,
};

use crate::staging::{manifest_base, require_file, run_config, Staged};
use crate::Outcome;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Original + sheared + rotated copies, each tiled 2x2, blurred and resized (12 tiles per image).
    Train,
    /// One sheared or rotated replacement per image.
    Contrast,
}

#[derive(Debug, Args, Serialize)]
pub struct AugmentArgs {
    /// Input manifest (JSON lines) [required].
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory; created atomically, must not exist or be empty [required].
    #[arg(long)]
    #[serde(skip)]
    pub output: PathBuf,
    /// Dataset kind to build.
    #[arg(long, value_enum, default_value = "train")]
    pub mode: Mode,
    /// Contrast preset (shear000-rotate00, shear003-rotate05, shear006-rotate05,
    /// shear006-rotate10). Contrast mode only [default: none, limits come from the limit flags].
    #[arg(long)]
    pub preset: Option<ContrastPreset>,
    /// Seed for every random draw (unitless).
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Shear coefficient limit, drawn from [-limit, limit] (unitless) [default: 0.06].
    #[arg(long)]
    pub shear_limit: Option<f64>,
    /// Rotation limit, drawn from [-limit, limit] (degrees) [default: 10].
    #[arg(long)]
    pub rotate_limit: Option<f64>,
    /// Smallest Gaussian blur radius (pixels). Train mode only.
    #[arg(long, default_value_t = 1)]
    pub blur_min: usize,
    /// Largest Gaussian blur radius (pixels). Train mode only.
    #[arg(long, default_value_t = 5)]
    pub blur_max: usize,
    /// Side of the square output tiles (pixels, at least 32). Train mode only.
    #[arg(long, default_value_t = 640)]
    pub output_size: usize,
    /// How limits become draws: uniform in [-limit, limit] or exactly +-limit.
    #[arg(long, default_value = "uniform")]
    pub sampling: SamplingMode,
    /// Drop a clipped label below this surviving area fraction (0..1).
    #[arg(long, default_value_t = 0.25)]
    pub min_visible: f64,
    /// Drop a clipped label with a side shorter than this (output pixels).
    #[arg(long, default_value_t = 2.0)]
    pub min_side_px: f64,
    /// Gray level for pixels warped in from outside the image (0..255).
    #[arg(long, default_value_t = 0)]
    pub fill: u8,
    /// Only use items of this split (train, val, test, unassigned) [default: all items].
    #[arg(long)]
    pub split: Option<Split>,
}

enum Plan {
    Train(AugmentSpec),
    Contrast(ContrastSpec),
}

fn plan(a: &AugmentArgs) -> Result<Plan> {
    let retention = RetentionPolicy {
        min_fraction: a.min_visible,
        min_side_px: a.min_side_px,
    };
    let plan = match a.mode {
        Mode::Train => {
            if a.preset.is_some() {
                bail!("--preset applies to --mode contrast only");
            }
            let spec = AugmentSpec {
                shear_limit: a.shear_limit.unwrap_or(0.06),
                rotate_limit: a.rotate_limit.unwrap_or(10.0),
                blur_radius_min: a.blur_min,
                blur_radius_max: a.blur_max,
                output_size: a.output_size,
                seed: a.seed,
                retention,
                sampling: a.sampling,
                fill: a.fill,
            };
            spec.validate()?;
            Plan::Train(spec)
        }
        Mode::Contrast => {
            let (shear, rotate) = match a.preset {
                Some(p) => {
                    if a.shear_limit.is_some() || a.rotate_limit.is_some() {
                        bail!("--preset cannot be combined with --shear-limit or --rotate-limit");
                    }
                    p.limits()
                }
                None => (a.shear_limit.unwrap_or(0.06), a.rotate_limit.unwrap_or(10.0)),
            };
            let spec = ContrastSpec {
                shear_limit: shear,
                rotate_limit: rotate,
                seed: a.seed,
                sampling: a.sampling,
                retention,
                fill: a.fill,
            };
            spec.validate()?;
            Plan::Contrast(spec)
        }
    };
    Ok(plan)
}

/// Loads the selected items of a manifest with their split and group.
pub fn load_items(path: &Path, split: Option<Split>) -> Result<(DatasetManifest, Vec<(LabeledImage, ManifestItem)>)> {
    require_file(path, "input manifest")?;
    let manifest = read_manifest(path)?;
    let base = manifest_base(path);
    manifest.validate_files(&base)?;
    let items: Vec<_> = manifest
        .items
        .iter()
        .filter(|it| split.is_none_or(|s| it.split == s))
        .map(|it| {
            load_labeled_item(&base, it, manifest.classes.len())
                .map(|li| (li, it.clone()))
                .with_context(|| format!("loading {}", it.image.display()))
        })
        .collect::<Result<_>>()?;
    if items.is_empty() {
        bail!("no items selected from {}", path.display());
    }
    Ok((manifest, items))
}

pub fn run(a: AugmentArgs) -> Result<Outcome> {
    let plan = plan(&a)?;
    let (manifest, items) = load_items(&a.input, a.split)?;
    let mut seen = HashSet::new();
    for (li, _) in &items {
        if !seen.insert(li.source_id.clone()) {
            bail!("duplicate image name `{}` in {}", li.source_id, a.input.display());
        }
    }
    let inputs: Vec<LabeledImage> = items.iter().map(|(li, _)| li.clone()).collect();

    // (output name, output item, source item)
    let outputs: Vec<(String, LabeledImage, &ManifestItem)> = match &plan {
        Plan::Train(spec) => {
            let out = build_shear_rotate_dataset(&inputs, spec)?;
            let per = out.len() / inputs.len();
            out.into_iter()
                .enumerate()
                .map(|(i, li)| {
                    let (src, item) = &items[i / per];
                    (format!("{}_{:02}", src.source_id, i % per), li, item)
                })
                .collect()
        }
        Plan::Contrast(spec) => build_contrast_dataset(&inputs, spec)?
            .into_iter()
            .zip(&items)
            .map(|(li, (src, item))| (src.source_id.clone(), li, item))
            .collect(),
    };

    let staged = Staged::new(&a.output)?;
    let mut out_manifest = DatasetManifest::new(manifest.classes.clone());
    let mut labels = 0;
    for (name, li, src) in &outputs {
        let image = PathBuf::from("images").join(format!("{name}.png"));
        let label = PathBuf::from("labels").join(format!("{name}.txt"));
        std::fs::create_dir_all(staged.path().join("images"))?;
        save_png(&staged.path().join(&image), &li.image)?;
        staged.write(&label, write_yolo_label(&li.labels))?;
        labels += li.labels.len();
        out_manifest.items.push(ManifestItem {
            image,
            label,
            split: match a.mode {
                Mode::Train => Split::Train,
                Mode::Contrast => src.split,
            },
            group: src.group.clone(),
            provenance: li.provenance.clone(),
        });
    }
    staged.write("manifest.jsonl", out_manifest.to_jsonl())?;
    staged.write("run.json", run_config("augment", &a) + "\n")?;
    staged.commit()?;
    let input_labels: usize = inputs.iter().map(|li| li.labels.len()).sum();
    let mode = match &plan {
        Plan::Train(_) => "train".to_string(),
        Plan::Contrast(s) => format!("contrast, shear {} rotate {} deg", s.shear_limit, s.rotate_limit),
    };
    println!(
        "augment ({mode}): {} input images, {input_labels} labels -> {} output items, {labels} labels in {}",
        inputs.len(),
        outputs.len(),
        a.output.display()
    );
    Ok(Outcome::Pass)
}
