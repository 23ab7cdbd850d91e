use std::collections::HashMap;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::Serialize;
use vrkit::dataset::{parse_yolo_label, read_manifest, Split};
use vrkit::eval::{evaluate, parse_predictions, pr_curves_csv, pr_curves_svg, GroundTruth};

use crate::staging::{manifest_base, require_file, run_config, Staged};
use crate::Outcome;

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    /// Ground-truth manifest (JSON lines); the image file stem is the image id [required].
    #[arg(long)]
    pub gt: PathBuf,
    /// Predictions, one `image_id class_id confidence cx cy w h` per line
    /// (normalized coordinates, confidence in [0, 1]) [required].
    #[arg(long)]
    pub predictions: PathBuf,
    /// Report directory (metrics.csv, metrics.txt, pr_curves.csv,
    /// pr_curves.svg, run.json); created atomically [required].
    #[arg(long)]
    #[serde(skip)]
    pub output: PathBuf,
    /// Only score items of this split (train, val, test, unassigned) [default: all items].
    #[arg(long)]
    pub split: Option<Split>,
}

pub fn run(a: EvalArgs) -> Result<Outcome> {
    require_file(&a.gt, "ground-truth manifest")?;
    require_file(&a.predictions, "prediction file")?;
    let manifest = read_manifest(&a.gt)?;
    manifest.validate_schema()?;
    // Scoring only reads labels, so image files need not be present.
    let base = manifest_base(&a.gt);

    let mut gts = Vec::new();
    let mut ids: HashMap<String, PathBuf> = HashMap::new();
    for item in manifest.items.iter().filter(|it| a.split.is_none_or(|s| it.split == s)) {
        let id = item
            .image
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        if let Some(prev) = ids.insert(id.clone(), item.image.clone()) {
            bail!(
                "image id `{id}` is shared by {} and {}",
                prev.display(),
                item.image.display()
            );
        }
        let path = base.join(&item.label);
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let labels = parse_yolo_label(&text, Some(manifest.classes.len()))
            .map_err(|e| anyhow::anyhow!("{}:{}", path.display(), e))?;
        gts.extend(labels.into_iter().map(|l| GroundTruth {
            image_id: id.clone(),
            class_id: l.class_id,
            bbox: l.bbox,
        }));
    }
    if ids.is_empty() {
        bail!("no ground-truth items selected from {}", a.gt.display());
    }

    let text =
        std::fs::read_to_string(&a.predictions).with_context(|| format!("reading {}", a.predictions.display()))?;
    let dets = parse_predictions(&text).map_err(|e| anyhow::anyhow!("{}:{}", a.predictions.display(), e))?;
    // Line numbers for error messages; parse_predictions skips blank lines.
    let lines: Vec<usize> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, _)| i + 1)
        .collect();
    for (d, line) in dets.iter().zip(&lines) {
        if !ids.contains_key(&d.image_id) {
            bail!(
                "{}:line {line}: unknown image_id `{}` (not in {})",
                a.predictions.display(),
                d.image_id,
                a.gt.display()
            );
        }
        if d.class_id >= manifest.classes.len() {
            bail!(
                "{}:line {line}: class id {} outside the {} manifest classes",
                a.predictions.display(),
                d.class_id,
                manifest.classes.len()
            );
        }
    }

    let report = evaluate(&dets, &gts, &manifest.classes)?;
    let header = format!("# run: {}\n", run_config("eval", &a));
    let table = report.to_table();
    let staged = Staged::new(&a.output)?;
    staged.write("metrics.csv", format!("{header}{}", report.to_csv()))?;
    staged.write("metrics.txt", format!("{header}{table}"))?;
    staged.write("pr_curves.csv", pr_curves_csv(&report))?;
    staged.write("pr_curves.svg", pr_curves_svg(&report))?;
    staged.write("run.json", run_config("eval", &a) + "\n")?;
    staged.commit()?;
    print!("{table}");
    println!(
        "mAP50 = {:.3}  mAP50-95 = {:.3}  ({} detections, {} ground-truth boxes)",
        report.map50,
        report.map50_95,
        dets.len(),
        gts.len()
    );
    Ok(Outcome::Pass)
}
