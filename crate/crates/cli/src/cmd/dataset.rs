use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::Serialize;
use vrkit::dataset::{
    parse_voc_xml, read_manifest, split_dataset, voc_image_size, write_yolo_label, ClassMap, DatasetManifest,
    ManifestItem, Split, SplitSpec,
};
use vrkit::fixtures::write_synthetic_dataset;

use crate::staging::{manifest_base, require_file, run_config, Staged};
use crate::Outcome;

#[derive(Debug, Args, Serialize)]
pub struct SplitArgs {
    /// Input manifest (JSON lines) [required].
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory for train.jsonl, val.jsonl and run.json; created atomically [required].
    #[arg(long)]
    #[serde(skip)]
    pub output: PathBuf,
    /// Share of each group sent to train, in (0, 1); counts are floored.
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    /// Shuffle seed (unitless).
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Split the manifest as a whole instead of per group [default: off].
    #[arg(long)]
    pub no_stratify: bool,
}

/// Rewrites relative item paths to absolute ones so the manifest stays valid
/// wherever it is written.
fn absolutize(m: &mut DatasetManifest, base: &Path) -> Result<()> {
    let base = base
        .canonicalize()
        .with_context(|| format!("resolving {}", base.display()))?;
    for it in &mut m.items {
        it.image = base.join(&it.image);
        it.label = base.join(&it.label);
    }
    Ok(())
}

pub fn split(a: SplitArgs) -> Result<Outcome> {
    require_file(&a.input, "input manifest")?;
    let spec = SplitSpec {
        train_fraction: a.train_fraction,
        seed: a.seed,
        stratify_by_class: !a.no_stratify,
    };
    spec.validate()?;
    let manifest = read_manifest(&a.input)?;
    let (mut train, mut val) = split_dataset(&manifest, &spec)?;
    let base = manifest_base(&a.input);
    absolutize(&mut train, &base)?;
    absolutize(&mut val, &base)?;

    let staged = Staged::new(&a.output)?;
    staged.write("train.jsonl", train.to_jsonl())?;
    staged.write("val.jsonl", val.to_jsonl())?;
    staged.write("run.json", run_config("split", &a) + "\n")?;
    staged.commit()?;

    let mut rows: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for it in &train.items {
        rows.entry(it.group.as_str()).or_default().0 += 1;
    }
    for it in &val.items {
        rows.entry(it.group.as_str()).or_default().1 += 1;
    }
    let width = rows.keys().map(|k| k.len()).max().unwrap_or(0).max(5);
    println!("{:<width$}  {:>6}  {:>6}  {:>6}", "group", "total", "train", "val");
    for (g, (t, v)) in &rows {
        let g = if g.is_empty() { "-" } else { g };
        println!("{g:<width$}  {:>6}  {t:>6}  {v:>6}", t + v);
    }
    println!(
        "{:<width$}  {:>6}  {:>6}  {:>6}",
        "all",
        train.items.len() + val.items.len(),
        train.items.len(),
        val.items.len()
    );
    Ok(Outcome::Pass)
}

#[derive(Debug, Args, Serialize)]
pub struct ConvertArgs {
    /// Directory searched recursively for `*.xml` VOC annotations [required].
    #[arg(long)]
    pub annotations: PathBuf,
    /// Output directory; labels mirror the annotation tree under `labels/` [required].
    #[arg(long)]
    #[serde(skip)]
    pub output: PathBuf,
    /// Image directory with the same layout; when given, image sizes come
    /// from the files and a manifest.jsonl is written [default: none].
    #[arg(long)]
    pub images: Option<PathBuf>,
    /// Class names in id order, comma separated [default: the six PCB defect classes].
    #[arg(long, value_delimiter = ',')]
    pub classes: Option<Vec<String>>,
    /// Image width used when neither the XML nor an image file gives one (pixels) [default: none].
    #[arg(long)]
    pub width: Option<u32>,
    /// Image height used when neither the XML nor an image file gives one (pixels) [default: none].
    #[arg(long)]
    pub height: Option<u32>,
}

fn find_image(dir: &Path, rel: &Path) -> Option<PathBuf> {
    ["jpg", "jpeg", "png", "JPG", "JPEG", "PNG"]
        .iter()
        .map(|ext| dir.join(rel).with_extension(ext))
        .find(|p| p.is_file())
}

pub fn convert(a: ConvertArgs) -> Result<Outcome> {
    if !a.annotations.is_dir() {
        bail!("annotation directory {} does not exist", a.annotations.display());
    }
    if a.width.is_some() != a.height.is_some() {
        bail!("--width and --height must be given together");
    }
    let classes = match &a.classes {
        Some(names) => ClassMap::new(names),
        None => ClassMap::pcb_defects(),
    };
    if classes.is_empty() {
        bail!("--classes needs at least one name");
    }
    let images_root = match &a.images {
        Some(d) => Some(d.canonicalize().with_context(|| format!("resolving {}", d.display()))?),
        None => None,
    };

    let mut files: Vec<PathBuf> = Vec::new();
    for entry in walkdir::WalkDir::new(&a.annotations).sort_by_file_name() {
        let entry = entry?;
        let p = entry.path();
        if entry.file_type().is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case("xml")) {
            files.push(p.to_path_buf());
        }
    }
    if files.is_empty() {
        bail!("no .xml files under {}", a.annotations.display());
    }

    let staged = Staged::new(&a.output)?;
    let mut manifest = DatasetManifest::new(classes.names().to_vec());
    let mut boxes = 0;
    for path in &files {
        let rel = path.strip_prefix(&a.annotations).expect("walk stays under root");
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let image = match &images_root {
            Some(root) => Some(
                find_image(root, rel)
                    .with_context(|| format!("no image for {} under {}", rel.display(), root.display()))?,
            ),
            None => None,
        };
        let size = match voc_image_size(&text).with_context(|| format!("{}", path.display()))? {
            Some(s) => s,
            None => match (&image, a.width, a.height) {
                (Some(img), _, _) => {
                    image::image_dimensions(img).with_context(|| format!("reading size of {}", img.display()))?
                }
                (None, Some(w), Some(h)) => (w, h),
                _ => bail!(
                    "{}: no <size> element; pass --images or --width/--height",
                    path.display()
                ),
            },
        };
        let labels = parse_voc_xml(&text, size.0, size.1, &classes).with_context(|| format!("{}", path.display()))?;
        boxes += labels.len();
        let label = PathBuf::from("labels").join(rel).with_extension("txt");
        staged.write(&label, write_yolo_label(&labels))?;
        if let Some(image) = image {
            let group = match rel.parent() {
                Some(p) if !p.as_os_str().is_empty() => p.to_string_lossy().into_owned(),
                _ => String::new(),
            };
            manifest.items.push(ManifestItem {
                image,
                label,
                split: Split::Unassigned,
                group,
                provenance: Default::default(),
            });
        }
    }
    if images_root.is_some() {
        staged.write("manifest.jsonl", manifest.to_jsonl())?;
    }
    staged.write("run.json", run_config("convert", &a) + "\n")?;
    staged.commit()?;
    println!(
        "convert: {} annotation files, {boxes} boxes -> {}",
        files.len(),
        a.output.display()
    );
    Ok(Outcome::Pass)
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    /// Output directory; created atomically [required].
    #[arg(long)]
    #[serde(skip)]
    pub output: PathBuf,
    /// Number of boards to generate (images).
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    pub count: u64,
    /// Board side length (pixels, at least 32).
    #[arg(long, default_value_t = 160)]
    pub size: usize,
    /// Generator seed (unitless).
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn synth(a: SynthArgs) -> Result<Outcome> {
    if a.size < 32 {
        bail!("--size {} below 32 px", a.size);
    }
    let staged = Staged::new(&a.output)?;
    let m = write_synthetic_dataset(staged.path(), a.count as usize, a.seed, a.size)?;
    staged.write("run.json", run_config("synth", &a) + "\n")?;
    staged.commit()?;
    let labels: usize = m
        .items
        .iter()
        .map(|it| {
            std::fs::read_to_string(a.output.join(&it.label))
                .map(|t| t.lines().count())
                .unwrap_or(0)
        })
        .sum();
    println!(
        "synth: {} boards, {labels} labels -> {}",
        m.items.len(),
        a.output.display()
    );
    Ok(Outcome::Pass)
}
