use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};
use vrkit::cbam::{cbam_forward, channel_attention, init_weights, reference, spatial_attention, CbamWeights, Tensor4};
use vrkit::losses::{loss_gradient_check, sample_smooth_pair, BoxLoss, SIoUParams};

use crate::Outcome;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LossChoice {
    Siou,
    Ciou,
    Both,
}

#[derive(Debug, Args, Serialize)]
pub struct LosscheckArgs {
    /// Number of random smooth box pairs per loss (pairs, at least 1).
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    pub n: u64,
    /// Seed for the pair sampler (unitless).
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Central-difference step (normalized box units).
    #[arg(long, default_value_t = 1e-6)]
    pub step: f64,
    /// SIoU shape-cost exponent theta, in [1, 8] (unitless).
    #[arg(long, default_value_t = 4.0)]
    pub theta: f64,
    /// Largest acceptable relative gradient error (unitless).
    #[arg(long, default_value_t = 1e-3)]
    pub tolerance: f64,
    /// Which loss to check.
    #[arg(long, value_enum, default_value = "both")]
    pub loss: LossChoice,
}

pub fn losscheck(a: LosscheckArgs) -> Result<Outcome> {
    if !(a.step > 0.0 && a.step < 1e-2) {
        bail!("--step {} must lie in (0, 0.01)", a.step);
    }
    if a.tolerance.is_nan() || a.tolerance <= 0.0 {
        bail!("--tolerance {} must be positive", a.tolerance);
    }
    let params = SIoUParams::new(a.theta, 1e-9)?;
    let losses: Vec<BoxLoss<f64>> = match a.loss {
        LossChoice::Siou => vec![BoxLoss::Siou(params)],
        LossChoice::Ciou => vec![BoxLoss::Ciou],
        LossChoice::Both => vec![BoxLoss::Siou(params), BoxLoss::Ciou],
    };
    let mut ok = true;
    for (stream, loss) in losses.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
        rng.set_stream(stream as u64);
        let mut worst = (0.0f64, None);
        for _ in 0..a.n {
            let (pred, gt) = sample_smooth_pair(&mut rng, loss, a.step);
            let err = loss_gradient_check(loss, &pred, &gt, a.step)?;
            if err > worst.0 || worst.1.is_none() {
                worst = (err, Some((pred, gt)));
            }
        }
        let pass = worst.0 <= a.tolerance;
        ok &= pass;
        println!(
            "{}: worst relative gradient error {:.3e} over {} pairs (tolerance {:.0e}) {}",
            loss.name(),
            worst.0,
            a.n,
            a.tolerance,
            if pass { "PASS" } else { "FAIL" }
        );
        if !pass {
            let (p, g) = worst.1.expect("at least one pair");
            println!(
                "  offending pair: pred (cx {:.9}, cy {:.9}, w {:.9}, h {:.9}) gt (cx {:.9}, cy {:.9}, w {:.9}, h {:.9})",
                p.cx, p.cy, p.w, p.h, g.cx, g.cy, g.w, g.h
            );
        }
    }
    Ok(if ok { Outcome::Pass } else { Outcome::CheckFailed })
}

#[derive(Debug, Args, Serialize)]
pub struct CbamcheckArgs {
    /// Channel counts to check, comma separated [default: 128,256,512].
    #[arg(long, value_delimiter = ',')]
    pub channels: Option<Vec<usize>>,
    /// Channel-MLP reduction ratio; must divide every channel count.
    #[arg(long, default_value_t = 16)]
    pub ratio: usize,
    /// Spatial-attention kernel size (pixels, odd).
    #[arg(long, default_value_t = 7)]
    pub kernel: usize,
    /// Batch size of the random test input (samples).
    #[arg(long, default_value_t = 2)]
    pub batch: usize,
    /// Height and width of the random test input (pixels).
    #[arg(long, default_value_t = 16)]
    pub size: usize,
    /// Seed for weights and input (unitless).
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Relative tolerance of the oracle comparison (unitless).
    #[arg(long, default_value_t = 1e-5)]
    pub tolerance: f64,
    /// Write the checked weights to this file (needs a single channel count) [default: none].
    #[arg(long)]
    pub export_weights: Option<PathBuf>,
    /// Check weights loaded from this file instead of seeded ones [default: none].
    #[arg(long)]
    pub import_weights: Option<PathBuf>,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("staging {}", path.display()))?;
    tmp.write_all(bytes)?;
    tmp.persist(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn random_input(shape: [usize; 4], seed: u64) -> Result<Tensor4> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    Ok(Tensor4::from_fn(shape, |_, _, _, _| rng.random_range(-2.0f32..2.0))?)
}

fn report(label: &str, name: &str, pass: bool, detail: String) -> bool {
    println!("{label} {name:<12} {} {detail}", if pass { "PASS" } else { "FAIL" });
    pass
}

fn check_one(w: &CbamWeights, a: &CbamcheckArgs) -> Result<bool> {
    let label = format!("C={} r={} k={}", w.channels, w.ratio, w.kernel);
    let shape = [a.batch, w.channels, a.size, a.size];
    let x = random_input(shape, a.seed)?;
    let y = cbam_forward(&x, w)?;
    let mut ok = report(&label, "shape", y.shape() == shape, format!("{:?}", y.shape()));

    let ca = channel_attention(&x, w)?;
    let sa = spatial_attention(&x, w)?;
    let in_range = ca.data().iter().chain(sa.data()).all(|g| *g > 0.0 && *g < 1.0);
    let shrinks = y.data().iter().zip(x.data()).all(|(o, i)| o.abs() <= i.abs());
    ok &= report(
        &label,
        "gate-bounds",
        in_range && shrinks,
        "gates in (0, 1), |y| <= |x|".into(),
    );

    let zero = CbamWeights::zeros(w.channels, w.ratio, w.kernel)?;
    let z = cbam_forward(&x, &zero)?;
    let zerr = z
        .data()
        .iter()
        .zip(x.data())
        .map(|(o, i)| (*o as f64 - 0.25 * *i as f64).abs())
        .fold(0.0, f64::max);
    ok &= report(
        &label,
        "zero-weight",
        zerr <= 1e-6,
        format!("max |y - x/4| = {zerr:.2e}"),
    );

    let want = reference::forward(&x, w)?;
    let rel = y
        .data()
        .iter()
        .zip(&want)
        .map(|(g, r)| (*g as f64 - r).abs() / r.abs().max(1.0))
        .fold(0.0, f64::max);
    ok &= report(&label, "oracle", rel <= a.tolerance, format!("max rel error {rel:.2e}"));

    let mut bytes = Vec::with_capacity(4 * y.data().len());
    for v in y.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let digest = Sha256::digest(&bytes);
    let hex: String = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
    println!("{label} output-sha256 {hex}");
    Ok(ok)
}

pub fn cbamcheck(a: CbamcheckArgs) -> Result<Outcome> {
    if a.batch == 0 || a.size == 0 {
        bail!("--batch and --size must be at least 1");
    }
    let weights: Vec<CbamWeights> = match &a.import_weights {
        Some(path) => {
            let w = CbamWeights::load(path)?;
            if let Some(ch) = &a.channels {
                if ch.as_slice() != [w.channels] {
                    bail!(
                        "--channels {ch:?} conflicts with {} channels in {}",
                        w.channels,
                        path.display()
                    );
                }
            }
            vec![w]
        }
        None => {
            let channels = a.channels.clone().unwrap_or_else(|| vec![128, 256, 512]);
            if channels.is_empty() {
                bail!("--channels needs at least one value");
            }
            channels
                .iter()
                .map(|&c| init_weights(c, a.ratio, a.kernel, a.seed))
                .collect::<Result<_, _>>()?
        }
    };
    if a.export_weights.is_some() && weights.len() != 1 {
        bail!("--export-weights needs a single --channels value");
    }
    let mut ok = true;
    for w in &weights {
        ok &= check_one(w, &a)?;
    }
    if let Some(path) = &a.export_weights {
        write_atomic(path, &weights[0].to_bytes())?;
        println!("weights written to {}", path.display());
    }
    println!("cbamcheck: {}", if ok { "all checks passed" } else { "FAILED" });
    Ok(if ok { Outcome::Pass } else { Outcome::CheckFailed })
}
