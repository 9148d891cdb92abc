//! Experiment harness: benchmark every purifier over a dataset's test split
//! and visualize residuals.

use std::path::Path;

use crate::dataset::{DatasetManifest, Split};
use crate::error::{Error, Result};
use crate::imageio::GrayImage;
use crate::metrics::{evaluate_pairs, ImageMetrics, MetricsRow};
use crate::model::checkpoint::load_generator;
use crate::par;
use crate::purify::{bayes_shrink_denoise, bicubic_purify, purify_with_generator};

/// Purification methods the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PurifyMethod {
    Identity,
    Bicubic,
    Wavelet,
    Autoencoder,
    Ddsp,
}

impl PurifyMethod {
    pub const BENCHMARK_SET: [PurifyMethod; 4] = [
        PurifyMethod::Bicubic,
        PurifyMethod::Wavelet,
        PurifyMethod::Autoencoder,
        PurifyMethod::Ddsp,
    ];

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(PurifyMethod::Identity),
            "bicubic" => Ok(PurifyMethod::Bicubic),
            "wavelet" => Ok(PurifyMethod::Wavelet),
            "autoencoder" => Ok(PurifyMethod::Autoencoder),
            "ddsp" => Ok(PurifyMethod::Ddsp),
            other => Err(Error::InvalidArgument(format!(
                "unknown purify method {other}"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PurifyMethod::Identity => "identity",
            PurifyMethod::Bicubic => "bicubic",
            PurifyMethod::Wavelet => "wavelet",
            PurifyMethod::Autoencoder => "autoencoder",
            PurifyMethod::Ddsp => "ddsp",
        }
    }

    pub fn needs_checkpoint(self) -> bool {
        matches!(self, PurifyMethod::Autoencoder | PurifyMethod::Ddsp)
    }
}

/// Checkpoint paths for the neural methods.
#[derive(Debug, Clone, Default)]
pub struct Checkpoints {
    pub autoencoder: Option<std::path::PathBuf>,
    pub ddsp: Option<std::path::PathBuf>,
}

impl Checkpoints {
    fn for_method(&self, method: PurifyMethod) -> Result<&Path> {
        let path = match method {
            PurifyMethod::Autoencoder => self.autoencoder.as_deref(),
            PurifyMethod::Ddsp => self.ddsp.as_deref(),
            _ => None,
        };
        path.ok_or_else(|| Error::MissingCheckpoint(method.name().to_string()))
    }
}

/// Benchmark results plus any policy warnings.
#[derive(Debug, Clone, Default)]
pub struct BenchmarkOutput {
    pub rows: Vec<MetricsRow>,
    pub per_image: Vec<(String, Vec<ImageMetrics>)>,
    pub warnings: Vec<String>,
}

/// Apply one purification method to a batch of images.
pub fn purify_batch(
    method: PurifyMethod,
    imgs: &[GrayImage],
    wavelet_levels: usize,
    ckpts: &Checkpoints,
) -> Result<Vec<GrayImage>> {
    match method {
        PurifyMethod::Identity => Ok(imgs.to_vec()),
        PurifyMethod::Bicubic => par::batch_map(imgs, bicubic_purify).into_iter().collect(),
        PurifyMethod::Wavelet => par::batch_map(imgs, |i| bayes_shrink_denoise(i, wavelet_levels))
            .into_iter()
            .collect(),
        PurifyMethod::Autoencoder | PurifyMethod::Ddsp => {
            let (mut gen, _meta) = load_generator(ckpts.for_method(method)?)?;
            purify_with_generator(&mut gen, imgs)
        }
    }
}

/// Evaluate each method over the manifest's test split.
///
/// When `transfer` is set, rows are labeled `<method>-transfer` and a
/// warning is emitted if a neural checkpoint was trained on an embedding
/// method present in the manifest.
pub fn run_benchmark(
    root: &Path,
    manifest: &DatasetManifest,
    methods: &[PurifyMethod],
    wavelet_levels: usize,
    ckpts: &Checkpoints,
    transfer: bool,
) -> Result<BenchmarkOutput> {
    let pairs = crate::dataset::load_split(root, manifest, Split::Test)?;
    if pairs.is_empty() {
        return Err(Error::EmptyInput("empty test split"));
    }
    let stegos: Vec<GrayImage> = pairs.iter().map(|p| p.stego.clone()).collect();

    let mut out = BenchmarkOutput::default();
    let manifest_methods = manifest.methods();
    for &method in methods {
        if transfer && method.needs_checkpoint() {
            let (_gen, meta) = load_generator(ckpts.for_method(method)?)?;
            if manifest_methods
                .iter()
                .any(|m| m.name() == meta.trained_method)
            {
                out.warnings.push(format!(
                    "{}: evaluating on the training method ({}); this is not a transfer run",
                    method.name(),
                    meta.trained_method
                ));
            }
        }
        let purified = purify_batch(method, &stegos, wavelet_levels, ckpts)?;
        let label = if transfer {
            format!("{}-transfer", method.name())
        } else {
            method.name().to_string()
        };
        let (row, per_image) = evaluate_pairs(&stegos, &purified, &label)?;
        out.rows.push(row);
        out.per_image.push((label, per_image));
    }
    Ok(out)
}

/// Amplified absolute difference, as used for residual visualization:
/// `clamp(round(gain * |cover - other|))`.
pub fn diff_image(cover: &GrayImage, other: &GrayImage, gain: f64) -> Result<GrayImage> {
    cover.same_dims(other)?;
    if gain <= 0.0 {
        return Err(Error::InvalidArgument(format!("gain {gain} must be > 0")));
    }
    let pixels = cover
        .pixels()
        .iter()
        .zip(other.pixels())
        .map(|(&a, &b)| {
            let d = (a as f64 - b as f64).abs();
            (gain * d).round().clamp(0.0, 255.0) as u8
        })
        .collect();
    GrayImage::new(cover.width(), cover.height(), pixels)
}
