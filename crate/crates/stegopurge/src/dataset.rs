//! Dataset construction: seeded synthetic covers, stego generation over a
//! method/rate grid, split assignment, and the JSON manifest.
//!
//! Splits are assigned per cover (75% train / 25% test, with 10% of the
//! train pool carved out for validation) so no cover's stegos leak across
//! splits. Everything is deterministic for a given seed.

use std::fs;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imageio::{write_pgm, GrayImage};
use crate::par;
use crate::stego::{adaptive_embed, lsb_embed, random_payload, EmbedRate};
use crate::training::{PairedDataset, TrainPair};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

const TRAIN_FRACTION: f64 = 0.75;
const VAL_FRACTION_OF_TRAIN: f64 = 0.10;

/// Embedding algorithms the dataset generator knows about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedMethod {
    Lsb,
    Adaptive,
}

impl EmbedMethod {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "lsb" => Ok(EmbedMethod::Lsb),
            "adaptive" => Ok(EmbedMethod::Adaptive),
            other => Err(Error::InvalidArgument(format!(
                "unknown embedding method {other} (expected lsb or adaptive)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EmbedMethod::Lsb => "lsb",
            EmbedMethod::Adaptive => "adaptive",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub cover: String,
    pub stego: String,
    pub method: EmbedMethod,
    pub rate: f64,
    pub seed: u64,
    pub split: Split,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub seed: u64,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn save(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("serializable manifest");
        fs::write(dir.join(MANIFEST_FILE), text)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
        let manifest: DatasetManifest =
            serde_json::from_str(&text).map_err(|e| Error::Manifest(e.to_string()))?;
        if manifest.version != MANIFEST_VERSION {
            return Err(Error::Manifest(format!(
                "unsupported manifest version {}",
                manifest.version
            )));
        }
        Ok(manifest)
    }

    pub fn entries_for(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn methods(&self) -> Vec<EmbedMethod> {
        let mut out = Vec::new();
        for e in &self.entries {
            if !out.contains(&e.method) {
                out.push(e.method);
            }
        }
        out
    }
}

fn mix_seed(seed: u64, parts: &[u64]) -> u64 {
    let mut x = seed ^ 0x6A09_E667_F3BC_C908;
    for &p in parts {
        x = x.wrapping_add(p).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        x ^= x >> 29;
    }
    x
}

/// One procedural cover: a smooth base, high-frequency gratings, a flat
/// patch, and a granular-noise texture over everything except two protected
/// clean windows. The noise texture has to dominate the image area so the
/// wavelet baseline's median noise estimate engages on every cover; the
/// clean windows keep deterministic low- and high-frequency content the
/// learned purifier can actually reconstruct.
fn synth_cover(side: usize, rng: &mut ChaCha8Rng) -> GrayImage {
    let w = side as f64;

    // smooth base: plane plus one low-frequency wave
    let base_level = rng.random_range(70.0..170.0);
    let gx = rng.random_range(-40.0..40.0) / w;
    let gy = rng.random_range(-40.0..40.0) / w;
    let wave_amp = rng.random_range(15.0..35.0);
    let wave_period = rng.random_range(1.5..3.0);
    let wave_phase = rng.random_range(0.0..std::f64::consts::TAU);
    let wave_dir = rng.random_range(0.0..std::f64::consts::TAU);

    let mut field = vec![0.0f64; side * side];
    for y in 0..side {
        for x in 0..side {
            let (xf, yf) = (x as f64, y as f64);
            let u = (xf * wave_dir.cos() + yf * wave_dir.sin()) / w;
            field[y * side + x] = base_level
                + gx * xf
                + gy * yf
                + wave_amp * (std::f64::consts::TAU * wave_period * u + wave_phase).sin();
        }
    }

    let rect = |rng: &mut ChaCha8Rng, min_frac: f64, max_frac: f64| {
        let rw = rng.random_range((side as f64 * min_frac) as usize..=(side as f64 * max_frac) as usize)
            .max(2);
        let rh = rng.random_range((side as f64 * min_frac) as usize..=(side as f64 * max_frac) as usize)
            .max(2);
        let x0 = rng.random_range(0..=side - rw.min(side));
        let y0 = rng.random_range(0..=side - rh.min(side));
        (x0, y0, rw.min(side - x0), rh.min(side - y0))
    };

    // high-frequency gratings: content bicubic resampling cannot keep
    let n_gratings = rng.random_range(3..=5);
    for g in 0..n_gratings {
        let (x0, y0, rw, rh) = rect(rng, 0.3, 0.55);
        let amp = rng.random_range(25.0..50.0);
        let period = *[2.0f64, 3.0, 4.0].choose(rng).unwrap();
        // force at least one diagonal grating so every wavelet band sees
        // structured energy
        let dir = if g == 0 {
            rng.random_range(0.6..1.0)
        } else {
            rng.random_range(0.0..std::f64::consts::TAU)
        };
        let square = rng.random::<bool>();
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        for y in y0..y0 + rh {
            for x in x0..x0 + rw {
                let u = x as f64 * dir.cos() + y as f64 * dir.sin();
                let s = (std::f64::consts::TAU * u / period + phase).sin();
                let v = if square { amp * s.signum() } else { amp * s };
                field[y * side + x] += v;
            }
        }
    }

    // a flat patch
    let (x0, y0, rw, rh) = rect(rng, 0.12, 0.22);
    let flat = rng.random_range(30.0..220.0);
    for y in y0..y0 + rh {
        for x in x0..x0 + rw {
            field[y * side + x] = flat;
        }
    }

    // protected clean windows
    let mut clean = vec![false; side * side];
    for _ in 0..2 {
        let (x0, y0, rw, rh) = rect(rng, 0.25, 0.4);
        for y in y0..y0 + rh {
            for x in x0..x0 + rw {
                clean[y * side + x] = true;
            }
        }
    }

    // granular noise everywhere else (Box-Muller from uniforms)
    let sigma = rng.random_range(8.0..14.0);
    for i in 0..side * side {
        if !clean[i] {
            let u1: f64 = rng.random::<f64>().max(1e-12);
            let u2: f64 = rng.random();
            let z = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
            field[i] += sigma * z;
        }
    }

    let pixels = field
        .iter()
        .map(|&v| v.round().clamp(0.0, 255.0) as u8)
        .collect();
    GrayImage::new(side, side, pixels).expect("nonzero side")
}

/// Seeded procedural grayscale covers.
pub fn synth_covers(n: usize, side: usize, seed: u64) -> Vec<GrayImage> {
    let indices: Vec<u64> = (0..n as u64).collect();
    par::batch_map(&indices, |&i| {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, &[0xC0, i]));
        synth_cover(side, &mut rng)
    })
}

/// LSB payload size implied by a bits-per-pixel rate, capped by capacity.
pub fn lsb_payload_bytes(rate: f64, n_pixels: usize) -> usize {
    let target = (rate * n_pixels as f64 / 8.0).floor() as usize;
    target.min(n_pixels.saturating_sub(32) / 8)
}

/// Embed one stego image for a manifest entry.
pub fn embed_for_entry(
    cover: &GrayImage,
    method: EmbedMethod,
    rate: f64,
    seed: u64,
) -> Result<GrayImage> {
    let rate = EmbedRate::new(rate)?;
    match method {
        EmbedMethod::Adaptive => Ok(adaptive_embed(cover, rate, seed)),
        EmbedMethod::Lsb => {
            let n = lsb_payload_bytes(rate.get(), cover.pixels().len());
            let payload = random_payload(n, seed);
            lsb_embed(cover, &payload)
        }
    }
}

/// Generate the cover/stego tree plus manifest under `out_dir`.
///
/// Every cover is embedded once per (method, rate); a cover's entries all
/// share its split.
pub fn dataset_generate(
    covers: &[GrayImage],
    methods: &[EmbedMethod],
    rates: &[f64],
    seed: u64,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    if covers.is_empty() {
        return Err(Error::EmptyInput("no cover images"));
    }
    if methods.is_empty() || rates.is_empty() {
        return Err(Error::EmptyInput("no methods or rates"));
    }
    for &r in rates {
        EmbedRate::new(r)?;
    }

    let cover_dir = out_dir.join("covers");
    let stego_dir = out_dir.join("stego");
    fs::create_dir_all(&cover_dir)?;
    fs::create_dir_all(&stego_dir)?;

    // split assignment by cover
    let mut order: Vec<usize> = (0..covers.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(seed, &[0x51])));
    let n_train_pool = ((covers.len() as f64) * TRAIN_FRACTION).round() as usize;
    let n_val = ((n_train_pool as f64) * VAL_FRACTION_OF_TRAIN).ceil() as usize;
    let mut split_of = vec![Split::Test; covers.len()];
    for (rank, &ci) in order.iter().enumerate() {
        split_of[ci] = if rank < n_val {
            Split::Val
        } else if rank < n_train_pool {
            Split::Train
        } else {
            Split::Test
        };
    }

    let mut entries = Vec::new();
    for (ci, cover) in covers.iter().enumerate() {
        let cover_name = format!("covers/cover_{ci:04}.pgm");
        write_pgm(cover, out_dir.join(&cover_name))?;
        for (mi, &method) in methods.iter().enumerate() {
            for (ri, &rate) in rates.iter().enumerate() {
                let entry_seed = mix_seed(seed, &[1, ci as u64, mi as u64, ri as u64]);
                let stego = embed_for_entry(cover, method, rate, entry_seed)?;
                let stego_name = format!(
                    "stego/stego_{ci:04}_{}_{:02}.pgm",
                    method.name(),
                    (rate * 100.0).round() as u32
                );
                write_pgm(&stego, out_dir.join(&stego_name))?;
                entries.push(ManifestEntry {
                    cover: cover_name.clone(),
                    stego: stego_name,
                    method,
                    rate,
                    seed: entry_seed,
                    split: split_of[ci],
                });
            }
        }
    }

    let manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        seed,
        entries,
    };
    manifest.save(out_dir)?;
    Ok(manifest)
}

/// Load the (stego, cover) image pairs of one split.
pub fn load_split(root: &Path, manifest: &DatasetManifest, split: Split) -> Result<Vec<TrainPair>> {
    manifest
        .entries_for(split)
        .map(|e| {
            Ok(TrainPair {
                stego: crate::imageio::read_image(root.join(&e.stego))?,
                cover: crate::imageio::read_image(root.join(&e.cover))?,
            })
        })
        .collect()
}

/// Train/val pairs for the trainers.
pub fn load_paired_dataset(root: &Path, manifest: &DatasetManifest) -> Result<PairedDataset> {
    Ok(PairedDataset {
        train: load_split(root, manifest, Split::Train)?,
        val: load_split(root, manifest, Split::Val)?,
    })
}
