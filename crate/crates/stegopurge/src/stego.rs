//! Payload embedding and extraction.
//!
//! Two embedders: classic LSB replacement with a fixed wire format, and a
//! texture-adaptive ±1 simulator that stands in for content-adaptive
//! algorithms distributed only as external binaries. The simulator keeps the
//! two properties the purifiers care about: ±1 perturbations and
//! content-adaptive placement at a known rate.
//!
//! LSB wire format: pixels row-major, a 32-bit big-endian byte-length header
//! first, then payload bytes MSB-first. One payload bit per pixel LSB.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::imageio::GrayImage;

/// Variance floor for the adaptive embedder's texture weights.
const VARIANCE_EPSILON: f64 = 1.0;

/// Byte payload carried by a stego image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StegoPayload {
    bytes: Vec<u8>,
}

impl StegoPayload {
    pub fn new(bytes: Vec<u8>) -> Self {
        Self { bytes }
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn len(&self) -> usize {
        self.bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }
}

/// Embedding rate in payload bits per pixel, valid over `(0, 0.5]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbedRate(f64);

impl EmbedRate {
    /// The five rates used for dataset generation.
    pub const DATASET_RATES: [f64; 5] = [0.1, 0.2, 0.3, 0.4, 0.5];

    pub fn new(rate: f64) -> Result<Self> {
        if !(rate > 0.0 && rate <= 0.5) {
            return Err(Error::InvalidArgument(format!(
                "embedding rate {rate} outside (0, 0.5]"
            )));
        }
        Ok(Self(rate))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

fn header_and_payload_bits(payload_len: usize) -> usize {
    32 + 8 * payload_len
}

/// Iterate the wire bits: 32-bit BE length header, then payload bytes
/// MSB-first.
fn wire_bits(payload: &StegoPayload) -> impl Iterator<Item = u8> + '_ {
    let len = payload.len() as u32;
    let header = len.to_be_bytes();
    header
        .into_iter()
        .chain(payload.bytes().iter().copied())
        .flat_map(|byte| (0..8).map(move |i| (byte >> (7 - i)) & 1))
}

/// Replace carrier LSBs with the payload wire bits.
pub fn lsb_embed(cover: &GrayImage, payload: &StegoPayload) -> Result<GrayImage> {
    let needed = header_and_payload_bits(payload.len());
    let capacity = cover.pixels().len();
    if needed > capacity {
        return Err(Error::CapacityExceeded { needed, capacity });
    }
    let mut out = cover.clone();
    for (pixel, bit) in out.pixels_mut().iter_mut().zip(wire_bits(payload)) {
        *pixel = (*pixel & !1) | bit;
    }
    Ok(out)
}

fn read_lsb_bits(pixels: &[u8], start_bit: usize, n_bytes: usize) -> Vec<u8> {
    let mut bytes = vec![0u8; n_bytes];
    for (i, byte) in bytes.iter_mut().enumerate() {
        for b in 0..8 {
            *byte = (*byte << 1) | (pixels[start_bit + i * 8 + b] & 1);
        }
    }
    bytes
}

/// Read the length header from the LSB plane, then that many payload bytes.
pub fn lsb_extract(stego: &GrayImage) -> Result<StegoPayload> {
    let pixels = stego.pixels();
    if pixels.len() < 32 {
        return Err(Error::CapacityExceeded {
            needed: 32,
            capacity: pixels.len(),
        });
    }
    let mut len: u64 = 0;
    for &p in &pixels[..32] {
        len = (len << 1) | u64::from(p & 1);
    }
    let len = len as usize;
    if header_and_payload_bits(len) > pixels.len() {
        return Err(Error::PayloadCorrupt);
    }
    Ok(StegoPayload::new(read_lsb_bits(pixels, 32, len)))
}

/// Read `n_bytes` from the LSB plane past the header region, ignoring
/// whatever the header now decodes to.
///
/// After purification the length header is destroyed along with the payload,
/// so destruction is measured by reading back the known extent and comparing
/// bit-for-bit against the original payload.
pub fn lsb_extract_raw(stego: &GrayImage, n_bytes: usize) -> Result<StegoPayload> {
    let pixels = stego.pixels();
    let needed = header_and_payload_bits(n_bytes);
    if needed > pixels.len() {
        return Err(Error::CapacityExceeded {
            needed,
            capacity: pixels.len(),
        });
    }
    Ok(StegoPayload::new(read_lsb_bits(pixels, 32, n_bytes)))
}

/// Population variance of the 3x3 neighborhood around `(x, y)`, with edge
/// replication.
fn local_variance_3x3(img: &GrayImage, x: usize, y: usize) -> f64 {
    let w = img.width() as isize;
    let h = img.height() as isize;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for dy in -1..=1 {
        for dx in -1..=1 {
            let sx = (x as isize + dx).clamp(0, w - 1) as usize;
            let sy = (y as isize + dy).clamp(0, h - 1) as usize;
            let v = img.get(sx, sy) as f64;
            sum += v;
            sum_sq += v * v;
        }
    }
    let mean = sum / 9.0;
    (sum_sq / 9.0 - mean * mean).max(0.0)
}

/// Change-probability scale such that `mean(min(1, s * w)) = target`.
///
/// The uncapped solution is `target / mean(w)`; heavy-tailed weights push
/// some probabilities past 1, so the scale is found by bisection to keep
/// the mean change probability exact.
fn probability_scale(weights: &[f64], target: f64) -> f64 {
    let n = weights.len() as f64;
    let mean_w: f64 = weights.iter().sum::<f64>() / n;
    let mean_p = |s: f64| weights.iter().map(|&w| (s * w).min(1.0)).sum::<f64>() / n;

    let mut lo = target / mean_w;
    if mean_p(lo) >= target {
        return lo;
    }
    let mut hi = lo;
    while mean_p(hi) < target {
        hi *= 2.0;
        if hi > 1e12 {
            break;
        }
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if mean_p(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Texture-adaptive ±1 embedder.
///
/// Each pixel is independently perturbed by ±1 with probability
/// proportional to `w = local 3x3 variance + 1`, scaled so the mean change
/// probability over the image equals `rate/2`; changes concentrate in
/// textured regions. Deterministic for a given `(cover, rate, seed)`.
pub fn adaptive_embed(cover: &GrayImage, rate: EmbedRate, seed: u64) -> GrayImage {
    let n = cover.pixels().len();
    let mut weights = Vec::with_capacity(n);
    for y in 0..cover.height() {
        for x in 0..cover.width() {
            weights.push(local_variance_3x3(cover, x, y) + VARIANCE_EPSILON);
        }
    }
    let scale = probability_scale(&weights, rate.get() / 2.0);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = cover.clone();
    for (pixel, w) in out.pixels_mut().iter_mut().zip(&weights) {
        let p_change = (scale * w).min(1.0);
        if rng.random::<f64>() < p_change {
            let delta: i16 = if rng.random::<bool>() { 1 } else { -1 };
            *pixel = (*pixel as i16 + delta).clamp(0, 255) as u8;
        }
    }
    out
}

/// Deterministic seeded payload bytes.
pub fn random_payload(n_bytes: usize, seed: u64) -> StegoPayload {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bytes = vec![0u8; n_bytes];
    rng.fill_bytes(&mut bytes);
    StegoPayload::new(bytes)
}

/// Fraction of differing bits over the shorter payload's bits.
pub fn payload_ber(original: &StegoPayload, recovered: &StegoPayload) -> Result<f64> {
    let n = original.len().min(recovered.len());
    if n == 0 {
        return Err(Error::EmptyComparison);
    }
    let diff_bits: u64 = original.bytes()[..n]
        .iter()
        .zip(&recovered.bytes()[..n])
        .map(|(a, b)| u64::from((a ^ b).count_ones()))
        .sum();
    Ok(diff_bits as f64 / (8 * n) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_cover(w: usize, h: usize, seed: u64) -> GrayImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        GrayImage::from_fn(w, h, |_, _| rng.random())
    }

    #[test]
    fn zero_payload_bits_clear_carrier_lsbs() {
        let cover = GrayImage::new(8, 8, (0..64).map(|i| (2 * i + 1) as u8).collect()).unwrap();
        let payload = StegoPayload::new(vec![0, 0, 0]);
        let stego = lsb_embed(&cover, &payload).unwrap();
        // 32 header bits (len=3: ...00011) plus 24 zero payload bits
        for (i, &p) in stego.pixels()[..56].iter().enumerate() {
            let expected_bit = u8::from(i == 30 || i == 31); // len 3 = 0b11
            assert_eq!(p & 1, expected_bit, "bit {i}");
        }
        for (&s, &c) in stego.pixels().iter().zip(cover.pixels()) {
            assert!((s as i16 - c as i16).abs() <= 1);
        }
    }

    #[test]
    fn empty_payload_into_even_pixels_is_noop() {
        // all-zero length header lands on already-even pixels
        let cover = GrayImage::constant(8, 8, 2);
        let stego = lsb_embed(&cover, &StegoPayload::new(vec![])).unwrap();
        assert_eq!(stego, cover);
    }

    #[test]
    fn embed_extract_roundtrip_seeded() {
        for seed in 0..20 {
            let cover = random_cover(32, 24, seed);
            let len = (seed as usize * 7) % 80;
            let payload = random_payload(len, seed + 1000);
            let stego = lsb_embed(&cover, &payload).unwrap();
            assert_eq!(lsb_extract(&stego).unwrap(), payload);
        }
    }

    #[test]
    fn embed_changes_at_most_header_plus_payload_pixels() {
        let cover = random_cover(40, 40, 5);
        let payload = random_payload(50, 6);
        let stego = lsb_embed(&cover, &payload).unwrap();
        let changed = cover
            .pixels()
            .iter()
            .zip(stego.pixels())
            .filter(|(a, b)| a != b)
            .count();
        assert!(changed <= 32 + 8 * 50);
        assert_eq!(&cover.pixels()[32 + 8 * 50..], &stego.pixels()[32 + 8 * 50..]);
    }

    #[test]
    fn capacity_checks() {
        let cover = GrayImage::constant(4, 4, 0); // 16 pixels < 32 header bits
        assert!(matches!(
            lsb_embed(&cover, &StegoPayload::new(vec![])),
            Err(Error::CapacityExceeded { .. })
        ));

        let cover = GrayImage::constant(16, 16, 0); // 256 pixels
        let payload = StegoPayload::new(vec![0; 29]); // needs 32+232=264
        assert!(lsb_embed(&cover, &payload).is_err());
        assert!(lsb_embed(&cover, &StegoPayload::new(vec![0; 28])).is_ok());
    }

    #[test]
    fn all_zero_image_extracts_empty_payload() {
        let img = GrayImage::constant(16, 16, 0);
        assert!(lsb_extract(&img).unwrap().is_empty());
    }

    #[test]
    fn corrupt_header_is_detected() {
        // all-ones LSB plane decodes to a huge length
        let img = GrayImage::constant(16, 16, 255);
        assert!(matches!(lsb_extract(&img), Err(Error::PayloadCorrupt)));
    }

    #[test]
    fn adaptive_embed_is_deterministic_and_pm1() {
        let cover = random_cover(64, 64, 9);
        let rate = EmbedRate::new(0.4).unwrap();
        let a = adaptive_embed(&cover, rate, 77);
        let b = adaptive_embed(&cover, rate, 77);
        assert_eq!(a, b);
        let c = adaptive_embed(&cover, rate, 78);
        assert_ne!(a, c);
        for (&x, &y) in cover.pixels().iter().zip(a.pixels()) {
            assert!((x as i16 - y as i16).abs() <= 1);
        }
    }

    fn changed_fraction(a: &GrayImage, b: &GrayImage) -> f64 {
        let changed = a
            .pixels()
            .iter()
            .zip(b.pixels())
            .filter(|(x, y)| x != y)
            .count();
        changed as f64 / a.pixels().len() as f64
    }

    #[test]
    fn adaptive_rate_half_on_random_texture() {
        let cover = random_cover(256, 256, 41);
        let stego = adaptive_embed(&cover, EmbedRate::new(0.5).unwrap(), 42);
        let frac = changed_fraction(&cover, &stego);
        assert!((0.225..=0.275).contains(&frac), "fraction {frac}");
    }

    #[test]
    fn adaptive_rate_half_on_constant_image() {
        // zero variance everywhere: uniform weights, same expected fraction;
        // mid-gray so clamping cannot suppress changes
        let cover = GrayImage::constant(128, 128, 128);
        let stego = adaptive_embed(&cover, EmbedRate::new(0.5).unwrap(), 4242);
        let frac = changed_fraction(&cover, &stego);
        assert!((0.225..=0.275).contains(&frac), "fraction {frac}");
    }

    #[test]
    fn rate_validation() {
        assert!(EmbedRate::new(0.0).is_err());
        assert!(EmbedRate::new(0.51).is_err());
        assert!(EmbedRate::new(-0.1).is_err());
        assert!(EmbedRate::new(0.5).is_ok());
    }

    #[test]
    fn random_payload_deterministic_and_balanced() {
        assert!(random_payload(0, 1).is_empty());
        assert_eq!(random_payload(64, 9), random_payload(64, 9));
        assert_ne!(random_payload(64, 9), random_payload(64, 10));

        let p = random_payload(1_000_000, 3);
        let ones: u64 = p.bytes().iter().map(|b| u64::from(b.count_ones())).sum();
        let frac = ones as f64 / 8e6;
        assert!((frac - 0.5).abs() < 0.01, "ones fraction {frac}");
    }

    #[test]
    fn payload_ber_cases() {
        let a = StegoPayload::new(vec![0b1010_1010, 0xff]);
        assert_eq!(payload_ber(&a, &a).unwrap(), 0.0);

        let complement = StegoPayload::new(a.bytes().iter().map(|b| !b).collect());
        assert_eq!(payload_ber(&a, &complement).unwrap(), 1.0);

        assert!(matches!(
            payload_ber(&StegoPayload::new(vec![]), &StegoPayload::new(vec![])),
            Err(Error::EmptyComparison)
        ));

        // independent random payloads: expectation 0.5 over 1e5 bits
        let x = random_payload(12_500, 100);
        let y = random_payload(12_500, 200);
        let ber = payload_ber(&x, &y).unwrap();
        assert!((ber - 0.5).abs() < 0.01, "ber {ber}");
    }
}
