//! db1 (Haar) 2-D wavelet transform and BayesShrink soft-threshold denoising.
//!
//! Analysis uses the orthonormal filter pair `[1, 1]/sqrt(2)` and
//! `[1, -1]/sqrt(2)` applied separably. Odd lengths are handled by
//! replicating the final sample, which keeps the transform perfectly
//! invertible after cropping. All coefficient math is f64; pixels are
//! produced only at the very end of denoising.
//!
//! BayesShrink thresholds every detail band at every level; the noise scale
//! comes from the finest diagonal band via the median estimator
//! `sigma = median(|HH1|) / 0.6745`.

use crate::error::{Error, Result};
use crate::imageio::GrayImage;

const SQRT2: f64 = std::f64::consts::SQRT_2;
const MAD_TO_SIGMA: f64 = 0.6745;

/// One coefficient band.
#[derive(Debug, Clone, PartialEq)]
pub struct Band {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Band {
    fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_pixels(img: &GrayImage) -> Self {
        Self {
            width: img.width(),
            height: img.height(),
            data: img.pixels().iter().map(|&p| p as f64).collect(),
        }
    }
}

/// Detail bands of one decomposition level, plus the dimensions of the
/// signal that produced them (needed to crop odd-length reconstructions).
#[derive(Debug, Clone)]
pub struct LevelDetail {
    pub lh: Band,
    pub hl: Band,
    pub hh: Band,
    input_width: usize,
    input_height: usize,
}

/// Multi-level db1 decomposition: the final approximation band plus detail
/// bands per level, finest first.
#[derive(Debug, Clone)]
pub struct WaveletBands {
    pub ll: Band,
    pub details: Vec<LevelDetail>,
}

impl WaveletBands {
    pub fn levels(&self) -> usize {
        self.details.len()
    }
}

fn half_len(n: usize) -> usize {
    n.div_ceil(2)
}

/// One analysis step along x, producing (lowpass, highpass) halves.
fn analyze_rows(src: &Band) -> (Band, Band) {
    let hw = half_len(src.width);
    let mut low = Band::new(hw, src.height);
    let mut high = Band::new(hw, src.height);
    for y in 0..src.height {
        let row = &src.data[y * src.width..(y + 1) * src.width];
        for k in 0..hw {
            let a = row[2 * k];
            let b = row[(2 * k + 1).min(src.width - 1)];
            low.data[y * hw + k] = (a + b) / SQRT2;
            high.data[y * hw + k] = (a - b) / SQRT2;
        }
    }
    (low, high)
}

fn analyze_cols(src: &Band) -> (Band, Band) {
    let hh = half_len(src.height);
    let mut low = Band::new(src.width, hh);
    let mut high = Band::new(src.width, hh);
    for k in 0..hh {
        let y0 = 2 * k;
        let y1 = (2 * k + 1).min(src.height - 1);
        for x in 0..src.width {
            let a = src.data[y0 * src.width + x];
            let b = src.data[y1 * src.width + x];
            low.data[k * src.width + x] = (a + b) / SQRT2;
            high.data[k * src.width + x] = (a - b) / SQRT2;
        }
    }
    (low, high)
}

fn synthesize_rows(low: &Band, high: &Band, out_width: usize) -> Band {
    let mut out = Band::new(out_width, low.height);
    for y in 0..low.height {
        for k in 0..low.width {
            let a = low.data[y * low.width + k];
            let d = high.data[y * high.width + k];
            let x0 = (a + d) / SQRT2;
            let x1 = (a - d) / SQRT2;
            out.data[y * out_width + 2 * k] = x0;
            if 2 * k + 1 < out_width {
                out.data[y * out_width + 2 * k + 1] = x1;
            }
        }
    }
    out
}

fn synthesize_cols(low: &Band, high: &Band, out_height: usize) -> Band {
    let mut out = Band::new(low.width, out_height);
    for k in 0..low.height {
        for x in 0..low.width {
            let a = low.data[k * low.width + x];
            let d = high.data[k * high.width + x];
            let x0 = (a + d) / SQRT2;
            let x1 = (a - d) / SQRT2;
            out.data[2 * k * low.width + x] = x0;
            if 2 * k + 1 < out_height {
                out.data[(2 * k + 1) * low.width + x] = x1;
            }
        }
    }
    out
}

fn dwt2_level(src: &Band) -> (Band, LevelDetail) {
    let (a, d) = analyze_rows(src);
    let (ll, lh) = analyze_cols(&a);
    let (hl, hh) = analyze_cols(&d);
    (
        ll,
        LevelDetail {
            lh,
            hl,
            hh,
            input_width: src.width,
            input_height: src.height,
        },
    )
}

fn idwt2_level(ll: &Band, detail: &LevelDetail) -> Band {
    let half_h = half_len(detail.input_height);
    let a = synthesize_cols(ll, &detail.lh, detail.input_height);
    debug_assert_eq!(ll.height, half_h);
    let d = synthesize_cols(&detail.hl, &detail.hh, detail.input_height);
    synthesize_rows(&a, &d, detail.input_width)
}

/// Multi-level db1 analysis of a real 2-D array.
pub fn dwt2_db1(input: &Band, levels: usize) -> Result<WaveletBands> {
    if levels < 1 {
        return Err(Error::InvalidArgument("wavelet levels must be >= 1".into()));
    }
    let mut ll = input.clone();
    let mut details = Vec::with_capacity(levels);
    for _ in 0..levels {
        let (next, detail) = dwt2_level(&ll);
        details.push(detail);
        ll = next;
    }
    Ok(WaveletBands { ll, details })
}

/// Inverse of [`dwt2_db1`].
pub fn idwt2_db1(bands: &WaveletBands) -> Band {
    let mut ll = bands.ll.clone();
    for detail in bands.details.iter().rev() {
        ll = idwt2_level(&ll, detail);
    }
    ll
}

fn median_abs(data: &[f64]) -> f64 {
    let mut mags: Vec<f64> = data.iter().map(|v| v.abs()).collect();
    mags.sort_by(|a, b| a.partial_cmp(b).expect("finite coefficients"));
    let n = mags.len();
    if n % 2 == 1 {
        mags[n / 2]
    } else {
        (mags[n / 2 - 1] + mags[n / 2]) / 2.0
    }
}

fn soft_threshold(band: &mut Band, t: f64) {
    for c in &mut band.data {
        let shrunk = (c.abs() - t).max(0.0);
        *c = c.signum() * shrunk;
    }
}

/// BayesShrink threshold for one detail band given the noise variance.
///
/// `T = sigma_n^2 / sigma_x` with `sigma_x = sqrt(max(var - sigma_n^2, 0))`;
/// when the band is pure noise (`sigma_x = 0`) the threshold is the band's
/// max magnitude, zeroing it.
fn bayes_threshold(band: &Band, noise_var: f64) -> f64 {
    let n = band.data.len() as f64;
    let band_var = band.data.iter().map(|c| c * c).sum::<f64>() / n;
    let sigma_x = (band_var - noise_var).max(0.0).sqrt();
    if sigma_x == 0.0 {
        band.data.iter().fold(0.0f64, |m, c| m.max(c.abs()))
    } else {
        noise_var / sigma_x
    }
}

/// Wavelet denoiser: db1 decomposition, BayesShrink soft thresholding of
/// every detail band, reconstruction, round and clamp.
pub fn bayes_shrink_denoise(img: &GrayImage, levels: usize) -> Result<GrayImage> {
    let mut bands = dwt2_db1(&Band::from_pixels(img), levels)?;

    let sigma = median_abs(&bands.details[0].hh.data) / MAD_TO_SIGMA;
    let noise_var = sigma * sigma;

    for detail in &mut bands.details {
        for band in [&mut detail.lh, &mut detail.hl, &mut detail.hh] {
            let t = bayes_threshold(band, noise_var);
            soft_threshold(band, t);
        }
    }

    let rec = idwt2_db1(&bands);
    let pixels = rec
        .data
        .iter()
        .map(|&v| v.round().clamp(0.0, 255.0) as u8)
        .collect();
    GrayImage::new(rec.width, rec.height, pixels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn band_from(w: usize, h: usize, data: Vec<f64>) -> Band {
        assert_eq!(data.len(), w * h);
        Band {
            width: w,
            height: h,
            data,
        }
    }

    #[test]
    fn constant_block_concentrates_in_ll() {
        let b = band_from(2, 2, vec![10.0; 4]);
        let w = dwt2_db1(&b, 1).unwrap();
        assert!((w.ll.data[0] - 20.0).abs() < 1e-12);
        for band in [&w.details[0].lh, &w.details[0].hl, &w.details[0].hh] {
            assert!(band.data[0].abs() < 1e-12);
        }
    }

    #[test]
    fn checkerboard_lands_in_diagonal_band() {
        // brute-force 2x2 Haar: a=0 b=255 / c=255 d=0
        let b = band_from(2, 2, vec![0.0, 255.0, 255.0, 0.0]);
        let w = dwt2_db1(&b, 1).unwrap();
        assert!((w.ll.data[0] - 255.0).abs() < 1e-12);
        assert!(w.details[0].lh.data[0].abs() < 1e-12);
        assert!(w.details[0].hl.data[0].abs() < 1e-12);
        assert!((w.details[0].hh.data[0].abs() - 255.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_reconstruction_on_random_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (w, h, levels) in [(16, 16, 1), (16, 16, 3), (17, 13, 2), (31, 8, 2), (9, 9, 3)] {
            let data: Vec<f64> = (0..w * h).map(|_| rng.random::<f64>() * 255.0).collect();
            let b = band_from(w, h, data);
            let bands = dwt2_db1(&b, levels).unwrap();
            let rec = idwt2_db1(&bands);
            assert_eq!((rec.width, rec.height), (w, h));
            let max_err = b
                .data
                .iter()
                .zip(&rec.data)
                .map(|(a, r)| (a - r).abs())
                .fold(0.0f64, f64::max);
            assert!(max_err < 1e-9, "{w}x{h} levels {levels}: err {max_err}");
        }
    }

    #[test]
    fn levels_zero_rejected() {
        let b = band_from(2, 2, vec![0.0; 4]);
        assert!(dwt2_db1(&b, 0).is_err());
    }

    #[test]
    fn soft_threshold_never_grows_magnitudes() {
        let mut band = band_from(4, 1, vec![-3.0, 0.2, 1.5, -0.1]);
        let before = band.data.clone();
        soft_threshold(&mut band, 0.5);
        for (b, a) in before.iter().zip(&band.data) {
            assert!(a.abs() <= b.abs() + 1e-15);
        }
        assert_eq!(band.data[1], 0.0);
        assert_eq!(band.data[3], 0.0);
    }

    #[test]
    fn constant_image_denoises_to_itself() {
        let img = GrayImage::constant(32, 32, 140);
        assert_eq!(bayes_shrink_denoise(&img, 2).unwrap(), img);
    }

    #[test]
    fn denoise_reduces_mse_on_noisy_ramp() {
        let clean = GrayImage::from_fn(64, 64, |x, y| ((x + y) * 2).min(255) as u8);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let gauss = Normal::new(0.0f64, 10.0).unwrap();
        let noisy = GrayImage::from_fn(64, 64, |x, y| {
            (clean.get(x, y) as f64 + gauss.sample(&mut rng))
                .round()
                .clamp(0.0, 255.0) as u8
        });
        let denoised = bayes_shrink_denoise(&noisy, 2).unwrap();

        let mse = |a: &GrayImage, b: &GrayImage| {
            a.pixels()
                .iter()
                .zip(b.pixels())
                .map(|(&x, &y)| {
                    let d = x as f64 - y as f64;
                    d * d
                })
                .sum::<f64>()
                / a.pixels().len() as f64
        };
        let noisy_mse = mse(&noisy, &clean);
        let denoised_mse = mse(&denoised, &clean);
        assert!(
            denoised_mse < noisy_mse,
            "denoised {denoised_mse} vs noisy {noisy_mse}"
        );
    }

    #[test]
    fn denoise_preserves_dimensions() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let img = GrayImage::from_fn(33, 21, |_, _| rng.random());
        let out = bayes_shrink_denoise(&img, 2).unwrap();
        assert_eq!((out.width(), out.height()), (33, 21));
    }
}
