//! Bicubic resampling (Keys kernel, a = -0.5) and the down/up purifier.
//!
//! Output pixel centers map to input coordinates via the half-pixel
//! convention `src = (dst + 0.5) * in/out - 0.5`, so resizing to the same
//! dimensions samples the kernel at integer offsets and is exactly the
//! identity. Edge taps are clamped to the border pixel. All arithmetic runs
//! in f64; rounding and clamping to `[0, 255]` happen once per resize.

use crate::error::{Error, Result};
use crate::imageio::GrayImage;

const KERNEL_A: f64 = -0.5;

/// Keys cubic convolution weight at offset `t`.
fn keys_weight(t: f64) -> f64 {
    let t = t.abs();
    if t <= 1.0 {
        (KERNEL_A + 2.0) * t * t * t - (KERNEL_A + 3.0) * t * t + 1.0
    } else if t < 2.0 {
        KERNEL_A * (t * t * t - 5.0 * t * t + 8.0 * t - 4.0)
    } else {
        0.0
    }
}

/// Four taps and their base index for one output coordinate.
fn taps(dst: usize, scale: f64) -> (isize, [f64; 4]) {
    let src = (dst as f64 + 0.5) * scale - 0.5;
    let base = src.floor();
    let frac = src - base;
    let weights = [
        keys_weight(frac + 1.0),
        keys_weight(frac),
        keys_weight(frac - 1.0),
        keys_weight(frac - 2.0),
    ];
    (base as isize - 1, weights)
}

fn resample_axis(src: &[f64], src_len: usize, dst_len: usize, stride: usize, lines: usize, line_stride_src: usize, line_stride_dst: usize, dst: &mut [f64]) {
    let scale = src_len as f64 / dst_len as f64;
    for d in 0..dst_len {
        let (base, w) = taps(d, scale);
        for line in 0..lines {
            let mut acc = 0.0;
            for (k, &wk) in w.iter().enumerate() {
                let s = (base + k as isize).clamp(0, src_len as isize - 1) as usize;
                acc += wk * src[line * line_stride_src + s * stride];
            }
            dst[line * line_stride_dst + d * stride] = acc;
        }
    }
}

/// Separable bicubic resize to `out_w x out_h`.
pub fn bicubic_resize(img: &GrayImage, out_w: usize, out_h: usize) -> Result<GrayImage> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::InvalidArgument(format!(
            "zero output dimension: {out_w}x{out_h}"
        )));
    }
    let (in_w, in_h) = (img.width(), img.height());
    let src: Vec<f64> = img.pixels().iter().map(|&p| p as f64).collect();

    // Horizontal pass: in_h rows of in_w -> in_h rows of out_w.
    let mut mid = vec![0.0; out_w * in_h];
    resample_axis(&src, in_w, out_w, 1, in_h, in_w, out_w, &mut mid);

    // Vertical pass: out_w columns of in_h -> out_w columns of out_h.
    let mut out = vec![0.0; out_w * out_h];
    resample_axis(&mid, in_h, out_h, out_w, out_w, 1, 1, &mut out);

    let pixels = out
        .iter()
        .map(|&v| v.round().clamp(0.0, 255.0) as u8)
        .collect();
    GrayImage::new(out_w, out_h, pixels)
}

/// Downsize by a factor of 2 with bicubic interpolation, then resize back.
pub fn bicubic_purify(img: &GrayImage) -> Result<GrayImage> {
    let (w, h) = (img.width(), img.height());
    if w < 4 || h < 4 {
        return Err(Error::ImageTooSmall {
            width: w,
            height: h,
            min: 4,
        });
    }
    let small = bicubic_resize(img, w / 2, h / 2)?;
    bicubic_resize(&small, w, h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn kernel_weights_partition_unity() {
        for i in 0..=100 {
            let frac = i as f64 / 100.0;
            let sum = keys_weight(frac + 1.0)
                + keys_weight(frac)
                + keys_weight(frac - 1.0)
                + keys_weight(frac - 2.0);
            assert!((sum - 1.0).abs() < 1e-12, "phase {frac}: sum {sum}");
        }
    }

    #[test]
    fn resize_to_same_dims_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let img = GrayImage::from_fn(23, 17, |_, _| rng.random());
        assert_eq!(bicubic_resize(&img, 23, 17).unwrap(), img);
    }

    #[test]
    fn constant_image_is_fixed_point() {
        let img = GrayImage::constant(20, 12, 77);
        assert_eq!(bicubic_resize(&img, 7, 31).unwrap(), GrayImage::constant(7, 31, 77));
        assert_eq!(bicubic_purify(&img).unwrap(), img);
    }

    #[test]
    fn ramp_survives_halve_double_above_40db() {
        // rows of the 1-D ramp 0,16,...,240
        let img = GrayImage::from_fn(16, 16, |x, _| (16 * x) as u8);
        let down = bicubic_resize(&img, 8, 16).unwrap();
        let back = bicubic_resize(&down, 16, 16).unwrap();
        let mse: f64 = img
            .pixels()
            .iter()
            .zip(back.pixels())
            .map(|(&a, &b)| {
                let d = a as f64 - b as f64;
                d * d
            })
            .sum::<f64>()
            / img.pixels().len() as f64;
        let psnr = 10.0 * (255.0f64 * 255.0 / mse).log10();
        assert!(psnr > 40.0, "psnr {psnr}");
    }

    #[test]
    fn purify_preserves_dimensions() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for (w, h) in [(5, 9), (32, 32), (33, 47)] {
            let img = GrayImage::from_fn(w, h, |_, _| rng.random());
            let p = bicubic_purify(&img).unwrap();
            assert_eq!((p.width(), p.height()), (w, h));
        }
    }

    #[test]
    fn purify_rejects_tiny_images() {
        let img = GrayImage::constant(3, 8, 0);
        assert!(matches!(
            bicubic_purify(&img),
            Err(Error::ImageTooSmall { .. })
        ));
    }
}
