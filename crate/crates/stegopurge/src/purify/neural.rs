//! Batched inference for the neural purifiers.
//!
//! The generator runs at a fixed input side; images of other sizes are
//! edge-padded to a multiple of that side, purified tile by tile, and
//! cropped back. Eval-phase batch norm uses running statistics, so per-tile
//! results do not depend on how tiles are grouped into batches.

use crate::error::Result;
use crate::imageio::GrayImage;
use crate::model::Generator;
use crate::neural::tensor::Tensor;
use crate::neural::{Module, Phase};

const INFER_BATCH: usize = 16;

struct TileRef {
    image: usize,
    x0: usize,
    y0: usize,
}

fn padded_dim(n: usize, side: usize) -> usize {
    n.div_ceil(side) * side
}

/// Purify a set of grayscale images with the generator, tiling any image
/// whose dimensions differ from the model's input side.
pub fn purify_with_generator(
    gen: &mut Generator<f32>,
    imgs: &[GrayImage],
) -> Result<Vec<GrayImage>> {
    let side = gen.cfg().input_side;

    // Edge-padded pixel buffers per image.
    let padded: Vec<(usize, usize, Vec<u8>)> = imgs
        .iter()
        .map(|img| {
            let pw = padded_dim(img.width(), side);
            let ph = padded_dim(img.height(), side);
            let mut buf = vec![0u8; pw * ph];
            for y in 0..ph {
                let sy = y.min(img.height() - 1);
                for x in 0..pw {
                    let sx = x.min(img.width() - 1);
                    buf[y * pw + x] = img.get(sx, sy);
                }
            }
            (pw, ph, buf)
        })
        .collect();

    let mut tiles = Vec::new();
    for (i, (pw, ph, _)) in padded.iter().enumerate() {
        for y0 in (0..*ph).step_by(side) {
            for x0 in (0..*pw).step_by(side) {
                tiles.push(TileRef { image: i, x0, y0 });
            }
        }
    }

    let mut outputs: Vec<(usize, usize, Vec<u8>)> = padded
        .iter()
        .map(|(pw, ph, _)| (*pw, *ph, vec![0u8; pw * ph]))
        .collect();

    for chunk in tiles.chunks(INFER_BATCH) {
        let b = chunk.len();
        let mut batch = Tensor::zeros(&[b, 1, side, side]);
        for (t, tile) in chunk.iter().enumerate() {
            let (pw, _, src) = &padded[tile.image];
            let dst = &mut batch.data_mut()[t * side * side..(t + 1) * side * side];
            for y in 0..side {
                for x in 0..side {
                    dst[y * side + x] =
                        src[(tile.y0 + y) * pw + tile.x0 + x] as f32 / 255.0;
                }
            }
        }
        let out = gen.forward(&batch, Phase::Eval);
        for (t, tile) in chunk.iter().enumerate() {
            let (pw, _, dst) = &mut outputs[tile.image];
            let pw = *pw;
            let src = &out.data()[t * side * side..(t + 1) * side * side];
            for y in 0..side {
                for x in 0..side {
                    let v = f64::from(src[y * side + x]).clamp(-1.0, 1.0);
                    dst[(tile.y0 + y) * pw + tile.x0 + x] =
                        ((v + 1.0) / 2.0 * 255.0).round().clamp(0.0, 255.0) as u8;
                }
            }
        }
    }

    imgs.iter()
        .zip(outputs)
        .map(|(img, (pw, _, buf))| {
            let mut pixels = Vec::with_capacity(img.width() * img.height());
            for y in 0..img.height() {
                pixels.extend_from_slice(&buf[y * pw..y * pw + img.width()]);
            }
            GrayImage::new(img.width(), img.height(), pixels)
        })
        .collect()
}
