//! Packing 16-bit samples into 8-bit square tiles and back.
//!
//! Samples map linearly from `[-32768, 32767]` onto `[0, 255]`. The exact
//! factor 257 (65535 = 255 * 257) makes the inverse `p * 257 - 32768`, so a
//! pack/unpack round trip is idempotent and the per-sample error of the
//! first pass is bounded by half a quantization step (128 of 65536).

use crate::audio::AudioSignal;
use crate::error::{Error, Result};
use crate::imageio::GrayImage;

/// Inversion record for [`vector_to_tiles`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TilePadding {
    pub original_len: usize,
    pub side: usize,
}

fn sample_to_pixel(s: i16) -> u8 {
    (((s as i32 + 32768) as f64) / 257.0).round() as u8
}

fn pixel_to_sample(p: u8) -> i16 {
    (p as i32 * 257 - 32768) as i16
}

/// Pack a signal row-major into `side x side` tiles, edge-padding the last
/// tile with the final sample's value.
pub fn vector_to_tiles(sig: &AudioSignal, side: usize) -> Result<(Vec<GrayImage>, TilePadding)> {
    if side == 0 {
        return Err(Error::InvalidArgument("tile side must be >= 1".into()));
    }
    let tile_len = side * side;
    let n_tiles = sig.len().div_ceil(tile_len);
    let last = *sig.samples.last().expect("non-empty by construction");
    let mut tiles = Vec::with_capacity(n_tiles);
    for t in 0..n_tiles {
        let pixels = (0..tile_len)
            .map(|i| {
                let idx = t * tile_len + i;
                sample_to_pixel(if idx < sig.len() { sig.samples[idx] } else { last })
            })
            .collect();
        tiles.push(GrayImage::new(side, side, pixels)?);
    }
    Ok((
        tiles,
        TilePadding {
            original_len: sig.len(),
            side,
        },
    ))
}

/// Inverse of [`vector_to_tiles`]: unpack, rescale, truncate.
pub fn tiles_to_vector(
    tiles: &[GrayImage],
    padding: &TilePadding,
    sample_rate: u32,
) -> Result<AudioSignal> {
    let tile_len = padding.side * padding.side;
    let expected_tiles = padding.original_len.div_ceil(tile_len);
    if tiles.len() != expected_tiles {
        return Err(Error::Manifest(format!(
            "tile count {} does not match padding record (expected {expected_tiles})",
            tiles.len()
        )));
    }
    let mut samples = Vec::with_capacity(padding.original_len);
    'outer: for tile in tiles {
        if tile.width() != padding.side || tile.height() != padding.side {
            return Err(Error::DimensionMismatch(
                tile.width(),
                tile.height(),
                padding.side,
                padding.side,
            ));
        }
        for &p in tile.pixels() {
            if samples.len() == padding.original_len {
                break 'outer;
            }
            samples.push(pixel_to_sample(p));
        }
    }
    AudioSignal::new(samples, sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_zero_maps_to_mid_gray() {
        let sig = AudioSignal::new(vec![0; 64], 8000).unwrap();
        let (tiles, _) = vector_to_tiles(&sig, 8).unwrap();
        assert_eq!(tiles.len(), 1);
        assert!(tiles[0].pixels().iter().all(|&p| p == 128));
    }

    #[test]
    fn exact_length_needs_no_padding() {
        let sig = AudioSignal::new((0..256).map(|i| i as i16 * 100).collect(), 8000).unwrap();
        let (tiles, pad) = vector_to_tiles(&sig, 16).unwrap();
        assert_eq!(tiles.len(), 1);
        assert_eq!(pad.original_len, 256);
    }

    #[test]
    fn roundtrip_error_within_quantization_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sig = AudioSignal::new((0..1000).map(|_| rng.random::<i16>()).collect(), 44100).unwrap();
        let (tiles, pad) = vector_to_tiles(&sig, 16).unwrap();
        let back = tiles_to_vector(&tiles, &pad, sig.sample_rate).unwrap();
        assert_eq!(back.len(), sig.len());
        for (&a, &b) in sig.samples.iter().zip(&back.samples) {
            assert!((a as i32 - b as i32).abs() <= 129, "{a} vs {b}");
        }
    }

    #[test]
    fn pack_unpack_pack_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let sig = AudioSignal::new((0..600).map(|_| rng.random::<i16>()).collect(), 8000).unwrap();
        let (tiles, pad) = vector_to_tiles(&sig, 8).unwrap();
        let back = tiles_to_vector(&tiles, &pad, 8000).unwrap();
        let (tiles2, _) = vector_to_tiles(&back, 8).unwrap();
        assert_eq!(tiles, tiles2);
    }

    #[test]
    fn mismatched_record_is_rejected() {
        let sig = AudioSignal::new(vec![0; 100], 8000).unwrap();
        let (tiles, pad) = vector_to_tiles(&sig, 8).unwrap();
        let wrong = TilePadding {
            original_len: 1000,
            side: 8,
        };
        assert!(tiles_to_vector(&tiles, &wrong, 8000).is_err());
        let _ = pad;
    }
}
