//! Scratch probe for acceptance-critical empirical properties.

use stegopurge::audio::{purify_audio, vector_to_tiles, tiles_to_vector, AudioFilterParams, AudioSignal};
use stegopurge::dataset::synth_covers;
use stegopurge::imageio::GrayImage;
use stegopurge::metrics;
use stegopurge::par;
use stegopurge::purify::{bayes_shrink_denoise, bicubic_purify};
use stegopurge::stego::{adaptive_embed, lsb_embed, lsb_extract_raw, payload_ber, random_payload, EmbedRate};

fn main() {
    // 1. destruction BER for classical purifiers, 128x128 covers, 1250-byte payloads
    let covers = synth_covers(8, 128, 99);
    let payload_bytes = 1250;
    for (name, purify) in [
        ("bicubic", Box::new(|i: &GrayImage| bicubic_purify(i).unwrap()) as Box<dyn Fn(&GrayImage) -> GrayImage + Sync>),
        ("wavelet", Box::new(|i: &GrayImage| bayes_shrink_denoise(i, 2).unwrap())),
    ] {
        let bers: Vec<f64> = par::batch_map(&covers, |cover| {
            let payload = random_payload(payload_bytes, 7);
            let stego = lsb_embed(cover, &payload).unwrap();
            let purified = purify(&stego);
            let recovered = lsb_extract_raw(&purified, payload_bytes).unwrap();
            (payload_ber(&payload, &recovered).unwrap() * 1000.0).round() / 1000.0
        });
        println!("{name} destruction bers: {bers:?}");
    }

    // 2. adaptive changed fraction across the five rates on 64x64 and 128x128
    for side in [64usize, 128] {
        let covers = synth_covers(4, side, 55);
        for &rate in &EmbedRate::DATASET_RATES {
            let fracs: Vec<f64> = covers
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    let s = adaptive_embed(c, EmbedRate::new(rate).unwrap(), 900 + i as u64);
                    let ch = c.pixels().iter().zip(s.pixels()).filter(|(a, b)| a != b).count();
                    let f = ch as f64 / c.pixels().len() as f64;
                    ((f / (rate / 2.0)) * 1000.0).round() / 1000.0
                })
                .collect();
            println!("side {side} rate {rate}: relative fractions {fracs:?}");
        }
    }

    // 3. audio: destruction + per-method BER ordering, tile domain
    let sr = 16000u32;
    let n = 64 * 1024;
    let mut samples = vec![0f64; n];
    let mut rng_state = 0x12345u64;
    let mut next = || {
        rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (rng_state >> 11) as f64 / (1u64 << 53) as f64
    };
    // moderate tones + strong white noise
    for k in 0..4 {
        let f = 120.0 + 160.0 * k as f64 + 40.0 * next();
        let a = 800.0 + 1200.0 * next();
        let ph = std::f64::consts::TAU * next();
        for (i, s) in samples.iter_mut().enumerate() {
            *s += a * (std::f64::consts::TAU * f * i as f64 / sr as f64 + ph).sin();
        }
    }
    for s in samples.iter_mut() {
        let g: f64 = (0..4).map(|_| next() - 0.5).sum::<f64>() * 6000.0 * 1.73;
        *s += g;
    }
    let sig = AudioSignal::new(samples.iter().map(|&v| v.clamp(-32768.0, 32767.0) as i16).collect(), sr).unwrap();

    // embed LSB in tile domain
    let side = 32usize;
    let (tiles, pad) = vector_to_tiles(&sig, side).unwrap();
    let flat: Vec<u8> = tiles.iter().flat_map(|t| t.pixels().to_vec()).collect();
    let big = GrayImage::new(side * side, tiles.len(), {
        // concatenated view: embed across all tiles as one carrier
        flat
    }).unwrap();
    let payload = random_payload(2000, 77);
    let stego_big = lsb_embed(&big, &payload).unwrap();
    let stego_tiles: Vec<GrayImage> = stego_big
        .pixels()
        .chunks(side * side)
        .map(|c| GrayImage::new(side, side, c.to_vec()).unwrap())
        .collect();
    let stego_audio = tiles_to_vector(&stego_tiles, &pad, sr).unwrap();

    for (name, purify) in [
        ("bicubic", Box::new(|i: &GrayImage| bicubic_purify(i).unwrap()) as Box<dyn Fn(&GrayImage) -> GrayImage + Sync>),
        ("wavelet", Box::new(|i: &GrayImage| bayes_shrink_denoise(i, 2).unwrap())),
    ] {
        let purified_audio = purify_audio(
            &stego_audio,
            side,
            |tiles| Ok(par::batch_map(tiles, |t| purify(t))),
            &AudioFilterParams::default(),
        )
        .unwrap();
        // re-tile and measure: payload destruction + tile-domain image BER vs stego tiles
        let (pt, _) = vector_to_tiles(&purified_audio, side).unwrap();
        let flat: Vec<u8> = pt.iter().flat_map(|t| t.pixels().to_vec()).collect();
        let pbig = GrayImage::new(side * side, pt.len(), flat).unwrap();
        let rec = lsb_extract_raw(&pbig, 2000).unwrap();
        let pber = payload_ber(&payload, &rec).unwrap();
        let tile_ber: f64 = pt
            .iter()
            .zip(&stego_tiles)
            .map(|(a, b)| metrics::ber(a, b).unwrap())
            .sum::<f64>()
            / pt.len() as f64;
        println!("audio {name}: payload ber {pber:.3}, tile-domain ber {tile_ber:.3}");
    }
}
