//! Minimal RIFF/WAV I/O: 16-bit mono PCM only.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::audio::AudioSignal;
use crate::error::{Error, Result};

fn wav_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::MalformedWav {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

pub fn write_wav(sig: &AudioSignal, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let data_len = (sig.len() * 2) as u32;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(b"RIFF")?;
    w.write_all(&(36 + data_len).to_le_bytes())?;
    w.write_all(b"WAVE")?;
    w.write_all(b"fmt ")?;
    w.write_all(&16u32.to_le_bytes())?;
    w.write_all(&1u16.to_le_bytes())?; // PCM
    w.write_all(&1u16.to_le_bytes())?; // mono
    w.write_all(&sig.sample_rate.to_le_bytes())?;
    w.write_all(&(sig.sample_rate * 2).to_le_bytes())?;
    w.write_all(&2u16.to_le_bytes())?; // block align
    w.write_all(&16u16.to_le_bytes())?; // bits per sample
    w.write_all(b"data")?;
    w.write_all(&data_len.to_le_bytes())?;
    for &s in &sig.samples {
        w.write_all(&s.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioSignal> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    File::open(path)?.read_to_end(&mut buf)?;
    if buf.len() < 12 || &buf[..4] != b"RIFF" || &buf[8..12] != b"WAVE" {
        return Err(wav_err(path, "missing RIFF/WAVE header"));
    }

    let mut pos = 12;
    let mut sample_rate: Option<u32> = None;
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= buf.len() {
        let id = &buf[pos..pos + 4];
        let size = u32::from_le_bytes(buf[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body_start = pos + 8;
        if body_start + size > buf.len() {
            return Err(wav_err(path, "chunk overruns file"));
        }
        let body = &buf[body_start..body_start + size];
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(wav_err(path, "fmt chunk too short"));
                }
                let format = u16::from_le_bytes(body[0..2].try_into().unwrap());
                let channels = u16::from_le_bytes(body[2..4].try_into().unwrap());
                let rate = u32::from_le_bytes(body[4..8].try_into().unwrap());
                let bits = u16::from_le_bytes(body[14..16].try_into().unwrap());
                if format != 1 {
                    return Err(wav_err(path, format!("unsupported format {format} (PCM only)")));
                }
                if channels != 1 {
                    return Err(wav_err(path, format!("unsupported channel count {channels}")));
                }
                if bits != 16 {
                    return Err(wav_err(path, format!("unsupported bit depth {bits}")));
                }
                sample_rate = Some(rate);
            }
            b"data" => data = Some(body),
            _ => {}
        }
        // chunks are word-aligned
        pos = body_start + size + (size % 2);
    }

    let sample_rate = sample_rate.ok_or_else(|| wav_err(path, "missing fmt chunk"))?;
    let data = data.ok_or_else(|| wav_err(path, "missing data chunk"))?;
    if data.len() % 2 != 0 {
        return Err(wav_err(path, "odd data chunk size"));
    }
    let samples = data
        .chunks_exact(2)
        .map(|b| i16::from_le_bytes(b.try_into().unwrap()))
        .collect();
    AudioSignal::new(samples, sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("stegopurge-wav-tests");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn roundtrip_preserves_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sig = AudioSignal::new((0..500).map(|_| rng.random()).collect(), 22050).unwrap();
        let p = tmp("rt.wav");
        write_wav(&sig, &p).unwrap();
        assert_eq!(read_wav(&p).unwrap(), sig);
    }

    #[test]
    fn rejects_garbage_and_stereo() {
        let p = tmp("bad.wav");
        std::fs::write(&p, b"not a wav file").unwrap();
        assert!(matches!(read_wav(&p), Err(Error::MalformedWav { .. })));

        // valid header but 2 channels
        let sig = AudioSignal::new(vec![0, 1, 2, 3], 8000).unwrap();
        let p = tmp("stereo.wav");
        write_wav(&sig, &p).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        bytes[22] = 2; // channel count
        std::fs::write(&p, &bytes).unwrap();
        assert!(matches!(read_wav(&p), Err(Error::MalformedWav { .. })));
    }
}
