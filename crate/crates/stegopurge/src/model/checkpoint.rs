//! Generator checkpoint serialization.
//!
//! Layout (all integers little-endian):
//! magic `DDSP`, u32 version, u32 base_filters, u32 n_res_blocks,
//! u32 input_side, u32 epoch, f32 loss, length-prefixed trained-method
//! string, u32 record count, then per tensor: length-prefixed name,
//! u32 rank, u32 dims, raw f32 payload.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{ArchConfig, Generator};
use crate::neural::tensor::Tensor;
use crate::neural::Module;

const MAGIC: &[u8; 4] = b"DDSP";
const VERSION: u32 = 1;

/// Training provenance stored alongside the weights.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CheckpointMeta {
    pub epoch: u32,
    pub loss: f32,
    /// Embedding method the model was trained on; used to warn when a
    /// transfer evaluation accidentally targets the training method.
    pub trained_method: String,
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a str,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::CheckpointTruncated {
                path: self.path.to_string(),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| Error::MalformedHeader {
            path: self.path.to_string(),
            reason: "non-utf8 string in checkpoint".into(),
        })
    }
}

/// Serialize the generator's full state (weights and running statistics).
pub fn save_generator(
    gen: &Generator<f32>,
    meta: &CheckpointMeta,
    path: impl AsRef<Path>,
) -> Result<()> {
    let mut records: Vec<(String, Vec<usize>, Vec<f32>)> = Vec::new();
    gen.visit_state("generator", &mut |name, tensor: &Tensor<f32>| {
        records.push((name, tensor.shape().to_vec(), tensor.data().to_vec()));
    });

    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let cfg = gen.cfg();
    for v in [
        cfg.base_filters as u32,
        cfg.n_res_blocks as u32,
        cfg.input_side as u32,
        meta.epoch,
    ] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&meta.loss.to_le_bytes())?;
    w.write_all(&(meta.trained_method.len() as u32).to_le_bytes())?;
    w.write_all(meta.trained_method.as_bytes())?;
    w.write_all(&(records.len() as u32).to_le_bytes())?;
    for (name, shape, data) in &records {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(shape.len() as u32).to_le_bytes())?;
        for &d in shape {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for v in data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_checkpoint(
    path: &Path,
) -> Result<(ArchConfig, CheckpointMeta, HashMap<String, (Vec<usize>, Vec<f32>)>)> {
    let mut buf = Vec::new();
    File::open(path)?.read_to_end(&mut buf)?;
    let path_str = path.display().to_string();
    let mut c = Cursor {
        buf: &buf,
        pos: 0,
        path: &path_str,
    };

    let magic_ok = c.take(4).map(|m| m == MAGIC).unwrap_or(false);
    if !magic_ok {
        return Err(Error::CheckpointVersion { path: path_str });
    }
    if c.u32()? != VERSION {
        return Err(Error::CheckpointVersion { path: path_str });
    }
    let cfg = ArchConfig {
        base_filters: c.u32()? as usize,
        n_res_blocks: c.u32()? as usize,
        input_side: c.u32()? as usize,
    };
    let meta = CheckpointMeta {
        epoch: c.u32()?,
        loss: c.f32()?,
        trained_method: c.string()?,
    };
    let n_records = c.u32()? as usize;
    let mut records = HashMap::with_capacity(n_records);
    for _ in 0..n_records {
        let name = c.string()?;
        let rank = c.u32()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(c.u32()? as usize);
        }
        let numel: usize = shape.iter().product();
        let raw = c.take(4 * numel)?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        records.insert(name, (shape, data));
    }
    Ok((cfg, meta, records))
}

fn load_records_into(
    gen: &mut Generator<f32>,
    mut records: HashMap<String, (Vec<usize>, Vec<f32>)>,
    path_str: &str,
) -> Result<()> {
    let mut first_err: Option<Error> = None;
    gen.visit_state_mut("generator", &mut |name, tensor| {
        if first_err.is_some() {
            return;
        }
        match records.remove(&name) {
            None => {
                first_err = Some(Error::CheckpointMissingTensor {
                    path: path_str.to_string(),
                    name,
                });
            }
            Some((shape, data)) => {
                if shape != tensor.shape() {
                    first_err = Some(Error::CheckpointShape {
                        path: path_str.to_string(),
                        name,
                        expected: tensor.shape().to_vec(),
                        found: shape,
                    });
                } else {
                    tensor.data_mut().copy_from_slice(&data);
                }
            }
        }
    });
    if let Some(e) = first_err {
        return Err(e);
    }
    if let Some(name) = records.into_keys().next() {
        return Err(Error::CheckpointUnknownTensor {
            path: path_str.to_string(),
            name,
        });
    }
    Ok(())
}

/// Load a generator, taking the architecture from the file.
pub fn load_generator(path: impl AsRef<Path>) -> Result<(Generator<f32>, CheckpointMeta)> {
    let path = path.as_ref();
    let (cfg, meta, records) = read_checkpoint(path)?;
    let mut gen = Generator::new(cfg, 0)?;
    load_records_into(&mut gen, records, &path.display().to_string())?;
    Ok((gen, meta))
}

/// Load a generator into an expected architecture; a checkpoint saved under
/// a different configuration fails with a shape-mismatch error naming the
/// first offending tensor.
pub fn load_generator_expecting(
    path: impl AsRef<Path>,
    expected: ArchConfig,
) -> Result<(Generator<f32>, CheckpointMeta)> {
    let path = path.as_ref();
    let (_file_cfg, meta, records) = read_checkpoint(path)?;
    let mut gen = Generator::new(expected, 0)?;
    load_records_into(&mut gen, records, &path.display().to_string())?;
    Ok((gen, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::tensor::Tensor;
    use crate::neural::Phase;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("stegopurge-ckpt-tests");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    fn small_cfg() -> ArchConfig {
        ArchConfig {
            base_filters: 8,
            n_res_blocks: 1,
            input_side: 16,
        }
    }

    #[test]
    fn roundtrip_preserves_forward_outputs_exactly() {
        let mut gen = Generator::<f32>::new(small_cfg(), 42).unwrap();
        let x = Tensor::full(&[1, 1, 16, 16], 0.4f32);
        // run one train-mode pass so running stats are non-trivial
        let _ = gen.forward(&x, Phase::Train);
        let want = gen.forward(&x, Phase::Eval);

        let p = tmp("roundtrip.ckpt");
        let meta = CheckpointMeta {
            epoch: 3,
            loss: 0.125,
            trained_method: "adaptive".into(),
        };
        save_generator(&gen, &meta, &p).unwrap();
        let (mut loaded, got_meta) = load_generator(&p).unwrap();
        assert_eq!(got_meta, meta);
        assert_eq!(loaded.cfg(), gen.cfg());
        let got = loaded.forward(&x, Phase::Eval);
        assert_eq!(got.data(), want.data());
    }

    #[test]
    fn save_is_byte_deterministic() {
        let gen = Generator::<f32>::new(small_cfg(), 1).unwrap();
        let meta = CheckpointMeta::default();
        let p1 = tmp("det1.ckpt");
        let p2 = tmp("det2.ckpt");
        save_generator(&gen, &meta, &p1).unwrap();
        save_generator(&gen, &meta, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn corrupted_magic_is_a_version_error() {
        let gen = Generator::<f32>::new(small_cfg(), 2).unwrap();
        let p = tmp("magic.ckpt");
        save_generator(&gen, &CheckpointMeta::default(), &p).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        bytes[0] = b'X';
        std::fs::write(&p, &bytes).unwrap();
        assert!(matches!(
            load_generator(&p),
            Err(Error::CheckpointVersion { .. })
        ));
    }

    #[test]
    fn truncated_file_is_detected() {
        let gen = Generator::<f32>::new(small_cfg(), 2).unwrap();
        let p = tmp("trunc.ckpt");
        save_generator(&gen, &CheckpointMeta::default(), &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(
            load_generator(&p),
            Err(Error::CheckpointTruncated { .. })
        ));
    }

    #[test]
    fn wrong_architecture_names_the_tensor() {
        let gen = Generator::<f32>::new(small_cfg(), 3).unwrap();
        let p = tmp("arch.ckpt");
        save_generator(&gen, &CheckpointMeta::default(), &p).unwrap();
        let bigger = ArchConfig {
            base_filters: 16,
            n_res_blocks: 1,
            input_side: 16,
        };
        match load_generator_expecting(&p, bigger) {
            Err(Error::CheckpointShape { name, .. }) => {
                assert!(name.starts_with("generator."), "name {name}");
            }
            Err(other) => panic!("expected CheckpointShape, got {other:?}"),
            Ok(_) => panic!("expected CheckpointShape, got Ok"),
        }
    }
}
