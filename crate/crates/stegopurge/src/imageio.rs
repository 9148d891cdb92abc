//! Core image value type, lossless file I/O, and pixel-range mappings.
//!
//! Every float-to-pixel conversion in this crate rounds half away from zero
//! (`f64::round` semantics) and clamps to `[0, 255]`; bit-level metrics are
//! sensitive to the rounding convention, so it is fixed here once.
//!
//! Two normalization contracts live here: network inputs are scaled to
//! `[0, 1]`, while the tanh-activated decoder output lands in `[-1, 1]` and
//! maps back through [`denormalize_tanh`].

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// 8-bit single-channel image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!(
                "zero dimension: {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "pixel count {} does not match {width}x{height}",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn constant(width: usize, height: usize, value: u8) -> Self {
        Self::new(width, height, vec![value; width * height]).expect("nonzero dims")
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels).expect("nonzero dims")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn same_dims(&self, other: &GrayImage) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch(
                self.width,
                self.height,
                other.width,
                other.height,
            ));
        }
        Ok(())
    }

    /// Population variance of the pixel intensities.
    pub fn variance(&self) -> f64 {
        let n = self.pixels.len() as f64;
        let mean = self.pixels.iter().map(|&p| p as f64).sum::<f64>() / n;
        self.pixels
            .iter()
            .map(|&p| {
                let d = p as f64 - mean;
                d * d
            })
            .sum::<f64>()
            / n
    }
}

/// Real-valued image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedImage {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f32>,
}

/// Min-max normalization of an 8-bit image onto `[0, 1]`.
pub fn normalize(img: &GrayImage) -> NormalizedImage {
    NormalizedImage {
        width: img.width(),
        height: img.height(),
        values: img.pixels().iter().map(|&p| p as f32 / 255.0).collect(),
    }
}

/// Inverse of [`normalize`]: `round(v * 255)`, clamped.
pub fn denormalize_01(values: &[f32], width: usize, height: usize) -> Result<GrayImage> {
    let pixels = values
        .iter()
        .map(|&v| (f64::from(v) * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    GrayImage::new(width, height, pixels)
}

/// Map tanh-range values in `[-1, 1]` to pixels: `round((v + 1) / 2 * 255)`.
///
/// Out-of-range inputs are clamped to `[-1, 1]` first.
pub fn denormalize_tanh(values: &[f32], width: usize, height: usize) -> Result<GrayImage> {
    let pixels = values
        .iter()
        .map(|&v| {
            let v = f64::from(v).clamp(-1.0, 1.0);
            ((v + 1.0) / 2.0 * 255.0).round().clamp(0.0, 255.0) as u8
        })
        .collect();
    GrayImage::new(width, height, pixels)
}

// --- PGM (binary P5) ---

struct HeaderReader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a str,
}

impl<'a> HeaderReader<'a> {
    /// Skip whitespace and `#` comments (comments run to end of line).
    fn skip_separators(&mut self) {
        while self.pos < self.buf.len() {
            let b = self.buf[self.pos];
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while self.pos < self.buf.len() && self.buf[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    fn read_number(&mut self, what: &str) -> Result<u64> {
        self.skip_separators();
        let start = self.pos;
        while self.pos < self.buf.len() && self.buf[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(Error::MalformedHeader {
                path: self.path.to_string(),
                reason: format!("expected {what}"),
            });
        }
        let text = std::str::from_utf8(&self.buf[start..self.pos]).expect("ascii digits");
        text.parse().map_err(|_| Error::MalformedHeader {
            path: self.path.to_string(),
            reason: format!("{what} out of range"),
        })
    }
}

/// Read a binary PGM (magic `P5`, maxval 255). Pixel bytes are taken as-is.
pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    File::open(path)?.read_to_end(&mut buf)?;
    let path_str = path.display().to_string();

    if buf.len() < 2 || &buf[..2] != b"P5" {
        return Err(Error::MalformedHeader {
            path: path_str,
            reason: "missing P5 magic".into(),
        });
    }
    let mut rd = HeaderReader {
        buf: &buf,
        pos: 2,
        path: &path_str,
    };
    let width = rd.read_number("width")? as usize;
    let height = rd.read_number("height")? as usize;
    let maxval = rd.read_number("maxval")?;
    if maxval != 255 {
        return Err(Error::UnsupportedMaxval {
            path: path_str,
            maxval,
        });
    }
    if width == 0 || height == 0 {
        return Err(Error::MalformedHeader {
            path: path_str,
            reason: format!("zero dimension: {width}x{height}"),
        });
    }
    // Exactly one whitespace byte separates the header from the raster.
    let data_start = rd.pos + 1;
    if rd.pos >= buf.len() || !buf[rd.pos].is_ascii_whitespace() {
        return Err(Error::MalformedHeader {
            path: path_str,
            reason: "missing whitespace after maxval".into(),
        });
    }
    let expected = width * height;
    let got = buf.len() - data_start;
    if got < expected {
        return Err(Error::TruncatedData {
            path: path_str,
            expected,
            got,
        });
    }
    GrayImage::new(width, height, buf[data_start..data_start + expected].to_vec())
}

/// Write a binary PGM with maxval 255. Re-reading yields bit-exact pixels.
pub fn write_pgm(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "P5\n{} {}\n255\n", img.width(), img.height())?;
    w.write_all(img.pixels())?;
    w.flush()?;
    Ok(())
}

// --- Container dispatch (PGM canonical, PNG as a second lossless format) ---

/// Read a grayscale image, picking the container from the file extension.
pub fn read_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    match extension(path).as_deref() {
        Some("pgm") | Some("pnm") => read_pgm(path),
        Some("png") => {
            let img = image::open(path)
                .map_err(|e| Error::MalformedHeader {
                    path: path.display().to_string(),
                    reason: e.to_string(),
                })?
                .into_luma8();
            GrayImage::new(
                img.width() as usize,
                img.height() as usize,
                img.into_raw(),
            )
        }
        _ => Err(Error::UnsupportedFormat(path.to_path_buf())),
    }
}

/// Write a grayscale image, picking the container from the file extension.
pub fn write_image(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    match extension(path).as_deref() {
        Some("pgm") | Some("pnm") => write_pgm(img, path),
        Some("png") => {
            let buf = image::GrayImage::from_raw(
                img.width() as u32,
                img.height() as u32,
                img.pixels().to_vec(),
            )
            .expect("buffer sized to dims");
            buf.save(path).map_err(|e| Error::InvalidImage(e.to_string()))
        }
        _ => Err(Error::UnsupportedFormat(path.to_path_buf())),
    }
}

fn extension(path: &Path) -> Option<String> {
    path.extension().map(|e| e.to_string_lossy().to_lowercase())
}
