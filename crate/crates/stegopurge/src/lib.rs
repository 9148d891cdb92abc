//! Steganography destruction toolkit.
//!
//! The crate embeds payloads into grayscale images (LSB and a rate-matched
//! adaptive ±1 embedder), purifies suspect images with classical filters
//! (bicubic resampling, db1 wavelet denoising with BayesShrink) or a
//! GAN-fine-tuned convolutional autoencoder, and quantifies payload
//! destruction against perceptual quality with BER/MSE/PSNR/SSIM/UQI.
//! A transfer pipeline applies the same purifiers to 16-bit PCM audio by
//! tiling signals into model-sized matrices.
//!
//! Batch operations fan out over rayon when the `parallel` feature
//! (default) is enabled and fall back to sequential iteration otherwise;
//! results are identical either way.

pub mod audio;
pub mod dataset;
pub mod error;
pub mod harness;
pub mod imageio;
pub mod metrics;
pub mod model;
pub mod neural;
pub mod par;
pub mod purify;
pub mod stego;
pub mod training;

pub use error::{Error, Result};
pub use imageio::{GrayImage, NormalizedImage};
