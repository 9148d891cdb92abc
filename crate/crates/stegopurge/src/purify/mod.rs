//! Image purifiers: the two classical baselines (bicubic resampling and
//! db1 wavelet denoising with BayesShrink) plus batched/tiled inference for
//! the neural purifiers.

pub mod bicubic;
pub mod neural;
pub mod wavelet;

pub use bicubic::{bicubic_purify, bicubic_resize};
pub use neural::purify_with_generator;
pub use wavelet::{bayes_shrink_denoise, dwt2_db1, idwt2_db1, WaveletBands};

/// Default wavelet decomposition depth.
pub const DEFAULT_WAVELET_LEVELS: usize = 2;
