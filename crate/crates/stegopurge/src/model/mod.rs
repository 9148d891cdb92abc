//! DDSP model assembly: the purifier generator (encoder + decoder), the
//! discriminator, and checkpoint serialization.

pub mod checkpoint;
pub mod discriminator;
pub mod generator;

pub use checkpoint::{
    load_generator, load_generator_expecting, save_generator, CheckpointMeta,
};
pub use discriminator::Discriminator;
pub use generator::{Decoder, DownsampleBlock, Encoder, Generator, ResidualBlock};

use crate::error::{Error, Result};

/// Network size configuration.
///
/// The full-scale configuration is 64 base filters, 16 residual blocks, and
/// 256-pixel inputs; the desk-scale default (32/4/32) trains in minutes on a
/// CPU while exercising every layer type.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArchConfig {
    pub base_filters: usize,
    pub n_res_blocks: usize,
    pub input_side: usize,
}

impl ArchConfig {
    /// Full-scale configuration.
    pub const FULL: ArchConfig = ArchConfig {
        base_filters: 64,
        n_res_blocks: 16,
        input_side: 256,
    };

    /// Desk-scale configuration.
    pub const DESK: ArchConfig = ArchConfig {
        base_filters: 32,
        n_res_blocks: 4,
        input_side: 32,
    };

    pub fn validate(&self) -> Result<()> {
        if self.base_filters == 0 {
            return Err(Error::InvalidArgument("base_filters must be >= 1".into()));
        }
        if self.n_res_blocks == 0 {
            return Err(Error::InvalidArgument("n_res_blocks must be >= 1".into()));
        }
        if self.input_side == 0 || self.input_side % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "input_side {} must be positive and even",
                self.input_side
            )));
        }
        Ok(())
    }
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig::DESK
    }
}
