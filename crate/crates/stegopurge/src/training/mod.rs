//! Two-phase training: MSE pretraining of the autoencoder, then GAN
//! fine-tuning with the pretrained generator.
//!
//! Both phases share the Adam recipe (alpha 1e-3, beta1 0.5, beta2 0.9),
//! seeded shuffling, and the pixel-domain validation MSE. A non-finite loss
//! aborts the run with the offending epoch and batch index.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::imageio::GrayImage;
use crate::metrics::psnr_from_mse;
use crate::model::{Discriminator, Generator};
use crate::neural::tensor::Tensor;
use crate::neural::{bce_loss, mse_loss, zero_grads, Adam, AdamConfig, Module, Phase};

/// Training hyperparameters.
#[derive(Debug, Clone, Copy)]
pub struct TrainConfig {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    /// Weight of the adversarial term in the generator loss.
    pub lambda_adv: f64,
    pub gan_epochs: usize,
    /// Early-stopping patience in epochs without validation improvement.
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha: 1e-3,
            beta1: 0.5,
            beta2: 0.9,
            eps: 1e-8,
            batch_size: 8,
            lambda_adv: 1e-3,
            gan_epochs: 5,
            patience: 10,
            max_epochs: 100,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            alpha: self.alpha,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha <= 0.0 || self.beta1 <= 0.0 || self.beta2 <= 0.0 || self.eps <= 0.0 {
            return Err(Error::InvalidArgument("training rates must be positive".into()));
        }
        if self.batch_size == 0 || self.gan_epochs == 0 || self.max_epochs == 0 {
            return Err(Error::InvalidArgument(
                "batch_size, gan_epochs, and max_epochs must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// One stego image paired with its cover.
#[derive(Debug, Clone)]
pub struct TrainPair {
    pub stego: GrayImage,
    pub cover: GrayImage,
}

/// Train/validation split of paired images.
#[derive(Debug, Clone, Default)]
pub struct PairedDataset {
    pub train: Vec<TrainPair>,
    pub val: Vec<TrainPair>,
}

/// Per-epoch log record.
#[derive(Debug, Clone, Copy)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_mse: f64,
    pub d_loss: f64,
    pub g_adv: f64,
    pub wall_secs: f64,
}

/// Training history. `initial_val_mse` is the validation MSE of the model
/// before the first update.
#[derive(Debug, Clone, Default)]
pub struct TrainLog {
    pub initial_val_mse: f64,
    pub records: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn final_val_mse(&self) -> f64 {
        self.records.last().map_or(self.initial_val_mse, |r| r.val_mse)
    }

    pub fn best_val_mse(&self) -> f64 {
        self.records
            .iter()
            .map(|r| r.val_mse)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_mse,d_loss,g_adv,wall_secs\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{:.6},{:.6},{:.6},{:.6},{:.3}\n",
                r.epoch, r.train_loss, r.val_mse, r.d_loss, r.g_adv, r.wall_secs
            ));
        }
        out
    }
}

fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(
        seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17),
    )
}

/// Stego batch normalized to `[0, 1]` and cover batch mapped to `[-1, 1]`.
fn batch_tensors(pairs: &[&TrainPair], side: usize) -> (Tensor<f32>, Tensor<f32>) {
    let b = pairs.len();
    let mut stego = Tensor::zeros(&[b, 1, side, side]);
    let mut cover = Tensor::zeros(&[b, 1, side, side]);
    for (i, pair) in pairs.iter().enumerate() {
        let s = &mut stego.data_mut()[i * side * side..(i + 1) * side * side];
        for (d, &p) in s.iter_mut().zip(pair.stego.pixels()) {
            *d = p as f32 / 255.0;
        }
        let c = &mut cover.data_mut()[i * side * side..(i + 1) * side * side];
        for (d, &p) in c.iter_mut().zip(pair.cover.pixels()) {
            *d = p as f32 / 255.0 * 2.0 - 1.0;
        }
    }
    (stego, cover)
}

/// Cover batch in `[0, 1]` (discriminator input convention).
fn cover_unit_tensor(pairs: &[&TrainPair], side: usize) -> Tensor<f32> {
    let b = pairs.len();
    let mut cover = Tensor::zeros(&[b, 1, side, side]);
    for (i, pair) in pairs.iter().enumerate() {
        let c = &mut cover.data_mut()[i * side * side..(i + 1) * side * side];
        for (d, &p) in c.iter_mut().zip(pair.cover.pixels()) {
            *d = p as f32 / 255.0;
        }
    }
    cover
}

/// Validation MSE in pixel units (peak 255), computed without rounding so
/// early stopping sees a smooth signal.
pub fn validation_mse(gen: &mut Generator<f32>, pairs: &[TrainPair], batch_size: usize) -> f64 {
    let side = gen.cfg().input_side;
    let mut total = 0.0;
    let mut count = 0usize;
    for chunk in pairs.chunks(batch_size) {
        let refs: Vec<&TrainPair> = chunk.iter().collect();
        let (stego, _) = batch_tensors(&refs, side);
        let out = gen.forward(&stego, Phase::Eval);
        for (i, pair) in chunk.iter().enumerate() {
            let o = &out.data()[i * side * side..(i + 1) * side * side];
            let mut acc = 0.0;
            for (&t, &c) in o.iter().zip(pair.cover.pixels()) {
                let px = (f64::from(t).clamp(-1.0, 1.0) + 1.0) / 2.0 * 255.0;
                let d = px - c as f64;
                acc += d * d;
            }
            total += acc / (side * side) as f64;
            count += 1;
        }
    }
    total / count as f64
}

fn snapshot(gen: &Generator<f32>) -> Vec<Vec<f32>> {
    let mut out = Vec::new();
    gen.visit_state("g", &mut |_, t| out.push(t.data().to_vec()));
    out
}

fn restore(gen: &mut Generator<f32>, snap: &[Vec<f32>]) {
    let mut i = 0;
    gen.visit_state_mut("g", &mut |_, t| {
        t.data_mut().copy_from_slice(&snap[i]);
        i += 1;
    });
}

fn ensure_dataset(data: &PairedDataset) -> Result<()> {
    if data.train.is_empty() {
        return Err(Error::EmptyInput("empty training set"));
    }
    if data.val.is_empty() {
        return Err(Error::EmptyInput("empty validation set"));
    }
    Ok(())
}

/// Phase 1: minimize MSE(generator(stego), cover) with early stopping on
/// validation MSE; the generator ends at the best-validation weights.
pub fn pretrain_autoencoder(
    gen: &mut Generator<f32>,
    data: &PairedDataset,
    cfg: &TrainConfig,
) -> Result<TrainLog> {
    cfg.validate()?;
    ensure_dataset(data)?;
    let side = gen.cfg().input_side;
    let mut adam = Adam::new(cfg.adam());
    let mut log = TrainLog {
        initial_val_mse: validation_mse(gen, &data.val, cfg.batch_size),
        records: Vec::new(),
    };

    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0usize;
    let mut best_weights: Option<Vec<Vec<f32>>> = None;

    for epoch in 1..=cfg.max_epochs {
        let start = Instant::now();
        let mut order: Vec<usize> = (0..data.train.len()).collect();
        order.shuffle(&mut epoch_rng(cfg.seed, epoch));

        let mut epoch_loss = 0.0;
        let mut n_batches = 0usize;
        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let refs: Vec<&TrainPair> = chunk.iter().map(|&i| &data.train[i]).collect();
            let (stego, cover) = batch_tensors(&refs, side);
            zero_grads(gen);
            let out = gen.forward(&stego, Phase::Train);
            let (loss, grad) = mse_loss(&out, &cover)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite {
                    what: "pretrain loss",
                    epoch,
                    batch: batch_idx,
                });
            }
            gen.backward(&grad);
            adam.step(gen);
            epoch_loss += loss;
            n_batches += 1;
        }

        let val_mse = validation_mse(gen, &data.val, cfg.batch_size);
        if !val_mse.is_finite() {
            return Err(Error::NonFinite {
                what: "validation mse",
                epoch,
                batch: 0,
            });
        }
        log.records.push(EpochRecord {
            epoch,
            train_loss: epoch_loss / n_batches as f64,
            val_mse,
            d_loss: 0.0,
            g_adv: 0.0,
            wall_secs: start.elapsed().as_secs_f64(),
        });

        if val_mse < best_val {
            best_val = val_mse;
            best_epoch = epoch;
            best_weights = Some(snapshot(gen));
        }
        if epoch - best_epoch >= cfg.patience {
            break;
        }
    }

    if let Some(w) = best_weights {
        restore(gen, &w);
    }
    Ok(log)
}

/// Phase 2: alternating GAN fine-tuning. The discriminator learns to
/// separate covers from purified images; the generator minimizes
/// `mse + lambda_adv * bce(D(G(stego)), 1)`.
///
/// The generator must come from a pretrained checkpoint; training a GAN from
/// a random generator is outside this recipe's contract.
pub fn train_gan(
    gen: &mut Generator<f32>,
    disc: &mut Discriminator<f32>,
    data: &PairedDataset,
    cfg: &TrainConfig,
) -> Result<TrainLog> {
    cfg.validate()?;
    ensure_dataset(data)?;
    let side = gen.cfg().input_side;
    let mut adam_g = Adam::new(cfg.adam());
    let mut adam_d = Adam::new(cfg.adam());
    let lambda = cfg.lambda_adv as f32;

    let mut log = TrainLog {
        initial_val_mse: validation_mse(gen, &data.val, cfg.batch_size),
        records: Vec::new(),
    };

    for epoch in 1..=cfg.gan_epochs {
        let start = Instant::now();
        let mut order: Vec<usize> = (0..data.train.len()).collect();
        order.shuffle(&mut epoch_rng(cfg.seed, epoch));

        let mut sum_mse = 0.0;
        let mut sum_d = 0.0;
        let mut sum_adv = 0.0;
        let mut n_batches = 0usize;
        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let refs: Vec<&TrainPair> = chunk.iter().map(|&i| &data.train[i]).collect();
            let (stego, cover_tanh) = batch_tensors(&refs, side);
            let cover_unit = cover_unit_tensor(&refs, side);

            // One generator forward serves both the discriminator's fake
            // batch and the generator update below.
            zero_grads(gen);
            let out_tanh = gen.forward(&stego, Phase::Train);
            let purified_unit = Tensor::from_vec(
                out_tanh.shape(),
                out_tanh.data().iter().map(|&t| (t + 1.0) / 2.0).collect(),
            )
            .expect("same shape");

            // Discriminator step: real covers toward 1, purified toward 0.
            zero_grads(disc);
            let d_real = disc.forward(&cover_unit, Phase::Train);
            let (loss_real, g_real) = bce_loss(&d_real, 1.0);
            disc.backward(&g_real);
            let d_fake = disc.forward(&purified_unit, Phase::Train);
            let (loss_fake, g_fake) = bce_loss(&d_fake, 0.0);
            disc.backward(&g_fake);
            let d_loss = loss_real + loss_fake;
            if !d_loss.is_finite() {
                return Err(Error::NonFinite {
                    what: "discriminator loss",
                    epoch,
                    batch: batch_idx,
                });
            }
            adam_d.step(disc);

            // Generator step against the updated discriminator.
            let (loss_mse, grad_mse) = mse_loss(&out_tanh, &cover_tanh)?;
            let d_out = disc.forward(&purified_unit, Phase::Train);
            let (loss_adv, g_adv_out) = bce_loss(&d_out, 1.0);
            let g_unit = disc.backward(&g_adv_out);
            zero_grads(disc); // parameter gradients from this pass are discarded
            if !loss_mse.is_finite() || !loss_adv.is_finite() {
                return Err(Error::NonFinite {
                    what: "generator loss",
                    epoch,
                    batch: batch_idx,
                });
            }
            // d(purified_unit)/d(out_tanh) = 1/2
            let total_grad = grad_mse.add_scaled(&g_unit, lambda * 0.5);
            gen.backward(&total_grad);
            adam_g.step(gen);

            sum_mse += loss_mse;
            sum_d += d_loss;
            sum_adv += loss_adv;
            n_batches += 1;
        }

        let val_mse = validation_mse(gen, &data.val, cfg.batch_size);
        if !val_mse.is_finite() {
            return Err(Error::NonFinite {
                what: "validation mse",
                epoch,
                batch: 0,
            });
        }
        log.records.push(EpochRecord {
            epoch,
            train_loss: sum_mse / n_batches as f64,
            val_mse,
            d_loss: sum_d / n_batches as f64,
            g_adv: sum_adv / n_batches as f64,
            wall_secs: start.elapsed().as_secs_f64(),
        });
    }
    Ok(log)
}

/// Validation PSNR in dB derived from the pixel-domain validation MSE.
pub fn validation_psnr(gen: &mut Generator<f32>, pairs: &[TrainPair], batch_size: usize) -> f64 {
    psnr_from_mse(validation_mse(gen, pairs, batch_size))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ArchConfig;
    use rand::{Rng, SeedableRng};

    fn tiny_cfg() -> ArchConfig {
        ArchConfig {
            base_filters: 8,
            n_res_blocks: 1,
            input_side: 16,
        }
    }

    fn tiny_dataset(n_train: usize, n_val: usize, side: usize, seed: u64) -> PairedDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut make = |n: usize| {
            (0..n)
                .map(|_| {
                    let cover = GrayImage::from_fn(side, side, |x, y| {
                        (40 + 3 * x + 2 * y + (rng.random::<u8>() % 8) as usize).min(255) as u8
                    });
                    let mut stego = cover.clone();
                    for p in stego.pixels_mut() {
                        if rng.random::<f64>() < 0.2 {
                            *p = (*p as i16 + if rng.random::<bool>() { 1 } else { -1 })
                                .clamp(0, 255) as u8;
                        }
                    }
                    TrainPair { stego, cover }
                })
                .collect::<Vec<_>>()
        };
        PairedDataset {
            train: make(n_train),
            val: make(n_val),
        }
    }

    #[test]
    fn patience_zero_runs_exactly_one_epoch() {
        let mut gen = Generator::new(tiny_cfg(), 1).unwrap();
        let data = tiny_dataset(8, 2, 16, 2);
        let cfg = TrainConfig {
            patience: 0,
            max_epochs: 50,
            batch_size: 4,
            ..TrainConfig::default()
        };
        let log = pretrain_autoencoder(&mut gen, &data, &cfg).unwrap();
        assert_eq!(log.records.len(), 1);
    }

    #[test]
    fn identity_task_learns_quickly() {
        // stego == cover: the autoencoder trends toward the identity map
        let mut gen = Generator::new(tiny_cfg(), 3).unwrap();
        let data = {
            let mut d = tiny_dataset(32, 4, 16, 4);
            for p in d.train.iter_mut().chain(d.val.iter_mut()) {
                p.stego = p.cover.clone();
            }
            d
        };
        let cfg = TrainConfig {
            max_epochs: 150,
            patience: 150,
            batch_size: 8,
            seed: 5,
            alpha: 2e-3,
            ..TrainConfig::default()
        };
        let log = pretrain_autoencoder(&mut gen, &data, &cfg).unwrap();
        let final_val = validation_mse(&mut gen, &data.val, 8);
        assert!(
            final_val < 0.1 * log.initial_val_mse,
            "initial {} final {final_val}",
            log.initial_val_mse
        );
    }

    #[test]
    fn empty_dataset_rejected() {
        let mut gen = Generator::new(tiny_cfg(), 1).unwrap();
        let cfg = TrainConfig::default();
        assert!(pretrain_autoencoder(&mut gen, &PairedDataset::default(), &cfg).is_err());
    }

    #[test]
    fn training_is_deterministic() {
        let data = tiny_dataset(12, 3, 16, 7);
        let cfg = TrainConfig {
            max_epochs: 3,
            patience: 10,
            batch_size: 4,
            seed: 9,
            ..TrainConfig::default()
        };
        let run = || {
            let mut gen = Generator::new(tiny_cfg(), 2).unwrap();
            let log = pretrain_autoencoder(&mut gen, &data, &cfg).unwrap();
            (log, snapshot(&gen))
        };
        let (log_a, weights_a) = run();
        let (log_b, weights_b) = run();
        for (a, b) in log_a.records.iter().zip(&log_b.records) {
            assert!((a.train_loss - b.train_loss).abs() < 1e-5);
            assert!((a.val_mse - b.val_mse).abs() < 1e-5);
        }
        assert_eq!(weights_a, weights_b);
    }

    #[test]
    fn gan_with_zero_adversarial_weight_matches_pretraining() {
        let data = tiny_dataset(12, 3, 16, 8);
        let base = TrainConfig {
            batch_size: 4,
            seed: 11,
            ..TrainConfig::default()
        };

        let mut gen_init = Generator::new(tiny_cfg(), 6).unwrap();
        // a couple of warm-up epochs so both branches start from the same
        // non-random state
        let warm = TrainConfig {
            max_epochs: 2,
            patience: 10,
            ..base
        };
        pretrain_autoencoder(&mut gen_init, &data, &warm).unwrap();

        let mut gen_a = Generator::new(tiny_cfg(), 0).unwrap();
        restore(&mut gen_a, &snapshot(&gen_init));
        let mut gen_b = Generator::new(tiny_cfg(), 0).unwrap();
        restore(&mut gen_b, &snapshot(&gen_init));

        let pretrain_cfg = TrainConfig {
            max_epochs: 2,
            patience: 10,
            ..base
        };
        let log_a = pretrain_autoencoder(&mut gen_a, &data, &pretrain_cfg).unwrap();

        let mut disc = Discriminator::new(tiny_cfg(), 13).unwrap();
        let gan_cfg = TrainConfig {
            gan_epochs: 2,
            lambda_adv: 0.0,
            ..base
        };
        let log_b = train_gan(&mut gen_b, &mut disc, &data, &gan_cfg).unwrap();

        for (a, b) in log_a.records.iter().zip(&log_b.records) {
            assert!(
                (a.val_mse - b.val_mse).abs() < 1e-6,
                "epoch {}: {} vs {}",
                a.epoch,
                a.val_mse,
                b.val_mse
            );
        }
    }

    #[test]
    fn untrained_discriminator_sits_near_coin_flip() {
        let mut disc = Discriminator::<f32>::new(tiny_cfg(), 21).unwrap();
        let data = tiny_dataset(8, 1, 16, 22);
        let refs: Vec<&TrainPair> = data.train.iter().collect();
        let x = cover_unit_tensor(&refs, 16);
        let out = disc.forward(&x, Phase::Eval);
        for &v in out.data() {
            assert!((0.25..=0.75).contains(&v), "output {v}");
        }
        let (l1, _) = bce_loss(&out, 1.0);
        let (l0, _) = bce_loss(&out, 0.0);
        let d_loss = l1 + l0;
        assert!(
            (d_loss - 2.0 * std::f64::consts::LN_2).abs() < 0.25,
            "d loss {d_loss}"
        );
    }
}
