//! Adam optimizer with bias correction.

use crate::neural::tensor::Tensor;
use crate::neural::{Module, Scalar};

/// Adam hyperparameters. The defaults match the training recipe used
/// throughout this crate: alpha 1e-3, beta1 0.5, beta2 0.9, eps 1e-8.
#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            alpha: 1e-3,
            beta1: 0.5,
            beta2: 0.9,
            eps: 1e-8,
        }
    }
}

/// Optimizer state: first/second moment per parameter tensor plus the step
/// counter. Moment buffers are allocated lazily on the first step and stay
/// aligned with the module's fixed parameter visitation order.
pub struct Adam<T> {
    cfg: AdamConfig,
    t: u64,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(cfg: AdamConfig) -> Self {
        Adam {
            cfg,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// Apply one bias-corrected update from the gradients currently
    /// accumulated in `model`.
    pub fn step<M: Module<T> + ?Sized>(&mut self, model: &mut M) {
        self.t += 1;
        let alpha = T::from_f64(self.cfg.alpha);
        let beta1 = T::from_f64(self.cfg.beta1);
        let beta2 = T::from_f64(self.cfg.beta2);
        let one_minus_beta1 = T::one() - beta1;
        let one_minus_beta2 = T::one() - beta2;
        let eps = T::from_f64(self.cfg.eps);
        let bc1 = T::from_f64(1.0 - self.cfg.beta1.powi(self.t as i32));
        let bc2 = T::from_f64(1.0 - self.cfg.beta2.powi(self.t as i32));

        let m = &mut self.m;
        let v = &mut self.v;
        let mut idx = 0;
        model.visit_params(&mut |param, grad| {
            if m.len() == idx {
                m.push(Tensor::zeros(param.shape()));
                v.push(Tensor::zeros(param.shape()));
            }
            let mi = &mut m[idx];
            let vi = &mut v[idx];
            assert_eq!(mi.shape(), param.shape(), "optimizer/model mismatch");
            for ((p, &g), (mm, vv)) in param
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(mi.data_mut().iter_mut().zip(vi.data_mut()))
            {
                *mm = beta1 * *mm + one_minus_beta1 * g;
                *vv = beta2 * *vv + one_minus_beta2 * g * g;
                let m_hat = *mm / bc1;
                let v_hat = *vv / bc2;
                *p = *p - alpha * m_hat / (v_hat.sqrt() + eps);
            }
            idx += 1;
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{zero_grads, Phase};
    use crate::neural::layers::{Dense, Init};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Single scalar parameter exposed as a module, for update-rule tests.
    struct Param1 {
        w: Tensor<f64>,
        g: Tensor<f64>,
    }

    impl Param1 {
        fn new(w: f64) -> Self {
            Param1 {
                w: Tensor::from_vec(&[1], vec![w]).unwrap(),
                g: Tensor::zeros(&[1]),
            }
        }
    }

    impl Module<f64> for Param1 {
        fn forward(&mut self, input: &Tensor<f64>, _phase: Phase) -> Tensor<f64> {
            input.clone()
        }
        fn backward(&mut self, grad_out: &Tensor<f64>) -> Tensor<f64> {
            grad_out.clone()
        }
        fn visit_params(&mut self, f: &mut dyn FnMut(&mut Tensor<f64>, &mut Tensor<f64>)) {
            f(&mut self.w, &mut self.g);
        }
        fn visit_state(&self, _p: &str, _f: &mut dyn FnMut(String, &Tensor<f64>)) {}
        fn visit_state_mut(&mut self, _p: &str, _f: &mut dyn FnMut(String, &mut Tensor<f64>)) {}
    }

    #[test]
    fn zero_gradient_leaves_params_but_advances_step() {
        let mut p = Param1::new(1.5);
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(&mut p);
        assert_eq!(p.w.data()[0], 1.5);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn first_step_is_signed_unit_step_times_alpha() {
        // closed form at t=1: update = -alpha * g / (sqrt(g^2) + eps') ~ -alpha * sign(g)
        for &g in &[0.3f64, -2.0, 17.0] {
            let mut p = Param1::new(0.0);
            p.g.data_mut()[0] = g;
            let mut adam = Adam::new(AdamConfig::default());
            adam.step(&mut p);
            let expected = -1e-3 * g.signum();
            assert!(
                (p.w.data()[0] - expected).abs() < 1e-6,
                "g={g}: got {}",
                p.w.data()[0]
            );
        }
    }

    #[test]
    fn quadratic_converges_within_200_steps() {
        // f(w) = w^2, grad = 2w, w0 = 1. Per-step movement is capped near
        // alpha, so a demo-scale alpha of 0.01 is what lets 200 steps cover
        // the unit distance.
        let mut p = Param1::new(1.0);
        let mut adam = Adam::new(AdamConfig {
            alpha: 0.01,
            ..AdamConfig::default()
        });
        for _ in 0..200 {
            zero_grads(&mut p);
            p.g.data_mut()[0] = 2.0 * p.w.data()[0];
            adam.step(&mut p);
        }
        assert!(p.w.data()[0].abs() < 0.1, "w = {}", p.w.data()[0]);
    }

    #[test]
    fn moment_buffers_follow_param_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut d = Dense::<f64>::new(3, 2, Init::HeNormal, &mut rng);
        let mut adam = Adam::new(AdamConfig::default());
        let x = Tensor::from_vec(&[1, 3], vec![1.0, 2.0, 3.0]).unwrap();
        let y = d.forward(&x, Phase::Train);
        d.backward(&y);
        adam.step(&mut d);
        assert_eq!(adam.m.len(), 2);
        assert_eq!(adam.m[0].shape(), &[3, 2]);
        assert_eq!(adam.m[1].shape(), &[2]);
    }
}
