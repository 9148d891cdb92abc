//! Central finite-difference gradient checking.
//!
//! The f64 instantiation of every layer doubles as the shadow used to verify
//! the backward passes: the scalar probe `L = sum(forward(x) * proj)` has
//! analytic parameter/input gradients available through `backward(proj)`,
//! and each is compared against `(L(e+h) - L(e-h)) / 2h`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::neural::tensor::Tensor;
use crate::neural::{zero_grads, Module, Phase};

/// Worst relative errors seen across all parameter and input coordinates.
#[derive(Debug, Clone, Copy)]
pub struct GradCheckReport {
    pub max_param_rel_err: f64,
    pub max_input_rel_err: f64,
}

impl GradCheckReport {
    pub fn max(&self) -> f64 {
        self.max_param_rel_err.max(self.max_input_rel_err)
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-6 {
        (a - b).abs()
    } else {
        (a - b).abs() / scale
    }
}

fn probe_loss<M: Module<f64> + ?Sized>(
    module: &mut M,
    input: &Tensor<f64>,
    phase: Phase,
    proj: &Tensor<f64>,
) -> f64 {
    let out = module.forward(input, phase);
    out.data()
        .iter()
        .zip(proj.data())
        .map(|(&o, &p)| o * p)
        .sum()
}

/// Check every parameter and input coordinate of `module` against central
/// differences with step `h`. Returns the worst relative errors.
///
/// The projection tensor is seeded so runs are reproducible. Train-phase
/// forwards may update running statistics; those do not feed back into the
/// same forward's output, so repeated probing stays valid.
pub fn gradcheck_module<M: Module<f64> + ?Sized>(
    module: &mut M,
    input: &Tensor<f64>,
    phase: Phase,
    h: f64,
    seed: u64,
) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let out = module.forward(input, phase);
    let proj = Tensor::from_vec(
        out.shape(),
        (0..out.numel()).map(|_| rng.random::<f64>() - 0.5).collect(),
    )
    .expect("projection matches output");

    // Analytic gradients.
    zero_grads(module);
    let _ = module.forward(input, phase);
    let analytic_input = module.backward(&proj);
    let mut analytic_params: Vec<Vec<f64>> = Vec::new();
    module.visit_params(&mut |_, g| analytic_params.push(g.data().to_vec()));

    // Numeric parameter gradients.
    let mut max_param_rel_err = 0.0f64;
    let n_params = analytic_params.len();
    for pi in 0..n_params {
        let len = analytic_params[pi].len();
        for ei in 0..len {
            let mut plus = 0.0;
            let mut minus = 0.0;
            for (sign, target) in [(h, &mut plus), (-h, &mut minus)] {
                let mut idx = 0;
                module.visit_params(&mut |p, _| {
                    if idx == pi {
                        p.data_mut()[ei] += sign;
                    }
                    idx += 1;
                });
                *target = probe_loss(module, input, phase, &proj);
                let mut idx = 0;
                module.visit_params(&mut |p, _| {
                    if idx == pi {
                        p.data_mut()[ei] -= sign;
                    }
                    idx += 1;
                });
            }
            let numeric = (plus - minus) / (2.0 * h);
            max_param_rel_err = max_param_rel_err.max(rel_err(analytic_params[pi][ei], numeric));
        }
    }

    // Numeric input gradients.
    let mut max_input_rel_err = 0.0f64;
    let mut x = input.clone();
    for ei in 0..x.numel() {
        x.data_mut()[ei] += h;
        let plus = probe_loss(module, &x, phase, &proj);
        x.data_mut()[ei] -= 2.0 * h;
        let minus = probe_loss(module, &x, phase, &proj);
        x.data_mut()[ei] += h;
        let numeric = (plus - minus) / (2.0 * h);
        max_input_rel_err = max_input_rel_err.max(rel_err(analytic_input.data()[ei], numeric));
    }

    GradCheckReport {
        max_param_rel_err,
        max_input_rel_err,
    }
}

/// Random tensor with entries bounded away from zero, for layers with a kink
/// at the origin (ReLU family).
pub fn random_input_away_from_zero(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..shape.iter().product())
        .map(|_| {
            let mag = 0.1 + 0.9 * rng.random::<f64>();
            if rng.random::<bool>() {
                mag
            } else {
                -mag
            }
        })
        .collect();
    Tensor::from_vec(shape, data).expect("sized to shape")
}

/// Plain random tensor in `[-0.5, 0.5)`.
pub fn random_input(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..shape.iter().product())
        .map(|_| rng.random::<f64>() - 0.5)
        .collect();
    Tensor::from_vec(shape, data).expect("sized to shape")
}
