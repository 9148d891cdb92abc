//! Network layers with exact backward passes.
//!
//! Convolution runs as im2col plus gemm; the direct-definition oracle in the
//! tests pins the result. Per-sample work parallelizes over the batch, with
//! all reductions in a fixed order so outputs are identical with and without
//! the `parallel` feature.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::neural::tensor::Tensor;
use crate::neural::{gemm_rm, gemm_rm_ta, Module, Phase, Scalar};
use crate::par;

/// Weight initialization schemes. He for ReLU-family fan-in, Xavier for
/// tanh/sigmoid outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    HeNormal,
    XavierNormal,
    Zeros,
}

fn init_values<T: Scalar>(init: Init, fan_in: usize, fan_out: usize, n: usize, rng: &mut ChaCha8Rng) -> Vec<T> {
    match init {
        Init::Zeros => vec![T::zero(); n],
        Init::HeNormal | Init::XavierNormal => {
            let std = match init {
                Init::HeNormal => (2.0 / fan_in as f64).sqrt(),
                Init::XavierNormal => (2.0 / (fan_in + fan_out) as f64).sqrt(),
                Init::Zeros => unreachable!(),
            };
            let dist = Normal::new(0.0, std).expect("positive std");
            (0..n).map(|_| T::from_f64(dist.sample(rng))).collect()
        }
    }
}

// --- Conv2d ---

struct ConvCache<T> {
    input_dims: (usize, usize, usize, usize),
    out_hw: (usize, usize),
    /// im2col matrix, `[N][OH*OW][C*k*k]` contiguous.
    cols: Vec<T>,
}

/// 2-D convolution (cross-correlation) with square kernel, bias, zero
/// padding.
pub struct Conv2d<T> {
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    grad_weight: Tensor<T>,
    grad_bias: Tensor<T>,
    cache: Option<ConvCache<T>>,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        init: Init,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let fan_in = in_channels * kernel * kernel;
        let fan_out = out_channels * kernel * kernel;
        let weight = Tensor::from_vec(
            &[out_channels, in_channels, kernel, kernel],
            init_values(init, fan_in, fan_out, out_channels * fan_in, rng),
        )
        .expect("consistent init size");
        Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            grad_weight: Tensor::zeros(weight.shape()),
            weight,
            bias: Tensor::zeros(&[out_channels]),
            grad_bias: Tensor::zeros(&[out_channels]),
            cache: None,
        }
    }

    pub fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        assert!(
            h + 2 * self.padding >= self.kernel && w + 2 * self.padding >= self.kernel,
            "conv input {h}x{w} smaller than kernel {}",
            self.kernel
        );
        (
            (h + 2 * self.padding - self.kernel) / self.stride + 1,
            (w + 2 * self.padding - self.kernel) / self.stride + 1,
        )
    }

    fn im2col_sample(&self, x: &[T], h: usize, w: usize, oh: usize, ow: usize, cols: &mut [T]) {
        let k = self.kernel;
        let ckk = self.in_channels * k * k;
        for oy in 0..oh {
            for ox in 0..ow {
                let row = (oy * ow + ox) * ckk;
                let mut idx = row;
                for c in 0..self.in_channels {
                    let plane = c * h * w;
                    for ky in 0..k {
                        let iy = (oy * self.stride + ky) as isize - self.padding as isize;
                        for kx in 0..k {
                            let ix = (ox * self.stride + kx) as isize - self.padding as isize;
                            cols[idx] = if iy >= 0 && iy < h as isize && ix >= 0 && ix < w as isize
                            {
                                x[plane + iy as usize * w + ix as usize]
                            } else {
                                T::zero()
                            };
                            idx += 1;
                        }
                    }
                }
            }
        }
    }

    fn col2im_sample(&self, dcols: &[T], h: usize, w: usize, oh: usize, ow: usize, dx: &mut [T]) {
        let k = self.kernel;
        let ckk = self.in_channels * k * k;
        for oy in 0..oh {
            for ox in 0..ow {
                let row = (oy * ow + ox) * ckk;
                let mut idx = row;
                for c in 0..self.in_channels {
                    let plane = c * h * w;
                    for ky in 0..k {
                        let iy = (oy * self.stride + ky) as isize - self.padding as isize;
                        for kx in 0..k {
                            let ix = (ox * self.stride + kx) as isize - self.padding as isize;
                            if iy >= 0 && iy < h as isize && ix >= 0 && ix < w as isize {
                                dx[plane + iy as usize * w + ix as usize] += dcols[idx];
                            }
                            idx += 1;
                        }
                    }
                }
            }
        }
    }
}

impl<T: Scalar> Module<T> for Conv2d<T> {
    fn forward(&mut self, input: &Tensor<T>, _phase: Phase) -> Tensor<T> {
        let (n, c, h, w) = input.dims4();
        assert_eq!(c, self.in_channels, "conv expects {} channels", self.in_channels);
        let (oh, ow) = self.out_hw(h, w);
        let k = self.kernel;
        let ckk = c * k * k;
        let ohw = oh * ow;
        let f = self.out_channels;

        let mut cols = vec![T::zero(); n * ohw * ckk];
        {
            let x = input.data();
            let this = &*self;
            par::for_each_chunk_mut(&mut cols, ohw * ckk, |i, chunk| {
                this.im2col_sample(&x[i * c * h * w..(i + 1) * c * h * w], h, w, oh, ow, chunk);
            });
        }

        let mut out = Tensor::zeros(&[n, f, oh, ow]);
        {
            let weight = self.weight.data();
            let bias = self.bias.data();
            let cols_ref = &cols;
            par::for_each_chunk_mut(out.data_mut(), f * ohw, |i, chunk| {
                let cols_n = &cols_ref[i * ohw * ckk..(i + 1) * ohw * ckk];
                // chunk[F x OHW] = W[F x CKK] * cols_n^T
                unsafe {
                    T::gemm_raw(
                        f, ckk, ohw,
                        T::one(),
                        weight.as_ptr(), ckk as isize, 1,
                        cols_n.as_ptr(), 1, ckk as isize,
                        T::zero(),
                        chunk.as_mut_ptr(), ohw as isize, 1,
                    );
                }
                for fi in 0..f {
                    let b = bias[fi];
                    for v in &mut chunk[fi * ohw..(fi + 1) * ohw] {
                        *v += b;
                    }
                }
            });
        }

        self.cache = Some(ConvCache {
            input_dims: (n, c, h, w),
            out_hw: (oh, ow),
            cols,
        });
        out
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Tensor<T> {
        let cache = self.cache.take().expect("backward before forward");
        let (n, c, h, w) = cache.input_dims;
        let (oh, ow) = cache.out_hw;
        let (gn, gf, goh, gow) = grad_out.dims4();
        assert_eq!((gn, gf, goh, gow), (n, self.out_channels, oh, ow));
        let k = self.kernel;
        let ckk = c * k * k;
        let ohw = oh * ow;
        let f = self.out_channels;
        let g = grad_out.data();

        // Bias gradient, fixed order.
        for i in 0..n {
            for fi in 0..f {
                let mut s = T::zero();
                for v in &g[(i * f + fi) * ohw..(i * f + fi + 1) * ohw] {
                    s += *v;
                }
                self.grad_bias.data_mut()[fi] += s;
            }
        }

        // Per-sample weight-gradient partials, then an in-order reduction:
        // deterministic regardless of thread count.
        let sample_idx: Vec<usize> = (0..n).collect();
        let partials: Vec<Vec<T>> = par::batch_map(&sample_idx, |&i| {
            let mut gw = vec![T::zero(); f * ckk];
            gemm_rm(
                f, ohw, ckk,
                T::one(),
                &g[i * f * ohw..(i + 1) * f * ohw],
                &cache.cols[i * ohw * ckk..(i + 1) * ohw * ckk],
                T::zero(),
                &mut gw,
            );
            gw
        });
        for gw in &partials {
            for (acc, &v) in self.grad_weight.data_mut().iter_mut().zip(gw) {
                *acc += v;
            }
        }

        // Input gradient: dcols = gout^T * W, then col2im.
        let mut dx = Tensor::zeros(&[n, c, h, w]);
        {
            let weight = self.weight.data();
            let cols_len = ohw * ckk;
            let this = &*self;
            par::for_each_chunk_mut(dx.data_mut(), c * h * w, |i, dx_n| {
                let mut dcols = vec![T::zero(); cols_len];
                // dcols[OHW x CKK] = gout_n^T[OHW x F] * W[F x CKK]
                gemm_rm_ta(
                    ohw, f, ckk,
                    T::one(),
                    &g[i * f * ohw..(i + 1) * f * ohw],
                    weight,
                    T::zero(),
                    &mut dcols,
                );
                this.col2im_sample(&dcols, h, w, oh, ow, dx_n);
            });
        }
        dx
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Tensor<T>, &mut Tensor<T>)) {
        f(&mut self.weight, &mut self.grad_weight);
        f(&mut self.bias, &mut self.grad_bias);
    }

    fn visit_state(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<T>)) {
        f(format!("{prefix}.weight"), &self.weight);
        f(format!("{prefix}.bias"), &self.bias);
    }

    fn visit_state_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        f(format!("{prefix}.weight"), &mut self.weight);
        f(format!("{prefix}.bias"), &mut self.bias);
    }
}

// --- BatchNorm2d ---

struct BnCache<T> {
    dims: (usize, usize, usize, usize),
    xhat: Vec<T>,
    inv_std: Vec<T>,
    phase: Phase,
}

/// Per-channel batch normalization over `[N, C, H, W]`.
///
/// Train mode normalizes with batch statistics and updates the running
/// estimates as `running = 0.9 * running + 0.1 * batch`; eval mode applies
/// the running estimates.
pub struct BatchNorm2d<T> {
    channels: usize,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    grad_gamma: Tensor<T>,
    grad_beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    eps: T,
    cache: Option<BnCache<T>>,
}

const BN_EPS: f64 = 1e-5;
const BN_RUNNING_KEEP: f64 = 0.9;

impl<T: Scalar> BatchNorm2d<T> {
    pub fn new(channels: usize) -> Self {
        BatchNorm2d {
            channels,
            gamma: Tensor::full(&[channels], T::one()),
            beta: Tensor::zeros(&[channels]),
            grad_gamma: Tensor::zeros(&[channels]),
            grad_beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], T::one()),
            eps: T::from_f64(BN_EPS),
            cache: None,
        }
    }
}

impl<T: Scalar> Module<T> for BatchNorm2d<T> {
    fn forward(&mut self, input: &Tensor<T>, phase: Phase) -> Tensor<T> {
        let (n, c, h, w) = input.dims4();
        assert_eq!(c, self.channels);
        assert!(n > 0, "batch size 0");
        let plane = h * w;
        let m = n * plane;
        let x = input.data();
        let mut out = Tensor::zeros(input.shape());
        let mut xhat = vec![T::zero(); x.len()];
        let mut inv_std_c = vec![T::zero(); c];

        for ci in 0..c {
            let (mean, var) = match phase {
                Phase::Train => {
                    let mut sum = T::zero();
                    for i in 0..n {
                        for v in &x[(i * c + ci) * plane..(i * c + ci + 1) * plane] {
                            sum += *v;
                        }
                    }
                    let mean = sum / T::from_f64(m as f64);
                    let mut var_sum = T::zero();
                    for i in 0..n {
                        for v in &x[(i * c + ci) * plane..(i * c + ci + 1) * plane] {
                            let d = *v - mean;
                            var_sum += d * d;
                        }
                    }
                    let var = var_sum / T::from_f64(m as f64);
                    let keep = T::from_f64(BN_RUNNING_KEEP);
                    let take = T::one() - keep;
                    self.running_mean.data_mut()[ci] =
                        keep * self.running_mean.data()[ci] + take * mean;
                    self.running_var.data_mut()[ci] =
                        keep * self.running_var.data()[ci] + take * var;
                    (mean, var)
                }
                Phase::Eval => (self.running_mean.data()[ci], self.running_var.data()[ci]),
            };
            let inv_std = T::one() / (var + self.eps).sqrt();
            inv_std_c[ci] = inv_std;
            let gamma = self.gamma.data()[ci];
            let beta = self.beta.data()[ci];
            for i in 0..n {
                let base = (i * c + ci) * plane;
                for j in 0..plane {
                    let xh = (x[base + j] - mean) * inv_std;
                    xhat[base + j] = xh;
                    out.data_mut()[base + j] = gamma * xh + beta;
                }
            }
        }

        self.cache = Some(BnCache {
            dims: (n, c, h, w),
            xhat,
            inv_std: inv_std_c,
            phase,
        });
        out
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Tensor<T> {
        let cache = self.cache.take().expect("backward before forward");
        let (n, c, h, w) = cache.dims;
        assert_eq!(grad_out.shape(), &[n, c, h, w]);
        let plane = h * w;
        let m = n * plane;
        let g = grad_out.data();
        let mut dx = Tensor::zeros(grad_out.shape());

        for ci in 0..c {
            let gamma = self.gamma.data()[ci];
            let inv_std = cache.inv_std[ci];

            let mut sum_g = T::zero();
            let mut sum_g_xhat = T::zero();
            for i in 0..n {
                let base = (i * c + ci) * plane;
                for j in 0..plane {
                    sum_g += g[base + j];
                    sum_g_xhat += g[base + j] * cache.xhat[base + j];
                }
            }
            self.grad_beta.data_mut()[ci] += sum_g;
            self.grad_gamma.data_mut()[ci] += sum_g_xhat;

            match cache.phase {
                Phase::Train => {
                    let m_t = T::from_f64(m as f64);
                    for i in 0..n {
                        let base = (i * c + ci) * plane;
                        for j in 0..plane {
                            let dxhat = g[base + j] * gamma;
                            dx.data_mut()[base + j] = inv_std / m_t
                                * (m_t * dxhat
                                    - gamma * sum_g
                                    - cache.xhat[base + j] * gamma * sum_g_xhat);
                        }
                    }
                }
                Phase::Eval => {
                    for i in 0..n {
                        let base = (i * c + ci) * plane;
                        for j in 0..plane {
                            dx.data_mut()[base + j] = g[base + j] * gamma * inv_std;
                        }
                    }
                }
            }
        }
        dx
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Tensor<T>, &mut Tensor<T>)) {
        f(&mut self.gamma, &mut self.grad_gamma);
        f(&mut self.beta, &mut self.grad_beta);
    }

    fn visit_state(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<T>)) {
        f(format!("{prefix}.gamma"), &self.gamma);
        f(format!("{prefix}.beta"), &self.beta);
        f(format!("{prefix}.running_mean"), &self.running_mean);
        f(format!("{prefix}.running_var"), &self.running_var);
    }

    fn visit_state_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        f(format!("{prefix}.gamma"), &mut self.gamma);
        f(format!("{prefix}.beta"), &mut self.beta);
        f(format!("{prefix}.running_mean"), &mut self.running_mean);
        f(format!("{prefix}.running_var"), &mut self.running_var);
    }
}

// --- Activations ---

macro_rules! stateless_visits {
    () => {
        fn visit_params(&mut self, _f: &mut dyn FnMut(&mut Tensor<T>, &mut Tensor<T>)) {}
        fn visit_state(&self, _prefix: &str, _f: &mut dyn FnMut(String, &Tensor<T>)) {}
        fn visit_state_mut(&mut self, _prefix: &str, _f: &mut dyn FnMut(String, &mut Tensor<T>)) {}
    };
}

/// ReLU; the subgradient at 0 is 0.
#[derive(Default)]
pub struct Relu<T> {
    mask: Option<Vec<bool>>,
    _marker: std::marker::PhantomData<T>,
}

impl<T: Scalar> Relu<T> {
    pub fn new() -> Self {
        Relu {
            mask: None,
            _marker: std::marker::PhantomData,
        }
    }
}

impl<T: Scalar> Module<T> for Relu<T> {
    fn forward(&mut self, input: &Tensor<T>, _phase: Phase) -> Tensor<T> {
        let mut out = input.clone();
        let mask = out
            .data_mut()
            .iter_mut()
            .map(|v| {
                let pos = *v > T::zero();
                if !pos {
                    *v = T::zero();
                }
                pos
            })
            .collect();
        self.mask = Some(mask);
        out
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Tensor<T> {
        let mask = self.mask.take().expect("backward before forward");
        let mut dx = grad_out.clone();
        for (v, keep) in dx.data_mut().iter_mut().zip(mask) {
            if !keep {
                *v = T::zero();
            }
        }
        dx
    }

    stateless_visits!();
}

/// LeakyReLU with fixed negative slope.
pub struct LeakyRelu<T> {
    alpha: T,
    mask: Option<Vec<bool>>,
}

impl<T: Scalar> LeakyRelu<T> {
    pub fn new(alpha: f64) -> Self {
        LeakyRelu {
            alpha: T::from_f64(alpha),
            mask: None,
        }
    }
}

impl<T: Scalar> Module<T> for LeakyRelu<T> {
    fn forward(&mut self, input: &Tensor<T>, _phase: Phase) -> Tensor<T> {
        let mut out = input.clone();
        let alpha = self.alpha;
        let mask = out
            .data_mut()
            .iter_mut()
            .map(|v| {
                let pos = *v > T::zero();
                if !pos {
                    *v = *v * alpha;
                }
                pos
            })
            .collect();
        self.mask = Some(mask);
        out
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Tensor<T> {
        let mask = self.mask.take().expect("backward before forward");
        let mut dx = grad_out.clone();
        for (v, pos) in dx.data_mut().iter_mut().zip(mask) {
            if !pos {
                *v = *v * self.alpha;
            }
        }
        dx
    }

    stateless_visits!();
}

/// Elementwise tanh.
#[derive(Default)]
pub struct Tanh<T> {
    out: Option<Vec<T>>,
}

impl<T: Scalar> Tanh<T> {
    pub fn new() -> Self {
        Tanh { out: None }
    }
}

impl<T: Scalar> Module<T> for Tanh<T> {
    fn forward(&mut self, input: &Tensor<T>, _phase: Phase) -> Tensor<T> {
        let mut out = input.clone();
        for v in out.data_mut() {
            *v = v.tanh();
        }
        self.out = Some(out.data().to_vec());
        out
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Tensor<T> {
        let y = self.out.take().expect("backward before forward");
        let mut dx = grad_out.clone();
        for (g, y) in dx.data_mut().iter_mut().zip(y) {
            *g = *g * (T::one() - y * y);
        }
        dx
    }

    stateless_visits!();
}

/// Elementwise logistic sigmoid.
#[derive(Default)]
pub struct Sigmoid<T> {
    out: Option<Vec<T>>,
}

impl<T: Scalar> Sigmoid<T> {
    pub fn new() -> Self {
        Sigmoid { out: None }
    }
}

impl<T: Scalar> Module<T> for Sigmoid<T> {
    fn forward(&mut self, input: &Tensor<T>, _phase: Phase) -> Tensor<T> {
        let mut out = input.clone();
        for v in out.data_mut() {
            *v = T::one() / (T::one() + (-*v).exp());
        }
        self.out = Some(out.data().to_vec());
        out
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Tensor<T> {
        let y = self.out.take().expect("backward before forward");
        let mut dx = grad_out.clone();
        for (g, y) in dx.data_mut().iter_mut().zip(y) {
            *g = *g * y * (T::one() - y);
        }
        dx
    }

    stateless_visits!();
}

// --- Upsample ---

/// Nearest-neighbor 2x upsampling; backward sums the gradient over each
/// replicated 2x2 block.
#[derive(Default)]
pub struct Upsample2x<T> {
    in_dims: Option<(usize, usize, usize, usize)>,
    _marker: std::marker::PhantomData<T>,
}

impl<T: Scalar> Upsample2x<T> {
    pub fn new() -> Self {
        Upsample2x {
            in_dims: None,
            _marker: std::marker::PhantomData,
        }
    }
}

impl<T: Scalar> Module<T> for Upsample2x<T> {
    fn forward(&mut self, input: &Tensor<T>, _phase: Phase) -> Tensor<T> {
        let (n, c, h, w) = input.dims4();
        self.in_dims = Some((n, c, h, w));
        let x = input.data();
        let mut out = Tensor::zeros(&[n, c, 2 * h, 2 * w]);
        let o = out.data_mut();
        let ow = 2 * w;
        for nc in 0..n * c {
            let src = nc * h * w;
            let dst = nc * 4 * h * w;
            for y in 0..h {
                for xi in 0..w {
                    let v = x[src + y * w + xi];
                    let d = dst + 2 * y * ow + 2 * xi;
                    o[d] = v;
                    o[d + 1] = v;
                    o[d + ow] = v;
                    o[d + ow + 1] = v;
                }
            }
        }
        out
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Tensor<T> {
        let (n, c, h, w) = self.in_dims.take().expect("backward before forward");
        assert_eq!(grad_out.shape(), &[n, c, 2 * h, 2 * w]);
        let g = grad_out.data();
        let mut dx = Tensor::zeros(&[n, c, h, w]);
        let d = dx.data_mut();
        let ow = 2 * w;
        for nc in 0..n * c {
            let src = nc * 4 * h * w;
            let dst = nc * h * w;
            for y in 0..h {
                for xi in 0..w {
                    let s = src + 2 * y * ow + 2 * xi;
                    d[dst + y * w + xi] = g[s] + g[s + 1] + g[s + ow] + g[s + ow + 1];
                }
            }
        }
        dx
    }

    stateless_visits!();
}

// --- Dense ---

/// Affine map `[N, D] -> [N, K]` with weight `[D, K]`.
pub struct Dense<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    grad_weight: Tensor<T>,
    grad_bias: Tensor<T>,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> Dense<T> {
    pub fn new(in_dim: usize, out_dim: usize, init: Init, rng: &mut ChaCha8Rng) -> Self {
        let weight = Tensor::from_vec(
            &[in_dim, out_dim],
            init_values(init, in_dim, out_dim, in_dim * out_dim, rng),
        )
        .expect("consistent init size");
        Dense {
            grad_weight: Tensor::zeros(weight.shape()),
            weight,
            bias: Tensor::zeros(&[out_dim]),
            grad_bias: Tensor::zeros(&[out_dim]),
            input: None,
        }
    }
}

impl<T: Scalar> Module<T> for Dense<T> {
    fn forward(&mut self, input: &Tensor<T>, _phase: Phase) -> Tensor<T> {
        let (n, d) = input.dims2();
        let (wd, k) = self.weight.dims2();
        assert_eq!(d, wd, "dense expects input dim {wd}, got {d}");
        let mut out = Tensor::zeros(&[n, k]);
        gemm_rm(n, d, k, T::one(), input.data(), self.weight.data(), T::zero(), out.data_mut());
        for i in 0..n {
            for j in 0..k {
                out.data_mut()[i * k + j] += self.bias.data()[j];
            }
        }
        self.input = Some(input.clone());
        out
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Tensor<T> {
        let input = self.input.take().expect("backward before forward");
        let (n, d) = input.dims2();
        let (_, k) = self.weight.dims2();
        assert_eq!(grad_out.shape(), &[n, k]);

        // dW[D x K] += X^T[D x N] * G[N x K]
        gemm_rm_ta(
            d, n, k,
            T::one(),
            input.data(),
            grad_out.data(),
            T::one(),
            self.grad_weight.data_mut(),
        );
        for i in 0..n {
            for j in 0..k {
                self.grad_bias.data_mut()[j] += grad_out.data()[i * k + j];
            }
        }

        // dX[N x D] = G[N x K] * W^T[K x D]
        let mut dx = Tensor::zeros(&[n, d]);
        crate::neural::gemm_rm_tb(
            n, k, d,
            T::one(),
            grad_out.data(),
            self.weight.data(),
            T::zero(),
            dx.data_mut(),
        );
        dx
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Tensor<T>, &mut Tensor<T>)) {
        f(&mut self.weight, &mut self.grad_weight);
        f(&mut self.bias, &mut self.grad_bias);
    }

    fn visit_state(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<T>)) {
        f(format!("{prefix}.weight"), &self.weight);
        f(format!("{prefix}.bias"), &self.bias);
    }

    fn visit_state_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        f(format!("{prefix}.weight"), &mut self.weight);
        f(format!("{prefix}.bias"), &mut self.bias);
    }
}

// --- Flatten ---

/// `[N, C, H, W] -> [N, C*H*W]`.
#[derive(Default)]
pub struct Flatten<T> {
    in_shape: Option<Vec<usize>>,
    _marker: std::marker::PhantomData<T>,
}

impl<T: Scalar> Flatten<T> {
    pub fn new() -> Self {
        Flatten {
            in_shape: None,
            _marker: std::marker::PhantomData,
        }
    }
}

impl<T: Scalar> Module<T> for Flatten<T> {
    fn forward(&mut self, input: &Tensor<T>, _phase: Phase) -> Tensor<T> {
        let shape = input.shape().to_vec();
        assert!(!shape.is_empty());
        let n = shape[0];
        let rest: usize = shape[1..].iter().product();
        self.in_shape = Some(shape);
        input.reshaped(&[n, rest]).expect("same element count")
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Tensor<T> {
        let shape = self.in_shape.take().expect("backward before forward");
        grad_out.reshaped(&shape).expect("same element count")
    }

    stateless_visits!();
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    /// Direct-definition convolution used as the oracle for the im2col path.
    fn conv_reference(
        x: &Tensor<f64>,
        w: &Tensor<f64>,
        b: &[f64],
        stride: usize,
        padding: usize,
    ) -> Tensor<f64> {
        let (n, c, h, wid) = x.dims4();
        let f = w.shape()[0];
        let k = w.shape()[2];
        let oh = (h + 2 * padding - k) / stride + 1;
        let ow = (wid + 2 * padding - k) / stride + 1;
        let mut out = Tensor::zeros(&[n, f, oh, ow]);
        for ni in 0..n {
            for fi in 0..f {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = b[fi];
                        for ci in 0..c {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let iy = (oy * stride + ky) as isize - padding as isize;
                                    let ix = (ox * stride + kx) as isize - padding as isize;
                                    if iy >= 0 && iy < h as isize && ix >= 0 && ix < wid as isize {
                                        acc += x.data()[((ni * c + ci) * h + iy as usize) * wid
                                            + ix as usize]
                                            * w.data()[((fi * c + ci) * k + ky) * k + kx];
                                    }
                                }
                            }
                        }
                        out.data_mut()[((ni * f + fi) * oh + oy) * ow + ox] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_direct_definition() {
        let mut r = rng(1);
        for &(n, c, f, k, h, w, stride, pad) in &[
            (1usize, 1usize, 1usize, 3usize, 3usize, 3usize, 1usize, 0usize),
            (2, 3, 4, 3, 7, 6, 1, 1),
            (2, 2, 3, 3, 8, 8, 2, 1),
            (1, 2, 2, 5, 9, 7, 1, 2),
        ] {
            let mut conv = Conv2d::<f64>::new(c, f, k, stride, pad, Init::HeNormal, &mut r);
            for v in conv.bias.data_mut() {
                *v = r.random::<f64>() - 0.5;
            }
            let x = Tensor::from_vec(
                &[n, c, h, w],
                (0..n * c * h * w).map(|_| r.random::<f64>() - 0.5).collect(),
            )
            .unwrap();
            let got = conv.forward(&x, Phase::Train);
            let want = conv_reference(&x, &conv.weight, conv.bias.data(), stride, pad);
            assert_eq!(got.shape(), want.shape());
            for (a, b) in got.data().iter().zip(want.data()) {
                assert!((a - b).abs() < 1e-5, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn conv_ones_kernel_sums_window() {
        let mut r = rng(2);
        let mut conv = Conv2d::<f64>::new(1, 1, 3, 1, 0, Init::Zeros, &mut r);
        conv.weight.fill(1.0);
        let x = Tensor::from_vec(&[1, 1, 3, 3], vec![1.0; 9]).unwrap();
        let out = conv.forward(&x, Phase::Train);
        assert_eq!(out.shape(), &[1, 1, 1, 1]);
        assert!((out.data()[0] - 9.0).abs() < 1e-12);
    }

    #[test]
    fn conv_identity_kernel_preserves_input() {
        let mut r = rng(3);
        let mut conv = Conv2d::<f64>::new(1, 1, 3, 1, 1, Init::Zeros, &mut r);
        conv.weight.data_mut()[4] = 1.0; // center tap
        let x = Tensor::from_vec(&[1, 1, 4, 4], (0..16).map(|i| i as f64).collect()).unwrap();
        let out = conv.forward(&x, Phase::Train);
        assert_eq!(out.data(), x.data());
    }

    #[test]
    fn batchnorm_normalizes_and_shifts() {
        let mut r = rng(4);
        let mut bn = BatchNorm2d::<f64>::new(2);
        let x = Tensor::from_vec(
            &[4, 2, 3, 3],
            (0..72).map(|_| r.random::<f64>() * 10.0 + 3.0).collect(),
        )
        .unwrap();
        let y = bn.forward(&x, Phase::Train);
        for c in 0..2 {
            let mut vals = Vec::new();
            for n in 0..4 {
                vals.extend_from_slice(&y.data()[(n * 2 + c) * 9..(n * 2 + c + 1) * 9]);
            }
            let mean: f64 = vals.iter().sum::<f64>() / vals.len() as f64;
            let var: f64 = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                / vals.len() as f64;
            assert!(mean.abs() < 1e-5, "mean {mean}");
            assert!((var - 1.0).abs() < 1e-3, "var {var}");
        }

        // gamma=2, beta=3 on normalized data
        bn.gamma.fill(2.0);
        bn.beta.fill(3.0);
        let y = bn.forward(&x, Phase::Train);
        for c in 0..2 {
            let mut vals = Vec::new();
            for n in 0..4 {
                vals.extend_from_slice(&y.data()[(n * 2 + c) * 9..(n * 2 + c + 1) * 9]);
            }
            let mean: f64 = vals.iter().sum::<f64>() / vals.len() as f64;
            let std: f64 = (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                / vals.len() as f64)
                .sqrt();
            assert!((mean - 3.0).abs() < 1e-5);
            assert!((std - 2.0).abs() < 1e-3);
        }
    }

    #[test]
    fn batchnorm_eval_uses_running_stats() {
        let mut bn = BatchNorm2d::<f64>::new(1);
        // running stats untouched: mean 0, var 1 -> near-identity
        let x = Tensor::from_vec(&[1, 1, 2, 2], vec![1.0, -1.0, 0.5, 0.0]).unwrap();
        let y = bn.forward(&x, Phase::Eval);
        for (a, b) in x.data().iter().zip(y.data()) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn activation_point_values() {
        let x = Tensor::from_vec(&[4], vec![-2.0f64, 0.0, 5.0, 0.5]).unwrap();
        let mut relu = Relu::new();
        assert_eq!(relu.forward(&x, Phase::Train).data(), &[0.0, 0.0, 5.0, 0.5]);

        let mut lrelu = LeakyRelu::new(0.2);
        let y = lrelu.forward(&x, Phase::Train);
        assert!((y.data()[0] + 0.4).abs() < 1e-12);
        assert_eq!(y.data()[2], 5.0);

        let mut tanh = Tanh::new();
        assert_eq!(tanh.forward(&x, Phase::Train).data()[1], 0.0);

        let mut sig = Sigmoid::new();
        assert_eq!(sig.forward(&x, Phase::Train).data()[1], 0.5);
    }

    #[test]
    fn upsample_replicates_blocks_and_sums_grads() {
        let x = Tensor::from_vec(&[1, 1, 2, 2], vec![1.0f64, 2.0, 3.0, 4.0]).unwrap();
        let mut up = Upsample2x::new();
        let y = up.forward(&x, Phase::Train);
        assert_eq!(y.shape(), &[1, 1, 4, 4]);
        assert_eq!(
            y.data(),
            &[1.0, 1.0, 2.0, 2.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0, 3.0, 3.0, 4.0, 4.0]
        );
        let g = Tensor::from_vec(&[1, 1, 4, 4], vec![1.0; 16]).unwrap();
        let dx = up.backward(&g);
        assert_eq!(dx.data(), &[4.0, 4.0, 4.0, 4.0]);
    }

    #[test]
    fn dense_identity_and_hand_case() {
        let mut r = rng(5);
        let mut d = Dense::<f64>::new(2, 2, Init::Zeros, &mut r);
        d.weight.data_mut().copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
        let x = Tensor::from_vec(&[1, 2], vec![1.0, 2.0]).unwrap();
        assert_eq!(d.forward(&x, Phase::Train).data(), &[1.0, 2.0]);

        d.bias.data_mut().copy_from_slice(&[5.0, 5.0]);
        assert_eq!(d.forward(&x, Phase::Train).data(), &[6.0, 7.0]);
    }

    #[test]
    #[should_panic(expected = "dense expects input dim")]
    fn dense_rejects_mismatched_input() {
        let mut r = rng(6);
        let mut d = Dense::<f64>::new(3, 2, Init::Zeros, &mut r);
        let x = Tensor::from_vec(&[1, 2], vec![1.0, 2.0]).unwrap();
        d.forward(&x, Phase::Train);
    }

    #[test]
    fn flatten_roundtrip() {
        let x = Tensor::from_vec(&[2, 3, 1, 2], (0..12).map(|i| i as f64).collect()).unwrap();
        let mut fl = Flatten::new();
        let y = fl.forward(&x, Phase::Train);
        assert_eq!(y.shape(), &[2, 6]);
        let back = fl.backward(&y);
        assert_eq!(back.shape(), x.shape());
        assert_eq!(back.data(), x.data());
    }
}
