//! Minimal tensor/layer stack with exact backpropagation and Adam.
//!
//! Everything is generic over [`Scalar`] so the production models run in
//! f32 while gradient checks run the same code paths in f64. Forward passes
//! are deterministic given weights and inputs; convolution reductions use a
//! fixed summation order so results do not depend on thread count.

pub mod adam;
pub mod check;
pub mod layers;
pub mod loss;
pub mod tensor;

pub use adam::{Adam, AdamConfig};
pub use layers::{BatchNorm2d, Conv2d, Dense, Flatten, Init, LeakyRelu, Relu, Sigmoid, Tanh, Upsample2x};
pub use loss::{bce_loss, mse_loss};
pub use tensor::Tensor;

use num_traits::{Float, NumAssign};

/// Element type of tensors: f32 in production, f64 for gradient checking.
pub trait Scalar: Float + NumAssign + Send + Sync + std::fmt::Debug + 'static {
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;

    /// `C = alpha * A * B + beta * C` with explicit strides; see
    /// `matrixmultiply` for the contract.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

impl Scalar for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }

    fn to_f64(self) -> f64 {
        f64::from(self)
    }

    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }

    fn to_f64(self) -> f64 {
        self
    }

    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// `c[m x n] = alpha * a[m x k] * b[k x n] + beta * c`, row-major slices.
pub fn gemm_rm<T: Scalar>(m: usize, k: usize, n: usize, alpha: T, a: &[T], b: &[T], beta: T, c: &mut [T]) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    unsafe {
        T::gemm_raw(
            m, k, n, alpha,
            a.as_ptr(), k as isize, 1,
            b.as_ptr(), n as isize, 1,
            beta,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// Like [`gemm_rm`] but `b` is given transposed: `b` is `[n x k]` row-major.
pub fn gemm_rm_tb<T: Scalar>(m: usize, k: usize, n: usize, alpha: T, a: &[T], b: &[T], beta: T, c: &mut [T]) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), n * k);
    assert_eq!(c.len(), m * n);
    unsafe {
        T::gemm_raw(
            m, k, n, alpha,
            a.as_ptr(), k as isize, 1,
            b.as_ptr(), 1, k as isize,
            beta,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// Like [`gemm_rm`] but `a` is given transposed: `a` is `[k x m]` row-major.
pub fn gemm_rm_ta<T: Scalar>(m: usize, k: usize, n: usize, alpha: T, a: &[T], b: &[T], beta: T, c: &mut [T]) {
    assert_eq!(a.len(), k * m);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    unsafe {
        T::gemm_raw(
            m, k, n, alpha,
            a.as_ptr(), 1, m as isize,
            b.as_ptr(), n as isize, 1,
            beta,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// Batch-statistics mode selector for layers that behave differently during
/// training (batch normalization).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Train,
    Eval,
}

/// A differentiable network component.
///
/// `forward` caches whatever `backward` needs; `backward` consumes the cache,
/// accumulates parameter gradients, and returns the gradient with respect to
/// the input. Parameter visitation order is fixed, which keeps optimizer
/// state and checkpoints aligned.
pub trait Module<T: Scalar> {
    fn forward(&mut self, input: &Tensor<T>, phase: Phase) -> Tensor<T>;
    fn backward(&mut self, grad_out: &Tensor<T>) -> Tensor<T>;

    /// Visit `(param, grad)` pairs in a fixed order.
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Tensor<T>, &mut Tensor<T>));

    /// Visit all persistent tensors (parameters plus running statistics)
    /// with hierarchical names, in a fixed order.
    fn visit_state(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<T>));

    /// Mutable counterpart of [`Module::visit_state`], used by checkpoint
    /// loading.
    fn visit_state_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<T>));
}

/// Zero every parameter gradient.
pub fn zero_grads<T: Scalar, M: Module<T> + ?Sized>(module: &mut M) {
    module.visit_params(&mut |_, g| g.fill(T::zero()));
}

/// Total trainable parameter count.
pub fn param_count<T: Scalar, M: Module<T> + ?Sized>(module: &mut M) -> usize {
    let mut n = 0;
    module.visit_params(&mut |p, _| n += p.numel());
    n
}
