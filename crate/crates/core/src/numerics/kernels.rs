//! Slice-level kernels shared by the tape and by tape-free inference paths.

use crate::numerics::Real;

/// Read-only strided matrix view.
#[derive(Clone, Copy)]
pub(crate) struct View<'a, T> {
    pub data: &'a [T],
    pub rows: usize,
    pub cols: usize,
    rs: isize,
    cs: isize,
}

impl<'a, T: Real> View<'a, T> {
    pub fn new(data: &'a [T], rows: usize, cols: usize) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        View {
            data,
            rows,
            cols,
            rs: cols as isize,
            cs: 1,
        }
    }

    pub fn t(self) -> Self {
        View {
            data: self.data,
            rows: self.cols,
            cols: self.rows,
            rs: self.cs,
            cs: self.rs,
        }
    }
}

/// `c = a·b + beta·c`, where `c` is row-major `a.rows × b.cols`.
pub(crate) fn gemm<T: Real>(a: View<'_, T>, b: View<'_, T>, beta: T, c: &mut [T]) {
    assert_eq!(a.cols, b.rows, "gemm inner extent");
    assert_eq!(c.len(), a.rows * b.cols, "gemm output extent");
    if a.rows == 0 || b.cols == 0 {
        return;
    }
    if a.cols == 0 {
        c.iter_mut().for_each(|x| *x *= beta);
        return;
    }
    // SAFETY: the views were constructed from slices whose lengths match
    // their extents, and the asserts above pin the output extent.
    unsafe {
        T::gemm_raw(
            a.rows,
            a.cols,
            b.cols,
            T::one(),
            a.data.as_ptr(),
            a.rs,
            a.cs,
            b.data.as_ptr(),
            b.rs,
            b.cs,
            beta,
            c.as_mut_ptr(),
            b.cols as isize,
            1,
        )
    }
}

/// Softmax over the visible entries of one row; masked entries are exactly
/// zero and a row with nothing visible is all zeros.
pub(crate) fn masked_softmax_row<T: Real>(scores: &[T], visible: &[bool], out: &mut [T]) {
    let mut max = T::neg_infinity();
    for (s, &v) in scores.iter().zip(visible) {
        if v && *s > max {
            max = *s;
        }
    }
    if max == T::neg_infinity() {
        out.iter_mut().for_each(|o| *o = T::zero());
        return;
    }
    let mut total = T::zero();
    for ((o, s), &v) in out.iter_mut().zip(scores).zip(visible) {
        *o = if v { (*s - max).exp() } else { T::zero() };
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

pub(crate) fn softmax_row<T: Real>(scores: &[T], out: &mut [T]) {
    let max = scores.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for (o, s) in out.iter_mut().zip(scores) {
        *o = (*s - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

pub(crate) fn log_sum_exp<T: Real>(row: &[T]) -> T {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let total: T = row.iter().map(|x| (*x - max).exp()).sum();
    max + total.ln()
}

pub(crate) const LAYER_NORM_EPS: f64 = 1e-5;

/// Normalizes `x` in place into `xhat`, returning the reciprocal std.
pub(crate) fn normalize_row<T: Real>(x: &[T], xhat: &mut [T]) -> T {
    let d = T::of(x.len() as f64);
    let mean = x.iter().copied().sum::<T>() / d;
    let var = x.iter().map(|v| (*v - mean) * (*v - mean)).sum::<T>() / d;
    let rstd = T::one() / (var + T::of(LAYER_NORM_EPS)).sqrt();
    for (h, v) in xhat.iter_mut().zip(x) {
        *h = (*v - mean) * rstd;
    }
    rstd
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

pub(crate) fn gelu<T: Real>(x: T) -> T {
    let c = T::of(GELU_C);
    let a = T::of(GELU_A);
    T::of(0.5) * x * (T::one() + (c * (x + a * x * x * x)).tanh())
}

pub(crate) fn gelu_grad<T: Real>(x: T) -> T {
    let c = T::of(GELU_C);
    let a = T::of(GELU_A);
    let inner = c * (x + a * x * x * x);
    let th = inner.tanh();
    let sech2 = T::one() - th * th;
    T::of(0.5) * (T::one() + th) + T::of(0.5) * x * sech2 * c * (T::one() + T::of(3.0) * a * x * x)
}
