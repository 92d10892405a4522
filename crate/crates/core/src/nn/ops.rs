//! Elementwise and matrix-vector kernels with their backward passes.
//!
//! Matrices are row-major `rows x cols` slices.

use alloc::vec::Vec;

use super::Real;

/// `out = W x`.
pub fn matvec<T: Real>(w: &[T], rows: usize, cols: usize, x: &[T], out: &mut [T]) {
    assert_eq!(x.len(), cols, "matvec: input has {} values, weight is {rows}x{cols}", x.len());
    assert_eq!(out.len(), rows, "matvec: output has {} values, weight is {rows}x{cols}", out.len());
    for (r, o) in out.iter_mut().enumerate() {
        let row = &w[r * cols..(r + 1) * cols];
        let mut acc = T::zero();
        for (a, b) in row.iter().zip(x) {
            acc += *a * *b;
        }
        *o = acc;
    }
}

/// `dx += Wᵀ dy`.
pub fn matvec_t_acc<T: Real>(w: &[T], rows: usize, cols: usize, dy: &[T], dx: &mut [T]) {
    assert_eq!(dy.len(), rows, "matvec_t: gradient has {} values, weight is {rows}x{cols}", dy.len());
    assert_eq!(dx.len(), cols, "matvec_t: input gradient has {} values, weight is {rows}x{cols}", dx.len());
    for (r, &g) in dy.iter().enumerate() {
        if g == T::zero() {
            continue;
        }
        let row = &w[r * cols..(r + 1) * cols];
        for (d, a) in dx.iter_mut().zip(row) {
            *d += *a * g;
        }
    }
}

/// `dW += dy xᵀ`.
pub fn outer_acc<T: Real>(dw: &mut [T], rows: usize, cols: usize, dy: &[T], x: &[T]) {
    assert_eq!(dw.len(), rows * cols);
    for (r, &g) in dy.iter().enumerate() {
        if g == T::zero() {
            continue;
        }
        let row = &mut dw[r * cols..(r + 1) * cols];
        for (d, &v) in row.iter_mut().zip(x) {
            *d += g * v;
        }
    }
}

pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Derivative of sigmoid expressed through its output.
pub fn sigmoid_grad<T: Real>(y: T) -> T {
    y * (T::one() - y)
}

pub fn tanh_grad<T: Real>(y: T) -> T {
    T::one() - y * y
}

pub fn relu<T: Real>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        T::zero()
    }
}

pub fn relu_grad<T: Real>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else {
        T::zero()
    }
}

pub fn log_softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = max + logits.iter().map(|&l| (l - max).exp()).sum::<T>().ln();
    logits.iter().map(|&l| l - lse).collect()
}

/// Negative log-likelihood of `target` under `softmax(logits)` and its
/// gradient with respect to the logits.
pub fn softmax_cross_entropy<T: Real>(logits: &[T], target: usize) -> (T, Vec<T>) {
    assert!(target < logits.len(), "softmax_cross_entropy: target {target} outside {} classes", logits.len());
    let logp = log_softmax(logits);
    let loss = -logp[target];
    let mut grad: Vec<T> = logp.iter().map(|&l| l.exp()).collect();
    grad[target] -= T::one();
    (loss, grad)
}

pub fn squared_distance<T: Real>(a: &[T], b: &[T]) -> T {
    assert_eq!(a.len(), b.len(), "squared_distance: lengths {} and {}", a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

/// `d/da ‖a − b‖² = 2(a − b)`, scaled.
pub fn squared_distance_grad<T: Real>(a: &[T], b: &[T], scale: T) -> Vec<T> {
    let two = T::lit(2.0) * scale;
    a.iter().zip(b).map(|(&x, &y)| two * (x - y)).collect()
}

pub fn concat<T: Real>(a: &[T], b: &[T]) -> Vec<T> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    out.extend_from_slice(a);
    out.extend_from_slice(b);
    out
}

pub fn norm<T: Real>(a: &[T]) -> T {
    a.iter().map(|&x| x * x).sum::<T>().sqrt()
}

pub fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    for (b, &a) in y.iter_mut().zip(x) {
        *b += alpha * a;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_entropy_of_uniform_logits_is_log_v() {
        for v in [2usize, 5, 17] {
            let (loss, _) = softmax_cross_entropy(&alloc::vec![0.3f64; v], 1);
            assert!((loss - (v as f64).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn cross_entropy_of_confident_logits_is_zero() {
        let (loss, grad) = softmax_cross_entropy(&[0.0f64, 1e4, 0.0], 1);
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|g| g.abs() < 1e-300));
    }

    #[test]
    fn cross_entropy_hand_case() {
        // logits (1, 2, 3), target 0: -ln(e / (e + e^2 + e^3))
        let (loss, grad) = softmax_cross_entropy(&[1.0f64, 2.0, 3.0], 0);
        let z = 1f64.exp() + 2f64.exp() + 3f64.exp();
        assert!((loss - (z.ln() - 1.0)).abs() < 1e-12);
        assert!((grad[0] - (1f64.exp() / z - 1.0)).abs() < 1e-12);
        assert!((grad.iter().sum::<f64>()).abs() < 1e-12);
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(0.0f64), 0.5);
        assert!(sigmoid(-800.0f64) >= 0.0);
        assert_eq!(sigmoid(800.0f64), 1.0);
    }

    #[test]
    fn identity_matvec() {
        let w = [1.0f64, 0.0, 0.0, 1.0];
        let mut out = [0.0; 2];
        matvec(&w, 2, 2, &[3.0, -4.0], &mut out);
        assert_eq!(out, [3.0, -4.0]);
    }

    #[test]
    #[should_panic(expected = "matvec: input has 3 values, weight is 2x2")]
    fn shape_mismatch_names_both_shapes() {
        let mut out = [0.0f64; 2];
        matvec(&[0.0; 4], 2, 2, &[1.0, 2.0, 3.0], &mut out);
    }
}
