use alloc::vec;
use alloc::vec::Vec;

use super::{ParameterStore, Real};

/// Bias-corrected Adam with per-block moment buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(store: &ParameterStore<T>, lr: f64) -> Self {
        let zeros: Vec<Vec<T>> = store
            .params()
            .iter()
            .map(|p| vec![T::zero(); p.value.len()])
            .collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn with_betas(mut self, beta1: f64, beta2: f64) -> Self {
        self.beta1 = beta1;
        self.beta2 = beta2;
        self
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn moments(&self, block: usize) -> (&[T], &[T]) {
        (&self.m[block], &self.v[block])
    }

    /// Applies one update from the accumulated gradients, then zeroes them.
    pub fn step(&mut self, store: &mut ParameterStore<T>) {
        assert_eq!(self.m.len(), store.len(), "adam: state built for {} blocks, store has {}", self.m.len(), store.len());
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - libm::pow(self.beta1, t as f64);
        let c2 = 1.0 - libm::pow(self.beta2, t as f64);
        let (b1, b2) = (T::lit(self.beta1), T::lit(self.beta2));
        let (one_b1, one_b2) = (T::lit(1.0 - self.beta1), T::lit(1.0 - self.beta2));
        let step = T::lit(self.lr / c1);
        let inv_c2 = T::lit(1.0 / c2);
        let eps = T::lit(self.eps);
        for (i, p) in store.params_mut().iter_mut().enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for k in 0..p.value.len() {
                let g = p.grad[k];
                m[k] = b1 * m[k] + one_b1 * g;
                v[k] = b2 * v[k] + one_b2 * g * g;
                p.value[k] -= step * m[k] / ((v[k] * inv_c2).sqrt() + eps);
                p.grad[k] = T::zero();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(v: f64) -> ParameterStore<f64> {
        let mut s = ParameterStore::new();
        s.add("p", &[1], alloc::vec![v]).unwrap();
        s
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut s = scalar_store(0.0);
        let mut adam = Adam::new(&s, 1e-3);
        s.params_mut()[0].grad[0] = 1.0;
        adam.step(&mut s);
        // m̂ = 1, v̂ = 1: Δ = -lr / (1 + ε)
        let p = s.params()[0].value[0];
        assert!((p + 1e-3 / (1.0 + 1e-8)).abs() < 1e-15, "{p}");
        assert_eq!(s.params()[0].grad[0], 0.0);
    }

    #[test]
    fn zero_gradient_leaves_parameter() {
        let mut s = scalar_store(0.25);
        let mut adam = Adam::new(&s, 1e-3);
        adam.step(&mut s);
        assert_eq!(s.params()[0].value[0], 0.25);
    }

    #[test]
    fn two_steps_follow_moment_recursion() {
        let mut s = scalar_store(1.0);
        let mut adam = Adam::new(&s, 0.01);
        let g = 0.5;
        let mut expected = 1.0;
        let (mut m, mut v) = (0.0, 0.0);
        for t in 1..=2 {
            s.params_mut()[0].grad[0] = g;
            adam.step(&mut s);
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            expected -= 0.01 * mh / (vh.sqrt() + 1e-8);
            let (am, av) = adam.moments(0);
            assert!((am[0] - m).abs() < 1e-15 && (av[0] - v).abs() < 1e-15);
        }
        assert!((s.params()[0].value[0] - expected).abs() < 1e-12);
        assert_eq!(adam.steps(), 2);
    }
}
