use alloc::string::String;
use alloc::vec::Vec;

use super::ParameterStore;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub delta: f64,
    /// Maximum accepted relative error.
    pub tolerance: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            delta: 1e-5,
            tolerance: 1e-4,
        }
    }
}

/// Relative errors are taken against `max(|analytic|, |numeric|, FLOOR)`, so
/// gradients far below the floor are compared in absolute terms.
const FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct BlockReport {
    pub store: usize,
    pub name: String,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub worst_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    pub blocks: Vec<BlockReport>,
    pub tolerance: f64,
}

impl GradReport {
    pub fn max_rel_err(&self) -> f64 {
        self.blocks.iter().map(|b| b.max_rel_err).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_err() < self.tolerance
    }

    pub fn failures(&self) -> impl Iterator<Item = &BlockReport> {
        self.blocks.iter().filter(move |b| !(b.max_rel_err < self.tolerance))
    }
}

/// Central differences of a scalar function of a point.
pub fn finite_difference<F: FnMut(&[f64]) -> f64>(mut f: F, point: &[f64], delta: f64) -> Vec<f64> {
    let mut x = point.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + delta;
            let plus = f(&x);
            x[i] = orig - delta;
            let minus = f(&x);
            x[i] = orig;
            (plus - minus) / (2.0 * delta)
        })
        .collect()
}

/// Compares the gradients a loss closure accumulates into `stores` with
/// central differences of the loss value, element by element.
///
/// The closure must compute the loss from the current parameter values and
/// add its gradient into the stores' gradient buffers.
pub fn gradient_check<F>(
    stores: &mut [ParameterStore<f64>],
    mut loss: F,
    opts: GradCheckOptions,
) -> GradReport
where
    F: FnMut(&mut [ParameterStore<f64>]) -> f64,
{
    stores.iter_mut().for_each(ParameterStore::zero_grad);
    loss(stores);
    let analytic: Vec<Vec<Vec<f64>>> = stores
        .iter()
        .map(|s| s.params().iter().map(|p| p.grad.clone()).collect())
        .collect();

    let mut blocks = Vec::new();
    for si in 0..stores.len() {
        for pi in 0..stores[si].len() {
            let mut block = BlockReport {
                store: si,
                name: stores[si].params()[pi].name.clone(),
                max_rel_err: 0.0,
                max_abs_err: 0.0,
                worst_index: 0,
            };
            for e in 0..stores[si].params()[pi].value.len() {
                let orig = stores[si].params()[pi].value[e];
                stores[si].params_mut()[pi].value[e] = orig + opts.delta;
                let plus = loss(stores);
                stores[si].params_mut()[pi].value[e] = orig - opts.delta;
                let minus = loss(stores);
                stores[si].params_mut()[pi].value[e] = orig;
                let numeric = (plus - minus) / (2.0 * opts.delta);
                let a = analytic[si][pi][e];
                let abs = libm::fabs(a - numeric);
                let rel = abs / libm::fabs(a).max(libm::fabs(numeric)).max(FLOOR);
                // NaN counts as failure
                if !(rel <= block.max_rel_err) {
                    block.max_rel_err = if rel.is_nan() { f64::INFINITY } else { rel };
                    block.worst_index = e;
                }
                block.max_abs_err = block.max_abs_err.max(abs);
            }
            blocks.push(block);
        }
    }
    stores.iter_mut().for_each(ParameterStore::zero_grad);
    GradReport {
        blocks,
        tolerance: opts.tolerance,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> ParameterStore<f64> {
        let mut s = ParameterStore::new();
        s.add("w", &[3], alloc::vec![0.5, -1.0, 2.0]).unwrap();
        s
    }

    #[test]
    fn quadratic_passes() {
        let mut stores = [store()];
        let report = gradient_check(
            &mut stores,
            |s| {
                let w = s[0].value(s[0].id("w").unwrap()).to_vec();
                for (g, v) in s[0].params_mut()[0].grad.iter_mut().zip(&w) {
                    *g += 2.0 * v;
                }
                w.iter().map(|v| v * v).sum()
            },
            GradCheckOptions::default(),
        );
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn constant_loss_has_exactly_zero_gradients() {
        let mut stores = [store()];
        let report = gradient_check(&mut stores, |_| 3.0, GradCheckOptions::default());
        assert_eq!(report.blocks[0].max_abs_err, 0.0);
        assert!(report.passed());
    }

    #[test]
    fn corrupted_backward_is_caught() {
        let mut stores = [store()];
        let report = gradient_check(
            &mut stores,
            |s| {
                let w = s[0].params()[0].value.clone();
                for (g, v) in s[0].params_mut()[0].grad.iter_mut().zip(&w) {
                    *g += 2.1 * v; // wrong factor
                }
                w.iter().map(|v| v * v).sum()
            },
            GradCheckOptions::default(),
        );
        assert!(!report.passed());
        assert_eq!(report.failures().count(), 1);
    }

    #[test]
    fn finite_difference_of_product() {
        let g = finite_difference(|x| x[0] * x[1], &[3.0, 4.0], 1e-6);
        assert!((g[0] - 4.0).abs() < 1e-8 && (g[1] - 3.0).abs() < 1e-8);
    }
}
