use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::ops::{matvec, matvec_t_acc, outer_acc, relu, relu_grad, sigmoid, sigmoid_grad, tanh_grad};
use super::{ParamId, ParameterStore, Real, StoreError};

/// `y = W x + b` with `W` of shape `[out, in]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<T: Real, R: Rng + ?Sized>(
        store: &mut ParameterStore<T>,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut R,
    ) -> Result<Self, StoreError> {
        let w = store.add_xavier(&format!("{name}.w"), &[out_dim, in_dim], in_dim, out_dim, rng)?;
        let b = store.add_zeros(&format!("{name}.b"), &[out_dim])?;
        Ok(Self { w, b, in_dim, out_dim })
    }

    /// Binds to existing `{name}.w` / `{name}.b` blocks, taking dimensions from their shapes.
    pub fn bind<T: Real>(store: &ParameterStore<T>, name: &str) -> Result<Self, StoreError> {
        let shape = store.shape_of(&format!("{name}.w"))?.to_vec();
        if shape.len() != 2 {
            return Err(StoreError::Shape {
                name: format!("{name}.w"),
                expected: vec![0, 0],
                actual: shape,
            });
        }
        let (out_dim, in_dim) = (shape[0], shape[1]);
        Ok(Self {
            w: store.id(&format!("{name}.w"))?,
            b: store.expect(&format!("{name}.b"), &[out_dim])?,
            in_dim,
            out_dim,
        })
    }

    pub fn forward<T: Real>(&self, store: &ParameterStore<T>, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.out_dim];
        matvec(store.value(self.w), self.out_dim, self.in_dim, x, &mut y);
        for (o, &b) in y.iter_mut().zip(store.value(self.b)) {
            *o += b;
        }
        y
    }

    /// Accumulates `dW`, `db` and returns `dx`.
    pub fn backward<T: Real>(&self, store: &mut ParameterStore<T>, x: &[T], dy: &[T]) -> Vec<T> {
        let mut dx = vec![T::zero(); self.in_dim];
        self.backward_into(store, x, dy, Some(&mut dx));
        dx
    }

    pub fn backward_into<T: Real>(
        &self,
        store: &mut ParameterStore<T>,
        x: &[T],
        dy: &[T],
        dx: Option<&mut [T]>,
    ) {
        assert_eq!(dy.len(), self.out_dim, "linear backward: gradient has {} values, layer is {}x{}", dy.len(), self.out_dim, self.in_dim);
        {
            let (_, gw) = store.split(self.w);
            outer_acc(gw, self.out_dim, self.in_dim, dy, x);
        }
        for (g, &d) in store.grad_mut(self.b).iter_mut().zip(dy) {
            *g += d;
        }
        if let Some(dx) = dx {
            matvec_t_acc(store.value(self.w), self.out_dim, self.in_dim, dy, dx);
        }
    }
}

/// Lookup table of shape `[vocab, dim]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Embedding {
    pub table: ParamId,
    pub vocab: usize,
    pub dim: usize,
}

impl Embedding {
    pub fn new<T: Real, R: Rng + ?Sized>(
        store: &mut ParameterStore<T>,
        name: &str,
        vocab: usize,
        dim: usize,
        rng: &mut R,
    ) -> Result<Self, StoreError> {
        let table = store.add_xavier(name, &[vocab, dim], vocab, dim, rng)?;
        Ok(Self { table, vocab, dim })
    }

    pub fn bind<T: Real>(store: &ParameterStore<T>, name: &str) -> Result<Self, StoreError> {
        let id = store.id(name)?;
        let shape = store.shape(id);
        if shape.len() != 2 {
            return Err(StoreError::Shape {
                name: name.into(),
                expected: vec![0, 0],
                actual: shape.to_vec(),
            });
        }
        Ok(Self {
            table: id,
            vocab: shape[0],
            dim: shape[1],
        })
    }

    pub fn lookup<'a, T: Real>(&self, store: &'a ParameterStore<T>, id: u32) -> &'a [T] {
        let i = id as usize;
        assert!(i < self.vocab, "embedding lookup: id {i} outside vocabulary of {}", self.vocab);
        &store.value(self.table)[i * self.dim..(i + 1) * self.dim]
    }

    pub fn backward<T: Real>(&self, store: &mut ParameterStore<T>, id: u32, dy: &[T]) {
        let i = id as usize;
        let row = &mut store.grad_mut(self.table)[i * self.dim..(i + 1) * self.dim];
        for (g, &d) in row.iter_mut().zip(dy) {
            *g += d;
        }
    }
}

/// GRU cell with gate blocks stacked as `[r; z; n]`:
///
/// ```text
/// r  = σ(W_r x + U_r h + b_r)
/// z  = σ(W_z x + U_z h + b_z)
/// n  = tanh(W_n x + U_n (r ⊙ h) + b_n)
/// h' = (1 − z) ⊙ h + z ⊙ n
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Gru {
    pub w: ParamId,
    pub u: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

/// Everything the backward pass of one GRU step needs.
#[derive(Debug, Clone, PartialEq)]
pub struct GruStep<T> {
    pub x: Vec<T>,
    pub h_prev: Vec<T>,
    pub r: Vec<T>,
    pub z: Vec<T>,
    pub n: Vec<T>,
    pub rh: Vec<T>,
    pub h: Vec<T>,
}

impl Gru {
    pub fn new<T: Real, R: Rng + ?Sized>(
        store: &mut ParameterStore<T>,
        name: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self, StoreError> {
        let w = store.add_xavier(&format!("{name}.w"), &[3 * hidden, input], input, hidden, rng)?;
        let u = store.add_xavier(&format!("{name}.u"), &[3 * hidden, hidden], hidden, hidden, rng)?;
        let b = store.add_zeros(&format!("{name}.b"), &[3 * hidden])?;
        Ok(Self { w, u, b, input, hidden })
    }

    pub fn bind<T: Real>(store: &ParameterStore<T>, name: &str) -> Result<Self, StoreError> {
        let shape = store.shape_of(&format!("{name}.w"))?.to_vec();
        if shape.len() != 2 || shape[0] % 3 != 0 {
            return Err(StoreError::Shape {
                name: format!("{name}.w"),
                expected: vec![0, 0],
                actual: shape,
            });
        }
        let (hidden, input) = (shape[0] / 3, shape[1]);
        Ok(Self {
            w: store.id(&format!("{name}.w"))?,
            u: store.expect(&format!("{name}.u"), &[3 * hidden, hidden])?,
            b: store.expect(&format!("{name}.b"), &[3 * hidden])?,
            input,
            hidden,
        })
    }

    pub fn step<T: Real>(&self, store: &ParameterStore<T>, x: &[T], h_prev: &[T]) -> GruStep<T> {
        let hd = self.hidden;
        assert_eq!(h_prev.len(), hd, "gru step: state has {} values, cell has {hd}", h_prev.len());
        let w = store.value(self.w);
        let u = store.value(self.u);
        let b = store.value(self.b);
        let mut wx = vec![T::zero(); 3 * hd];
        matvec(w, 3 * hd, self.input, x, &mut wx);
        let mut uh = vec![T::zero(); 2 * hd];
        matvec(&u[..2 * hd * hd], 2 * hd, hd, h_prev, &mut uh);
        let r: Vec<T> = (0..hd).map(|k| sigmoid(wx[k] + uh[k] + b[k])).collect();
        let z: Vec<T> = (0..hd)
            .map(|k| sigmoid(wx[hd + k] + uh[hd + k] + b[hd + k]))
            .collect();
        let rh: Vec<T> = r.iter().zip(h_prev).map(|(&a, &c)| a * c).collect();
        let mut urh = vec![T::zero(); hd];
        matvec(&u[2 * hd * hd..], hd, hd, &rh, &mut urh);
        let n: Vec<T> = (0..hd)
            .map(|k| (wx[2 * hd + k] + urh[k] + b[2 * hd + k]).tanh())
            .collect();
        let h: Vec<T> = (0..hd)
            .map(|k| (T::one() - z[k]) * h_prev[k] + z[k] * n[k])
            .collect();
        GruStep {
            x: x.to_vec(),
            h_prev: h_prev.to_vec(),
            r,
            z,
            n,
            rh,
            h,
        }
    }

    /// Accumulates parameter gradients for one step and returns `(dx, dh_prev)`.
    pub fn step_backward<T: Real>(
        &self,
        store: &mut ParameterStore<T>,
        s: &GruStep<T>,
        dh: &[T],
    ) -> (Vec<T>, Vec<T>) {
        let hd = self.hidden;
        let mut da = vec![T::zero(); 3 * hd];
        let mut dh_prev = vec![T::zero(); hd];
        for k in 0..hd {
            let dn = dh[k] * s.z[k];
            let dz = dh[k] * (s.n[k] - s.h_prev[k]);
            dh_prev[k] = dh[k] * (T::one() - s.z[k]);
            da[hd + k] = dz * sigmoid_grad(s.z[k]);
            da[2 * hd + k] = dn * tanh_grad(s.n[k]);
        }
        // through the candidate's recurrent term U_n (r ⊙ h)
        let mut drh = vec![T::zero(); hd];
        matvec_t_acc(&store.value(self.u)[2 * hd * hd..], hd, hd, &da[2 * hd..], &mut drh);
        for k in 0..hd {
            dh_prev[k] += drh[k] * s.r[k];
            da[k] = drh[k] * s.h_prev[k] * sigmoid_grad(s.r[k]);
        }
        matvec_t_acc(&store.value(self.u)[..2 * hd * hd], 2 * hd, hd, &da[..2 * hd], &mut dh_prev);
        let mut dx = vec![T::zero(); self.input];
        matvec_t_acc(store.value(self.w), 3 * hd, self.input, &da, &mut dx);

        outer_acc(store.grad_mut(self.w), 3 * hd, self.input, &da, &s.x);
        {
            let gu = store.grad_mut(self.u);
            outer_acc(&mut gu[..2 * hd * hd], 2 * hd, hd, &da[..2 * hd], &s.h_prev);
            outer_acc(&mut gu[2 * hd * hd..], hd, hd, &da[2 * hd..], &s.rh);
        }
        for (g, &d) in store.grad_mut(self.b).iter_mut().zip(&da) {
            *g += d;
        }
        (dx, dh_prev)
    }
}

/// Two linear layers with a ReLU in between.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mlp {
    pub l1: Linear,
    pub l2: Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpTrace<T> {
    pub x: Vec<T>,
    pub pre: Vec<T>,
    pub hidden: Vec<T>,
    pub out: Vec<T>,
}

impl Mlp {
    pub fn new<T: Real, R: Rng + ?Sized>(
        store: &mut ParameterStore<T>,
        name: &str,
        input: usize,
        hidden: usize,
        output: usize,
        rng: &mut R,
    ) -> Result<Self, StoreError> {
        Ok(Self {
            l1: Linear::new(store, &format!("{name}.l1"), input, hidden, rng)?,
            l2: Linear::new(store, &format!("{name}.l2"), hidden, output, rng)?,
        })
    }

    pub fn bind<T: Real>(store: &ParameterStore<T>, name: &str) -> Result<Self, StoreError> {
        let l1 = Linear::bind(store, &format!("{name}.l1"))?;
        let l2 = Linear::bind(store, &format!("{name}.l2"))?;
        if l2.in_dim != l1.out_dim {
            return Err(StoreError::Shape {
                name: format!("{name}.l2.w"),
                expected: vec![l2.out_dim, l1.out_dim],
                actual: vec![l2.out_dim, l2.in_dim],
            });
        }
        Ok(Self { l1, l2 })
    }

    pub fn input_dim(&self) -> usize {
        self.l1.in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.l2.out_dim
    }

    pub fn forward<T: Real>(&self, store: &ParameterStore<T>, x: &[T]) -> MlpTrace<T> {
        let pre = self.l1.forward(store, x);
        let hidden: Vec<T> = pre.iter().map(|&v| relu(v)).collect();
        let out = self.l2.forward(store, &hidden);
        MlpTrace {
            x: x.to_vec(),
            pre,
            hidden,
            out,
        }
    }

    /// Parameter gradients are accumulated; `dx` is computed only when asked.
    pub fn backward<T: Real>(
        &self,
        store: &mut ParameterStore<T>,
        trace: &MlpTrace<T>,
        dout: &[T],
        want_dx: bool,
    ) -> Option<Vec<T>> {
        let mut dh = self.l2.backward(store, &trace.hidden, dout);
        for (g, &p) in dh.iter_mut().zip(&trace.pre) {
            *g *= relu_grad(p);
        }
        if want_dx {
            Some(self.l1.backward(store, &trace.x, &dh))
        } else {
            self.l1.backward_into(store, &trace.x, &dh, None);
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{gradient_check, GradCheckOptions};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gru_with_zero_weights_halves_the_state() {
        let mut store = ParameterStore::<f64>::new();
        let gru = Gru::new(&mut store, "g", 3, 4, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        for p in store.params_mut() {
            p.value.iter_mut().for_each(|v| *v = 0.0);
        }
        let s = gru.step(&store, &[0.3, -1.0, 2.0], &[1.0; 4]);
        assert_eq!(s.z, [0.5; 4]);
        assert_eq!(s.n, [0.0; 4]);
        assert_eq!(s.h, [0.5; 4]);
    }

    #[test]
    fn identity_linear_is_passthrough() {
        let mut store = ParameterStore::<f64>::new();
        let lin = Linear::new(&mut store, "l", 3, 3, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let w = store.value_mut(lin.w);
        w.iter_mut().enumerate().for_each(|(i, v)| *v = if i % 4 == 0 { 1.0 } else { 0.0 });
        assert_eq!(lin.forward(&store, &[1.5, -2.0, 0.25]), [1.5, -2.0, 0.25]);
    }

    #[test]
    fn bind_recovers_dimensions() {
        let mut store = ParameterStore::<f32>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let gru = Gru::new(&mut store, "g", 5, 7, &mut rng).unwrap();
        let mlp = Mlp::new(&mut store, "m", 4, 6, 2, &mut rng).unwrap();
        assert_eq!(Gru::bind(&store, "g").unwrap(), gru);
        assert_eq!(Mlp::bind(&store, "m").unwrap(), mlp);
        assert!(Linear::bind(&store, "nope").is_err());
    }

    /// Random GRU cell (x ∈ R³, h ∈ R⁴), loss = Σ h'. Inputs are parameters
    /// too so their gradients are checked.
    #[test]
    fn gru_step_matches_central_differences() {
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut store = ParameterStore::<f64>::new();
            let gru = Gru::new(&mut store, "g", 3, 4, &mut rng).unwrap();
            // non-zero biases so every gate term is exercised
            for v in store.value_mut(gru.b) {
                *v = rng.random_range(-0.5..0.5);
            }
            let x = store.add_xavier("x", &[3], 1, 1, &mut rng).unwrap();
            let h = store.add_xavier("h", &[4], 1, 1, &mut rng).unwrap();
            let report = gradient_check(
                core::slice::from_mut(&mut store),
                |stores| {
                    let s = &mut stores[0];
                    let xs = s.value(x).to_vec();
                    let hs = s.value(h).to_vec();
                    let step = gru.step(s, &xs, &hs);
                    let (dx, dh) = gru.step_backward(s, &step, &[1.0; 4]);
                    s.grad_mut(x).iter_mut().zip(&dx).for_each(|(g, d)| *g += d);
                    s.grad_mut(h).iter_mut().zip(&dh).for_each(|(g, d)| *g += d);
                    step.h.iter().sum()
                },
                GradCheckOptions { delta: 1e-5, tolerance: 1e-6 },
            );
            assert!(report.passed(), "seed {seed}: {report:?}");
        }
    }

    #[test]
    fn mlp_and_embedding_match_central_differences() {
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let mut store = ParameterStore::<f64>::new();
            let emb = Embedding::new(&mut store, "e", 5, 3, &mut rng).unwrap();
            let mlp = Mlp::new(&mut store, "m", 3, 6, 2, &mut rng).unwrap();
            for v in store.value_mut(mlp.l1.b) {
                *v = rng.random_range(-0.3..0.3);
            }
            let target = [0.7, -0.2];
            let report = gradient_check(
                core::slice::from_mut(&mut store),
                |stores| {
                    let s = &mut stores[0];
                    let mut loss = 0.0;
                    for id in [1u32, 3, 1] {
                        let x = emb.lookup(s, id).to_vec();
                        let tr = mlp.forward(s, &x);
                        loss += crate::nn::ops::squared_distance(&tr.out, &target);
                        let dout = crate::nn::ops::squared_distance_grad(&tr.out, &target, 1.0);
                        let dx = mlp.backward(s, &tr, &dout, true).unwrap();
                        emb.backward(s, id, &dx);
                    }
                    loss
                },
                GradCheckOptions::default(),
            );
            assert!(report.passed(), "seed {seed}: {report:?}");
        }
    }
}
