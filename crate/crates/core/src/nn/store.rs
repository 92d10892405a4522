use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use thiserror::Error;

use super::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<T>,
    pub grad: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StoreError {
    #[error("parameter `{0}` already exists")]
    Duplicate(String),
    #[error("parameter `{name}` has shape {shape:?} ({expected} values) but {actual} values were given")]
    Size {
        name: String,
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },
    #[error("parameter `{0}` not found")]
    Missing(String),
    #[error("parameter `{name}` has shape {actual:?}, expected {expected:?}")]
    Shape {
        name: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
}

/// Named, shaped parameter blocks with gradient buffers, in insertion order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParameterStore<T> {
    params: Vec<Param<T>>,
    index: BTreeMap<String, ParamId>,
}

impl<T: Real> ParameterStore<T> {
    pub fn new() -> Self {
        Self {
            params: Vec::new(),
            index: BTreeMap::new(),
        }
    }

    pub fn add(&mut self, name: &str, shape: &[usize], value: Vec<T>) -> Result<ParamId, StoreError> {
        let expected: usize = shape.iter().product();
        if expected != value.len() {
            return Err(StoreError::Size {
                name: name.to_string(),
                shape: shape.to_vec(),
                expected,
                actual: value.len(),
            });
        }
        if self.index.contains_key(name) {
            return Err(StoreError::Duplicate(name.to_string()));
        }
        let id = ParamId(self.params.len());
        self.params.push(Param {
            name: name.to_string(),
            shape: shape.to_vec(),
            grad: vec![T::zero(); value.len()],
            value,
        });
        self.index.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn add_zeros(&mut self, name: &str, shape: &[usize]) -> Result<ParamId, StoreError> {
        self.add(name, shape, vec![T::zero(); shape.iter().product()])
    }

    /// Uniform(-a, a) with `a = sqrt(6 / (fan_in + fan_out))`.
    pub fn add_xavier<R: Rng + ?Sized>(
        &mut self,
        name: &str,
        shape: &[usize],
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> Result<ParamId, StoreError> {
        let a = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
        let n = shape.iter().product();
        let value = (0..n).map(|_| T::lit(rng.random_range(-a..a))).collect();
        self.add(name, shape, value)
    }

    pub fn id(&self, name: &str) -> Result<ParamId, StoreError> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| StoreError::Missing(name.to_string()))
    }

    /// Looks up `name` and checks its shape.
    pub fn expect(&self, name: &str, shape: &[usize]) -> Result<ParamId, StoreError> {
        let id = self.id(name)?;
        if self.params[id.0].shape != shape {
            return Err(StoreError::Shape {
                name: name.to_string(),
                expected: shape.to_vec(),
                actual: self.params[id.0].shape.clone(),
            });
        }
        Ok(id)
    }

    pub fn shape(&self, id: ParamId) -> &[usize] {
        &self.params[id.0].shape
    }

    pub fn shape_of(&self, name: &str) -> Result<&[usize], StoreError> {
        Ok(self.shape(self.id(name)?))
    }

    pub fn value(&self, id: ParamId) -> &[T] {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut [T] {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &[T] {
        &self.params[id.0].grad
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut [T] {
        &mut self.params[id.0].grad
    }

    /// Value and gradient of one block, borrowed together.
    pub fn split(&mut self, id: ParamId) -> (&[T], &mut [T]) {
        let p = &mut self.params[id.0];
        (&p.value, &mut p.grad)
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g = T::zero());
        }
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn element_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn grad_norm(&self) -> f64 {
        libm::sqrt(
            self.params
                .iter()
                .flat_map(|p| p.grad.iter())
                .map(|g| g.as_f64() * g.as_f64())
                .sum::<f64>(),
        )
    }

    /// Same blocks converted to another precision; gradients reset.
    pub fn cast<U: Real>(&self) -> ParameterStore<U> {
        let mut out = ParameterStore::new();
        for p in &self.params {
            out.add(&p.name, &p.shape, p.value.iter().map(|v| U::lit(v.as_f64())).collect())
                .expect("names unique in source");
        }
        out
    }

    /// Copies the values of every block of `other` whose name exists here.
    pub fn load_values(&mut self, other: &ParameterStore<T>) -> Result<(), StoreError> {
        for p in &other.params {
            let id = self.expect(&p.name, &p.shape)?;
            self.params[id.0].value.copy_from_slice(&p.value);
        }
        Ok(())
    }

    /// Blocks whose name starts with `prefix`, with the prefix removed.
    pub fn extract_prefixed(&self, prefix: &str) -> ParameterStore<T> {
        let mut out = ParameterStore::new();
        for p in &self.params {
            if let Some(rest) = p.name.strip_prefix(prefix) {
                out.add(rest, &p.shape, p.value.clone()).expect("unique");
            }
        }
        out
    }

    /// Appends all blocks of `other` under `prefix`.
    pub fn absorb_prefixed(&mut self, prefix: &str, other: &ParameterStore<T>) -> Result<(), StoreError> {
        for p in &other.params {
            let mut name = String::from(prefix);
            name.push_str(&p.name);
            self.add(&name, &p.shape, p.value.clone())?;
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.value.iter().all(|v| v.is_finite()))
    }
}
