//! Minimal differentiable substrate.
//!
//! There is no tape: each layer exposes a forward pass that returns whatever
//! it needs to cache, and a backward pass that accumulates exact gradients
//! into the owning [`ParameterStore`]. Models are plain structs of parameter
//! handles, so the same model code runs in `f32` for training and in `f64`
//! for finite-difference checks.

mod adam;
mod gradcheck;
mod layers;
pub mod ops;
mod store;

pub use adam::Adam;
pub use gradcheck::{finite_difference, gradient_check, BlockReport, GradCheckOptions, GradReport};
pub use layers::{Embedding, Gru, GruStep, Linear, Mlp, MlpTrace};
pub use store::{Param, ParamId, ParameterStore, StoreError};

use core::fmt::Debug;
use core::iter::Sum;
use core::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::Float;

/// Floating point type the substrate runs on (`f32` or `f64`).
pub trait Real:
    Float
    + Default
    + Debug
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Send
    + Sync
    + 'static
{
    fn lit(x: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    fn lit(x: f64) -> Self {
        x as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    fn lit(x: f64) -> Self {
        x
    }
    fn as_f64(self) -> f64 {
        self
    }
}
