//! Minimal self-contained neural kernel: dense layers, an LSTM cell with
//! backpropagation through time, and an adaptive-moment optimizer. Small by
//! design; everything runs in 64-bit by default for debuggability.

pub mod adam;
pub mod checkpoint;
pub mod dense;
pub mod gradcheck;
pub mod lstm;
pub mod tensor;

pub use adam::{adam_step, AdamState};
pub use checkpoint::Checkpoint;
pub use dense::{DenseGrads, DenseLayer, Mlp, MlpTrace};
pub use gradcheck::{central_difference, grad_check, max_rel_error, GradCheckReport};
pub use lstm::{LstmCell, LstmGrads, LstmTrace};
pub use tensor::Tensor;

use crate::num::Scalar;
use rand::Rng;

/// Glorot-uniform draw in +/- sqrt(6 / (fan_in + fan_out)).
pub(crate) fn glorot<T: Scalar, R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> T {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    T::of(rng.gen_range(-limit..limit))
}
