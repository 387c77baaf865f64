//! Adaptive-moment optimizer over flat parameter vectors.

use crate::error::{Error, Result};
use crate::num::Scalar;

/// Per-parameter moment accumulators plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState<T: Scalar> {
    pub learning_rate: T,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
    pub step: u64,
    pub first_moment: Vec<T>,
    pub second_moment: Vec<T>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(param_count: usize, learning_rate: T) -> Self {
        Self {
            learning_rate,
            beta1: T::of(0.9),
            beta2: T::of(0.999),
            epsilon: T::of(1e-8),
            step: 0,
            first_moment: vec![T::zero(); param_count],
            second_moment: vec![T::zero(); param_count],
        }
    }
}

/// One bias-corrected update in place. Rejects non-finite gradients and
/// never writes a non-finite parameter.
pub fn adam_step<T: Scalar>(params: &mut [T], grads: &[T], state: &mut AdamState<T>) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.first_moment.len() {
        return Err(Error::Shape(format!(
            "adam: params {} / grads {} / state {}",
            params.len(),
            grads.len(),
            state.first_moment.len()
        )));
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("gradient contains NaN or infinity".into()));
    }
    state.step += 1;
    let t = T::of(state.step as f64);
    let bc1 = T::one() - state.beta1.powf(t);
    let bc2 = T::one() - state.beta2.powf(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.first_moment[i] = state.beta1 * state.first_moment[i] + (T::one() - state.beta1) * g;
        state.second_moment[i] =
            state.beta2 * state.second_moment[i] + (T::one() - state.beta2) * g * g;
        let m_hat = state.first_moment[i] / bc1;
        let v_hat = state.second_moment[i] / bc2;
        let next = params[i] - state.learning_rate * m_hat / (v_hat.sqrt() + state.epsilon);
        if !next.is_finite() {
            return Err(Error::NonFinite(format!("parameter {i} became non-finite")));
        }
        params[i] = next;
    }
    Ok(())
}
