//! The learnable preference exponent λ: analytic gradient of the unified
//! objective with respect to λ and its plain-SGD update.
//!
//! With `s = softmax(h^λ)` and `f = G s`, the objective
//! `J = (1 / sum|o|) * sum_i f_i L_i` has
//!
//! ```text
//! dJ/dλ = G / sum|o| * sum_i L_i s_i (h_i^λ ln h_i - sum_j s_j h_j^λ ln h_j)
//! ```
//!
//! The per-response losses `L_i` are constants here; λ's gradient never flows
//! through the policy's token terms.

use serde::{Deserialize, Serialize};

use crate::error::{domain, shape, Error, Result};
use crate::scalar::Scalar;
use crate::weighting::{powers, softmax};

pub const DEFAULT_LAMBDA_LR: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaState<T> {
    pub value: T,
    /// A rate of zero pins λ at its current value.
    pub learning_rate: T,
    pub steps_taken: u64,
}

impl<T: Scalar> LambdaState<T> {
    /// λ starts at zero, i.e. length-neutral weighting.
    pub fn new(learning_rate: T) -> Result<Self> {
        if !(learning_rate >= T::zero()) || !learning_rate.is_finite() {
            return Err(domain(format!("lambda learning rate must be >= 0, got {learning_rate}")));
        }
        Ok(Self { value: T::zero(), learning_rate, steps_taken: 0 })
    }
}

impl<T: Scalar> Default for LambdaState<T> {
    fn default() -> Self {
        Self { value: T::zero(), learning_rate: T::of(DEFAULT_LAMBDA_LR), steps_taken: 0 }
    }
}

pub fn lambda_gradient<T: Scalar>(
    per_response_losses: &[T],
    h: &[T],
    lambda: T,
    total_tokens: usize,
) -> Result<T> {
    if h.is_empty() {
        return Err(domain("lambda gradient needs a nonempty group"));
    }
    if per_response_losses.len() != h.len() {
        return Err(shape(format!(
            "{} losses for {} weights",
            per_response_losses.len(),
            h.len()
        )));
    }
    if total_tokens == 0 {
        return Err(domain("total_tokens must be positive"));
    }
    if let Some(bad) = h.iter().find(|&&v| !(v > T::zero())) {
        return Err(domain(format!("h must be strictly positive (clamp upstream), got {bad}")));
    }
    if !lambda.is_finite() {
        return Err(domain("lambda must be finite"));
    }

    let g = powers(h, lambda);
    let s = softmax(&g);
    let dg: Vec<T> = g.iter().zip(h).map(|(&gi, &hi)| gi * hi.ln()).collect();
    let mean_dg = s.iter().zip(&dg).map(|(&si, &di)| si * di).sum::<T>();
    let acc = per_response_losses
        .iter()
        .zip(&s)
        .zip(&dg)
        .map(|((&li, &si), &di)| li * si * (di - mean_dg))
        .sum::<T>();
    Ok(T::of_usize(h.len()) / T::of_usize(total_tokens) * acc)
}

/// One ascent step on J: `value += learning_rate * gradient`.
pub fn update_lambda<T: Scalar>(state: LambdaState<T>, gradient: T) -> Result<LambdaState<T>> {
    if !gradient.is_finite() {
        return Err(Error::NonFinite(format!("lambda gradient {gradient}")));
    }
    let value = state.value + state.learning_rate * gradient;
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("lambda update to {value}")));
    }
    Ok(LambdaState { value, learning_rate: state.learning_rate, steps_taken: state.steps_taken + 1 })
}
