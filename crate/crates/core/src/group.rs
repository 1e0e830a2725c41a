//! Group-level statistics for one prompt's rollouts: reward normalization into
//! advantages and response-length standardization.
//!
//! Both use the population standard deviation (divide by `G`). A group whose
//! members are all identical in a quantity maps to all zeros for it.

use crate::error::{domain, shape, Result};
use crate::scalar::Scalar;

pub type TokenId = usize;

/// Default floor on the reward standard deviation.
pub const DEFAULT_STD_FLOOR: f64 = 1e-6;

/// The `G` responses sampled for one prompt under the sampling policy.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutGroup<T> {
    pub prompt_id: u64,
    pub responses: Vec<Vec<TokenId>>,
    pub lengths: Vec<usize>,
    pub rewards: Vec<T>,
    /// Per-token log-probabilities recorded at sampling time.
    pub old_logps: Vec<Vec<T>>,
}

impl<T: Scalar> RolloutGroup<T> {
    pub fn new(
        prompt_id: u64,
        responses: Vec<Vec<TokenId>>,
        rewards: Vec<T>,
        old_logps: Vec<Vec<T>>,
    ) -> Result<Self> {
        let g = responses.len();
        if g == 0 {
            return Err(domain("rollout group must contain at least one response"));
        }
        if rewards.len() != g || old_logps.len() != g {
            return Err(shape(format!(
                "group of {g} responses has {} rewards and {} log-prob rows",
                rewards.len(),
                old_logps.len()
            )));
        }
        for (i, (resp, lps)) in responses.iter().zip(&old_logps).enumerate() {
            if resp.is_empty() {
                return Err(domain(format!("response {i} is empty")));
            }
            if resp.len() != lps.len() {
                return Err(shape(format!(
                    "response {i} has {} tokens but {} log-probs",
                    resp.len(),
                    lps.len()
                )));
            }
        }
        let lengths = responses.iter().map(Vec::len).collect();
        Ok(Self { prompt_id, responses, lengths, rewards, old_logps })
    }

    pub fn size(&self) -> usize {
        self.responses.len()
    }

    pub fn total_tokens(&self) -> usize {
        self.lengths.iter().sum()
    }

    pub fn stats(&self) -> Result<GroupStats<T>> {
        group_stats(&self.rewards, &self.lengths)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupStats<T> {
    pub mean_reward: T,
    pub std_reward: T,
    pub mean_len: T,
    pub std_len: T,
}

pub fn group_stats<T: Scalar>(rewards: &[T], lengths: &[usize]) -> Result<GroupStats<T>> {
    if rewards.is_empty() || lengths.is_empty() {
        return Err(domain("group statistics need a nonempty group"));
    }
    let lens: Vec<T> = lengths.iter().map(|&l| T::of_usize(l)).collect();
    let (mean_reward, std_reward) = mean_std(rewards);
    let (mean_len, std_len) = mean_std(&lens);
    Ok(GroupStats { mean_reward, std_reward, mean_len, std_len })
}

/// Mean and population standard deviation.
pub(crate) fn mean_std<T: Scalar>(xs: &[T]) -> (T, T) {
    let n = T::of_usize(xs.len());
    let mean = xs.iter().copied().sum::<T>() / n;
    if all_equal(xs) {
        return (mean, T::zero());
    }
    let var = xs.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / n;
    (mean, var.sqrt())
}

fn all_equal<T: PartialEq>(xs: &[T]) -> bool {
    xs.windows(2).all(|w| w[0] == w[1])
}

/// Group-normalized advantages `(R_i - mean) / max(std, std_floor)`.
///
/// Identical rewards give all zeros regardless of `std_floor`.
pub fn compute_advantages<T: Scalar>(rewards: &[T], std_floor: T) -> Result<Vec<T>> {
    if rewards.is_empty() {
        return Err(domain("cannot normalize an empty reward list"));
    }
    if !(std_floor >= T::zero()) {
        return Err(domain(format!("std_floor must be nonnegative, got {std_floor}")));
    }
    if rewards.iter().any(|r| !r.is_finite()) {
        return Err(domain("rewards must be finite"));
    }
    if all_equal(rewards) {
        return Ok(vec![T::zero(); rewards.len()]);
    }
    let (mean, std) = mean_std(rewards);
    let denom = std.max(std_floor);
    Ok(rewards.iter().map(|&r| (r - mean) / denom).collect())
}

/// Standardized lengths `z_i = (|o_i| - mu) / sigma`; all zeros when `sigma = 0`.
pub fn standardize_lengths<T: Scalar>(lengths: &[usize]) -> Result<Vec<T>> {
    if lengths.is_empty() {
        return Err(domain("cannot standardize an empty length list"));
    }
    if all_equal(lengths) {
        return Ok(vec![T::zero(); lengths.len()]);
    }
    let lens: Vec<T> = lengths.iter().map(|&l| T::of_usize(l)).collect();
    let (mean, std) = mean_std(&lens);
    Ok(lens.iter().map(|&l| (l - mean) / std).collect())
}
