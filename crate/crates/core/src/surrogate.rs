//! Token-level clipped surrogate and the unified objective
//!
//! ```text
//! J = 1 / sum|o| * sum_i f_i * L_i,   L_i = sum_t min(r_it A_i, clip(r_it) A_i)
//! ```
//!
//! with an optional KL penalty `-beta * mean_t KL_t` per group. A batch holds
//! several groups; its objective and gradient are the mean over groups,
//! reduced in group order.

use rayon::prelude::*;

use crate::error::{domain, shape, Error, Result};
use crate::group::TokenId;
use crate::scalar::{compensated_sum, Scalar};
use crate::toy::{Context, PolicyParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipConfig<T> {
    pub eps_low: T,
    pub eps_high: T,
    /// KL coefficient beta; zero disables the penalty.
    pub kl_coeff: T,
}

impl<T: Scalar> ClipConfig<T> {
    pub fn new(eps_low: T, eps_high: T, kl_coeff: T) -> Result<Self> {
        let c = Self { eps_low, eps_high, kl_coeff };
        c.validate()?;
        Ok(c)
    }

    pub fn symmetric(eps: T) -> Result<Self> {
        Self::new(eps, eps, T::zero())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps_low > T::zero() && self.eps_low < T::one()) {
            return Err(domain(format!("eps_low must lie in (0, 1), got {}", self.eps_low)));
        }
        if !(self.eps_high > T::zero()) || !self.eps_high.is_finite() {
            return Err(domain(format!("eps_high must be positive, got {}", self.eps_high)));
        }
        if !(self.kl_coeff >= T::zero()) || !self.kl_coeff.is_finite() {
            return Err(domain(format!("kl_coeff must be nonnegative, got {}", self.kl_coeff)));
        }
        Ok(())
    }

    fn clamp(&self, ratio: T) -> T {
        ratio.max(T::one() - self.eps_low).min(T::one() + self.eps_high)
    }
}

impl<T: Scalar> Default for ClipConfig<T> {
    fn default() -> Self {
        Self { eps_low: T::of(0.2), eps_high: T::of(0.2), kl_coeff: T::zero() }
    }
}

/// `exp(new_logp - old_logp)`.
pub fn importance_ratio<T: Scalar>(new_logp: T, old_logp: T) -> Result<T> {
    if !new_logp.is_finite() || !old_logp.is_finite() {
        return Err(Error::NonFinite(format!("log-probs ({new_logp}, {old_logp})")));
    }
    Ok((new_logp - old_logp).exp())
}

pub fn clipped_token_term<T: Scalar>(ratio: T, advantage: T, clip: &ClipConfig<T>) -> Result<T> {
    if !(ratio > T::zero()) || !ratio.is_finite() {
        return Err(domain(format!("importance ratio must be positive, got {ratio}")));
    }
    if !advantage.is_finite() {
        return Err(Error::NonFinite(format!("advantage {advantage}")));
    }
    Ok(token_term(ratio, advantage, clip).0)
}

/// Value of the min and whether the unclipped branch attains it.
fn token_term<T: Scalar>(ratio: T, advantage: T, clip: &ClipConfig<T>) -> (T, bool) {
    let unclipped = ratio * advantage;
    let clipped = clip.clamp(ratio) * advantage;
    if unclipped <= clipped {
        (unclipped, true)
    } else {
        (clipped, false)
    }
}

/// `L_i`: sum of clipped token terms over one response's `(ratio, advantage)` pairs.
pub fn response_loss<T: Scalar>(tokens: &[(T, T)], clip: &ClipConfig<T>) -> Result<T> {
    if tokens.is_empty() {
        return Err(domain("response must contain at least one token"));
    }
    let terms = tokens.iter().map(|&(r, a)| clipped_token_term(r, a, clip)).collect::<Result<Vec<_>>>()?;
    Ok(compensated_sum(terms))
}

/// `(1 / total_tokens) * sum_i f_i L_i`.
pub fn unified_objective<T: Scalar>(f: &[T], losses: &[T], total_tokens: usize) -> Result<T> {
    if f.len() != losses.len() {
        return Err(shape(format!("{} weights for {} response losses", f.len(), losses.len())));
    }
    if total_tokens == 0 {
        return Err(domain("total_tokens must be positive"));
    }
    Ok(compensated_sum(f.iter().zip(losses).map(|(&fi, &li)| fi * li)) / T::of_usize(total_tokens))
}

/// Per-token estimator `exp(d) - d - 1` with `d = ref_logp - new_logp`.
pub fn kl_penalty<T: Scalar>(ref_logp: T, new_logp: T) -> Result<T> {
    if !ref_logp.is_finite() || !new_logp.is_finite() {
        return Err(Error::NonFinite(format!("log-probs ({ref_logp}, {new_logp})")));
    }
    Ok(kl_term(ref_logp, new_logp))
}

fn kl_term<T: Scalar>(ref_logp: T, new_logp: T) -> T {
    let d = ref_logp - new_logp;
    (d.exp() - d - T::one()).max(T::zero())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenRecord<T> {
    pub context: Context,
    pub token: TokenId,
    pub old_logp: T,
    pub ref_logp: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateResponse<T> {
    pub tokens: Vec<TokenRecord<T>>,
    /// Shared by every token of the response.
    pub advantage: T,
}

/// One rollout group with its aggregation weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateGroup<T> {
    pub responses: Vec<SurrogateResponse<T>>,
    pub f: Vec<T>,
}

impl<T: Scalar> SurrogateGroup<T> {
    pub fn total_tokens(&self) -> usize {
        self.responses.iter().map(|r| r.tokens.len()).sum()
    }

    fn validate(&self) -> Result<()> {
        if self.responses.is_empty() {
            return Err(domain("surrogate group is empty"));
        }
        if self.responses.len() != self.f.len() {
            return Err(shape(format!(
                "{} responses but {} weights",
                self.responses.len(),
                self.f.len()
            )));
        }
        if self.responses.iter().any(|r| r.tokens.is_empty()) {
            return Err(domain("surrogate response has no tokens"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SurrogateBatch<T> {
    pub groups: Vec<SurrogateGroup<T>>,
}

/// Objective, per-response losses and (optionally) the dense policy gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateEval<T> {
    pub objective: T,
    /// `L_i` for each response of each group.
    pub losses: Vec<Vec<T>>,
    pub grad: Option<Vec<T>>,
}

struct GroupEval<T> {
    objective: T,
    losses: Vec<T>,
    grad: Option<Vec<T>>,
}

impl<T: Scalar> SurrogateBatch<T> {
    pub fn objective(&self, policy: &PolicyParams<T>, clip: &ClipConfig<T>) -> Result<SurrogateEval<T>> {
        self.evaluate(policy, clip, false)
    }

    pub fn evaluate(
        &self,
        policy: &PolicyParams<T>,
        clip: &ClipConfig<T>,
        with_grad: bool,
    ) -> Result<SurrogateEval<T>> {
        clip.validate()?;
        if self.groups.is_empty() {
            return Err(domain("surrogate batch has no groups"));
        }
        let per_group = self
            .groups
            .par_iter()
            .map(|g| eval_group(g, policy, clip, with_grad))
            .collect::<Result<Vec<_>>>()?;

        let n = T::of_usize(per_group.len());
        let mut objective = T::zero();
        let mut grad = with_grad.then(|| vec![T::zero(); policy.num_params()]);
        let mut losses = Vec::with_capacity(per_group.len());
        for g in per_group {
            objective += g.objective;
            if let (Some(acc), Some(gg)) = (grad.as_mut(), g.grad.as_ref()) {
                acc.iter_mut().zip(gg).for_each(|(a, &b)| *a += b);
            }
            losses.push(g.losses);
        }
        if let Some(acc) = grad.as_mut() {
            acc.iter_mut().for_each(|a| *a /= n);
        }
        Ok(SurrogateEval { objective: objective / n, losses, grad })
    }
}

fn eval_group<T: Scalar>(
    group: &SurrogateGroup<T>,
    policy: &PolicyParams<T>,
    clip: &ClipConfig<T>,
    with_grad: bool,
) -> Result<GroupEval<T>> {
    group.validate()?;
    let vocab = policy.shape.vocab.size();
    let inv_total = T::one() / T::of_usize(group.total_tokens());
    let beta = clip.kl_coeff;
    let mut grad = with_grad.then(|| vec![T::zero(); policy.num_params()]);
    let mut losses = Vec::with_capacity(group.responses.len());
    let mut kl_terms = Vec::new();

    for (resp, &f) in group.responses.iter().zip(&group.f) {
        let mut terms = Vec::with_capacity(resp.tokens.len());
        for tok in &resp.tokens {
            let (new_logp, row_grad) = if with_grad {
                let (lp, g) = policy.logp_and_grad(tok.context, tok.token)?;
                (lp, Some(g))
            } else {
                (policy.logp(tok.context, tok.token)?, None)
            };
            let ratio = importance_ratio(new_logp, tok.old_logp)?;
            let (term, unclipped) = token_term(ratio, resp.advantage, clip);
            terms.push(term);

            // d(objective)/d(new_logp) for this token
            let mut coeff = if unclipped { f * inv_total * ratio * resp.advantage } else { T::zero() };
            if beta > T::zero() {
                kl_terms.push(kl_term(tok.ref_logp, new_logp));
                coeff -= beta * inv_total * (T::one() - (tok.ref_logp - new_logp).exp());
            }
            if let (Some(acc), Some(rg)) = (grad.as_mut(), row_grad) {
                if coeff != T::zero() {
                    let base = rg.row * vocab;
                    for (k, &v) in rg.values.iter().enumerate() {
                        acc[base + k] += coeff * v;
                    }
                }
            }
        }
        losses.push(compensated_sum(terms));
    }

    let mut objective = unified_objective(&group.f, &losses, group.total_tokens())?;
    if beta > T::zero() {
        objective -= beta * compensated_sum(kl_terms) * inv_total;
    }
    Ok(GroupEval { objective, losses, grad })
}

/// Analytic gradient of the batch objective with respect to every policy logit.
///
/// Tokens whose clipped branch strictly attains the min contribute nothing;
/// ties take the unclipped branch.
pub fn policy_gradient<T: Scalar>(
    batch: &SurrogateBatch<T>,
    clip: &ClipConfig<T>,
    policy: &PolicyParams<T>,
) -> Result<Vec<T>> {
    Ok(batch.evaluate(policy, clip, true)?.grad.expect("gradient requested"))
}
