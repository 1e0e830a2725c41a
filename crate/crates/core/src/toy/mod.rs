//! Desk-scale RLVR environment: a modular-sum digit task with a rule-based
//! reward, and a tabular autoregressive categorical policy with exact
//! log-probabilities, gradients and entropies.

mod policy;
mod sampler;
mod task;
mod vocab;

pub use policy::{Context, PolicyParams, PolicyShape, RowGrad};
pub use sampler::{policy_entropy, sample_group, sample_response, score_response, SampledResponse};
pub use task::{TaskSet, ToyTask};
pub use vocab::Vocabulary;
