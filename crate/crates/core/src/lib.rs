//! Unified token-preference policy optimization.
//!
//! GRPO, DAPO, Dr. GRPO and the learnable-λ weighting all share one
//! token-level clipped surrogate and differ only in the per-response
//! aggregation weight `f(o_i)`. This crate implements that shared objective,
//! the four weighting schemes, the analytic gradient of the objective with
//! respect to λ, and a small RLVR simulator (tabular autoregressive policy,
//! modular-sum task, rule-based reward) to exercise all of it end to end.
//!
//! The math modules are generic over [`Scalar`] (`f32` or `f64`). The
//! simulator and trainer run in `f64`; the aliases below name the concrete
//! types they use.

pub mod error;
pub mod gradcheck;
pub mod group;
pub mod lambda;
pub mod scalar;
pub mod surrogate;
pub mod toy;
pub mod train;
pub mod weighting;

pub use error::{Error, Result};
pub use group::{compute_advantages, group_stats, standardize_lengths, GroupStats, RolloutGroup};
pub use lambda::{lambda_gradient, update_lambda, LambdaState};
pub use scalar::{compensated_sum, Scalar};
pub use surrogate::{
    clipped_token_term, importance_ratio, kl_penalty, policy_gradient, response_loss,
    unified_objective, ClipConfig, SurrogateBatch, SurrogateResponse, TokenRecord,
};
pub use toy::{
    policy_entropy, sample_group, score_response, Context, PolicyParams, PolicyShape,
    SampledResponse, ToyTask, Vocabulary,
};
pub use weighting::{compute_h, compute_weights, softmax, WeightScheme, WeightVector};

pub type RolloutGroup64 = RolloutGroup<f64>;
pub type GroupStats64 = GroupStats<f64>;
pub type WeightScheme64 = WeightScheme<f64>;
pub type WeightVector64 = WeightVector<f64>;
pub type LambdaState64 = LambdaState<f64>;
pub type ClipConfig64 = ClipConfig<f64>;
pub type SurrogateBatch64 = SurrogateBatch<f64>;
pub type PolicyParams64 = PolicyParams<f64>;

pub type WeightVector32 = WeightVector<f32>;
pub type LambdaState32 = LambdaState<f32>;
pub type ClipConfig32 = ClipConfig<f32>;
