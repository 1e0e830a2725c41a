#![allow(dead_code)]

use lambda_grpo::surrogate::{SurrogateGroup, SurrogateResponse, TokenRecord};
use lambda_grpo::{
    compute_advantages, compute_weights, sample_group, ClipConfig, Context, PolicyParams, PolicyShape,
    SurrogateBatch, ToyTask, Vocabulary, WeightScheme,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_policy(shape: PolicyShape, scale: f64, rng: &mut ChaCha8Rng) -> PolicyParams<f64> {
    let logits = (0..shape.num_params()).map(|_| rng.gen_range(-scale..scale)).collect();
    PolicyParams::from_logits(shape, logits).unwrap()
}

/// Groups sampled from `old`, scored and weighted, with reference log-probs
/// taken from `reference`.
pub fn sampled_batch(
    old: &PolicyParams<f64>,
    reference: &PolicyParams<f64>,
    scheme: &WeightScheme<f64>,
    lambda: f64,
    groups: usize,
    group_size: usize,
    seed: u64,
) -> SurrogateBatch<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for p in 0..groups {
        let task = ToyTask::new(rng.gen_range(0..10), rng.gen_range(0..10)).unwrap();
        let (group, _) = sample_group(old, &task, group_size, 6, p as u64, &mut rng).unwrap();
        // rewards here are mostly identical; use random ones so advantages are nonzero
        let rewards: Vec<f64> = (0..group_size).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let adv = compute_advantages(&rewards, 1e-6).unwrap();
        let w = compute_weights(scheme, &group.lengths, lambda).unwrap();
        let bucket = task.bucket(old.shape.prompt_buckets);
        let responses = group
            .responses
            .iter()
            .zip(&group.old_logps)
            .zip(&adv)
            .map(|((toks, olds), &a)| SurrogateResponse {
                tokens: Context::for_response(&old.shape, bucket, toks)
                    .into_iter()
                    .zip(toks)
                    .zip(olds)
                    .map(|((context, &token), &old_logp)| TokenRecord {
                        context,
                        token,
                        old_logp,
                        ref_logp: reference.logp(context, token).unwrap(),
                    })
                    .collect(),
                advantage: a,
            })
            .collect();
        out.push(SurrogateGroup { responses, f: w.f });
    }
    SurrogateBatch { groups: out }
}

/// Smallest distance of any token ratio from a clip boundary.
pub fn clip_margin(batch: &SurrogateBatch<f64>, policy: &PolicyParams<f64>, clip: &ClipConfig<f64>) -> f64 {
    let mut m = f64::INFINITY;
    for g in &batch.groups {
        for r in &g.responses {
            for t in &r.tokens {
                let ratio = (policy.logp(t.context, t.token).unwrap() - t.old_logp).exp();
                m = m.min((ratio - (1.0 - clip.eps_low)).abs()).min((ratio - (1.0 + clip.eps_high)).abs());
            }
        }
    }
    m
}

pub fn small_shape() -> PolicyShape {
    PolicyShape::new(2, 2, Vocabulary::default()).unwrap()
}

/// Independent relative error with the same small-magnitude floor as the library.
pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
    }
}
