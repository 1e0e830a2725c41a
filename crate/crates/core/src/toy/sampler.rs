use rand::Rng;

use super::policy::{Context, PolicyParams};
use super::task::ToyTask;
use super::vocab::Vocabulary;
use crate::error::{domain, Result};
use crate::group::{RolloutGroup, TokenId};
use crate::scalar::Scalar;

/// One ancestral sample from the policy.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledResponse<T> {
    pub tokens: Vec<TokenId>,
    /// Log-probability of each token under the sampling policy.
    pub logps: Vec<T>,
    /// Exactly one BOX, followed by exactly one digit, followed by EOS.
    pub well_formed: bool,
    pub answer: Option<u8>,
}

impl<T> SampledResponse<T> {
    pub fn from_tokens(tokens: Vec<TokenId>, logps: Vec<T>) -> Self {
        let answer = parse_answer(&tokens);
        Self { tokens, logps, well_formed: answer.is_some(), answer }
    }
}

fn parse_answer(tokens: &[TokenId]) -> Option<u8> {
    let (&last, body) = tokens.split_last()?;
    if last != Vocabulary::EOS {
        return None;
    }
    let mut boxes = body.iter().enumerate().filter(|(_, &t)| t == Vocabulary::BOX);
    let (pos, _) = boxes.next()?;
    if boxes.next().is_some() || body.len() != pos + 2 {
        return None;
    }
    let digit = body[pos + 1];
    Vocabulary::is_digit(digit).then(|| digit as u8)
}

/// Rule-based reward: +1 correct, -0.5 wrong answer in the right format,
/// -1 malformed (including truncated responses).
pub fn score_response<T: Scalar>(task: &ToyTask, response: &SampledResponse<T>) -> T {
    match response.answer {
        Some(a) if response.well_formed && a == task.target() => T::one(),
        Some(_) if response.well_formed => T::of(-0.5),
        _ => -T::one(),
    }
}

pub fn sample_response<T: Scalar, R: Rng>(
    policy: &PolicyParams<T>,
    task: &ToyTask,
    max_len: usize,
    rng: &mut R,
) -> Result<SampledResponse<T>> {
    let bucket = task.bucket(policy.shape.prompt_buckets);
    let mut prev = policy.shape.vocab.bos();
    let mut tokens = Vec::with_capacity(max_len);
    let mut logps = Vec::with_capacity(max_len);
    for position in 0..max_len {
        let lp = policy.log_probs(Context { bucket, position, prev })?;
        let tok = draw(&lp, rng);
        tokens.push(tok);
        logps.push(lp[tok]);
        if tok == Vocabulary::EOS {
            break;
        }
        prev = tok;
    }
    Ok(SampledResponse::from_tokens(tokens, logps))
}

fn draw<T: Scalar, R: Rng>(log_probs: &[T], rng: &mut R) -> TokenId {
    let u: f64 = rng.gen();
    let mut cum = 0.0;
    let mut last_nonzero = 0;
    for (k, &l) in log_probs.iter().enumerate() {
        let p = l.to_f64_lossy().exp();
        if p > 0.0 {
            last_nonzero = k;
        }
        cum += p;
        if u < cum {
            return k;
        }
    }
    last_nonzero
}

/// `group_size` independent samples for `task`, scored with [`score_response`].
pub fn sample_group<T: Scalar, R: Rng>(
    policy: &PolicyParams<T>,
    task: &ToyTask,
    group_size: usize,
    max_len: usize,
    prompt_id: u64,
    rng: &mut R,
) -> Result<(RolloutGroup<T>, Vec<SampledResponse<T>>)> {
    if group_size == 0 {
        return Err(domain("group_size must be at least 1"));
    }
    if max_len < 2 {
        return Err(domain(format!("max_len must be at least 2, got {max_len}")));
    }
    let responses = (0..group_size)
        .map(|_| sample_response(policy, task, max_len, rng))
        .collect::<Result<Vec<_>>>()?;
    let rewards = responses.iter().map(|r| score_response(task, r)).collect();
    let group = RolloutGroup::new(
        prompt_id,
        responses.iter().map(|r| r.tokens.clone()).collect(),
        rewards,
        responses.iter().map(|r| r.logps.clone()).collect(),
    )?;
    Ok((group, responses))
}

/// Mean per-token entropy of `policy` over every generated token of `group`.
pub fn policy_entropy<T: Scalar>(
    policy: &PolicyParams<T>,
    task: &ToyTask,
    group: &RolloutGroup<T>,
) -> Result<T> {
    let bucket = task.bucket(policy.shape.prompt_buckets);
    let mut total = T::zero();
    let mut count = 0usize;
    for tokens in &group.responses {
        for ctx in Context::for_response(&policy.shape, bucket, tokens) {
            total += policy.entropy(ctx)?;
            count += 1;
        }
    }
    Ok(total / T::of_usize(count))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toy::PolicyShape;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const BOX: TokenId = Vocabulary::BOX;
    const EOS: TokenId = Vocabulary::EOS;
    const FILL: TokenId = Vocabulary::FIRST_FILLER;

    fn resp(tokens: &[TokenId]) -> SampledResponse<f64> {
        SampledResponse::from_tokens(tokens.to_vec(), vec![0.0; tokens.len()])
    }

    fn shape() -> PolicyShape {
        PolicyShape::new(10, 2, Vocabulary::default()).unwrap()
    }

    #[test]
    fn reward_rule() {
        let task = ToyTask::new(3, 4).unwrap();
        assert_eq!(score_response(&task, &resp(&[BOX, 7, EOS])), 1.0);
        assert_eq!(score_response(&task, &resp(&[BOX, 9, EOS])), -0.5);
        assert_eq!(score_response(&task, &resp(&[FILL, 7, EOS])), -1.0);
    }

    #[test]
    fn format_edge_cases() {
        let task = ToyTask::new(3, 4).unwrap();
        // prefix before the box is allowed
        assert_eq!(score_response(&task, &resp(&[FILL, 2, BOX, 7, EOS])), 1.0);
        // trailing token after the answer digit
        assert_eq!(score_response(&task, &resp(&[BOX, 7, FILL, EOS])), -1.0);
        // two boxes
        assert_eq!(score_response(&task, &resp(&[BOX, BOX, 7, EOS])), -1.0);
        assert_eq!(score_response(&task, &resp(&[BOX, 1, BOX, 7, EOS])), -1.0);
        // truncated
        assert_eq!(score_response(&task, &resp(&[BOX, 7])), -1.0);
        // non-digit answer
        assert_eq!(score_response(&task, &resp(&[BOX, FILL, EOS])), -1.0);
        assert_eq!(score_response(&task, &resp(&[EOS])), -1.0);
    }

    #[test]
    fn seeded_groups_repeat() {
        let p = PolicyParams::<f64>::uniform(shape());
        let task = ToyTask::new(1, 2).unwrap();
        let a = sample_group(&p, &task, 4, 16, 0, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample_group(&p, &task, 4, 16, 0, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a.0, b.0);
        assert!(a.0.lengths.iter().all(|&l| (1..=16).contains(&l)));
    }

    fn deterministic_correct_policy(task: &ToyTask) -> PolicyParams<f64> {
        let mut p = PolicyParams::<f64>::uniform(shape());
        let bucket = task.bucket(10);
        let bos = p.shape.vocab.bos();
        let script = [(0, bos, BOX), (1, BOX, task.target() as usize), (2, task.target() as usize, EOS)];
        for (position, prev, tok) in script {
            let row = p.row_mut(Context { bucket, position, prev }).unwrap();
            row.iter_mut().for_each(|v| *v = -1e3);
            row[tok] = 1e3;
        }
        p
    }

    #[test]
    fn degenerate_policy_answers_correctly() {
        let task = ToyTask::new(3, 4).unwrap();
        let p = deterministic_correct_policy(&task);
        let (g, resps) = sample_group(&p, &task, 8, 16, 0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        for (r, toks) in resps.iter().zip(&g.responses) {
            assert_eq!(toks, &vec![BOX, 7, EOS]);
            assert!(r.well_formed);
        }
        assert!(g.rewards.iter().all(|&r| r == 1.0));
        assert!(policy_entropy(&p, &task, &g).unwrap() < 1e-12);
    }

    #[test]
    fn uniform_sampling_frequencies() {
        let p = PolicyParams::<f64>::uniform(shape());
        let task = ToyTask::new(0, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut counts = [0usize; 13];
        for _ in 0..10_000 {
            let r = sample_response(&p, &task, 16, &mut rng).unwrap();
            assert!(r.tokens.len() <= 16);
            assert_eq!(r.tokens.len(), r.logps.len());
            for &t in &r.tokens {
                counts[t] += 1;
            }
        }
        let n: usize = counts.iter().sum();
        let p0 = 1.0 / 13.0;
        let se = (p0 * (1.0 - p0) / n as f64).sqrt();
        for c in counts {
            let freq = c as f64 / n as f64;
            assert!((freq - p0).abs() < 3.0 * se, "freq {freq} vs {p0} (se {se})");
        }
    }

    #[test]
    fn uniform_entropy_and_mixture() {
        let task = ToyTask::new(3, 4).unwrap();
        let uni = PolicyParams::<f64>::uniform(shape());
        let g = sample_group(&uni, &task, 3, 16, 0, &mut ChaCha8Rng::seed_from_u64(4)).unwrap().0;
        assert_abs_diff_eq!(policy_entropy(&uni, &task, &g).unwrap(), 13f64.ln(), epsilon = 1e-12);

        // position-0 context one-hot, position-1 context uniform, two tokens each
        let mut p = PolicyParams::<f64>::uniform(shape());
        let bucket = task.bucket(10);
        let row = p.row_mut(Context { bucket, position: 0, prev: 13 }).unwrap();
        row.iter_mut().for_each(|v| *v = -1e3);
        row[FILL] = 1e3;
        let group =
            RolloutGroup::new(0, vec![vec![FILL, EOS], vec![FILL, EOS]], vec![-1.0, -1.0], vec![vec![0.0; 2]; 2]).unwrap();
        assert_abs_diff_eq!(policy_entropy(&p, &task, &group).unwrap(), 13f64.ln() / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn input_validation() {
        let p = PolicyParams::<f64>::uniform(shape());
        let task = ToyTask::new(1, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_group(&p, &task, 0, 16, 0, &mut rng).is_err());
        assert!(sample_group(&p, &task, 2, 1, 0, &mut rng).is_err());
    }
}
