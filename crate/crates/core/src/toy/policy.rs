use serde::{Deserialize, Serialize};

use super::vocab::Vocabulary;
use crate::error::{domain, shape, Result};
use crate::group::TokenId;
use crate::scalar::Scalar;

/// Dimensions of the logit table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyShape {
    pub prompt_buckets: usize,
    /// Positions at or beyond the last bucket share it.
    pub position_buckets: usize,
    pub vocab: Vocabulary,
}

impl PolicyShape {
    pub fn new(prompt_buckets: usize, position_buckets: usize, vocab: Vocabulary) -> Result<Self> {
        if prompt_buckets == 0 || position_buckets == 0 {
            return Err(domain("policy needs at least one prompt and one position bucket"));
        }
        Ok(Self { prompt_buckets, position_buckets, vocab })
    }

    /// Previous-token slots: every vocabulary token plus BOS.
    pub fn prev_slots(&self) -> usize {
        self.vocab.size() + 1
    }

    pub fn rows(&self) -> usize {
        self.prompt_buckets * self.position_buckets * self.prev_slots()
    }

    pub fn num_params(&self) -> usize {
        self.rows() * self.vocab.size()
    }

    pub fn row_index(&self, ctx: Context) -> Result<usize> {
        if ctx.bucket >= self.prompt_buckets || ctx.prev >= self.prev_slots() {
            return Err(domain(format!("context {ctx:?} outside policy table")));
        }
        let pos = ctx.position.min(self.position_buckets - 1);
        Ok((ctx.bucket * self.position_buckets + pos) * self.prev_slots() + ctx.prev)
    }
}

/// Where a token is generated: prompt bucket, position in the response, and
/// the previous token (BOS at position 0).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Context {
    pub bucket: usize,
    pub position: usize,
    pub prev: TokenId,
}

impl Context {
    /// Contexts for every token of `tokens`.
    pub fn for_response(shape: &PolicyShape, bucket: usize, tokens: &[TokenId]) -> Vec<Context> {
        let bos = shape.vocab.bos();
        tokens
            .iter()
            .enumerate()
            .map(|(t, _)| Context { bucket, position: t, prev: if t == 0 { bos } else { tokens[t - 1] } })
            .collect()
    }
}

/// Gradient of one log-probability: nonzero only on a single logit row.
#[derive(Debug, Clone, PartialEq)]
pub struct RowGrad<T> {
    pub row: usize,
    pub values: Vec<T>,
}

/// Tabular logits indexed by (prompt bucket, position bucket, previous token).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams<T> {
    pub shape: PolicyShape,
    pub logits: Vec<T>,
}

impl<T: Scalar> PolicyParams<T> {
    /// All-zero logits: uniform over the vocabulary at every context.
    pub fn uniform(shape: PolicyShape) -> Self {
        Self { shape, logits: vec![T::zero(); shape.num_params()] }
    }

    /// A "pretrained" starting point that already leans toward the answer
    /// format: BOX first, any digit after BOX, EOS after a digit. `bias` is
    /// added to those logits in every prompt bucket; digits stay uniform, so
    /// the answer itself still has to be learned from reward.
    pub fn format_prior(shape: PolicyShape, bias: T) -> Self {
        let mut p = Self::uniform(shape);
        let bos = shape.vocab.bos();
        for bucket in 0..shape.prompt_buckets {
            for position in 0..shape.position_buckets {
                let ctx = |prev| Context { bucket, position, prev };
                if position == 0 {
                    p.row_mut(ctx(bos)).expect("valid context")[Vocabulary::BOX] += bias;
                }
                if position > 0 || shape.position_buckets == 1 {
                    let row = p.row_mut(ctx(Vocabulary::BOX)).expect("valid context");
                    row[..10].iter_mut().for_each(|v| *v += bias);
                    for d in 0..10 {
                        p.row_mut(ctx(d)).expect("valid context")[Vocabulary::EOS] += bias;
                    }
                }
            }
        }
        p
    }

    pub fn from_logits(shape: PolicyShape, logits: Vec<T>) -> Result<Self> {
        if logits.len() != shape.num_params() {
            return Err(shape_err(shape.num_params(), logits.len()));
        }
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(domain("policy logits must be finite"));
        }
        Ok(Self { shape, logits })
    }

    pub fn num_params(&self) -> usize {
        self.logits.len()
    }

    pub fn row(&self, ctx: Context) -> Result<&[T]> {
        let v = self.shape.vocab.size();
        let r = self.shape.row_index(ctx)?;
        Ok(&self.logits[r * v..(r + 1) * v])
    }

    pub fn row_mut(&mut self, ctx: Context) -> Result<&mut [T]> {
        let v = self.shape.vocab.size();
        let r = self.shape.row_index(ctx)?;
        Ok(&mut self.logits[r * v..(r + 1) * v])
    }

    pub fn log_probs(&self, ctx: Context) -> Result<Vec<T>> {
        Ok(log_softmax(self.row(ctx)?))
    }

    pub fn logp(&self, ctx: Context, token: TokenId) -> Result<T> {
        self.check_token(token)?;
        Ok(self.log_probs(ctx)?[token])
    }

    /// `log pi(token | ctx)` and its gradient `onehot(token) - softmax(row)`
    /// with respect to the context's logit row.
    pub fn logp_and_grad(&self, ctx: Context, token: TokenId) -> Result<(T, RowGrad<T>)> {
        self.check_token(token)?;
        let row = self.shape.row_index(ctx)?;
        let lp = self.log_probs(ctx)?;
        let values = lp
            .iter()
            .enumerate()
            .map(|(k, &l)| if k == token { T::one() - l.exp() } else { -l.exp() })
            .collect();
        Ok((lp[token], RowGrad { row, values }))
    }

    /// Shannon entropy (nats) of the next-token distribution at `ctx`.
    pub fn entropy(&self, ctx: Context) -> Result<T> {
        let lp = self.log_probs(ctx)?;
        let h = lp
            .iter()
            .map(|&l| {
                let p = l.exp();
                if p > T::zero() { -p * l } else { T::zero() }
            })
            .sum::<T>();
        Ok(h.max(T::zero()))
    }

    /// Adds `step * grad` to every logit.
    pub fn ascend(&mut self, grad: &[T], step: T) -> Result<()> {
        if grad.len() != self.logits.len() {
            return Err(shape_err(self.logits.len(), grad.len()));
        }
        for (w, &g) in self.logits.iter_mut().zip(grad) {
            *w += step * g;
        }
        Ok(())
    }

    fn check_token(&self, token: TokenId) -> Result<()> {
        if !self.shape.vocab.contains(token) {
            return Err(domain(format!("token id {token} outside vocabulary")));
        }
        Ok(())
    }
}

fn shape_err(want: usize, got: usize) -> crate::error::Error {
    shape(format!("expected {want} policy parameters, got {got}"))
}

pub(crate) fn log_softmax<T: Scalar>(row: &[T]) -> Vec<T> {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
    row.iter().map(|&v| v - lse).collect()
}
