//! Per-response aggregation weights `f(o_i)` of the unified objective.
//!
//! | scheme      | `f(o_i)`                       |
//! |-------------|--------------------------------|
//! | GRPO        | `mu / |o_i|`                   |
//! | DAPO        | `1`                            |
//! | Dr. GRPO    | `mu`                           |
//! | λ-GRPO      | `G * softmax(h^λ)_i`           |
//!
//! For λ-GRPO, `h_i = max(1 + r z_i, h_floor)` where `z` are the standardized
//! group lengths, and `h^λ` is evaluated as `exp(λ ln h)` so that the forward
//! pass and the analytic λ-gradient use the same logarithm.

use std::fmt;
use std::str::FromStr;

use crate::error::{domain, Error, Result};
use crate::group::standardize_lengths;
use crate::scalar::Scalar;

pub const DEFAULT_SCALE_R: f64 = 1.0 / 9.0;
pub const DEFAULT_H_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightScheme<T> {
    Grpo,
    Dapo,
    DrGrpo,
    LambdaGrpo { scale_r: T, h_floor: T },
}

impl<T: Scalar> WeightScheme<T> {
    pub fn lambda_grpo(scale_r: T, h_floor: T) -> Result<Self> {
        let s = Self::LambdaGrpo { scale_r, h_floor };
        s.validate()?;
        Ok(s)
    }

    pub fn lambda_default() -> Self {
        Self::LambdaGrpo { scale_r: T::of(DEFAULT_SCALE_R), h_floor: T::of(DEFAULT_H_FLOOR) }
    }

    pub fn validate(&self) -> Result<()> {
        if let Self::LambdaGrpo { scale_r, h_floor } = *self {
            if !(scale_r > T::zero()) || !scale_r.is_finite() {
                return Err(domain(format!("scale_r must be positive, got {scale_r}")));
            }
            if !(h_floor > T::zero() && h_floor < T::one()) {
                return Err(domain(format!("h_floor must lie in (0, 1), got {h_floor}")));
            }
        }
        Ok(())
    }

    pub fn is_lambda(&self) -> bool {
        matches!(self, Self::LambdaGrpo { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Grpo => "grpo",
            Self::Dapo => "dapo",
            Self::DrGrpo => "dr-grpo",
            Self::LambdaGrpo { .. } => "lambda-grpo",
        }
    }
}

impl<T: Scalar> fmt::Display for WeightScheme<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Parses a scheme name; λ-GRPO gets the default `scale_r` and `h_floor`.
impl<T: Scalar> FromStr for WeightScheme<T> {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "grpo" => Ok(Self::Grpo),
            "dapo" => Ok(Self::Dapo),
            "dr-grpo" | "drgrpo" | "dr_grpo" => Ok(Self::DrGrpo),
            "lambda-grpo" | "lambdagrpo" | "lambda_grpo" => Ok(Self::lambda_default()),
            other => Err(Error::Config(format!(
                "unknown scheme {other:?} (expected grpo, dapo, dr-grpo or lambda-grpo)"
            ))),
        }
    }
}

/// Weights for one group.
///
/// `h` and `g` are only populated for λ-GRPO. `s` is always `f / sum(f)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector<T> {
    pub h: Vec<T>,
    pub g: Vec<T>,
    pub s: Vec<T>,
    pub f: Vec<T>,
}

impl<T: Scalar> WeightVector<T> {
    pub fn len(&self) -> usize {
        self.f.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f.is_empty()
    }
}

/// `max(1 + scale_r * z_i, h_floor)` elementwise.
pub fn compute_h<T: Scalar>(z: &[T], scale_r: T, h_floor: T) -> Result<Vec<T>> {
    if !(scale_r > T::zero()) || !scale_r.is_finite() {
        return Err(domain(format!("scale_r must be positive, got {scale_r}")));
    }
    if !(h_floor > T::zero()) {
        return Err(domain(format!("h_floor must be positive, got {h_floor}")));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(domain("standardized lengths must be finite"));
    }
    Ok(z.iter().map(|&zi| (T::one() + scale_r * zi).max(h_floor)).collect())
}

/// Max-subtracted softmax.
pub fn softmax<T: Scalar>(x: &[T]) -> Vec<T> {
    let max = x.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = x.iter().map(|&v| (v - max).exp()).collect();
    let z = exps.iter().copied().sum::<T>();
    exps.into_iter().map(|e| e / z).collect()
}

/// `g_i = h_i^λ` computed as `exp(λ ln h_i)`.
pub(crate) fn powers<T: Scalar>(h: &[T], lambda: T) -> Vec<T> {
    h.iter().map(|&hi| (lambda * hi.ln()).exp()).collect()
}

pub fn compute_weights<T: Scalar>(
    scheme: &WeightScheme<T>,
    lengths: &[usize],
    lambda: T,
) -> Result<WeightVector<T>> {
    if lengths.is_empty() {
        return Err(domain("cannot weight an empty group"));
    }
    if let Some(i) = lengths.iter().position(|&l| l == 0) {
        return Err(domain(format!("response {i} has non-positive length")));
    }
    scheme.validate()?;
    let g_count = T::of_usize(lengths.len());
    let mu = T::of_usize(lengths.iter().sum::<usize>()) / g_count;

    let (h, g, f) = match *scheme {
        WeightScheme::Grpo => {
            (vec![], vec![], lengths.iter().map(|&l| mu / T::of_usize(l)).collect())
        }
        WeightScheme::Dapo => (vec![], vec![], vec![T::one(); lengths.len()]),
        WeightScheme::DrGrpo => (vec![], vec![], vec![mu; lengths.len()]),
        WeightScheme::LambdaGrpo { scale_r, h_floor } => {
            if !lambda.is_finite() {
                return Err(domain(format!("lambda must be finite, got {lambda}")));
            }
            let z = standardize_lengths::<T>(lengths)?;
            let h = compute_h(&z, scale_r, h_floor)?;
            let g = powers(&h, lambda);
            let s = softmax(&g);
            let f = s.iter().map(|&si| si * g_count).collect();
            return Ok(WeightVector { h, g, s, f });
        }
    };
    let total = f.iter().copied().sum::<T>();
    let s = f.iter().map(|&fi| fi / total).collect();
    Ok(WeightVector { h, g, s, f })
}
