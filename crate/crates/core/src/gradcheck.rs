//! Central finite-difference checks for the analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::lambda::lambda_gradient;
use crate::surrogate::{unified_objective, ClipConfig, SurrogateBatch};
use crate::toy::PolicyParams;
use crate::weighting::{compute_weights, WeightScheme};

pub const LAMBDA_FD_STEP: f64 = 1e-4;
pub const SCALE_R_CHOICES: [f64; 3] = [1.0 / 30.0, 1.0 / 15.0, 1.0 / 9.0];

/// Below this magnitude the error is measured absolutely.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

pub fn relative_error(a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    (a - b).abs() / a.abs().max(b.abs()).max(REL_ERROR_FLOOR)
}

/// A random λ-gradient instance: group lengths, per-response losses, λ and `scale_r`.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaInstance {
    pub lengths: Vec<usize>,
    pub losses: Vec<f64>,
    pub lambda: f64,
    pub scale_r: f64,
}

impl LambdaInstance {
    pub fn random<R: Rng>(rng: &mut R) -> Self {
        let g = rng.gen_range(2..=8);
        Self {
            lengths: (0..g).map(|_| rng.gen_range(1..=64)).collect(),
            losses: (0..g).map(|_| rng.gen_range(-5.0..5.0)).collect(),
            lambda: rng.gen_range(-3.0..=3.0),
            scale_r: SCALE_R_CHOICES[rng.gen_range(0..SCALE_R_CHOICES.len())],
        }
    }

    fn scheme(&self) -> WeightScheme<f64> {
        WeightScheme::LambdaGrpo { scale_r: self.scale_r, h_floor: crate::weighting::DEFAULT_H_FLOOR }
    }

    /// J(λ) through the weighting forward pass with the losses held fixed.
    pub fn objective_at(&self, lambda: f64) -> Result<f64> {
        let w = compute_weights(&self.scheme(), &self.lengths, lambda)?;
        unified_objective(&w.f, &self.losses, self.lengths.iter().sum())
    }

    pub fn analytic(&self) -> Result<f64> {
        let w = compute_weights(&self.scheme(), &self.lengths, self.lambda)?;
        lambda_gradient(&self.losses, &w.h, self.lambda, self.lengths.iter().sum())
    }

    pub fn finite_difference(&self, step: f64) -> Result<f64> {
        Ok((self.objective_at(self.lambda + step)? - self.objective_at(self.lambda - step)?) / (2.0 * step))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub trials: usize,
    pub max_rel_error: f64,
    pub worst_trial: usize,
}

/// Compares the analytic λ-gradient with central differences on `trials`
/// random instances.
pub fn lambda_grad_check(trials: usize, seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradCheckReport { trials, max_rel_error: 0.0, worst_trial: 0 };
    for trial in 0..trials {
        let inst = LambdaInstance::random(&mut rng);
        let err = relative_error(inst.analytic()?, inst.finite_difference(LAMBDA_FD_STEP)?);
        if err > report.max_rel_error {
            report.max_rel_error = err;
            report.worst_trial = trial;
        }
    }
    Ok(report)
}

/// Central-difference gradient of the batch objective over every policy logit.
pub fn policy_fd_gradient(
    batch: &SurrogateBatch<f64>,
    clip: &ClipConfig<f64>,
    policy: &PolicyParams<f64>,
    step: f64,
) -> Result<Vec<f64>> {
    let mut probe = policy.clone();
    let mut out = Vec::with_capacity(policy.num_params());
    for k in 0..policy.num_params() {
        let orig = probe.logits[k];
        probe.logits[k] = orig + step;
        let hi = batch.objective(&probe, clip)?.objective;
        probe.logits[k] = orig - step;
        let lo = batch.objective(&probe, clip)?.objective;
        probe.logits[k] = orig;
        out.push((hi - lo) / (2.0 * step));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(1.0, 1.0), 0.0);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
        assert!((relative_error(1e-9, 0.0) - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn small_check_passes() {
        let r = lambda_grad_check(50, 1).unwrap();
        assert!(r.max_rel_error <= 1e-5, "{r:?}");
    }
}
