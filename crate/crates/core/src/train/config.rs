use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::surrogate::ClipConfig;
use crate::toy::{PolicyParams, PolicyShape, Vocabulary};
use crate::weighting::WeightScheme;

/// The policy conditions on the answer digit of the task.
pub const PROMPT_BUCKETS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeKind {
    Grpo,
    Dapo,
    DrGrpo,
    LambdaGrpo,
}

impl std::str::FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.parse::<WeightScheme<f64>>()? {
            WeightScheme::Grpo => Self::Grpo,
            WeightScheme::Dapo => Self::Dapo,
            WeightScheme::DrGrpo => Self::DrGrpo,
            WeightScheme::LambdaGrpo { .. } => Self::LambdaGrpo,
        })
    }
}

/// Every knob of a training run.
///
/// Defaults are desk-scale. The reference large-model recipe used a batch of
/// 1024 prompts, mini-batch 256, micro-batch 8, 2048-token responses, 160
/// steps and `scale_r = 1/9`; only `scale_r` and the λ learning rate carry
/// over unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub scheme: SchemeKind,
    pub group_size: usize,
    pub prompts_per_batch: usize,
    /// Sequential policy updates per rollout batch; the batch is split into
    /// this many contiguous slices of prompts.
    pub mini_batches_per_step: usize,
    pub total_steps: usize,
    pub policy_learning_rate: f64,
    /// Zero keeps λ pinned at its initial value.
    pub lambda_learning_rate: f64,
    pub scale_r: f64,
    pub eps_low: f64,
    pub eps_high: f64,
    pub kl_coeff: f64,
    pub std_floor: f64,
    pub h_floor: f64,
    pub max_response_len: usize,
    pub seed: u64,
    pub task_set_size: usize,
    pub operand_max: u8,
    pub vocab_size: usize,
    pub position_buckets: usize,
    /// Logit bias of the initial policy toward the answer format; zero starts uniform.
    pub init_format_bias: f64,
    /// Write an intermediate checkpoint every this many steps; zero disables.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            scheme: SchemeKind::LambdaGrpo,
            group_size: 8,
            prompts_per_batch: 32,
            mini_batches_per_step: 1,
            total_steps: 200,
            policy_learning_rate: 20.0,
            lambda_learning_rate: crate::lambda::DEFAULT_LAMBDA_LR,
            scale_r: crate::weighting::DEFAULT_SCALE_R,
            eps_low: 0.2,
            eps_high: 0.2,
            kl_coeff: 0.0,
            std_floor: crate::group::DEFAULT_STD_FLOOR,
            h_floor: crate::weighting::DEFAULT_H_FLOOR,
            max_response_len: 16,
            seed: 0,
            task_set_size: 100,
            operand_max: 9,
            vocab_size: Vocabulary::MIN_SIZE,
            position_buckets: 2,
            init_format_bias: 2.0,
            checkpoint_every: 0,
        }
    }
}

fn bad(msg: String) -> Error {
    Error::Config(msg)
}

impl TrainConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| bad(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("group_size", self.group_size),
            ("prompts_per_batch", self.prompts_per_batch),
            ("mini_batches_per_step", self.mini_batches_per_step),
            ("task_set_size", self.task_set_size),
            ("position_buckets", self.position_buckets),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(bad(format!("{name} must be at least 1")));
            }
        }
        if self.mini_batches_per_step > self.prompts_per_batch {
            return Err(bad(format!(
                "mini_batches_per_step ({}) exceeds prompts_per_batch ({})",
                self.mini_batches_per_step, self.prompts_per_batch
            )));
        }
        if !(self.policy_learning_rate > 0.0 && self.policy_learning_rate.is_finite()) {
            return Err(bad(format!("policy_learning_rate must be positive, got {}", self.policy_learning_rate)));
        }
        if !(self.lambda_learning_rate >= 0.0 && self.lambda_learning_rate.is_finite()) {
            return Err(bad(format!("lambda_learning_rate must be >= 0, got {}", self.lambda_learning_rate)));
        }
        if !(self.std_floor >= 0.0) {
            return Err(bad(format!("std_floor must be >= 0, got {}", self.std_floor)));
        }
        if self.max_response_len < 2 {
            return Err(bad(format!("max_response_len must be at least 2, got {}", self.max_response_len)));
        }
        if !self.init_format_bias.is_finite() {
            return Err(bad(format!("init_format_bias must be finite, got {}", self.init_format_bias)));
        }
        if self.operand_max > 9 {
            return Err(bad(format!("operand_max must be a digit, got {}", self.operand_max)));
        }
        self.weight_scheme()?;
        self.clip()?;
        self.policy_shape()?;
        Ok(())
    }

    pub fn weight_scheme(&self) -> Result<WeightScheme<f64>> {
        let s = match self.scheme {
            SchemeKind::Grpo => WeightScheme::Grpo,
            SchemeKind::Dapo => WeightScheme::Dapo,
            SchemeKind::DrGrpo => WeightScheme::DrGrpo,
            SchemeKind::LambdaGrpo => WeightScheme::LambdaGrpo { scale_r: self.scale_r, h_floor: self.h_floor },
        };
        s.validate().map_err(|e| bad(e.to_string()))?;
        Ok(s)
    }

    pub fn clip(&self) -> Result<ClipConfig<f64>> {
        ClipConfig::new(self.eps_low, self.eps_high, self.kl_coeff).map_err(|e| bad(e.to_string()))
    }

    pub fn policy_shape(&self) -> Result<PolicyShape> {
        let vocab = Vocabulary::new(self.vocab_size).map_err(|e| bad(e.to_string()))?;
        PolicyShape::new(PROMPT_BUCKETS, self.position_buckets, vocab)
    }

    /// The starting policy, which is also the KL reference.
    pub fn initial_policy(&self) -> Result<PolicyParams<f64>> {
        Ok(PolicyParams::format_prior(self.policy_shape()?, self.init_format_bias))
    }

    /// Hex SHA-256 of the canonical TOML rendering.
    pub fn digest(&self) -> String {
        let hash = Sha256::digest(self.to_toml_string().as_bytes());
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let c = TrainConfig::default();
        c.validate().unwrap();
        assert_eq!(c.policy_shape().unwrap().num_params(), 10 * 2 * 14 * 13);
    }

    #[test]
    fn parses_flat_toml() {
        let c = TrainConfig::from_toml_str("scheme = \"dr-grpo\"\ngroup_size = 4\nseed = 7\n").unwrap();
        assert_eq!(c.scheme, SchemeKind::DrGrpo);
        assert_eq!(c.group_size, 4);
        assert_eq!(c.seed, 7);
        assert_eq!(c.prompts_per_batch, 32);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = TrainConfig::from_toml_str("group_sise = 4\n").unwrap_err();
        assert!(err.to_string().contains("group_sise"), "{err}");
    }

    #[test]
    fn invalid_values_rejected() {
        for text in [
            "group_size = 0",
            "policy_learning_rate = 0.0",
            "lambda_learning_rate = -1.0",
            "eps_low = 1.5",
            "h_floor = 2.0",
            "scale_r = 0.0",
            "vocab_size = 5",
            "max_response_len = 1",
            "prompts_per_batch = 2\nmini_batches_per_step = 3",
            "scheme = \"ppo\"",
        ] {
            assert!(TrainConfig::from_toml_str(text).is_err(), "{text}");
        }
    }

    #[test]
    fn round_trip_and_digest() {
        let c = TrainConfig { seed: 99, ..TrainConfig::default() };
        let back = TrainConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.digest(), c.digest());
        assert_ne!(TrainConfig::default().digest(), c.digest());
        assert_eq!(c.digest().len(), 64);
    }

    #[test]
    fn scheme_names() {
        assert_eq!("lambda-grpo".parse::<SchemeKind>().unwrap(), SchemeKind::LambdaGrpo);
        assert_eq!("dr-grpo".parse::<SchemeKind>().unwrap(), SchemeKind::DrGrpo);
    }
}
