use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use crate::error::{Error, Result};
use crate::lambda::LambdaState;
use crate::toy::PolicyParams;

pub const CHECKPOINT_MAGIC: &str = "LGRPO-CHECKPOINT";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Random streams are a pure function of `(seed, step, prompt)`, so the seed
/// and the step counter are the whole stream state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamState {
    pub seed: u64,
    pub next_step: u64,
}

/// Everything needed to continue a run bit-for-bit.
///
/// On disk: the magic line, then one JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config_digest: String,
    pub config: TrainConfig,
    /// Number of completed optimization steps.
    pub step: u64,
    pub lambda: LambdaState<f64>,
    pub policy: PolicyParams<f64>,
    pub stream: StreamState,
}

impl Checkpoint {
    pub fn new(config: TrainConfig, step: u64, lambda: LambdaState<f64>, policy: PolicyParams<f64>) -> Self {
        let stream = StreamState { seed: config.seed, next_step: step };
        Self { version: CHECKPOINT_VERSION, config_digest: config.digest(), config, step, lambda, policy, stream }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = format!("{CHECKPOINT_MAGIC}\n").into_bytes();
        serde_json::to_writer(&mut out, self).expect("checkpoint serializes");
        out.push(b'\n');
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let text = std::str::from_utf8(bytes).map_err(|_| bad("not UTF-8"))?;
        let (magic, body) = text.split_once('\n').ok_or_else(|| bad("missing magic line"))?;
        if magic != CHECKPOINT_MAGIC {
            return Err(bad(&format!("bad magic {magic:?}")));
        }
        let ck: Self = serde_json::from_str(body).map_err(|e| bad(&e.to_string()))?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(bad(&format!("unsupported version {}", ck.version)));
        }
        if ck.config_digest != ck.config.digest() {
            return Err(bad("config digest mismatch"));
        }
        ck.config.validate()?;
        if ck.policy.shape != ck.config.policy_shape()? || ck.policy.logits.len() != ck.policy.shape.num_params() {
            return Err(bad("policy table does not match config"));
        }
        if ck.stream.seed != ck.config.seed || ck.stream.next_step != ck.step {
            return Err(bad("stream state inconsistent with config"));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn bad(msg: &str) -> Error {
    Error::Checkpoint(msg.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample() -> Checkpoint {
        let cfg = TrainConfig { seed: 5, ..TrainConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let shape = cfg.policy_shape().unwrap();
        let logits = (0..shape.num_params()).map(|_| rng.gen_range(-3.0..3.0) / 7.0).collect();
        let policy = PolicyParams::from_logits(shape, logits).unwrap();
        let lambda = LambdaState { value: 0.1 + 0.2, learning_rate: 0.1, steps_taken: 12 };
        Checkpoint::new(cfg, 12, lambda, policy)
    }

    #[test]
    fn bytes_round_trip_exactly() {
        let ck = sample();
        let bytes = ck.to_bytes();
        assert!(bytes.starts_with(b"LGRPO-CHECKPOINT\n"));
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        for (a, b) in back.policy.logits.iter().zip(&ck.policy.logits) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn corrupt_files_rejected() {
        let ck = sample();
        let text = String::from_utf8(ck.to_bytes()).unwrap();
        assert!(Checkpoint::from_bytes(text.replacen("LGRPO", "XGRPO", 1).as_bytes()).is_err());
        assert!(Checkpoint::from_bytes(text.replacen("\"seed\":5", "\"seed\":6", 1).as_bytes()).is_err());
        assert!(Checkpoint::from_bytes(b"LGRPO-CHECKPOINT\n{}").is_err());
        assert!(Checkpoint::from_bytes(b"").is_err());
    }
}
