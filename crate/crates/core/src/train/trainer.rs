use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::checkpoint::Checkpoint;
use super::config::TrainConfig;
use super::metrics::{MetricsWriter, StepMetrics};
use crate::error::{Error, Result};
use crate::group::{compute_advantages, RolloutGroup};
use crate::lambda::{lambda_gradient, update_lambda, LambdaState};
use crate::surrogate::{ClipConfig, SurrogateBatch, SurrogateGroup, SurrogateResponse, TokenRecord};
use crate::toy::{policy_entropy, sample_group, Context, PolicyParams, SampledResponse, TaskSet, ToyTask};
use crate::weighting::{compute_weights, WeightScheme, WeightVector};

const STREAM_TASK_SET: u64 = 1;
const STREAM_DRAW: u64 = 2;
const STREAM_ROLLOUT: u64 = 3;

/// Independent stream per `(kind, step, prompt)`; parallel and serial
/// rollouts therefore see identical randomness.
fn stream_rng(seed: u64, kind: u64, step: u64, prompt: u64) -> ChaCha8Rng {
    debug_assert!(prompt < 1 << 20 && step < 1 << 40);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((kind << 60) | (step << 20) | prompt);
    rng
}

/// The sampled half of one step, before any update.
#[derive(Debug, Clone)]
pub struct StepRollouts {
    pub step: u64,
    pub tasks: Vec<ToyTask>,
    pub groups: Vec<RolloutGroup<f64>>,
    pub responses: Vec<Vec<SampledResponse<f64>>>,
}

pub struct Trainer {
    config: TrainConfig,
    scheme: WeightScheme<f64>,
    clip: ClipConfig<f64>,
    policy: PolicyParams<f64>,
    /// KL anchor; always the run's initial policy.
    reference: PolicyParams<f64>,
    lambda: LambdaState<f64>,
    step: u64,
    tasks: TaskSet,
    pool: rayon::ThreadPool,
}

impl Trainer {
    /// A fresh run from the configured initial policy with λ = 0. `workers = 0` uses rayon's default.
    pub fn new(config: TrainConfig, workers: usize) -> Result<Self> {
        config.validate()?;
        let policy = config.initial_policy()?;
        let lambda = LambdaState::new(config.lambda_learning_rate)?;
        Self::assemble(config, policy, lambda, 0, workers)
    }

    pub fn from_checkpoint(ck: Checkpoint, workers: usize) -> Result<Self> {
        Self::assemble(ck.config, ck.policy, ck.lambda, ck.step, workers)
    }

    fn assemble(
        config: TrainConfig,
        policy: PolicyParams<f64>,
        lambda: LambdaState<f64>,
        step: u64,
        workers: usize,
    ) -> Result<Self> {
        let scheme = config.weight_scheme()?;
        let clip = config.clip()?;
        let reference = config.initial_policy()?;
        let tasks = TaskSet::generate(
            config.task_set_size,
            config.operand_max,
            &mut stream_rng(config.seed, STREAM_TASK_SET, 0, 0),
        )?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        Ok(Self { config, scheme, clip, policy, reference, lambda, step, tasks, pool })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn policy(&self) -> &PolicyParams<f64> {
        &self.policy
    }

    pub fn lambda(&self) -> LambdaState<f64> {
        self.lambda
    }

    pub fn step_index(&self) -> u64 {
        self.step
    }

    pub fn task_set(&self) -> &TaskSet {
        &self.tasks
    }

    pub fn set_policy(&mut self, policy: PolicyParams<f64>) -> Result<()> {
        if policy.shape != self.policy.shape {
            return Err(Error::Shape("policy shape differs from config".into()));
        }
        self.policy = policy;
        Ok(())
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::new(self.config.clone(), self.step, self.lambda, self.policy.clone())
    }

    /// Samples the next step's rollouts under the current (frozen) policy.
    pub fn rollouts(&self) -> Result<StepRollouts> {
        let cfg = &self.config;
        let step = self.step;
        let tasks = self.tasks.draw(cfg.prompts_per_batch, &mut stream_rng(cfg.seed, STREAM_DRAW, step, 0));
        let policy = &self.policy;
        let sampled = self.pool.install(|| {
            tasks
                .par_iter()
                .enumerate()
                .map(|(p, task)| {
                    let mut rng = stream_rng(cfg.seed, STREAM_ROLLOUT, step, p as u64);
                    sample_group(policy, task, cfg.group_size, cfg.max_response_len, p as u64, &mut rng)
                })
                .collect::<Result<Vec<_>>>()
        })?;
        let (groups, responses) = sampled.into_iter().unzip();
        Ok(StepRollouts { step, tasks, groups, responses })
    }

    /// One optimization step: sample, score, weight, and update the policy and λ.
    pub fn step(&mut self, dump: Option<&mut dyn Write>) -> Result<StepMetrics> {
        let roll = self.rollouts()?;
        if let Some(out) = dump {
            write_dump(out, &roll)?;
        }
        self.apply(&roll)
    }

    /// Updates from already-sampled rollouts, which must come from
    /// [`Trainer::rollouts`] at the current step.
    pub fn apply(&mut self, roll: &StepRollouts) -> Result<StepMetrics> {
        if roll.step != self.step {
            return Err(Error::Domain(format!("rollouts for step {} applied at step {}", roll.step, self.step)));
        }
        let cfg = self.config.clone();
        let shape = self.policy.shape;

        let advantages = roll
            .groups
            .iter()
            .map(|g| compute_advantages(&g.rewards, cfg.std_floor))
            .collect::<Result<Vec<_>>>()?;

        let mut entropy_sum = 0.0;
        let mut token_count = 0usize;
        for (task, g) in roll.tasks.iter().zip(&roll.groups) {
            let n = g.total_tokens();
            entropy_sum += policy_entropy(&self.policy, task, g)? * n as f64;
            token_count += n;
        }

        let n_groups = roll.groups.len();
        let mb = cfg.mini_batches_per_step;
        let mut objectives = Vec::with_capacity(mb);
        for k in 0..mb {
            let range = (n_groups * k / mb)..(n_groups * (k + 1) / mb);
            let lambda = self.lambda.value;
            let weights = range
                .clone()
                .map(|i| compute_weights(&self.scheme, &roll.groups[i].lengths, lambda))
                .collect::<Result<Vec<_>>>()?;
            let batch = SurrogateBatch {
                groups: range
                    .clone()
                    .zip(&weights)
                    .map(|(i, w)| self.surrogate_group(&roll.tasks[i], &roll.groups[i], &advantages[i], w))
                    .collect::<Result<Vec<_>>>()?,
            };
            let policy = &self.policy;
            let clip = self.clip;
            let eval = self.pool.install(|| batch.evaluate(policy, &clip, true))?;

            if self.scheme.is_lambda() {
                let mut acc = 0.0;
                for ((i, w), losses) in range.clone().zip(&weights).zip(&eval.losses) {
                    acc += lambda_gradient(losses, &w.h, lambda, roll.groups[i].total_tokens())?;
                }
                let grad = acc / range.len() as f64;
                self.lambda = update_lambda(self.lambda, grad)?;
            }
            let grad = eval.grad.as_ref().expect("gradient requested");
            self.policy.ascend(grad, cfg.policy_learning_rate)?;
            debug_assert_eq!(self.policy.shape, shape);
            objectives.push(eval.objective);
        }

        let responses: Vec<&SampledResponse<f64>> = roll.responses.iter().flatten().collect();
        let rewards: Vec<f64> = roll.groups.iter().flat_map(|g| g.rewards.iter().copied()).collect();
        let n_resp = responses.len() as f64;
        let metrics = StepMetrics {
            step: self.step,
            mean_reward: rewards.iter().sum::<f64>() / n_resp,
            accuracy: rewards.iter().filter(|&&r| r == 1.0).count() as f64 / n_resp,
            mean_response_len: responses.iter().map(|r| r.tokens.len()).sum::<usize>() as f64 / n_resp,
            mean_entropy: entropy_sum / token_count as f64,
            lambda: self.lambda.value,
            objective: objectives.iter().sum::<f64>() / objectives.len() as f64,
        };
        if !metrics.is_finite() {
            return Err(Error::NonFinite(format!("metrics at step {}: {metrics:?}", self.step)));
        }
        self.step += 1;
        Ok(metrics)
    }

    fn surrogate_group(
        &self,
        task: &ToyTask,
        group: &RolloutGroup<f64>,
        advantages: &[f64],
        weights: &WeightVector<f64>,
    ) -> Result<SurrogateGroup<f64>> {
        let bucket = task.bucket(self.policy.shape.prompt_buckets);
        let use_ref = self.clip.kl_coeff > 0.0;
        let responses = group
            .responses
            .iter()
            .zip(&group.old_logps)
            .zip(advantages)
            .map(|((tokens, old), &advantage)| {
                let contexts = Context::for_response(&self.policy.shape, bucket, tokens);
                let records = contexts
                    .into_iter()
                    .zip(tokens)
                    .zip(old)
                    .map(|((context, &token), &old_logp)| {
                        let ref_logp = if use_ref { self.reference.logp(context, token)? } else { old_logp };
                        Ok(TokenRecord { context, token, old_logp, ref_logp })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(SurrogateResponse { tokens: records, advantage })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SurrogateGroup { responses, f: weights.f.clone() })
    }
}

/// `step=S prompt=P a=A b=B tokens=t1,t2,...`, one line per response.
fn write_dump(out: &mut dyn Write, roll: &StepRollouts) -> Result<()> {
    for (p, (task, group)) in roll.tasks.iter().zip(&roll.groups).enumerate() {
        for tokens in &group.responses {
            let ids: Vec<String> = tokens.iter().map(|t| t.to_string()).collect();
            writeln!(out, "step={} prompt={p} a={} b={} tokens={}", roll.step, task.a, task.b, ids.join(","))?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: Vec<StepMetrics>,
    pub checkpoint: Checkpoint,
    pub metrics_path: PathBuf,
    pub checkpoint_path: PathBuf,
}

pub const METRICS_FILE: &str = "metrics.csv";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";

pub fn checkpoint_name(step: u64) -> String {
    format!("step-{step:06}.ckpt")
}

/// Runs `config.total_steps` steps from scratch, writing `metrics.csv`, any
/// periodic checkpoints and `final.ckpt` into `out_dir`.
pub fn train_run(
    config: TrainConfig,
    out_dir: &Path,
    workers: usize,
    dump: Option<&mut dyn Write>,
) -> Result<RunOutput> {
    config.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let metrics_path = out_dir.join(METRICS_FILE);
    let writer = MetricsWriter::create(&metrics_path)?;
    let trainer = Trainer::new(config, workers)?;
    run_loop(trainer, writer, out_dir, dump)
}

impl Trainer {
    /// Continues the run stored in `ck` up to its configured total, writing into `out_dir`.
    pub fn resume(
        ck: Checkpoint,
        out_dir: &Path,
        workers: usize,
        dump: Option<&mut dyn Write>,
    ) -> Result<RunOutput> {
        std::fs::create_dir_all(out_dir)?;
        let writer = MetricsWriter::resume(&out_dir.join(METRICS_FILE), ck.step)?;
        let trainer = Trainer::from_checkpoint(ck, workers)?;
        run_loop(trainer, writer, out_dir, dump)
    }
}

fn run_loop(
    mut trainer: Trainer,
    mut writer: MetricsWriter,
    out_dir: &Path,
    mut dump: Option<&mut dyn Write>,
) -> Result<RunOutput> {
    let total = trainer.config.total_steps as u64;
    let every = trainer.config.checkpoint_every as u64;
    let mut metrics = Vec::new();
    while trainer.step < total {
        let m = trainer.step(dump.as_mut().map(|d| &mut **d as &mut dyn Write))?;
        writer.append(&m)?;
        metrics.push(m);
        if every > 0 && trainer.step % every == 0 && trainer.step < total {
            trainer.checkpoint().save(&out_dir.join(checkpoint_name(trainer.step)))?;
        }
    }
    let checkpoint = trainer.checkpoint();
    let checkpoint_path = out_dir.join(FINAL_CHECKPOINT);
    checkpoint.save(&checkpoint_path)?;
    Ok(RunOutput { metrics, checkpoint, metrics_path: out_dir.join(METRICS_FILE), checkpoint_path })
}
