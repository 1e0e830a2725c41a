use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context as _, Result};
use clap::{Parser, Subcommand};

use lambda_grpo::gradcheck::lambda_grad_check;
use lambda_grpo::train::{train_run, Checkpoint, SchemeKind, TrainConfig, Trainer};
use lambda_grpo::weighting::{compute_weights, WeightScheme, DEFAULT_H_FLOOR, DEFAULT_SCALE_R};

#[derive(Parser)]
#[command(name = "lgrpo", version, about = "Token-preference policy optimization on a toy verifiable task")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy and write metrics.csv plus checkpoints into --out.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// grpo, dapo, dr-grpo or lambda-grpo; overrides the config file.
        #[arg(long)]
        scheme: Option<SchemeKind>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads (0 = all cores). Results do not depend on it.
        #[arg(long, default_value_t = 0)]
        workers: usize,
        /// Print every sampled response as a token-id list on stdout.
        #[arg(long)]
        dump_samples: bool,
    },
    /// Print the aggregation weights for a group of response lengths as CSV.
    ProbeWeights {
        #[arg(long, value_delimiter = ',', required = true)]
        lengths: Vec<usize>,
        #[arg(long, default_value = "lambda-grpo")]
        scheme: SchemeKind,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        lambda: f64,
        #[arg(long, default_value_t = DEFAULT_SCALE_R)]
        scale_r: f64,
        #[arg(long, default_value_t = DEFAULT_H_FLOOR)]
        h_floor: f64,
    },
    /// Compare the analytic λ-gradient against central finite differences.
    GradCheck {
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Continue a run from a checkpoint up to its configured total steps.
    Resume {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Defaults to the checkpoint's directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        workers: usize,
        #[arg(long)]
        dump_samples: bool,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Train { config, scheme, seed, out, workers, dump_samples } => {
            let mut cfg = match config {
                Some(p) => TrainConfig::load(&p)?,
                None => TrainConfig::default(),
            };
            if let Some(s) = scheme {
                cfg.scheme = s;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cfg.validate()?;
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            let dump: Option<&mut dyn Write> = if dump_samples { Some(&mut lock) } else { None };
            let res = train_run(cfg, &out, workers, dump)
                .with_context(|| format!("training into {}", out.display()))?;
            report(&res.metrics);
            eprintln!("checkpoint: {}", res.checkpoint_path.display());
        }
        Command::ProbeWeights { lengths, scheme, lambda, scale_r, h_floor } => {
            let scheme = match scheme {
                SchemeKind::Grpo => WeightScheme::Grpo,
                SchemeKind::Dapo => WeightScheme::Dapo,
                SchemeKind::DrGrpo => WeightScheme::DrGrpo,
                SchemeKind::LambdaGrpo => WeightScheme::lambda_grpo(scale_r, h_floor)?,
            };
            let w = compute_weights(&scheme, &lengths, lambda)?;
            let cell = |v: &[f64], i: usize| v.get(i).map(|x| x.to_string()).unwrap_or_default();
            println!("i,length,h,g,s,f");
            for (i, len) in lengths.iter().enumerate() {
                println!("{i},{len},{},{},{},{}", cell(&w.h, i), cell(&w.g, i), cell(&w.s, i), cell(&w.f, i));
            }
        }
        Command::GradCheck { trials, tol, seed } => {
            if trials == 0 {
                bail!("--trials must be at least 1");
            }
            let r = lambda_grad_check(trials, seed)?;
            println!("trials={} max_rel_error={:e} worst_trial={}", r.trials, r.max_rel_error, r.worst_trial);
            if !(r.max_rel_error < tol) {
                eprintln!("gradient check failed: {:e} >= tolerance {:e}", r.max_rel_error, tol);
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Resume { checkpoint, out, workers, dump_samples } => {
            let ck = Checkpoint::load(&checkpoint)
                .with_context(|| format!("loading {}", checkpoint.display()))?;
            let out = out.unwrap_or_else(|| {
                checkpoint.parent().map(|p| p.to_path_buf()).unwrap_or_else(|| PathBuf::from("."))
            });
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            let dump: Option<&mut dyn Write> = if dump_samples { Some(&mut lock) } else { None };
            let res = Trainer::resume(ck, &out, workers, dump)?;
            report(&res.metrics);
            eprintln!("checkpoint: {}", res.checkpoint_path.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn report(metrics: &[lambda_grpo::train::StepMetrics]) {
    if let Some(last) = metrics.last() {
        eprintln!(
            "step {}: accuracy {:.3} reward {:.3} len {:.2} entropy {:.3} lambda {:.4}",
            last.step, last.accuracy, last.mean_reward, last.mean_response_len, last.mean_entropy, last.lambda
        );
    }
}
