use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Two digits whose sum modulo ten is the verifiable answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ToyTask {
    pub a: u8,
    pub b: u8,
}

impl ToyTask {
    pub fn new(a: u8, b: u8) -> Result<Self> {
        if a > 9 || b > 9 {
            return Err(domain(format!("operands must be digits, got ({a}, {b})")));
        }
        Ok(Self { a, b })
    }

    pub fn target(&self) -> u8 {
        (self.a + self.b) % 10
    }

    /// Prompt feature bucket the policy conditions on.
    pub fn bucket(&self, buckets: usize) -> usize {
        usize::from(self.target()) % buckets
    }
}

/// Fixed pool of tasks a run draws its prompts from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSet {
    pub tasks: Vec<ToyTask>,
}

impl TaskSet {
    /// `size` tasks with operands drawn uniformly from `0..=operand_max`.
    pub fn generate<R: Rng>(size: usize, operand_max: u8, rng: &mut R) -> Result<Self> {
        if size == 0 {
            return Err(domain("task set must be nonempty"));
        }
        if operand_max > 9 {
            return Err(domain(format!("operand_max must be a digit, got {operand_max}")));
        }
        let tasks = (0..size)
            .map(|_| ToyTask { a: rng.gen_range(0..=operand_max), b: rng.gen_range(0..=operand_max) })
            .collect();
        Ok(Self { tasks })
    }

    /// Draws `n` prompts with replacement.
    pub fn draw<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<ToyTask> {
        (0..n).map(|_| self.tasks[rng.gen_range(0..self.tasks.len())]).collect()
    }
}
