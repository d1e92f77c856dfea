use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::head::{forward_unchecked, masked_argmax, HeadParams, Init};
use super::strategy::{consolidate_ewc, loss_and_grad, update_replay_buffer, LwfSnapshot, ReplayBuffer, StrategyState};
use crate::curriculum::{AccuracyMatrix, Curriculum, RunRecord, TaskSpec};
use crate::data::{Dataset, Example, Split};
use crate::error::{Error, Result};
use crate::seed::mix;

pub use super::strategy::BufferPolicy;

/// A learner and its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum StrategyConfig {
    Vanilla,
    Ewc {
        #[serde(default = "default_ewc_lambda")]
        lambda: f64,
    },
    Lwf {
        #[serde(default = "default_lwf_lambda")]
        lambda: f64,
        #[serde(default = "default_temperature")]
        temperature: f64,
    },
    Replay {
        #[serde(default = "default_buffer_fraction")]
        buffer_fraction: f64,
        #[serde(default)]
        policy: BufferPolicy,
    },
}

fn default_ewc_lambda() -> f64 {
    100.0
}
fn default_lwf_lambda() -> f64 {
    1.0
}
fn default_temperature() -> f64 {
    2.0
}
fn default_buffer_fraction() -> f64 {
    0.02
}

impl StrategyConfig {
    pub fn ewc() -> Self {
        StrategyConfig::Ewc {
            lambda: default_ewc_lambda(),
        }
    }

    pub fn lwf() -> Self {
        StrategyConfig::Lwf {
            lambda: default_lwf_lambda(),
            temperature: default_temperature(),
        }
    }

    pub fn replay(buffer_fraction: f64, policy: BufferPolicy) -> Self {
        StrategyConfig::Replay { buffer_fraction, policy }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            StrategyConfig::Vanilla => "vanilla",
            StrategyConfig::Ewc { .. } => "ewc",
            StrategyConfig::Lwf { .. } => "lwf",
            StrategyConfig::Replay { .. } => "replay",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what, value, range| Err(Error::OutOfRange { what, value, range });
        match *self {
            StrategyConfig::Vanilla => Ok(()),
            StrategyConfig::Ewc { lambda } if !(lambda >= 0.0 && lambda.is_finite()) => {
                bad("ewc lambda", lambda, "[0, inf)")
            }
            StrategyConfig::Lwf { lambda, .. } if !(lambda >= 0.0 && lambda.is_finite()) => {
                bad("lwf lambda", lambda, "[0, inf)")
            }
            StrategyConfig::Lwf { temperature, .. } if !(temperature > 0.0 && temperature.is_finite()) => {
                bad("temperature", temperature, "(0, inf)")
            }
            StrategyConfig::Replay { buffer_fraction, .. } if !(buffer_fraction > 0.0 && buffer_fraction <= 1.0) => {
                bad("buffer_fraction", buffer_fraction, "(0, 1]")
            }
            _ => Ok(()),
        }
    }

    /// Fresh state for a run over `dataset` following `curriculum`.
    fn initial_state(&self, dataset: &Dataset, curriculum: &Curriculum) -> StrategyState {
        match *self {
            StrategyConfig::Vanilla => StrategyState::Vanilla,
            StrategyConfig::Ewc { lambda } => StrategyState::Ewc {
                lambda,
                anchors: Vec::new(),
            },
            StrategyConfig::Lwf { lambda, temperature } => StrategyState::Lwf {
                lambda,
                temperature,
                snapshot: None,
            },
            StrategyConfig::Replay {
                buffer_fraction,
                policy,
            } => StrategyState::Replay(match policy {
                BufferPolicy::GlobalFixed => {
                    let total: usize = curriculum
                        .class_sequence()
                        .iter()
                        .map(|c| dataset.train[c.0].len())
                        .sum();
                    ReplayBuffer::global(((buffer_fraction * total as f64).round() as usize).max(1))
                }
                BufferPolicy::PerTask => ReplayBuffer::per_task(buffer_fraction),
            }),
        }
    }
}

/// Training regime shared by every strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Passes over each task; 1 is the online setting.
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub init: Init,
    /// Shuffle each task's examples once per epoch. The order depends only
    /// on the seed, the task and the epoch, so every curriculum sees a task's
    /// exemplars in the same order.
    pub shuffle_within_task: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 1,
            batch_size: 32,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            init: Init::default(),
            shuffle_within_task: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::OutOfRange {
                what: "lr",
                value: self.lr,
                range: "(0, inf)",
            });
        }
        Ok(())
    }
}

/// Seeds of one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSeeds {
    /// Experiment seed: head initialization and within-task exemplar order.
    /// Shared by every curriculum and strategy so they start from the same
    /// weights.
    pub seed: u64,
    /// Private stream of this run (replay sampling).
    pub stream: u64,
}

fn task_key(task: &TaskSpec) -> u64 {
    let mut ids: Vec<u64> = task.classes.iter().map(|c| c.0 as u64).collect();
    ids.sort_unstable();
    mix(&ids)
}

/// Accuracy on `examples`, predicting among the `seen` classes only.
pub fn evaluate(h: &HeadParams, examples: &[Example], seen: &[bool]) -> f64 {
    if examples.is_empty() {
        return 0.0;
    }
    let correct = examples
        .iter()
        .filter(|ex| masked_argmax(&forward_unchecked(h, &ex.features), seen) == Some(ex.label))
        .count();
    correct as f64 / examples.len() as f64
}

/// Trains a fresh head on `curriculum` task by task and records the
/// accuracy on every seen task after each one.
pub fn run_curriculum(
    dataset: &Dataset,
    curriculum: &Curriculum,
    strategy_name: &str,
    strategy: &StrategyConfig,
    cfg: &TrainConfig,
    seeds: RunSeeds,
) -> Result<RunRecord> {
    cfg.validate()?;
    strategy.validate()?;
    crate::curriculum::validate_curriculum(curriculum, dataset.n_classes())?;

    let n = dataset.n_classes();
    let mut head = HeadParams::init(n, dataset.dim(), cfg.init, mix(&[seeds.seed, 0x1417]));
    let mut adam = AdamState::new(&head, cfg.lr).with_betas(cfg.beta1, cfg.beta2, cfg.eps);
    let mut state = strategy.initial_state(dataset, curriculum);
    let mut run_rng = ChaCha8Rng::seed_from_u64(seeds.stream);
    let mut seen = vec![false; n];
    let mut acc = AccuracyMatrix::new();
    let tests: Vec<Vec<Example>> = curriculum
        .tasks
        .iter()
        .map(|t| dataset.task_examples(t, Split::Test))
        .collect();

    for (t, task) in curriculum.tasks.iter().enumerate() {
        let wrap = |e: Error| Error::Training {
            task: t,
            source: Box::new(e),
        };
        if let StrategyState::Lwf { snapshot, .. } = &mut state {
            *snapshot = (t > 0).then(|| LwfSnapshot {
                head: head.clone(),
                old_classes: seen.clone(),
            });
        }
        for c in &task.classes {
            seen[c.0] = true;
        }
        let train = dataset.task_examples(task, Split::Train);
        if train.is_empty() {
            return Err(wrap(Error::EmptyInput("task training data")));
        }
        for epoch in 0..cfg.epochs {
            let mut order: Vec<usize> = (0..train.len()).collect();
            if cfg.shuffle_within_task {
                let mut rng = ChaCha8Rng::seed_from_u64(mix(&[seeds.seed, task_key(task), epoch as u64]));
                order.shuffle(&mut rng);
            }
            for chunk in order.chunks(cfg.batch_size) {
                let mut batch: Vec<&Example> = chunk.iter().map(|&i| &train[i]).collect();
                if let StrategyState::Replay(buf) = &state {
                    if !buf.is_empty() {
                        batch.extend(buf.sample(chunk.len(), &mut run_rng));
                    }
                }
                let (_, grads) = loss_and_grad(&head, &batch, &seen, &state).map_err(wrap)?;
                adam_step(&mut head, &grads, &mut adam).map_err(wrap)?;
            }
        }

        let row = tests[..=t].iter().map(|ex| evaluate(&head, ex, &seen)).collect();
        acc.push_row(row).map_err(wrap)?;

        match &mut state {
            StrategyState::Ewc { lambda, anchors } => {
                anchors.push(consolidate_ewc(&head, &train, &seen, *lambda).map_err(wrap)?);
            }
            StrategyState::Replay(buf) => update_replay_buffer(buf, &train, &mut run_rng),
            _ => {}
        }
    }
    RunRecord::new(curriculum.clone(), strategy_name.to_string(), seeds.seed, acc)
}
