//! Training loops: the adversarial policy/critic game, the SFT, verifier and
//! self-likelihood baselines, evaluation and run-directory bookkeeping.

mod baselines;
mod config;
mod eval;
mod raro;
mod run;
mod warmup;

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use baselines::{train_rl_logit, train_rlvr, train_sft, SftOutcome, SftRecord};
pub use config::{Ablations, Method, ModelConfig, SftConfig, TrainConfig};
pub use eval::{evaluate, expert_nll, greedy_answers, EvalMode};
pub use raro::train_raro;
pub use run::RunDir;
pub use warmup::{format_warmup, vocab_for};

use crate::grpo::{AdamW, LossBreakdown, Member};
use crate::rollout::{rollout_policy, PolicyRollout, PromptMode};
use crate::seqmodel::{Decode, ModelState};
use crate::tasks::{Example, Sidecar, TaskKind};
use crate::{rng, Error, Result};

/// Train, validation and test examples.
#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Vec<Example>,
    pub validation: Vec<Example>,
    pub test: Vec<Example>,
    /// Hidden-rule predicates, for evaluation only.
    pub sidecar: Option<Sidecar>,
}

impl Splits {
    /// The last `test` examples form the test split, the `validation` before
    /// them the validation split, and the rest is training data.
    pub fn from_examples(mut examples: Vec<Example>, validation: usize, test: usize) -> Result<Self> {
        if examples.len() <= validation + test {
            return Err(Error::DatasetEmpty);
        }
        let test_split = examples.split_off(examples.len() - test);
        let val_split = examples.split_off(examples.len() - validation);
        Ok(Splits {
            train: examples,
            validation: val_split,
            test: test_split,
            sidecar: None,
        })
    }

    pub fn task_kind(&self) -> Result<TaskKind> {
        self.train.first().map(|e| e.task_kind).ok_or(Error::DatasetEmpty)
    }

    pub fn eval_mode(&self) -> Result<EvalMode> {
        Ok(EvalMode::for_task(self.task_kind()?))
    }
}

/// One iteration's metrics. `None` marks a quantity with no samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub iteration: usize,
    pub policy_reward_mean: Option<f64>,
    pub critic_reward_mean: Option<f64>,
    /// Share of critic-stream verdicts that were ties.
    pub tie_fraction: Option<f64>,
    /// Share of critic verdicts (both phases) that were invalid.
    pub invalid_fraction: Option<f64>,
    pub policy_valid_fraction: f64,
    pub overlength_fraction: f64,
    /// Generated tokens per policy rollout.
    pub mean_response_length: f64,
    pub mean_think_length: f64,
    pub valid_policy_rollouts: usize,
    /// Policy-phase judgments of fresh triplets.
    pub fresh_judgments: usize,
    pub critic_stream: usize,
    pub replayed_in_stream: usize,
    pub buffer_size: usize,
    pub loss: f64,
    pub policy_term: f64,
    pub critic_term: f64,
    pub kl: f64,
    /// Tokens entering the surrogate, and how many of them sat outside the
    /// trust region.
    pub trained_tokens: usize,
    pub clipped_tokens: usize,
    pub grad_norm: f64,
    pub validation_score: Option<f64>,
    /// Kept out of `metrics.jsonl` so that file is reproducible; written to
    /// `timing.jsonl` instead.
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

impl RunRecord {
    fn new(iteration: usize) -> Self {
        RunRecord {
            iteration,
            policy_reward_mean: None,
            critic_reward_mean: None,
            tie_fraction: None,
            invalid_fraction: None,
            policy_valid_fraction: 0.0,
            overlength_fraction: 0.0,
            mean_response_length: 0.0,
            mean_think_length: 0.0,
            valid_policy_rollouts: 0,
            fresh_judgments: 0,
            critic_stream: 0,
            replayed_in_stream: 0,
            buffer_size: 0,
            loss: 0.0,
            policy_term: 0.0,
            critic_term: 0.0,
            kl: 0.0,
            trained_tokens: 0,
            clipped_tokens: 0,
            grad_norm: 0.0,
            validation_score: None,
            wall_clock_secs: 0.0,
        }
    }
}

impl RunRecord {
    fn add_loss(&mut self, loss: f64, b: &LossBreakdown) {
        self.loss += loss;
        self.policy_term += b.policy_term;
        self.critic_term += b.critic_term;
        self.kl += b.kl;
        self.trained_tokens += b.tokens;
        self.clipped_tokens += b.clipped_tokens;
    }
}

#[derive(Debug, Clone, Serialize)]
struct Timing {
    iteration: usize,
    wall_clock_secs: f64,
}

/// Describes what a run actually did, written to `run.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub method: Method,
    pub seed: u64,
    pub ablations: Vec<String>,
    pub replay_enabled: bool,
    pub relativistic_critic: bool,
    pub tie_allowed: bool,
    pub critic_reasoning: bool,
    pub models: usize,
    pub iterations: usize,
    pub best_iteration: Option<usize>,
    pub best_validation: Option<f64>,
}

impl RunMetadata {
    fn new(cfg: &TrainConfig) -> Self {
        let a = cfg.ablations;
        let raro = cfg.method == Method::Raro;
        RunMetadata {
            method: cfg.method,
            seed: cfg.seed,
            ablations: a.tags().into_iter().map(String::from).collect(),
            replay_enabled: raro && !a.no_replay,
            relativistic_critic: raro && !a.no_relativistic,
            tie_allowed: raro && !a.no_tie && !a.no_relativistic,
            critic_reasoning: raro && !a.no_critic_reasoning,
            models: if raro && a.no_shared_model { 2 } else { 1 },
            iterations: cfg.iterations,
            best_iteration: None,
            best_validation: None,
        }
    }
}

/// The best non-initial checkpoint by validation score.
#[derive(Debug, Clone)]
pub struct Best {
    pub iteration: usize,
    pub score: f64,
    pub state: ModelState,
    /// The separate critic when the model is not shared.
    pub critic: Option<ModelState>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub final_state: ModelState,
    /// The separate critic when the model is not shared.
    pub final_critic: Option<ModelState>,
    pub records: Vec<RunRecord>,
    pub best: Option<Best>,
    pub metadata: RunMetadata,
}

impl RunOutcome {
    /// Best validated policy, or the final one if validation never ran.
    pub fn selected(&self) -> &ModelState {
        self.best.as_ref().map(|b| &b.state).unwrap_or(&self.final_state)
    }

    /// Critic paired with [`RunOutcome::selected`].
    pub fn selected_critic(&self) -> &ModelState {
        match &self.best {
            Some(b) => b.critic.as_ref().unwrap_or(&b.state),
            None => self.final_critic.as_ref().unwrap_or(&self.final_state),
        }
    }
}

fn check_inputs(cfg: &TrainConfig, splits: &Splits) -> Result<()> {
    cfg.validate()?;
    if splits.train.is_empty() {
        return Err(Error::DatasetEmpty);
    }
    Ok(())
}

/// Question indices for one iteration: distinct when the training set is
/// large enough.
fn draw_questions(n: usize, batch: usize, seed: u64, iteration: usize) -> Vec<usize> {
    let mut r = rng::stream(seed, &[iteration as u64, 0]);
    if batch <= n {
        sample(&mut r, n, batch).into_vec()
    } else {
        (0..batch).map(|_| r.gen_range(0..n)).collect()
    }
}

/// `K` rollouts per drawn question, each from its own stream.
fn sample_policy(
    state: &ModelState,
    cfg: &TrainConfig,
    questions: &[&Example],
    iteration: usize,
) -> Vec<Vec<PolicyRollout>> {
    let k = cfg.group_size;
    let flat: Vec<PolicyRollout> = (0..questions.len() * k)
        .into_par_iter()
        .map(|j| {
            let (i, s) = (j / k, j % k);
            let mut r = rng::stream(cfg.seed, &[iteration as u64, 1, i as u64, s as u64]);
            let ex = questions[i];
            rollout_policy(
                state,
                &ex.id,
                &ex.prompt,
                PromptMode::Reasoning,
                cfg.budgets.think,
                cfg.budgets.answer,
                Decode::Temperature(cfg.temperature),
                &mut r,
            )
        })
        .collect();
    flat.chunks(k).map(|c| c.to_vec()).collect()
}

fn policy_member(r: &PolicyRollout, reward: f64, mask: bool) -> Member {
    Member {
        prompt: r.prompt.clone(),
        generated: r.generated.clone(),
        old_logprobs: r.per_token_logprobs.clone(),
        reward,
        mask: mask && r.valid,
        overlength: r.overlength,
    }
}

fn fill_rollout_stats(rec: &mut RunRecord, rollouts: &[Vec<PolicyRollout>]) {
    let all: Vec<&PolicyRollout> = rollouts.iter().flatten().collect();
    let n = all.len().max(1) as f64;
    rec.valid_policy_rollouts = all.iter().filter(|r| r.valid).count();
    rec.policy_valid_fraction = rec.valid_policy_rollouts as f64 / n;
    rec.overlength_fraction = all.iter().filter(|r| r.overlength).count() as f64 / n;
    rec.mean_response_length = all.iter().map(|r| r.generated.len()).sum::<usize>() as f64 / n;
    rec.mean_think_length = all.iter().map(|r| r.think_tokens.len()).sum::<usize>() as f64 / n;
}

fn mean(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        None
    } else {
        Some(v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Validation, best-checkpoint tracking and run-directory writes shared by
/// the GRPO-based trainers.
struct Tracker<'a> {
    cfg: &'a TrainConfig,
    splits: &'a Splits,
    dir: Option<&'a RunDir>,
    records: Vec<RunRecord>,
    timings: Vec<Timing>,
    best: Option<Best>,
    metadata: RunMetadata,
    started: std::time::Instant,
}

impl<'a> Tracker<'a> {
    fn start(cfg: &'a TrainConfig, splits: &'a Splits, dir: Option<&'a RunDir>) -> Result<Self> {
        let metadata = RunMetadata::new(cfg);
        if let Some(d) = dir {
            d.write_json("config.json", cfg)?;
            d.write_json("run.json", &metadata)?;
        }
        Ok(Tracker {
            cfg,
            splits,
            dir,
            records: Vec::new(),
            timings: Vec::new(),
            best: None,
            metadata,
            started: std::time::Instant::now(),
        })
    }

    fn due(&self, iteration: usize) -> bool {
        (iteration + 1) % self.cfg.eval_every == 0 || iteration + 1 == self.cfg.iterations
    }

    /// Greedy accuracy on the validation split for countdown; the
    /// iteration's mean policy reward for hidden-rule data, where the
    /// verifier must stay unseen.
    fn validation_score(&self, policy: &ModelState, rec: &RunRecord) -> Result<Option<f64>> {
        match self.splits.task_kind()? {
            TaskKind::Countdown if !self.splits.validation.is_empty() => Ok(Some(evaluate(
                policy,
                &self.splits.validation,
                EvalMode::GreedyAccuracy,
                PromptMode::Reasoning,
                self.cfg.budgets,
                None,
            )?)),
            TaskKind::Countdown => Ok(None),
            TaskKind::HiddenRule => Ok(rec.policy_reward_mean),
        }
    }

    fn finish_iteration(
        &mut self,
        mut rec: RunRecord,
        policy: &ModelState,
        critic: Option<&ModelState>,
        optimizers: &[AdamW],
        iter_start: std::time::Instant,
    ) -> Result<()> {
        if self.due(rec.iteration) {
            rec.validation_score = self.validation_score(policy, &rec)?;
            if let Some(score) = rec.validation_score {
                if self.best.as_ref().is_none_or(|b| score > b.score) {
                    self.best = Some(Best {
                        iteration: rec.iteration,
                        score,
                        state: policy.clone(),
                        critic: critic.cloned(),
                    });
                    if let Some(d) = self.dir {
                        d.save_checkpoint("best", policy, optimizers.first())?;
                        if let Some(c) = critic {
                            d.save_checkpoint("best-critic", c, optimizers.get(1))?;
                        }
                    }
                }
            }
        }
        rec.wall_clock_secs = iter_start.elapsed().as_secs_f64();
        tracing::debug!(
            iteration = rec.iteration,
            policy_reward = ?rec.policy_reward_mean,
            critic_reward = ?rec.critic_reward_mean,
            validation = ?rec.validation_score,
            "iteration done"
        );
        self.timings.push(Timing {
            iteration: rec.iteration,
            wall_clock_secs: self.started.elapsed().as_secs_f64(),
        });
        self.records.push(rec);
        if let Some(d) = self.dir {
            d.write_jsonl("metrics.jsonl", &self.records)?;
            d.write_jsonl("timing.jsonl", &self.timings)?;
        }
        Ok(())
    }

    fn finish(
        mut self,
        final_state: ModelState,
        final_critic: Option<ModelState>,
        optimizers: &[AdamW],
    ) -> Result<RunOutcome> {
        self.metadata.best_iteration = self.best.as_ref().map(|b| b.iteration);
        self.metadata.best_validation = self.best.as_ref().map(|b| b.score);
        if let Some(d) = self.dir {
            d.save_checkpoint("final", &final_state, optimizers.first())?;
            if let Some(c) = &final_critic {
                d.save_checkpoint("final-critic", c, optimizers.get(1))?;
            }
            d.write_json("run.json", &self.metadata)?;
        }
        Ok(RunOutcome {
            final_state,
            final_critic,
            records: self.records,
            best: self.best,
            metadata: self.metadata,
        })
    }
}
