use serde::{Deserialize, Serialize};

use crate::grpo::{AdamWConfig, ClipBounds};
use crate::rewards::{RlLogitVariant, TieRewards};
use crate::rollout::{Budgets, CriticOptions};
use crate::seqmodel::{Arch, Vocab};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Raro,
    Sft,
    Rlvr,
    RlLogit,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Raro => "raro",
            Method::Sft => "sft",
            Method::Rlvr => "rlvr",
            Method::RlLogit => "rl-logit",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablations {
    /// `<tie>` is not a legal verdict.
    pub no_tie: bool,
    /// Single-answer expert/policy classifier instead of pairwise comparison.
    pub no_relativistic: bool,
    /// Critic trains on fresh triplets only.
    pub no_replay: bool,
    /// The critic's first token must be its verdict.
    pub no_critic_reasoning: bool,
    /// Separate policy and critic models, each with its own optimizer.
    pub no_shared_model: bool,
}

impl Ablations {
    pub fn critic_options(&self) -> CriticOptions {
        CriticOptions {
            reasoning: !self.no_critic_reasoning,
            allow_tie: !self.no_tie,
        }
    }

    pub fn tags(&self) -> Vec<&'static str> {
        let mut t = Vec::new();
        for (on, name) in [
            (self.no_tie, "no_tie"),
            (self.no_relativistic, "no_relativistic"),
            (self.no_replay, "no_replay"),
            (self.no_critic_reasoning, "no_critic_reasoning"),
            (self.no_shared_model, "no_shared_model"),
        ] {
            if on {
                t.push(name);
            }
        }
        t
    }
}

/// Supervised fine-tuning schedule: linear warm-up, then half a cosine
/// cycle down to `min_lr_ratio · lr`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SftConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub max_grad_norm: f64,
    pub warmup_ratio: f64,
    pub min_lr_ratio: f64,
}

impl Default for SftConfig {
    fn default() -> Self {
        SftConfig {
            epochs: 4,
            batch_size: 8,
            lr: 1e-5,
            weight_decay: 0.02,
            max_grad_norm: 1.0,
            warmup_ratio: 0.05,
            min_lr_ratio: 0.03,
        }
    }
}

impl SftConfig {
    pub fn lr_at(&self, step: usize, total: usize) -> f64 {
        let warm = ((total as f64) * self.warmup_ratio).ceil() as usize;
        if step < warm {
            return self.lr * (step + 1) as f64 / warm as f64;
        }
        let span = (total - warm).max(1) as f64;
        let progress = ((step - warm) as f64 / span).min(1.0);
        let cosine = 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
        self.lr * (self.min_lr_ratio + (1.0 - self.min_lr_ratio) * cosine)
    }
}

/// Network shape and the format warm-up that produces the base model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub window: usize,
    pub embed: usize,
    pub hidden: Vec<usize>,
    pub warmup_steps: usize,
    pub warmup_batch: usize,
    pub warmup_lr: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            window: 24,
            embed: 12,
            hidden: vec![96],
            warmup_steps: 1500,
            warmup_batch: 32,
            warmup_lr: 1e-2,
        }
    }
}

impl ModelConfig {
    pub fn arch(&self, vocab: &Vocab) -> Arch {
        Arch {
            window: self.window,
            embed: self.embed,
            hidden: self.hidden.clone(),
            vocab_size: vocab.len(),
        }
    }
}

/// Every knob of a run. Field defaults are the published hyperparameters;
/// [`TrainConfig::desk`] scales them to a single CPU.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub method: Method,
    pub seed: u64,
    pub iterations: usize,
    /// Questions drawn per iteration.
    pub rollout_batch: usize,
    /// Policy samples per question.
    pub group_size: usize,
    /// Questions per optimizer step; `rollout_batch / train_batch` steps per
    /// iteration.
    pub train_batch: usize,
    /// Critic samples per triplet in the critic stream.
    pub critic_group_size: usize,
    pub beta_kl: f64,
    pub kl_on_critic: bool,
    pub taus: TieRewards,
    pub lambda_pol: f64,
    pub lambda_crit: f64,
    pub clip: ClipBounds,
    pub budgets: Budgets,
    pub temperature: f64,
    pub optimizer: AdamWConfig,
    pub sft: SftConfig,
    pub ablations: Ablations,
    pub rl_logit_variant: RlLogitVariant,
    /// `None` keeps the whole history.
    pub replay_capacity: Option<usize>,
    /// Validate every this many iterations (and after the last one).
    pub eval_every: usize,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            method: Method::Raro,
            seed: 0,
            iterations: 100,
            rollout_batch: 1024,
            group_size: 16,
            train_batch: 256,
            critic_group_size: 16,
            beta_kl: 1e-3,
            kl_on_critic: true,
            taus: TieRewards {
                tau_pol: 0.6,
                tau_crit: 0.55,
            },
            lambda_pol: 0.5,
            lambda_crit: 0.5,
            clip: ClipBounds::default(),
            budgets: Budgets {
                think: 2048,
                answer: 2048,
                critic_think: 2048,
            },
            temperature: 1.0,
            optimizer: AdamWConfig::default(),
            sft: SftConfig::default(),
            ablations: Ablations::default(),
            rl_logit_variant: RlLogitVariant::LogProb,
            replay_capacity: None,
            eval_every: 1,
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Single-core preset for micro-Countdown. Learning rates are raised
    /// because the network is tiny; everything else keeps its published
    /// value unless it is a batch size or a token budget.
    pub fn desk(method: Method, seed: u64) -> Self {
        TrainConfig {
            method,
            seed,
            iterations: 600,
            rollout_batch: 16,
            group_size: 8,
            train_batch: 16,
            critic_group_size: 8,
            budgets: Budgets {
                think: 64,
                answer: 12,
                critic_think: 32,
            },
            optimizer: AdamWConfig {
                lr: 1e-3,
                ..AdamWConfig::default()
            },
            sft: SftConfig {
                lr: 1e-3,
                ..SftConfig::default()
            },
            ..TrainConfig::default()
        }
    }

    /// Mixing weights and tie rewards of the non-verifiable preset.
    pub fn with_hidden_rule_rewards(mut self) -> Self {
        self.taus.tau_crit = 0.5;
        self.lambda_pol = 1.0 / 3.0;
        self.lambda_crit = 2.0 / 3.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::ConfigInvalid(m));
        self.taus.validate()?;
        self.clip.validate()?;
        if !(self.lambda_pol >= 0.0 && self.lambda_crit >= 0.0 && self.lambda_pol + self.lambda_crit > 0.0) {
            return bad(format!(
                "lambda_pol + lambda_crit must be positive (got {} + {})",
                self.lambda_pol, self.lambda_crit
            ));
        }
        if self.rollout_batch == 0 || self.train_batch == 0 || self.rollout_batch % self.train_batch != 0 {
            return bad(format!(
                "rollout_batch {} must be a positive multiple of train_batch {}",
                self.rollout_batch, self.train_batch
            ));
        }
        if self.group_size == 0 || self.critic_group_size == 0 {
            return bad("group sizes must be at least 1".into());
        }
        if self.budgets.think == 0 || self.budgets.answer == 0 || self.budgets.critic_think == 0 {
            return bad("token budgets must be at least 1".into());
        }
        if !(self.temperature > 0.0) || !(self.beta_kl >= 0.0) {
            return bad("temperature must be positive and beta_kl non-negative".into());
        }
        if !(self.optimizer.lr > 0.0) || !(self.sft.lr > 0.0) {
            return bad("learning rates must be positive".into());
        }
        if self.eval_every == 0 || self.sft.batch_size == 0 {
            return bad("eval_every and sft.batch_size must be at least 1".into());
        }
        if self.model.window == 0 || self.model.embed == 0 {
            return bad("model window and embedding must be positive".into());
        }
        Ok(())
    }
}
