//! Reward definitions for critic, policy and the baselines.

use serde::{Deserialize, Serialize};

use crate::rollout::{policy_prompt, PromptMode};
use crate::seqmodel::ModelState;
use crate::tasks::{verify_example, Example, TaskKind};
use crate::{Error, Result, Token};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Slot {
    One,
    Two,
}

impl Slot {
    pub fn other(self) -> Slot {
        match self {
            Slot::One => Slot::Two,
            Slot::Two => Slot::One,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticLabel {
    Slot1,
    Slot2,
    Tie,
    Invalid,
}

impl CriticLabel {
    pub fn picks(self, slot: Slot) -> bool {
        matches!(
            (self, slot),
            (CriticLabel::Slot1, Slot::One) | (CriticLabel::Slot2, Slot::Two)
        )
    }
}

/// Partial credit for a tie, one value per role.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TieRewards {
    pub tau_pol: f64,
    pub tau_crit: f64,
}

impl TieRewards {
    pub fn new(tau_pol: f64, tau_crit: f64) -> Result<Self> {
        let t = TieRewards { tau_pol, tau_crit };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("tau_pol", self.tau_pol), ("tau_crit", self.tau_crit)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::ConfigInvalid(format!("{name} = {v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Critic reward and loss mask: 1 for naming the expert, `tau_crit` for a
/// tie, 0 for naming the policy. Invalid verdicts are masked out.
pub fn reward_critic(label: CriticLabel, expert_slot: Slot, taus: &TieRewards) -> (f64, bool) {
    match label {
        CriticLabel::Invalid => (0.0, false),
        CriticLabel::Tie => (taus.tau_crit, true),
        l if l.picks(expert_slot) => (1.0, true),
        _ => (0.0, true),
    }
}

/// Policy reward and loss mask: 1 when the critic takes the policy answer
/// for the expert's, `tau_pol` for a tie, 0 otherwise. An invalid verdict
/// carries no signal and masks the policy rollout as well.
pub fn reward_policy(label: CriticLabel, expert_slot: Slot, taus: &TieRewards) -> (f64, bool) {
    match label {
        CriticLabel::Invalid => (0.0, false),
        CriticLabel::Tie => (taus.tau_pol, true),
        l if l.picks(expert_slot.other()) => (1.0, true),
        _ => (0.0, true),
    }
}

/// Verdict of the single-answer critic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinaryVerdict {
    Expert,
    Policy,
    Invalid,
}

impl BinaryVerdict {
    /// `<1>` means "this is the expert", `<2>` means "this is the policy".
    pub fn from_label(label: CriticLabel) -> Self {
        match label {
            CriticLabel::Slot1 => BinaryVerdict::Expert,
            CriticLabel::Slot2 => BinaryVerdict::Policy,
            _ => BinaryVerdict::Invalid,
        }
    }
}

/// Where a shown answer came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Expert,
    Policy,
}

/// Non-relativistic critic reward: 1 for classifying the shown answer's
/// source correctly.
pub fn reward_binary(verdict: BinaryVerdict, truth: Source) -> (f64, bool) {
    match (verdict, truth) {
        (BinaryVerdict::Invalid, _) => (0.0, false),
        (BinaryVerdict::Expert, Source::Expert) | (BinaryVerdict::Policy, Source::Policy) => {
            (1.0, true)
        }
        _ => (0.0, true),
    }
}

/// Policy side of the binary game: 1 when its own answer is taken for the
/// expert's.
pub fn reward_binary_policy(verdict: BinaryVerdict) -> (f64, bool) {
    match verdict {
        BinaryVerdict::Invalid => (0.0, false),
        BinaryVerdict::Expert => (1.0, true),
        BinaryVerdict::Policy => (0.0, true),
    }
}

/// Verifier reward. Only defined for tasks with a programmatic checker that
/// does not need the hidden sidecar.
pub fn reward_rlvr(example: &Example, answer: &[Token]) -> Result<f64> {
    match example.task_kind {
        TaskKind::Countdown => Ok(if verify_example(example, answer, None)? { 1.0 } else { 0.0 }),
        TaskKind::HiddenRule => Err(Error::RlvrUnavailable(format!(
            "{} has no verifier visible to training",
            example.id
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RlLogitVariant {
    /// `max(0.1 * sum log p, -1)`.
    LogProb,
    /// `10 * exp(mean log p)`.
    Perplexity,
}

/// Reward from per-token log-probabilities of the expert answer.
pub fn rl_logit_from_logprobs(variant: RlLogitVariant, answer_logprobs: &[f64]) -> f64 {
    match variant {
        RlLogitVariant::LogProb => (0.1 * answer_logprobs.iter().sum::<f64>()).max(-1.0),
        RlLogitVariant::Perplexity => {
            if answer_logprobs.is_empty() {
                return 0.0;
            }
            let mean = answer_logprobs.iter().sum::<f64>() / answer_logprobs.len() as f64;
            10.0 * mean.exp()
        }
    }
}

/// Scores the expert answer under the policy after its own reasoning: the
/// context is the policy prompt, `think`, then `<answer>`. Only the answer
/// tokens are scored; the closing `<eos>` is not.
pub fn reward_rl_logit(
    state: &ModelState,
    question: &[Token],
    think: &[Token],
    expert: &[Token],
    variant: RlLogitVariant,
) -> f64 {
    assert!(!expert.is_empty(), "expert answer must be non-empty");
    let prompt = policy_prompt(question, PromptMode::Reasoning);
    let mut gen = Vec::with_capacity(think.len() + 1 + expert.len());
    gen.extend_from_slice(think);
    gen.push(Token::SEP_ANSWER);
    gen.extend_from_slice(expert);
    let (_, per) = state.sequence_logprob(&prompt, &gen);
    rl_logit_from_logprobs(variant, &per[think.len() + 1..])
}
