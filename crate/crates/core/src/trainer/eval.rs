use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rollout::{policy_prompt, rollout_policy, Budgets, PromptMode};
use crate::seqmodel::{Decode, ModelState, Token};
use crate::tasks::{verify_example, Example, Sidecar, TaskKind};
use crate::{rng, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Countdown verifier on the greedy answer.
    GreedyAccuracy,
    /// Hidden predicate from the evaluation sidecar on the greedy answer.
    HiddenRuleRate,
}

impl EvalMode {
    pub fn for_task(kind: TaskKind) -> Self {
        match kind {
            TaskKind::Countdown => EvalMode::GreedyAccuracy,
            TaskKind::HiddenRule => EvalMode::HiddenRuleRate,
        }
    }
}

/// Greedy answers for every example, in order. Invalid generations give an
/// empty answer.
pub fn greedy_answers(state: &ModelState, split: &[Example], prompt_mode: PromptMode, budgets: Budgets) -> Vec<Vec<Token>> {
    split
        .par_iter()
        .map(|ex| {
            // greedy decoding never touches the stream
            let mut r = rng::stream(0, &[]);
            let ro = rollout_policy(state, &ex.id, &ex.prompt, prompt_mode, budgets.think, budgets.answer, Decode::Greedy, &mut r);
            if ro.valid {
                ro.answer_tokens
            } else {
                Vec::new()
            }
        })
        .collect()
}

/// Fraction of `split` whose greedy answer passes the task's verifier.
pub fn evaluate(
    state: &ModelState,
    split: &[Example],
    mode: EvalMode,
    prompt_mode: PromptMode,
    budgets: Budgets,
    sidecar: Option<&Sidecar>,
) -> Result<f64> {
    if split.is_empty() {
        return Err(Error::EmptySplit);
    }
    let sidecar = match mode {
        EvalMode::GreedyAccuracy => None,
        EvalMode::HiddenRuleRate => Some(sidecar.ok_or_else(|| {
            Error::ConfigInvalid("hidden-rule evaluation needs the rule sidecar".into())
        })?),
    };
    let answers = greedy_answers(state, split, prompt_mode, budgets);
    let mut correct = 0;
    for (ex, a) in split.iter().zip(&answers) {
        if mode == EvalMode::GreedyAccuracy && ex.task_kind != TaskKind::Countdown {
            return Err(Error::ConfigInvalid(format!("{} is not a countdown example", ex.id)));
        }
        if !a.is_empty() && verify_example(ex, a, sidecar)? {
            correct += 1;
        }
    }
    Ok(correct as f64 / split.len() as f64)
}

/// The answer followed by `<eos>`, as the policy generates it in direct mode.
pub(crate) fn direct_target(expert: &[Token]) -> Vec<Token> {
    let mut g = expert.to_vec();
    g.push(Token::EOS);
    g
}

/// Mean negative log-likelihood per example of `expert <eos>` after the
/// direct-mode prompt.
pub fn expert_nll(state: &ModelState, split: &[Example]) -> Result<f64> {
    if split.is_empty() {
        return Err(Error::EmptySplit);
    }
    let total: f64 = split
        .par_iter()
        .map(|ex| {
            let prompt = policy_prompt(&ex.prompt, PromptMode::Direct);
            -state.sequence_logprob(&prompt, &direct_target(&ex.expert)).0
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    Ok(total / split.len() as f64)
}
