use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::eval::direct_target;
use super::{
    check_inputs, draw_questions, expert_nll, fill_rollout_stats, mean, policy_member, sample_policy, Method,
    RunDir, RunOutcome, RunRecord, Splits, TrainConfig, Tracker,
};
use crate::grpo::{surrogate_loss, weighted_logprob_grad, AdamW, AdamWConfig, Group, GroupKey, Role, SurrogateConfig};
use crate::rewards::{reward_rl_logit, reward_rlvr};
use crate::rollout::{policy_prompt, PolicyRollout, PromptMode};
use crate::seqmodel::{ModelState, ReferenceState, Token};
use crate::tasks::{Example, TaskKind};
use crate::{rng, Error, Result};

/// GRPO on the policy role alone with an arbitrary per-rollout reward.
fn train_policy_only<F>(
    cfg: &TrainConfig,
    splits: &Splits,
    model_init: &ModelState,
    dir: Option<&RunDir>,
    reward: F,
) -> Result<RunOutcome>
where
    F: Fn(&ModelState, &Example, &PolicyRollout) -> Result<f64> + Sync,
{
    let mut state = model_init.clone();
    let reference = ReferenceState::new(model_init);
    let mut opt = AdamW::new(cfg.optimizer, state.param_count());
    let scfg = SurrogateConfig {
        bounds: cfg.clip,
        beta_kl: cfg.beta_kl,
        lambda_pol: 1.0,
        lambda_crit: 0.0,
        kl_on_critic: false,
    };
    let mut tracker = Tracker::start(cfg, splits, dir)?;
    for it in 0..cfg.iterations {
        let t0 = Instant::now();
        let picked = draw_questions(splits.train.len(), cfg.rollout_batch, cfg.seed, it);
        let questions: Vec<&Example> = picked.iter().map(|&i| &splits.train[i]).collect();
        let rollouts = sample_policy(&state, cfg, &questions, it);
        let mut rec = RunRecord::new(it);
        fill_rollout_stats(&mut rec, &rollouts);

        let scored: Vec<Vec<(f64, bool)>> = questions
            .par_iter()
            .zip(&rollouts)
            .map(|(ex, group)| {
                group
                    .iter()
                    .map(|r| if r.valid { Ok((reward(&state, ex, r)?, true)) } else { Ok((0.0, false)) })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let live: Vec<f64> = scored.iter().flatten().filter(|r| r.1).map(|r| r.0).collect();
        rec.policy_reward_mean = mean(&live);
        let groups: Vec<Group> = questions
            .iter()
            .enumerate()
            .map(|(i, ex)| Group {
                key: GroupKey {
                    prompt_key: format!("{}#{i}", ex.id),
                    role: Role::Policy,
                },
                members: rollouts[i]
                    .iter()
                    .zip(&scored[i])
                    .map(|(r, &(w, m))| policy_member(r, w, m))
                    .collect(),
            })
            .collect();
        let mut norms = Vec::new();
        for mb in groups.chunks(cfg.train_batch) {
            let s = surrogate_loss(mb, &state, &reference, &scfg);
            rec.add_loss(s.loss, &s.breakdown);
            if s.breakdown.tokens > 0 {
                let lr = opt.config.lr;
                norms.push(opt.step(state.params_mut(), &s.grad, lr));
            }
        }
        rec.grad_norm = mean(&norms).unwrap_or(0.0);
        tracker.finish_iteration(rec, &state, None, std::slice::from_ref(&opt), t0)?;
    }
    tracker.finish(state, None, &[opt])
}

/// GRPO with the task verifier as a 0/1 reward. Needs a verifier the
/// trainer may see, so hidden-rule data is refused.
pub fn train_rlvr(cfg: &TrainConfig, splits: &Splits, model_init: &ModelState, dir: Option<&RunDir>) -> Result<RunOutcome> {
    if let Some(ex) = splits.train.iter().find(|e| e.task_kind == TaskKind::HiddenRule) {
        return Err(Error::RlvrUnavailable(format!(
            "{} is a hidden-rule example; its verifier is evaluation-only",
            ex.id
        )));
    }
    check_inputs(cfg, splits)?;
    expect_method(cfg, Method::Rlvr)?;
    train_policy_only(cfg, splits, model_init, dir, |_, ex, r| reward_rlvr(ex, &r.answer_tokens))
}

/// GRPO where the reward is the policy's own likelihood of the expert answer
/// after its reasoning, scored with the parameters that sampled the rollout.
pub fn train_rl_logit(cfg: &TrainConfig, splits: &Splits, model_init: &ModelState, dir: Option<&RunDir>) -> Result<RunOutcome> {
    check_inputs(cfg, splits)?;
    expect_method(cfg, Method::RlLogit)?;
    let variant = cfg.rl_logit_variant;
    train_policy_only(cfg, splits, model_init, dir, |state, ex, r| {
        Ok(reward_rl_logit(state, &ex.prompt, &r.think_tokens, &ex.expert, variant))
    })
}

fn expect_method(cfg: &TrainConfig, m: Method) -> Result<()> {
    if cfg.method != m {
        return Err(Error::ConfigInvalid(format!(
            "{} trainer called with method {}",
            m.name(),
            cfg.method.name()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SftRecord {
    pub epoch: usize,
    /// Mean per-example negative log-likelihood over the epoch's batches.
    pub train_loss: f64,
    pub validation_loss: f64,
}

#[derive(Debug, Clone)]
pub struct SftOutcome {
    /// Parameters after the epoch with the lowest validation loss.
    pub state: ModelState,
    pub final_state: ModelState,
    pub best_epoch: usize,
    pub records: Vec<SftRecord>,
}

/// Maximum likelihood of `expert <eos>` after the direct-mode prompt (no
/// reasoning), with the warm-up/cosine schedule and per-epoch selection on
/// validation loss. Without a validation split the training loss decides.
pub fn train_sft(cfg: &TrainConfig, splits: &Splits, model_init: &ModelState, dir: Option<&RunDir>) -> Result<SftOutcome> {
    check_inputs(cfg, splits)?;
    expect_method(cfg, Method::Sft)?;
    let sc = cfg.sft;
    let mut state = model_init.clone();
    let mut opt = AdamW::new(
        AdamWConfig {
            lr: sc.lr,
            weight_decay: sc.weight_decay,
            max_grad_norm: sc.max_grad_norm,
            ..AdamWConfig::default()
        },
        state.param_count(),
    );
    if let Some(d) = dir {
        d.write_json("config.json", cfg)?;
    }
    let train = &splits.train;
    let prompts: Vec<(Vec<Token>, Vec<Token>)> = train
        .iter()
        .map(|ex| (policy_prompt(&ex.prompt, PromptMode::Direct), direct_target(&ex.expert)))
        .collect();
    let steps_per_epoch = train.len().div_ceil(sc.batch_size);
    let total = steps_per_epoch * sc.epochs;
    let mut step = 0;
    let mut records = Vec::new();
    let mut best: Option<(f64, usize, ModelState)> = None;
    for epoch in 0..sc.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng::stream(cfg.seed, &[0x5F7, epoch as u64]));
        let mut losses = Vec::new();
        for batch in order.chunks(sc.batch_size) {
            let scale = -1.0 / batch.len() as f64;
            let items: Vec<(&[Token], &[Token], f64)> = batch
                .iter()
                .map(|&i| (prompts[i].0.as_slice(), prompts[i].1.as_slice(), scale))
                .collect();
            let (objective, grad) = weighted_logprob_grad(&items, &state);
            losses.push(objective);
            opt.step(state.params_mut(), &grad, sc.lr_at(step, total));
            step += 1;
        }
        let train_loss = mean(&losses).unwrap_or(0.0);
        let validation_loss = if splits.validation.is_empty() {
            train_loss
        } else {
            expert_nll(&state, &splits.validation)?
        };
        records.push(SftRecord {
            epoch,
            train_loss,
            validation_loss,
        });
        if best.as_ref().is_none_or(|b| validation_loss < b.0) {
            best = Some((validation_loss, epoch, state.clone()));
            if let Some(d) = dir {
                d.save_checkpoint("best", &state, Some(&opt))?;
            }
        }
        if let Some(d) = dir {
            d.write_jsonl("metrics.jsonl", &records)?;
        }
    }
    if let Some(d) = dir {
        d.save_checkpoint("final", &state, Some(&opt))?;
    }
    let (_, best_epoch, best_state) = best.ok_or_else(|| Error::ConfigInvalid("sft.epochs must be at least 1".into()))?;
    Ok(SftOutcome {
        state: best_state,
        final_state: state,
        best_epoch,
        records,
    })
}
