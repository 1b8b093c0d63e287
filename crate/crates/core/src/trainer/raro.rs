use std::time::Instant;

use rayon::prelude::*;

use super::{
    check_inputs, draw_questions, fill_rollout_stats, mean, policy_member, sample_policy, Method, RunDir,
    RunOutcome, RunRecord, Splits, TrainConfig, Tracker,
};
use crate::grpo::{surrogate_loss, AdamW, Group, GroupKey, Member, Role, SurrogateConfig};
use crate::replay::ReplayBuffer;
use crate::rewards::{
    reward_binary, reward_binary_policy, reward_critic, reward_policy, BinaryVerdict, CriticLabel, Slot, Source,
};
use crate::rollout::{
    binary_critic_prompt, build_triplet, rollout_critic_prompt, ComparisonTriplet, CriticOptions, CriticRollout,
    Origin,
};
use crate::seqmodel::{Decode, ModelState, ReferenceState, Token};
use crate::{rng, Error, Result};

/// How the critic is asked and paid.
#[derive(Clone, Copy)]
struct Game {
    relativistic: bool,
    options: CriticOptions,
}

impl Game {
    /// Critic prompt for a stream triplet. The single-answer critic is shown
    /// the expert when the expert sits in slot 1, the policy answer
    /// otherwise; the slot is a fair coin, so both sources appear equally.
    fn stream_prompt(&self, t: &ComparisonTriplet) -> (Vec<Token>, Source) {
        if self.relativistic {
            (t.prompt(), Source::Expert)
        } else if t.expert_slot == Slot::One {
            (binary_critic_prompt(&t.question, t.expert_tokens()), Source::Expert)
        } else {
            (binary_critic_prompt(&t.question, t.policy_tokens()), Source::Policy)
        }
    }

    fn policy_phase_prompt(&self, t: &ComparisonTriplet) -> Vec<Token> {
        if self.relativistic {
            t.prompt()
        } else {
            binary_critic_prompt(&t.question, t.policy_tokens())
        }
    }

    fn critic_reward(&self, cfg: &TrainConfig, label: CriticLabel, t: &ComparisonTriplet, truth: Source) -> (f64, bool) {
        if self.relativistic {
            reward_critic(label, t.expert_slot, &cfg.taus)
        } else {
            reward_binary(BinaryVerdict::from_label(label), truth)
        }
    }

    fn policy_reward(&self, cfg: &TrainConfig, label: CriticLabel, t: &ComparisonTriplet) -> (f64, bool) {
        if self.relativistic {
            reward_policy(label, t.expert_slot, &cfg.taus)
        } else {
            reward_binary_policy(BinaryVerdict::from_label(label))
        }
    }
}

fn judge(
    critic: &ModelState,
    cfg: &TrainConfig,
    game: Game,
    prompt: Vec<Token>,
    path: &[u64],
) -> CriticRollout {
    let mut r = rng::stream(cfg.seed, path);
    rollout_critic_prompt(
        critic,
        prompt,
        cfg.budgets.critic_think,
        Decode::Temperature(cfg.temperature),
        game.options,
        &mut r,
    )
}

/// Runs the adversarial game: each iteration samples `group_size` answers
/// for `rollout_batch` questions, pays the policy by one critic verdict per
/// fresh triplet, trains the critic on a fresh/replay mix of triplets, and
/// takes λ-weighted clipped policy-gradient steps with a KL anchor to
/// `model_init`. The expert answers are the only supervision; no verifier is
/// consulted except for validation-based checkpoint selection on countdown.
pub fn train_raro(
    cfg: &TrainConfig,
    splits: &Splits,
    model_init: &ModelState,
    dir: Option<&RunDir>,
) -> Result<RunOutcome> {
    check_inputs(cfg, splits)?;
    if cfg.method != Method::Raro {
        return Err(Error::ConfigInvalid(format!(
            "train_raro called with method {}",
            cfg.method.name()
        )));
    }
    let a = cfg.ablations;
    let game = Game {
        relativistic: !a.no_relativistic,
        options: CriticOptions {
            reasoning: !a.no_critic_reasoning,
            allow_tie: !a.no_tie && !a.no_relativistic,
        },
    };
    let shared = !a.no_shared_model;
    let mut models = vec![model_init.clone()];
    if !shared {
        models.push(model_init.clone());
    }
    let refs: Vec<ReferenceState> = models.iter().map(ReferenceState::new).collect();
    let mut opts: Vec<AdamW> = models
        .iter()
        .map(|m| AdamW::new(cfg.optimizer, m.param_count()))
        .collect();
    let critic_idx = models.len() - 1;
    let scfg = SurrogateConfig {
        bounds: cfg.clip,
        beta_kl: cfg.beta_kl,
        lambda_pol: cfg.lambda_pol,
        lambda_crit: cfg.lambda_crit,
        kl_on_critic: cfg.kl_on_critic,
    };
    let mut buffer = ReplayBuffer::new(cfg.replay_capacity);
    let mut tracker = Tracker::start(cfg, splits, dir)?;
    let train = &splits.train;

    for it in 0..cfg.iterations {
        let t0 = Instant::now();
        let itu = it as u64;
        let picked = draw_questions(train.len(), cfg.rollout_batch, cfg.seed, it);
        let questions: Vec<_> = picked.iter().map(|&i| &train[i]).collect();
        let rollouts = sample_policy(&models[0], cfg, &questions, it);
        let mut rec = RunRecord::new(it);
        fill_rollout_stats(&mut rec, &rollouts);

        // fresh triplets, one per valid rollout
        let mut fresh: Vec<(usize, usize, ComparisonTriplet)> = Vec::new();
        for (i, group) in rollouts.iter().enumerate() {
            let ex = questions[i];
            for (k, r) in group.iter().enumerate() {
                if r.valid {
                    let mut rr = rng::stream(cfg.seed, &[itu, 2, i as u64, k as u64]);
                    let t = build_triplet(&ex.id, &ex.prompt, &ex.expert, &r.answer_tokens, &mut rr);
                    fresh.push((i, k, t));
                }
            }
        }

        // policy phase: one verdict per fresh triplet
        let critic = &models[critic_idx];
        let verdicts: Vec<CriticRollout> = fresh
            .par_iter()
            .enumerate()
            .map(|(j, (_, _, t))| judge(critic, cfg, game, game.policy_phase_prompt(t), &[itu, 3, j as u64]))
            .collect();
        rec.fresh_judgments = verdicts.len();
        let mut pol_rewards = vec![vec![(0.0, false); cfg.group_size]; questions.len()];
        for ((i, k, t), v) in fresh.iter().zip(&verdicts) {
            pol_rewards[*i][*k] = game.policy_reward(cfg, v.label, t);
        }
        let live: Vec<f64> = pol_rewards.iter().flatten().filter(|r| r.1).map(|r| r.0).collect();
        rec.policy_reward_mean = mean(&live);
        let policy_groups: Vec<Group> = questions
            .iter()
            .enumerate()
            .map(|(i, ex)| Group {
                key: GroupKey {
                    prompt_key: format!("{}#{i}", ex.id),
                    role: Role::Policy,
                },
                members: rollouts[i]
                    .iter()
                    .zip(&pol_rewards[i])
                    .map(|(r, &(w, m))| policy_member(r, w, m))
                    .collect(),
            })
            .collect();

        // critic stream: mixed before this iteration's triplets join history
        let fresh_triplets: Vec<ComparisonTriplet> = fresh.into_iter().map(|f| f.2).collect();
        let stream: Vec<ComparisonTriplet> = if fresh_triplets.is_empty() {
            Vec::new()
        } else if a.no_replay {
            fresh_triplets.clone()
        } else {
            buffer.mix(&fresh_triplets, &mut rng::stream(cfg.seed, &[itu, 4]))
        };
        buffer.append_all(fresh_triplets);
        rec.buffer_size = buffer.len();
        rec.critic_stream = stream.len();
        rec.replayed_in_stream = stream.iter().filter(|t| t.origin == Origin::Replay).count();

        let g = cfg.critic_group_size;
        let critic_rollouts: Vec<(CriticRollout, (f64, bool))> = (0..stream.len() * g)
            .into_par_iter()
            .map(|idx| {
                let (j, s) = (idx / g, idx % g);
                let t = &stream[j];
                let (prompt, truth) = game.stream_prompt(t);
                let c = judge(critic, cfg, game, prompt, &[itu, 5, j as u64, s as u64]);
                let reward = game.critic_reward(cfg, c.label, t, truth);
                (c, reward)
            })
            .collect();
        let n_stream = critic_rollouts.len();
        let live: Vec<f64> = critic_rollouts.iter().filter(|c| c.1 .1).map(|c| c.1 .0).collect();
        rec.critic_reward_mean = mean(&live);
        if n_stream > 0 {
            let ties = critic_rollouts.iter().filter(|c| c.0.label == CriticLabel::Tie).count();
            rec.tie_fraction = Some(ties as f64 / n_stream as f64);
        }
        let judged = n_stream + verdicts.len();
        if judged > 0 {
            let invalid = critic_rollouts.iter().map(|c| &c.0).chain(&verdicts).filter(|c| !c.valid).count();
            rec.invalid_fraction = Some(invalid as f64 / judged as f64);
        }
        let critic_groups: Vec<Group> = critic_rollouts
            .chunks(g)
            .enumerate()
            .map(|(j, members)| Group {
                key: GroupKey {
                    prompt_key: format!("{}#{it}.{j}", stream[j].question_ref),
                    role: Role::Critic,
                },
                members: members
                    .iter()
                    .map(|(c, (w, m))| Member {
                        prompt: c.prompt.clone(),
                        generated: c.generated.clone(),
                        old_logprobs: c.per_token_logprobs.clone(),
                        reward: *w,
                        mask: *m,
                        overlength: c.overlength,
                    })
                    .collect(),
            })
            .collect();

        // sequential minibatch updates; ratios stay relative to rollout time
        let n_mb = cfg.rollout_batch / cfg.train_batch;
        let crit_chunk = critic_groups.len().div_ceil(n_mb).max(1);
        let mut norms = Vec::new();
        for mb in 0..n_mb {
            let pol = &policy_groups[mb * cfg.train_batch..(mb + 1) * cfg.train_batch];
            let lo = (mb * crit_chunk).min(critic_groups.len());
            let hi = ((mb + 1) * crit_chunk).min(critic_groups.len());
            let crit = &critic_groups[lo..hi];
            let mut jobs: Vec<(usize, Vec<Group>)> = Vec::new();
            if shared {
                jobs.push((0, pol.iter().chain(crit).cloned().collect()));
            } else {
                jobs.push((0, pol.to_vec()));
                jobs.push((1, crit.to_vec()));
            }
            for (m, groups) in jobs {
                let s = surrogate_loss(&groups, &models[m], &refs[m], &scfg);
                rec.add_loss(s.loss, &s.breakdown);
                if s.breakdown.tokens > 0 {
                    let lr = opts[m].config.lr;
                    norms.push(opts[m].step(models[m].params_mut(), &s.grad, lr));
                }
            }
        }
        rec.grad_norm = mean(&norms).unwrap_or(0.0);
        let critic_view = if shared { None } else { Some(&models[1]) };
        tracker.finish_iteration(rec, &models[0], critic_view, &opts, t0)?;
    }
    if let Some(d) = dir {
        d.save_buffer(&buffer)?;
    }
    let mut models = models.into_iter();
    let policy = models.next().expect("policy model");
    tracker.finish(policy, models.next(), &opts)
}
