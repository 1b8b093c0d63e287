//! Group-relative advantages, the clipped token-level surrogate with exact KL,
//! and the AdamW optimizer that applies it.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rollout::Budgeted;
use crate::seqmodel::{kl_dlogits, kl_from_logs, score_dlogits, ModelState, ReferenceState};
use crate::{Error, Result, Token};

/// Members per parallel gradient chunk. Fixed so the summation order, and
/// therefore every bit of the result, does not depend on the thread count.
const CHUNK: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Policy,
    Critic,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroupKey {
    pub prompt_key: String,
    pub role: Role,
}

/// One scored generation with the log-probabilities it had when sampled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub prompt: Vec<Token>,
    pub generated: Vec<Token>,
    pub old_logprobs: Vec<f64>,
    pub reward: f64,
    /// False when the reward carries no signal (invalid output).
    pub mask: bool,
    pub overlength: bool,
}

impl Budgeted for Member {
    fn overlength(&self) -> bool {
        self.overlength
    }
}

impl Member {
    fn contributes(&self) -> bool {
        self.mask && !self.overlength
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Group {
    pub key: GroupKey,
    pub members: Vec<Member>,
}

/// Reward minus the mean reward of the group's masked-in members. No
/// standard-deviation scaling; masked-out members get zero.
pub fn group_advantages(group: &Group) -> Result<Vec<f64>> {
    let live: Vec<f64> = group
        .members
        .iter()
        .filter(|m| m.contributes())
        .map(|m| m.reward)
        .collect();
    if live.is_empty() {
        return Err(Error::EmptyGroup(group.key.prompt_key.clone()));
    }
    let mean = live.iter().sum::<f64>() / live.len() as f64;
    Ok(group
        .members
        .iter()
        .map(|m| if m.contributes() { m.reward - mean } else { 0.0 })
        .collect())
}

/// Drops generations that ran out of budget without terminating.
pub fn filter_overlength<T: Budgeted>(items: Vec<T>) -> Vec<T> {
    items.into_iter().filter(|r| !r.overlength()).collect()
}

/// The ratio is clipped to `[1 - clip_low, 1 + clip_high]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipBounds {
    pub clip_low: f64,
    pub clip_high: f64,
}

impl Default for ClipBounds {
    fn default() -> Self {
        ClipBounds {
            clip_low: 0.2,
            clip_high: 0.28,
        }
    }
}

impl ClipBounds {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip_low > 0.0 && self.clip_high > 0.0 && self.clip_low < 1.0) {
            return Err(Error::ConfigInvalid(format!(
                "clip bounds ({}, {}) must be positive with clip_low < 1",
                self.clip_low, self.clip_high
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateConfig {
    pub bounds: ClipBounds,
    pub beta_kl: f64,
    pub lambda_pol: f64,
    pub lambda_crit: f64,
    /// Apply the KL penalty to critic-role generations too.
    pub kl_on_critic: bool,
}

impl SurrogateConfig {
    fn lambda(&self, role: Role) -> f64 {
        match role {
            Role::Policy => self.lambda_pol,
            Role::Critic => self.lambda_crit,
        }
    }

    fn kl_applies(&self, role: Role) -> bool {
        role == Role::Policy || self.kl_on_critic
    }
}

/// Pieces of the objective, for logging.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// λ-weighted clipped surrogate of policy groups.
    pub policy_term: f64,
    pub critic_term: f64,
    /// Summed exact KL over penalized positions (before β).
    pub kl: f64,
    pub tokens: usize,
    pub clipped_tokens: usize,
    pub dropped_groups: usize,
}

impl LossBreakdown {
    fn add(&mut self, o: &LossBreakdown) {
        self.policy_term += o.policy_term;
        self.critic_term += o.critic_term;
        self.kl += o.kl;
        self.tokens += o.tokens;
        self.clipped_tokens += o.clipped_tokens;
        self.dropped_groups += o.dropped_groups;
    }
}

#[derive(Debug, Clone)]
pub struct Surrogate {
    /// Negated objective.
    pub loss: f64,
    /// Gradient of `loss`.
    pub grad: Vec<f64>,
    pub breakdown: LossBreakdown,
}

struct Job<'a> {
    member: &'a Member,
    role: Role,
    advantage: f64,
}

/// Clipped token-level term and its derivative with respect to the ratio.
fn clipped_term(ratio: f64, adv: f64, bounds: ClipBounds) -> (f64, f64, bool) {
    let clipped = ratio.clamp(1.0 - bounds.clip_low, 1.0 + bounds.clip_high);
    let unclipped_v = ratio * adv;
    let clipped_v = clipped * adv;
    if unclipped_v <= clipped_v {
        (unclipped_v, adv, false)
    } else {
        (clipped_v, 0.0, true)
    }
}

fn member_contribution(
    job: &Job<'_>,
    state: &ModelState,
    reference: &ReferenceState,
    cfg: &SurrogateConfig,
    grad: &mut [f64],
) -> LossBreakdown {
    let m = job.member;
    let lambda = cfg.lambda(job.role);
    let kl_on = cfg.kl_applies(job.role) && cfg.beta_kl != 0.0;
    let mut out = LossBreakdown::default();
    let mut term = 0.0;
    for t in 0..m.generated.len() {
        let trace = state.forward_at(&m.prompt, &m.generated, t);
        let logp = trace.log_probs();
        let tok = m.generated[t];
        let ratio = (logp[tok.index()] - m.old_logprobs[t]).exp();
        let (v, dv_dratio, clipped) = clipped_term(ratio, job.advantage, cfg.bounds);
        term += v;
        out.tokens += 1;
        out.clipped_tokens += clipped as usize;
        // loss = -(λ·term - β·KL); d ratio = ratio · d log p
        let mut dl = score_dlogits(&logp, tok, -lambda * dv_dratio * ratio);
        if kl_on {
            let logq = reference
                .forward_at(&m.prompt, &m.generated, t)
                .log_probs();
            out.kl += kl_from_logs(&logp, &logq);
            for (d, k) in dl.iter_mut().zip(kl_dlogits(&logp, &logq, cfg.beta_kl)) {
                *d += k;
            }
        }
        if dl.iter().any(|x| *x != 0.0) {
            state.backprop(&trace, &dl, grad);
        }
    }
    match job.role {
        Role::Policy => out.policy_term = lambda * term,
        Role::Critic => out.critic_term = lambda * term,
    }
    out
}

/// Evaluates `-(λ_pol J_pol + λ_crit J_crit - β KL)` and its exact gradient.
///
/// Token terms are summed, never averaged over length. Masked-out and
/// over-length members contribute nothing, KL included; groups with no live
/// member are skipped and counted in the breakdown.
pub fn surrogate_loss(
    groups: &[Group],
    state: &ModelState,
    reference: &ReferenceState,
    cfg: &SurrogateConfig,
) -> Surrogate {
    let mut jobs = Vec::new();
    let mut dropped = 0;
    for g in groups {
        let adv = match group_advantages(g) {
            Ok(a) => a,
            Err(_) => {
                dropped += 1;
                continue;
            }
        };
        for (m, a) in g.members.iter().zip(adv) {
            if m.contributes() {
                assert_eq!(
                    m.generated.len(),
                    m.old_logprobs.len(),
                    "old log-probs must cover every generated token"
                );
                jobs.push(Job {
                    member: m,
                    role: g.key.role,
                    advantage: a,
                });
            }
        }
    }
    let n = state.param_count();
    let partials: Vec<(Vec<f64>, LossBreakdown)> = jobs
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut grad = vec![0.0; n];
            let mut bd = LossBreakdown::default();
            for job in chunk {
                bd.add(&member_contribution(job, state, reference, cfg, &mut grad));
            }
            (grad, bd)
        })
        .collect();
    let mut grad = vec![0.0; n];
    let mut breakdown = LossBreakdown {
        dropped_groups: dropped,
        ..Default::default()
    };
    for (g, bd) in &partials {
        grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
        breakdown.add(bd);
    }
    let loss = -(breakdown.policy_term + breakdown.critic_term - cfg.beta_kl * breakdown.kl);
    Surrogate {
        loss,
        grad,
        breakdown,
    }
}

/// Sum of `scale · ∇ log p` over members, in the same chunked order as the
/// surrogate. Used for maximum-likelihood updates.
pub fn weighted_logprob_grad(
    items: &[(&[Token], &[Token], f64)],
    state: &ModelState,
) -> (f64, Vec<f64>) {
    let n = state.param_count();
    let partials: Vec<(f64, Vec<f64>)> = items
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut grad = vec![0.0; n];
            let mut total = 0.0;
            for (prompt, gen, scale) in chunk {
                for t in 0..gen.len() {
                    let trace = state.forward_at(prompt, gen, t);
                    let logp = trace.log_probs();
                    total += scale * logp[gen[t].index()];
                    state.backprop(&trace, &score_dlogits(&logp, gen[t], *scale), &mut grad);
                }
            }
            (total, grad)
        })
        .collect();
    let mut grad = vec![0.0; n];
    let mut total = 0.0;
    for (v, g) in &partials {
        total += v;
        grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
    }
    (total, grad)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Global L2 norm cap on the gradient; 0 disables it.
    pub max_grad_norm: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            lr: 1e-6,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
            max_grad_norm: 1.0,
        }
    }
}

/// Decoupled-weight-decay Adam. Serializable so runs can resume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamW {
    pub config: AdamWConfig,
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamW {
    pub fn new(config: AdamWConfig, n: usize) -> Self {
        AdamW {
            config,
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    /// One descent step on `grad` (the gradient of a loss). Returns the
    /// gradient norm before clipping.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) -> f64 {
        assert_eq!(params.len(), self.m.len());
        let c = self.config;
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        let scale = if c.max_grad_norm > 0.0 && norm > c.max_grad_norm {
            c.max_grad_norm / norm
        } else {
            1.0
        };
        self.step += 1;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grad[i] * scale;
            self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * g;
            self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * g * g;
            let mh = self.m[i] / bc1;
            let vh = self.v[i] / bc2;
            params[i] -= lr * (mh / (vh.sqrt() + c.eps) + c.weight_decay * params[i]);
        }
        norm
    }
}
