//! Single-elimination tournament with the critic as judge.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rewards::CriticLabel;
use crate::rng::{self, StreamRng};
use crate::rollout::{critic_prompt, rollout_critic_prompt, rollout_policy, Budgets, CriticOptions, PromptMode};
use crate::seqmodel::{Decode, ModelState};
use crate::tasks::{verify_example, Example, Sidecar};
use crate::{Result, Token};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TournamentConfig {
    pub n_candidates: usize,
    pub votes_per_match: usize,
    pub temperature: f64,
    /// Alternate slot order across votes. Off by default.
    #[serde(default)]
    pub position_swap: bool,
}

impl Default for TournamentConfig {
    fn default() -> Self {
        TournamentConfig {
            n_candidates: 16,
            votes_per_match: 4,
            temperature: 1.0,
            position_swap: false,
        }
    }
}

/// Anything that can judge `(question, slot1, slot2)`.
pub trait Judge: Sync {
    fn judge(&self, question: &[Token], slot1: &[Token], slot2: &[Token], rng: &mut StreamRng) -> CriticLabel;
}

impl<F> Judge for F
where
    F: Fn(&[Token], &[Token], &[Token]) -> CriticLabel + Sync,
{
    fn judge(&self, q: &[Token], a: &[Token], b: &[Token], _: &mut StreamRng) -> CriticLabel {
        self(q, a, b)
    }
}

/// The shared model in its critic role.
pub struct CriticJudge<'a> {
    pub state: &'a ModelState,
    pub max_think: usize,
    pub temperature: f64,
    pub options: CriticOptions,
}

impl Judge for CriticJudge<'_> {
    fn judge(&self, q: &[Token], a: &[Token], b: &[Token], rng: &mut StreamRng) -> CriticLabel {
        rollout_critic_prompt(
            self.state,
            critic_prompt(q, a, b),
            self.max_think,
            Decode::Temperature(self.temperature),
            self.options,
            rng,
        )
        .label
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub round: usize,
    /// Candidate indices into the original list.
    pub a: usize,
    pub b: usize,
    pub votes_a: usize,
    pub votes_b: usize,
    pub winner: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TournamentResult {
    pub winner: usize,
    pub rounds: usize,
    pub matches: Vec<MatchRecord>,
}

fn play<J: Judge + ?Sized>(
    judge: &J,
    question: &[Token],
    candidates: &[Vec<Token>],
    (a, b): (usize, usize),
    round: usize,
    config: &TournamentConfig,
    mut rng: StreamRng,
) -> MatchRecord {
    let (mut votes_a, mut votes_b) = (0, 0);
    for k in 0..config.votes_per_match {
        let swapped = config.position_swap && k % 2 == 1;
        let (s1, s2) = if swapped { (b, a) } else { (a, b) };
        let label = judge.judge(question, &candidates[s1], &candidates[s2], &mut rng);
        match (label, swapped) {
            (CriticLabel::Slot1, false) | (CriticLabel::Slot2, true) => votes_a += 1,
            (CriticLabel::Slot2, false) | (CriticLabel::Slot1, true) => votes_b += 1,
            // ties and invalid emissions count for neither side
            _ => {}
        }
    }
    // strict majority for A, otherwise B
    let winner = if 2 * votes_a > config.votes_per_match { a } else { b };
    MatchRecord {
        round,
        a,
        b,
        votes_a,
        votes_b,
        winner,
    }
}

/// Pairs neighbours each round; an odd last candidate gets a bye. Each match
/// draws from its own stream derived from `seed`, so results do not depend
/// on scheduling.
pub fn run_tournament<J: Judge + ?Sized>(
    judge: &J,
    question: &[Token],
    candidates: &[Vec<Token>],
    config: &TournamentConfig,
    seed: u64,
) -> TournamentResult {
    assert!(!candidates.is_empty(), "tournament needs a candidate");
    assert!(config.votes_per_match >= 1, "votes_per_match must be positive");
    let mut alive: Vec<usize> = (0..candidates.len()).collect();
    let mut matches = Vec::new();
    let mut round = 0;
    while alive.len() > 1 {
        let pairs: Vec<(usize, usize)> = alive.chunks_exact(2).map(|p| (p[0], p[1])).collect();
        let played: Vec<MatchRecord> = pairs
            .par_iter()
            .enumerate()
            .map(|(m, &pair)| {
                let r = rng::stream(seed, &[round as u64, m as u64]);
                play(judge, question, candidates, pair, round, config, r)
            })
            .collect();
        let mut next: Vec<usize> = played.iter().map(|m| m.winner).collect();
        if alive.len() % 2 == 1 {
            next.push(*alive.last().expect("non-empty"));
        }
        matches.extend(played);
        alive = next;
        round += 1;
    }
    TournamentResult {
        winner: alive[0],
        rounds: round,
        matches,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TtsReport {
    pub n_rollouts: usize,
    pub accuracy: f64,
    /// Instances where at least one sampled candidate was correct.
    pub oracle_coverage: f64,
    /// Instances with no valid candidate at all.
    pub no_valid: usize,
}

/// Samples `n_rollouts` answers per instance, keeps the valid ones, lets the
/// critic pick a winner and scores it with the task verifier.
#[allow(clippy::too_many_arguments)]
pub fn tts_eval(
    state: &ModelState,
    split: &[Example],
    sidecar: Option<&Sidecar>,
    n_rollouts: usize,
    config: &TournamentConfig,
    budgets: Budgets,
    critic_options: CriticOptions,
    seed: u64,
) -> Result<TtsReport> {
    assert!(n_rollouts >= 1);
    if split.is_empty() {
        return Err(crate::Error::EmptySplit);
    }
    let judge = CriticJudge {
        state,
        max_think: budgets.critic_think,
        temperature: config.temperature,
        options: critic_options,
    };
    let outcomes: Vec<Result<(bool, bool, bool)>> = split
        .par_iter()
        .enumerate()
        .map(|(i, ex)| {
            let qid = rng::hash_id(&ex.id);
            let mut answers = Vec::new();
            for k in 0..n_rollouts {
                let mut r = rng::stream(seed, &[qid, 1, k as u64]);
                let ro = rollout_policy(
                    state,
                    &ex.id,
                    &ex.prompt,
                    PromptMode::Reasoning,
                    budgets.think,
                    budgets.answer,
                    Decode::Temperature(config.temperature),
                    &mut r,
                );
                if ro.valid {
                    answers.push(ro.answer_tokens);
                }
            }
            if answers.is_empty() {
                return Ok((false, false, true));
            }
            let mut any = false;
            for a in &answers {
                any |= verify_example(ex, a, sidecar)?;
            }
            let t = run_tournament(&judge, &ex.prompt, &answers, config, rng::derive_seed(seed, &[qid, 2, i as u64]));
            Ok((verify_example(ex, &answers[t.winner], sidecar)?, any, false))
        })
        .collect();
    let (mut correct, mut covered, mut none) = (0, 0, 0);
    for o in outcomes {
        let (c, a, n) = o?;
        correct += c as usize;
        covered += a as usize;
        none += n as usize;
    }
    let n = split.len() as f64;
    Ok(TtsReport {
        n_rollouts,
        accuracy: correct as f64 / n,
        oracle_coverage: covered as f64 / n,
        no_valid: none,
    })
}
