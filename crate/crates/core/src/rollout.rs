//! Policy and critic generations, parsed into structured records.
//!
//! Policy prompt: `<policy> q <think>`, then the model writes free reasoning
//! tokens, `<answer>`, the answer and `<eos>`. In direct mode (the SFT
//! format) the prompt already ends in `<answer>`.
//!
//! Critic prompt: `<critic> q <answer> slot1 <answer> slot2 <think>`; the
//! critic may reason and the first label token it emits is its verdict.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rewards::{CriticLabel, Slot};
use crate::seqmodel::{Decode, ModelState, Token};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PromptMode {
    /// The policy reasons before `<answer>`.
    Reasoning,
    /// `<answer>` is part of the prompt; no reasoning tokens.
    Direct,
}

pub fn policy_prompt(question: &[Token], mode: PromptMode) -> Vec<Token> {
    let mut p = Vec::with_capacity(question.len() + 3);
    p.push(Token::ROLE_POLICY);
    p.extend_from_slice(question);
    p.push(Token::SEP_THINK);
    if mode == PromptMode::Direct {
        p.push(Token::SEP_ANSWER);
    }
    p
}

pub fn critic_prompt(question: &[Token], slot1: &[Token], slot2: &[Token]) -> Vec<Token> {
    let mut p = Vec::with_capacity(question.len() + slot1.len() + slot2.len() + 4);
    p.push(Token::ROLE_CRITIC);
    p.extend_from_slice(question);
    p.push(Token::SEP_ANSWER);
    p.extend_from_slice(slot1);
    p.push(Token::SEP_ANSWER);
    p.extend_from_slice(slot2);
    p.push(Token::SEP_THINK);
    p
}

/// Single-answer critic prompt for the non-relativistic ablation.
pub fn binary_critic_prompt(question: &[Token], answer: &[Token]) -> Vec<Token> {
    let mut p = Vec::with_capacity(question.len() + answer.len() + 3);
    p.push(Token::ROLE_CRITIC);
    p.extend_from_slice(question);
    p.push(Token::SEP_ANSWER);
    p.extend_from_slice(answer);
    p.push(Token::SEP_THINK);
    p
}

/// Token budgets for both roles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budgets {
    pub think: usize,
    pub answer: usize,
    pub critic_think: usize,
}

/// Records that carry the over-length flag.
pub trait Budgeted {
    fn overlength(&self) -> bool;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyRollout {
    pub question_ref: String,
    pub prompt: Vec<Token>,
    /// Every generated token, including `<answer>` and `<eos>`.
    pub generated: Vec<Token>,
    pub think_tokens: Vec<Token>,
    pub answer_tokens: Vec<Token>,
    pub per_token_logprobs: Vec<f64>,
    pub valid: bool,
    pub overlength: bool,
}

impl Budgeted for PolicyRollout {
    fn overlength(&self) -> bool {
        self.overlength
    }
}

/// Samples one policy generation. The reasoning phase may use up to
/// `max_think` tokens before `<answer>`; the answer phase up to `max_answer`
/// tokens before `<eos>`. Running out of either budget marks the rollout
/// over-length and invalid.
#[allow(clippy::too_many_arguments)]
pub fn rollout_policy<R: Rng + ?Sized>(
    state: &ModelState,
    question_ref: &str,
    question: &[Token],
    mode: PromptMode,
    max_think: usize,
    max_answer: usize,
    decode: Decode,
    rng: &mut R,
) -> PolicyRollout {
    assert!(max_think >= 1 && max_answer >= 1, "budgets must be positive");
    let prompt = policy_prompt(question, mode);
    let mut generated = Vec::new();
    let mut logprobs = Vec::new();
    let mut think_tokens = Vec::new();
    let mut answer_tokens = Vec::new();
    let mut valid = false;
    let mut overlength = false;

    let mut answering = mode == PromptMode::Direct;
    if !answering {
        loop {
            if think_tokens.len() > max_think {
                overlength = true;
                break;
            }
            let (tok, lp) = state.sample_next(&prompt, &generated, decode, rng);
            generated.push(tok);
            logprobs.push(lp);
            match tok {
                Token::SEP_ANSWER => {
                    answering = true;
                    break;
                }
                Token::EOS => break,
                t => think_tokens.push(t),
            }
        }
    }
    if answering {
        loop {
            if answer_tokens.len() > max_answer {
                overlength = true;
                break;
            }
            let (tok, lp) = state.sample_next(&prompt, &generated, decode, rng);
            generated.push(tok);
            logprobs.push(lp);
            if tok == Token::EOS {
                valid = !answer_tokens.is_empty();
                break;
            }
            answer_tokens.push(tok);
        }
    }
    PolicyRollout {
        question_ref: question_ref.to_string(),
        prompt,
        generated,
        think_tokens,
        answer_tokens,
        per_token_logprobs: logprobs,
        valid,
        overlength,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Fresh,
    Replay,
}

/// `(q, slot1, slot2, expert_slot)`: the relativistic critic's input unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonTriplet {
    pub question_ref: String,
    pub question: Vec<Token>,
    pub slot1_tokens: Vec<Token>,
    pub slot2_tokens: Vec<Token>,
    pub expert_slot: Slot,
    pub origin: Origin,
}

impl ComparisonTriplet {
    pub fn expert_tokens(&self) -> &[Token] {
        match self.expert_slot {
            Slot::One => &self.slot1_tokens,
            Slot::Two => &self.slot2_tokens,
        }
    }

    pub fn policy_tokens(&self) -> &[Token] {
        match self.expert_slot {
            Slot::One => &self.slot2_tokens,
            Slot::Two => &self.slot1_tokens,
        }
    }

    pub fn prompt(&self) -> Vec<Token> {
        critic_prompt(&self.question, &self.slot1_tokens, &self.slot2_tokens)
    }
}

/// Places the expert answer in slot 1 or 2 uniformly at random.
pub fn build_triplet<R: Rng + ?Sized>(
    question_ref: &str,
    question: &[Token],
    expert: &[Token],
    policy: &[Token],
    rng: &mut R,
) -> ComparisonTriplet {
    assert!(
        !expert.is_empty() && !policy.is_empty(),
        "triplet slots must be non-empty"
    );
    let expert_slot = if rng.gen_bool(0.5) { Slot::One } else { Slot::Two };
    let (slot1, slot2) = match expert_slot {
        Slot::One => (expert, policy),
        Slot::Two => (policy, expert),
    };
    ComparisonTriplet {
        question_ref: question_ref.to_string(),
        question: question.to_vec(),
        slot1_tokens: slot1.to_vec(),
        slot2_tokens: slot2.to_vec(),
        expert_slot,
        origin: Origin::Fresh,
    }
}

/// Which label tokens count as a verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriticOptions {
    /// Free tokens may precede the label.
    pub reasoning: bool,
    /// `<tie>` is legal; when false it parses as invalid.
    pub allow_tie: bool,
}

impl Default for CriticOptions {
    fn default() -> Self {
        CriticOptions {
            reasoning: true,
            allow_tie: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticRollout {
    pub prompt: Vec<Token>,
    pub generated: Vec<Token>,
    pub critic_think_tokens: Vec<Token>,
    pub label: CriticLabel,
    pub per_token_logprobs: Vec<f64>,
    pub valid: bool,
    pub overlength: bool,
}

impl Budgeted for CriticRollout {
    fn overlength(&self) -> bool {
        self.overlength
    }
}

fn parse_label(tok: Token, options: CriticOptions) -> CriticLabel {
    match tok {
        Token::L1 => CriticLabel::Slot1,
        Token::L2 => CriticLabel::Slot2,
        Token::LTIE if options.allow_tie => CriticLabel::Tie,
        _ => CriticLabel::Invalid,
    }
}

/// Samples a critic verdict for an arbitrary critic prompt. Generation stops
/// at the first label token; `<eos>` first or an exhausted budget yields
/// [`CriticLabel::Invalid`]. Without reasoning the first token is the verdict.
pub fn rollout_critic_prompt<R: Rng + ?Sized>(
    state: &ModelState,
    prompt: Vec<Token>,
    max_think: usize,
    decode: Decode,
    options: CriticOptions,
    rng: &mut R,
) -> CriticRollout {
    assert!(max_think >= 1, "critic budget must be positive");
    let mut generated = Vec::new();
    let mut logprobs = Vec::new();
    let mut think = Vec::new();
    let mut label = CriticLabel::Invalid;
    let mut overlength = false;
    loop {
        if options.reasoning && think.len() > max_think {
            overlength = true;
            break;
        }
        let (tok, lp) = state.sample_next(&prompt, &generated, decode, rng);
        generated.push(tok);
        logprobs.push(lp);
        if tok.is_label() {
            label = parse_label(tok, options);
            break;
        }
        if tok == Token::EOS || !options.reasoning {
            break;
        }
        think.push(tok);
    }
    CriticRollout {
        prompt,
        generated,
        critic_think_tokens: think,
        valid: label != CriticLabel::Invalid,
        label,
        per_token_logprobs: logprobs,
        overlength,
    }
}

pub fn rollout_critic<R: Rng + ?Sized>(
    state: &ModelState,
    triplet: &ComparisonTriplet,
    max_think: usize,
    decode: Decode,
    options: CriticOptions,
    rng: &mut R,
) -> CriticRollout {
    rollout_critic_prompt(state, triplet.prompt(), max_think, decode, options, rng)
}
