//! Task families, datasets and ground-truth verifiers.
//!
//! Verifiers are used by RLVR training and by evaluation only. The
//! adversarial trainer sees nothing but prompts and expert answers.

mod countdown;
mod hidden_rule;

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use countdown::{
    demo_order, evaluate, generate_countdown, random_expression, search_space_size, solve, verify_countdown,
    CountdownInstance, CountdownSpec, DEFAULT_SEARCH_LIMIT,
};
pub use hidden_rule::{
    generate_hidden_rule, verify_hidden_rule, HiddenRuleInstance, RULES, RULE_MOD3_COVER,
    RULE_PALINDROME_KEY,
};

use crate::error::{Error, Result};
use crate::io;
use crate::seqmodel::{render, Token};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpertDemo {
    pub question_ref: String,
    pub answer_tokens: Vec<Token>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    Countdown,
    HiddenRule,
}

/// Trainer-visible task metadata. Hidden-rule records carry none.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Meta {
    Countdown { operands: Vec<u32>, target: u32 },
    None {},
}

/// One (question, expert answer) pair as the trainers see it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub id: String,
    pub task_kind: TaskKind,
    pub prompt: Vec<Token>,
    pub expert: Vec<Token>,
    pub meta: Meta,
}

impl Example {
    pub fn from_countdown(instance: &CountdownInstance, demo: &ExpertDemo) -> Self {
        Example {
            id: instance.id.clone(),
            task_kind: TaskKind::Countdown,
            prompt: instance.prompt_tokens(),
            expert: demo.answer_tokens.clone(),
            meta: Meta::Countdown {
                operands: instance.operands.clone(),
                target: instance.target,
            },
        }
    }

    pub fn from_hidden_rule(instance: &HiddenRuleInstance, demo: &ExpertDemo) -> Self {
        Example {
            id: instance.id.clone(),
            task_kind: TaskKind::HiddenRule,
            prompt: instance.prompt_tokens.clone(),
            expert: demo.answer_tokens.clone(),
            meta: Meta::None {},
        }
    }

    /// Rebuilds the Countdown instance from trainer-visible metadata.
    pub fn countdown(&self) -> Option<CountdownInstance> {
        match &self.meta {
            Meta::Countdown { operands, target } => Some(CountdownInstance {
                id: self.id.clone(),
                operands: operands.clone(),
                target: *target,
            }),
            Meta::None {} => None,
        }
    }

    /// Largest number token in the prompt or expert answer.
    pub fn max_number(&self) -> u32 {
        self.prompt
            .iter()
            .chain(&self.expert)
            .filter_map(|t| t.as_number())
            .max()
            .unwrap_or(0)
    }
}

/// JSONL form: `{id, task_kind, prompt_tokens, expert_tokens, meta}` with
/// tokens written as their symbols.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExampleRecord {
    pub id: String,
    pub task_kind: TaskKind,
    pub prompt_tokens: Vec<String>,
    pub expert_tokens: Vec<String>,
    pub meta: Meta,
}

impl From<&Example> for ExampleRecord {
    fn from(e: &Example) -> Self {
        ExampleRecord {
            id: e.id.clone(),
            task_kind: e.task_kind,
            prompt_tokens: e.prompt.iter().map(|t| t.symbol()).collect(),
            expert_tokens: e.expert.iter().map(|t| t.symbol()).collect(),
            meta: e.meta.clone(),
        }
    }
}

impl TryFrom<ExampleRecord> for Example {
    type Error = Error;
    fn try_from(r: ExampleRecord) -> Result<Self> {
        let parse = |v: &[String]| v.iter().map(|s| Token::parse(s)).collect::<Result<Vec<_>>>();
        Ok(Example {
            prompt: parse(&r.prompt_tokens)?,
            expert: parse(&r.expert_tokens)?,
            id: r.id,
            task_kind: r.task_kind,
            meta: r.meta,
        })
    }
}

/// Evaluation-only record mapping an instance id to its hidden rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleRecord {
    pub id: String,
    pub rule_id: String,
}

/// The evaluation sidecar, keyed by instance id.
#[derive(Debug, Clone, Default)]
pub struct Sidecar {
    rules: HashMap<String, String>,
}

impl Sidecar {
    pub fn new(records: &[RuleRecord]) -> Self {
        Sidecar {
            rules: records
                .iter()
                .map(|r| (r.id.clone(), r.rule_id.clone()))
                .collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(Self::new(&io::read_jsonl::<RuleRecord>(path)?))
    }

    pub fn rule_for(&self, id: &str) -> Option<&str> {
        self.rules.get(id).map(String::as_str)
    }
}

pub fn countdown_dataset(spec: &CountdownSpec) -> Result<Vec<Example>> {
    Ok(generate_countdown(spec)?
        .iter()
        .map(|(i, d)| Example::from_countdown(i, d))
        .collect())
}

pub fn hidden_rule_dataset(
    count: usize,
    prompt_len: usize,
    seed: u64,
) -> Result<(Vec<Example>, Vec<RuleRecord>)> {
    let pairs = generate_hidden_rule(count, prompt_len, seed)?;
    let examples = pairs
        .iter()
        .map(|(i, d)| Example::from_hidden_rule(i, d))
        .collect();
    let rules = pairs
        .iter()
        .map(|(i, _)| RuleRecord {
            id: i.id.clone(),
            rule_id: i.rule_id.clone(),
        })
        .collect();
    Ok((examples, rules))
}

pub fn dataset_bytes(examples: &[Example]) -> Result<Vec<u8>> {
    let records: Vec<ExampleRecord> = examples.iter().map(ExampleRecord::from).collect();
    io::to_jsonl(&records)
}

pub fn save_dataset(path: &Path, examples: &[Example]) -> Result<()> {
    io::write_atomic(path, &dataset_bytes(examples)?)
}

pub fn load_dataset(path: &Path) -> Result<Vec<Example>> {
    io::read_jsonl::<ExampleRecord>(path)?
        .into_iter()
        .map(Example::try_from)
        .collect()
}

/// Ground-truth check of an answer. Hidden-rule examples need the sidecar.
pub fn verify_example(example: &Example, answer: &[Token], sidecar: Option<&Sidecar>) -> Result<bool> {
    match example.task_kind {
        TaskKind::Countdown => {
            let inst = example.countdown().ok_or_else(|| {
                Error::ConfigInvalid(format!("countdown example {} lacks metadata", example.id))
            })?;
            Ok(verify_countdown(&inst, answer))
        }
        TaskKind::HiddenRule => {
            let rule = sidecar
                .and_then(|s| s.rule_for(&example.id))
                .ok_or_else(|| Error::UnknownRule(format!("<no sidecar entry for {}>", example.id)))?;
            verify_hidden_rule(
                &HiddenRuleInstance {
                    id: example.id.clone(),
                    prompt_tokens: example.prompt.clone(),
                    rule_id: rule.to_string(),
                },
                answer,
            )
        }
    }
}

/// A well-formed but uninformed answer for the question: a random expression
/// over the operands, or a random letter string. Never looks at the expert.
pub fn random_answer<R: rand::Rng + ?Sized>(example: &Example, rng: &mut R) -> Vec<Token> {
    match example.countdown() {
        Some(inst) => random_expression(&inst.operands, rng),
        None => {
            let len = rng.gen_range(3..=7);
            (0..len)
                .map(|_| Token::letter(rng.gen_range(0..crate::seqmodel::LETTERS)))
                .collect()
        }
    }
}

/// Human-readable one-liner for logs.
pub fn describe(example: &Example) -> String {
    format!("{}: {} => {}", example.id, render(&example.prompt), render(&example.expert))
}
