//! Hidden-rule tasks: answers must satisfy a predicate the trainer never
//! sees. The rule id lives only in the evaluation sidecar.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ExpertDemo;
use crate::error::{Error, Result};
use crate::seqmodel::{Token, LETTERS};

/// Answer is a palindrome over the letter alphabet that contains the
/// prompt's key token (its first letter).
pub const RULE_PALINDROME_KEY: &str = "palindrome-key";
/// Answer length is a multiple of 3 and the answer covers the prompt's
/// letter multiset.
pub const RULE_MOD3_COVER: &str = "mod3-cover";
pub const RULES: [&str; 2] = [RULE_PALINDROME_KEY, RULE_MOD3_COVER];
const MODULUS: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HiddenRuleInstance {
    pub id: String,
    pub prompt_tokens: Vec<Token>,
    pub rule_id: String,
}

fn all_letters(answer: &[Token]) -> bool {
    !answer.is_empty() && answer.iter().all(|t| t.as_letter().is_some())
}

fn letter_counts(tokens: &[Token]) -> [usize; LETTERS] {
    let mut c = [0; LETTERS];
    for t in tokens {
        if let Some(i) = t.as_letter() {
            c[i] += 1;
        }
    }
    c
}

pub fn verify_hidden_rule(instance: &HiddenRuleInstance, answer: &[Token]) -> Result<bool> {
    match instance.rule_id.as_str() {
        RULE_PALINDROME_KEY => {
            let key = instance.prompt_tokens.first().copied();
            Ok(all_letters(answer)
                && answer.iter().eq(answer.iter().rev())
                && key.is_some_and(|k| answer.contains(&k)))
        }
        RULE_MOD3_COVER => {
            if !all_letters(answer) || answer.len() % MODULUS != 0 {
                return Ok(false);
            }
            let have = letter_counts(answer);
            let need = letter_counts(&instance.prompt_tokens);
            Ok(need.iter().zip(&have).all(|(n, h)| h >= n))
        }
        other => Err(Error::UnknownRule(other.to_string())),
    }
}

fn random_letter<R: Rng>(rng: &mut R) -> Token {
    Token::letter(rng.gen_range(0..LETTERS))
}

/// Draws `count` instances with `prompt_len` letters each; rules alternate at
/// random and every expert answer satisfies its rule.
pub fn generate_hidden_rule(
    count: usize,
    prompt_len: usize,
    seed: u64,
) -> Result<Vec<(HiddenRuleInstance, ExpertDemo)>> {
    if count == 0 || prompt_len == 0 {
        return Err(Error::ConfigInvalid(
            "hidden-rule count and prompt length must be positive".into(),
        ));
    }
    let mut rng = crate::rng::stream(seed, &[0x41DE]);
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let prompt: Vec<Token> = (0..prompt_len).map(|_| random_letter(&mut rng)).collect();
        let rule = RULES[rng.gen_range(0..RULES.len())];
        let answer = match rule {
            RULE_PALINDROME_KEY => {
                let half: Vec<Token> = (0..rng.gen_range(1..=2))
                    .map(|_| random_letter(&mut rng))
                    .collect();
                let mut a = half.clone();
                a.push(prompt[0]);
                a.extend(half.iter().rev());
                a
            }
            _ => {
                let mut a = prompt.clone();
                while a.len() % MODULUS != 0 || a.len() == prompt.len() {
                    a.push(random_letter(&mut rng));
                }
                a.shuffle(&mut rng);
                a
            }
        };
        let id = format!("hr-{seed}-{i:05}");
        out.push((
            HiddenRuleInstance {
                id: id.clone(),
                prompt_tokens: prompt,
                rule_id: rule.to_string(),
            },
            ExpertDemo {
                question_ref: id,
                answer_tokens: answer,
            },
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqmodel::parse_tokens;

    fn inst(rule: &str, prompt: &str) -> HiddenRuleInstance {
        HiddenRuleInstance {
            id: "h".into(),
            prompt_tokens: parse_tokens(prompt).unwrap(),
            rule_id: rule.into(),
        }
    }

    #[test]
    fn palindrome_rule() {
        let i = inst(RULE_PALINDROME_KEY, "C D E");
        assert!(verify_hidden_rule(&i, &parse_tokens("A C A").unwrap()).unwrap());
        assert!(!verify_hidden_rule(&i, &parse_tokens("A B").unwrap()).unwrap());
        assert!(!verify_hidden_rule(&i, &parse_tokens("A B A").unwrap()).unwrap());
        assert!(!verify_hidden_rule(&i, &[]).unwrap());
    }

    #[test]
    fn modulus_rule() {
        let i = inst(RULE_MOD3_COVER, "A B B");
        assert!(!verify_hidden_rule(&i, &parse_tokens("A B B C").unwrap()).unwrap());
        assert!(verify_hidden_rule(&i, &parse_tokens("B C A B D D").unwrap()).unwrap());
        assert!(!verify_hidden_rule(&i, &parse_tokens("A B C").unwrap()).unwrap());
    }

    #[test]
    fn unknown_rule_is_an_error() {
        let i = inst("nope", "A");
        assert!(matches!(
            verify_hidden_rule(&i, &parse_tokens("A").unwrap()),
            Err(Error::UnknownRule(_))
        ));
    }

    #[test]
    fn generated_experts_satisfy_their_rules() {
        let data = generate_hidden_rule(500, 3, 8).unwrap();
        assert_eq!(data, generate_hidden_rule(500, 3, 8).unwrap());
        let mut seen = std::collections::HashSet::new();
        for (i, d) in &data {
            assert!(verify_hidden_rule(i, &d.answer_tokens).unwrap());
            seen.insert(i.rule_id.clone());
        }
        assert_eq!(seen.len(), RULES.len());
    }
}
