use rand::Rng;

use crate::grpo::{weighted_logprob_grad, AdamW, AdamWConfig};
use crate::rollout::{binary_critic_prompt, critic_prompt, policy_prompt, PromptMode};
use crate::seqmodel::{Arch, ModelState, Token, Vocab};
use crate::tasks::{random_answer, Example};
use crate::{rng, Error, Result};

use super::ModelConfig;

/// One format sequence: a policy answer, a pairwise verdict or a
/// single-answer verdict, with uninformed content.
fn format_sequence<R: Rng>(ex: &Example, rng: &mut R) -> (Vec<Token>, Vec<Token>) {
    let u: f64 = rng.gen();
    if u < 0.5 {
        let mut gen = vec![Token::SEP_ANSWER];
        gen.extend(random_answer(ex, rng));
        gen.push(Token::EOS);
        (policy_prompt(&ex.prompt, PromptMode::Reasoning), gen)
    } else if u < 0.85 {
        let a = random_answer(ex, rng);
        let b = if rng.gen_bool(0.2) { a.clone() } else { random_answer(ex, rng) };
        let label = [Token::L1, Token::L2, Token::LTIE][rng.gen_range(0..3)];
        (critic_prompt(&ex.prompt, &a, &b), vec![label])
    } else {
        let a = random_answer(ex, rng);
        let label = if rng.gen_bool(0.5) { Token::L1 } else { Token::L2 };
        (binary_critic_prompt(&ex.prompt, &a), vec![label])
    }
}

/// The smallest vocabulary covering every number in the data.
pub fn vocab_for(examples: &[Example]) -> Vocab {
    Vocab::new(examples.iter().map(Example::max_number).max().unwrap_or(0))
}

/// Builds the base model: random initialization followed by maximum
/// likelihood on well-formed but uninformed sequences. The model learns the
/// output grammar of both roles (answers that use the question's operands,
/// verdict tokens in critic position) but nothing about which answers are
/// right; expert answers and verifiers are never consulted.
pub fn format_warmup(questions: &[Example], config: &ModelConfig, seed: u64) -> Result<ModelState> {
    if questions.is_empty() {
        return Err(Error::DatasetEmpty);
    }
    let vocab = vocab_for(questions);
    let arch: Arch = config.arch(&vocab);
    let mut state = ModelState::random(arch, vocab, rng::derive_seed(seed, &[0x1417]));
    let mut opt = AdamW::new(
        AdamWConfig {
            lr: config.warmup_lr,
            weight_decay: 0.0,
            ..AdamWConfig::default()
        },
        state.param_count(),
    );
    let batch = config.warmup_batch.max(1);
    for step in 0..config.warmup_steps {
        let mut r = rng::stream(seed, &[0x1418, step as u64]);
        let seqs: Vec<(Vec<Token>, Vec<Token>)> = (0..batch)
            .map(|_| format_sequence(&questions[r.gen_range(0..questions.len())], &mut r))
            .collect();
        let items: Vec<(&[Token], &[Token], f64)> = seqs
            .iter()
            .map(|(p, g)| (p.as_slice(), g.as_slice(), -1.0 / batch as f64))
            .collect();
        let (_, grad) = weighted_logprob_grad(&items, &state);
        let lr = opt.config.lr;
        opt.step(state.params_mut(), &grad, lr);
    }
    Ok(state)
}
