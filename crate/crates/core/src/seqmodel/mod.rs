//! A small autoregressive categorical model with exact gradients.
//!
//! The model embeds the last `window` tokens (left-padded with `<pad>`),
//! concatenates the embeddings, runs them through tanh hidden layers and
//! projects to vocabulary logits. There is no recurrent state, so every
//! next-token distribution is a pure function of the visible window and the
//! reverse pass is a few hand-written matrix products.
//!
//! The same parameter vector serves as policy and critic; the role marker at
//! the head of the prompt is what tells them apart.

mod checkpoint;
mod vocab;

use std::ops::Deref;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use vocab::{parse_tokens, render, Token, Vocab, LETTERS};

/// Shape of the network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arch {
    /// Context window W; older tokens are dropped from the left.
    pub window: usize,
    pub embed: usize,
    /// Widths of the tanh hidden layers; empty means a linear read-out of the
    /// concatenated embeddings.
    pub hidden: Vec<usize>,
    pub vocab_size: usize,
}

impl Arch {
    fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 1);
        let mut input = self.window * self.embed;
        for &h in &self.hidden {
            dims.push((input, h));
            input = h;
        }
        dims.push((input, self.vocab_size));
        dims
    }

    pub fn param_count(&self) -> usize {
        self.vocab_size * self.embed
            + self
                .layer_dims()
                .iter()
                .map(|(i, o)| i * o + o)
                .sum::<usize>()
    }
}

#[derive(Debug, Clone)]
struct Layer {
    w: usize,
    b: usize,
    input: usize,
    output: usize,
}

/// How the next token is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Decode {
    /// Argmax; the zero-temperature limit. Ties go to the lowest token id.
    Greedy,
    Temperature(f64),
}

/// Activations of one forward pass, kept for the reverse pass.
#[derive(Debug, Clone)]
pub struct Trace {
    window: Vec<Token>,
    acts: Vec<Vec<f64>>,
    logits: Vec<f64>,
}

impl Trace {
    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn log_probs(&self) -> Vec<f64> {
        log_softmax(&self.logits)
    }
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

/// Parameters θ plus the architecture they fill.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    arch: Arch,
    vocab: Vocab,
    params: Vec<f64>,
}

impl ModelState {
    pub fn zeros(arch: Arch, vocab: Vocab) -> Self {
        assert_eq!(arch.vocab_size, vocab.len(), "arch and vocab disagree");
        let params = vec![0.0; arch.param_count()];
        ModelState {
            arch,
            vocab,
            params,
        }
    }

    /// Uniform initialisation in [-0.05, 0.05] from `seed`.
    pub fn random(arch: Arch, vocab: Vocab, seed: u64) -> Self {
        let mut state = Self::zeros(arch, vocab);
        let mut rng = crate::rng::stream(seed, &[0x1417]);
        for p in &mut state.params {
            *p = rng.gen_range(-0.05..=0.05);
        }
        state
    }

    pub fn from_params(arch: Arch, vocab: Vocab, params: Vec<f64>) -> crate::Result<Self> {
        if arch.vocab_size != vocab.len() {
            return Err(crate::Error::Checkpoint(format!(
                "arch expects {} tokens, vocab has {}",
                arch.vocab_size,
                vocab.len()
            )));
        }
        if params.len() != arch.param_count() {
            return Err(crate::Error::Checkpoint(format!(
                "expected {} parameters, got {}",
                arch.param_count(),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(crate::Error::Checkpoint("non-finite parameter".into()));
        }
        Ok(ModelState {
            arch,
            vocab,
            params,
        })
    }

    pub fn arch(&self) -> &Arch {
        &self.arch
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn layers(&self) -> Vec<Layer> {
        let mut off = self.arch.vocab_size * self.arch.embed;
        self.arch
            .layer_dims()
            .into_iter()
            .map(|(input, output)| {
                let l = Layer {
                    w: off,
                    b: off + input * output,
                    input,
                    output,
                };
                off += input * output + output;
                l
            })
            .collect()
    }

    /// The visible window for `prefix ++ generated[..upto]`.
    fn window(&self, prefix: &[Token], generated: &[Token], upto: usize) -> Vec<Token> {
        let w = self.arch.window;
        let total = prefix.len() + upto;
        let mut out = vec![Token::PAD; w];
        for slot in 0..w.min(total) {
            let pos = total - 1 - slot;
            let tok = if pos < prefix.len() {
                prefix[pos]
            } else {
                generated[pos - prefix.len()]
            };
            out[w - 1 - slot] = tok;
        }
        out
    }

    fn forward_window(&self, window: Vec<Token>) -> Trace {
        let d = self.arch.embed;
        let mut x = Vec::with_capacity(window.len() * d);
        for t in &window {
            let e = t.index() * d;
            x.extend_from_slice(&self.params[e..e + d]);
        }
        let layers = self.layers();
        let mut acts = Vec::with_capacity(layers.len());
        let last = layers.len() - 1;
        for (li, l) in layers.iter().enumerate() {
            let mut z = self.params[l.b..l.b + l.output].to_vec();
            for (o, zo) in z.iter_mut().enumerate() {
                let row = &self.params[l.w + o * l.input..l.w + (o + 1) * l.input];
                *zo += row.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>();
            }
            if li < last {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(std::mem::replace(&mut x, z));
        }
        Trace {
            window,
            acts,
            logits: x,
        }
    }

    /// Forward pass on a context (only the last W tokens matter).
    pub fn forward(&self, context: &[Token]) -> Trace {
        self.forward_window(self.window(context, &[], 0))
    }

    /// Forward pass for the position that predicts `generated[t]`.
    pub fn forward_at(&self, prefix: &[Token], generated: &[Token], t: usize) -> Trace {
        self.forward_window(self.window(prefix, generated, t))
    }

    /// Adds `∂(Σ_j dlogits_j · logit_j)/∂θ` to `grad`.
    pub fn backprop(&self, trace: &Trace, dlogits: &[f64], grad: &mut [f64]) {
        debug_assert_eq!(grad.len(), self.params.len());
        let layers = self.layers();
        let mut delta = dlogits.to_vec();
        for (li, l) in layers.iter().enumerate().rev() {
            let input = &trace.acts[li];
            for (o, &g) in delta.iter().enumerate() {
                grad[l.b + o] += g;
                if g != 0.0 {
                    let row = &mut grad[l.w + o * l.input..l.w + (o + 1) * l.input];
                    row.iter_mut().zip(input).for_each(|(r, x)| *r += g * x);
                }
            }
            let mut dx = vec![0.0; l.input];
            for (o, &g) in delta.iter().enumerate() {
                if g != 0.0 {
                    let row = &self.params[l.w + o * l.input..l.w + (o + 1) * l.input];
                    dx.iter_mut().zip(row).for_each(|(d, w)| *d += g * w);
                }
            }
            if li > 0 {
                // input of this layer is the tanh output of the previous one
                dx.iter_mut()
                    .zip(input)
                    .for_each(|(d, h)| *d *= 1.0 - h * h);
            }
            delta = dx;
        }
        let d = self.arch.embed;
        for (p, t) in trace.window.iter().enumerate() {
            let e = t.index() * d;
            for k in 0..d {
                grad[e + k] += delta[p * d + k];
            }
        }
    }

    pub fn next_token_dist(&self, context: &[Token]) -> Vec<f64> {
        self.forward(context)
            .log_probs()
            .into_iter()
            .map(f64::exp)
            .collect()
    }

    /// Total and per-token log-probability of `generated` after `prefix`.
    pub fn sequence_logprob(&self, prefix: &[Token], generated: &[Token]) -> (f64, Vec<f64>) {
        let per: Vec<f64> = (0..generated.len())
            .map(|t| self.forward_at(prefix, generated, t).log_probs()[generated[t].index()])
            .collect();
        (per.iter().sum(), per)
    }

    /// Adds `scale · ∇θ log p(generated | prefix)` to `grad`.
    pub fn accumulate_grad_logprob(
        &self,
        prefix: &[Token],
        generated: &[Token],
        scale: f64,
        grad: &mut [f64],
    ) {
        for t in 0..generated.len() {
            let trace = self.forward_at(prefix, generated, t);
            let dl = score_dlogits(&trace.log_probs(), generated[t], scale);
            self.backprop(&trace, &dl, grad);
        }
    }

    /// Exact reverse-mode gradient of the total log-probability.
    pub fn grad_logprob(&self, prefix: &[Token], generated: &[Token]) -> Vec<f64> {
        let mut grad = vec![0.0; self.params.len()];
        self.accumulate_grad_logprob(prefix, generated, 1.0, &mut grad);
        grad
    }

    /// Picks the next token and returns it with its log-probability under the
    /// untempered model.
    pub fn sample_next<R: Rng + ?Sized>(
        &self,
        prefix: &[Token],
        generated: &[Token],
        decode: Decode,
        rng: &mut R,
    ) -> (Token, f64) {
        let logp = self
            .forward_at(prefix, generated, generated.len())
            .log_probs();
        let idx = match decode {
            Decode::Greedy => argmax(&logp),
            Decode::Temperature(temp) => {
                assert!(temp > 0.0, "temperature must be positive");
                let max = logp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let weights: Vec<f64> = logp.iter().map(|l| ((l - max) / temp).exp()).collect();
                WeightedIndex::new(&weights)
                    .expect("softmax weights are positive")
                    .sample(rng)
            }
        };
        (Token(idx as u16), logp[idx])
    }

    /// Samples up to `max_new` tokens, stopping after `<eos>` (which is kept).
    pub fn sample<R: Rng + ?Sized>(
        &self,
        prefix: &[Token],
        decode: Decode,
        max_new: usize,
        rng: &mut R,
    ) -> Vec<Token> {
        assert!(max_new >= 1, "max_new must be at least 1");
        let mut out = Vec::new();
        while out.len() < max_new {
            let (tok, _) = self.sample_next(prefix, &out, decode, rng);
            out.push(tok);
            if tok == Token::EOS {
                break;
            }
        }
        out
    }

    /// Exact KL(π_θ(·|context) ‖ π_ref(·|context)).
    pub fn exact_token_kl(&self, reference: &ReferenceState, context: &[Token]) -> f64 {
        let p = self.forward(context).log_probs();
        let q = reference.forward(context).log_probs();
        kl_from_logs(&p, &q)
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// ∂(scale · log p_target)/∂logits.
pub fn score_dlogits(log_probs: &[f64], target: Token, scale: f64) -> Vec<f64> {
    let mut d: Vec<f64> = log_probs.iter().map(|l| -scale * l.exp()).collect();
    d[target.index()] += scale;
    d
}

pub fn kl_from_logs(logp: &[f64], logq: &[f64]) -> f64 {
    logp.iter()
        .zip(logq)
        .map(|(lp, lq)| lp.exp() * (lp - lq))
        .sum::<f64>()
        .max(0.0)
}

/// ∂(scale · KL(p‖q))/∂logits of p: `p_j (log p_j − log q_j − KL)`.
pub fn kl_dlogits(logp: &[f64], logq: &[f64], scale: f64) -> Vec<f64> {
    let kl: f64 = logp.iter().zip(logq).map(|(lp, lq)| lp.exp() * (lp - lq)).sum();
    logp.iter()
        .zip(logq)
        .map(|(lp, lq)| scale * lp.exp() * (lp - lq - kl))
        .collect()
}

/// A frozen copy of a model, used as π_ref.
#[derive(Debug, Clone)]
pub struct ReferenceState(ModelState);

impl ReferenceState {
    pub fn new(state: &ModelState) -> Self {
        ReferenceState(state.clone())
    }
}

impl Deref for ReferenceState {
    type Target = ModelState;
    fn deref(&self) -> &ModelState {
        &self.0
    }
}
