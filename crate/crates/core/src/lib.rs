//! Adversarial policy/critic training from expert demonstrations, at desk scale.
//!
//! One small autoregressive model plays both roles: a reasoning policy that
//! writes `think … <answer> answer <eos>`, and a relativistic critic that reads
//! a question plus two candidate answers and emits `<1>`, `<2>` or `<tie>`.
//! The two are trained jointly with a group-relative clipped policy gradient,
//! the critic's stream is half fresh and half replayed, and the trained critic
//! doubles as the judge of a single-elimination tournament at test time.
//!
//! Module map:
//!
//! * [`tasks`]: micro-Countdown and hidden-rule datasets plus their verifiers
//! * [`seqmodel`]: the window MLP language model with exact gradients
//! * [`rollout`]: policy and critic generations parsed into records
//! * [`rewards`]: tie-aware relativistic, binary, verifier and logit rewards
//! * [`grpo`]: group advantages, the clipped surrogate, and [`grpo::AdamW`]
//! * [`replay`]: the triplet replay buffer and fresh/replay mixing
//! * [`trainer`]: the adversarial loop, baselines, evaluation and run files
//! * [`oracle`]: enumeration checks of the closed-form and gradient identities
//! * [`tts`]: critic-judged tournament reranking

pub mod error;
pub mod grpo;
pub mod io;
pub mod oracle;
pub mod replay;
pub mod rewards;
pub mod rng;
pub mod rollout;
pub mod seqmodel;
pub mod tasks;
pub mod trainer;
pub mod tts;

pub use error::{Error, Result};
pub use seqmodel::{Arch, ModelState, ReferenceState, Token, Vocab};
