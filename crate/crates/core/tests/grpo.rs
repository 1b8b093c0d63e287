use rand::seq::SliceRandom;
use rand::Rng;
use raro_core::grpo::*;
use raro_core::rng::{self, StreamRng};
use raro_core::{Arch, ModelState, ReferenceState, Token, Vocab};

fn model(seed: u64, hidden: Vec<usize>) -> ModelState {
    let vocab = Vocab::new(3);
    let arch = Arch {
        window: 4,
        embed: 3,
        hidden,
        vocab_size: vocab.len(),
    };
    let mut s = ModelState::random(arch, vocab, seed);
    let mut r = rng::stream(seed, &[1]);
    for p in s.params_mut() {
        *p = r.gen_range(-0.6..0.6);
    }
    s
}

fn nudged(s: &ModelState, seed: u64, size: f64) -> ModelState {
    let mut out = s.clone();
    let mut r = rng::stream(seed, &[2]);
    for p in out.params_mut() {
        *p += r.gen_range(-size..size);
    }
    out
}

fn tokens(r: &mut StreamRng, n: usize, vocab: usize) -> Vec<Token> {
    (0..n).map(|_| Token(r.gen_range(1..vocab) as u16)).collect()
}

/// Random groups whose old log-probabilities are the current model's, shifted
/// by up to `drift` nats per token.
fn batch(state: &ModelState, seed: u64, drift: f64) -> Vec<Group> {
    let mut r = rng::stream(seed, &[3]);
    let v = state.vocab().len();
    (0..r.gen_range(2..5))
        .map(|g| {
            let n = r.gen_range(1..4);
            let prompt = tokens(&mut r, n, v);
            let members = (0..r.gen_range(2..5))
                .map(|_| {
                    let n = r.gen_range(1..5);
                    let generated = tokens(&mut r, n, v);
                    let (_, lps) = state.sequence_logprob(&prompt, &generated);
                    let old_logprobs = lps
                        .iter()
                        .map(|l| l + if drift > 0.0 { r.gen_range(-drift..drift) } else { 0.0 })
                        .collect();
                    Member {
                        prompt: prompt.clone(),
                        generated,
                        old_logprobs,
                        reward: r.gen_range(0.0..1.0),
                        mask: r.gen_bool(0.85),
                        overlength: r.gen_bool(0.1),
                    }
                })
                .collect();
            Group {
                key: GroupKey {
                    prompt_key: format!("p{g}"),
                    role: if g % 2 == 0 { Role::Policy } else { Role::Critic },
                },
                members,
            }
        })
        .collect()
}

fn config(beta: f64) -> SurrogateConfig {
    SurrogateConfig {
        bounds: ClipBounds::default(),
        beta_kl: beta,
        lambda_pol: 0.6,
        lambda_crit: 0.4,
        kl_on_critic: true,
    }
}

fn live(m: &Member) -> bool {
    m.mask && !m.overlength
}

fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den.max(1e-300)
}

fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn advantages_are_reward_minus_live_mean() {
    let s = model(1, vec![5]);
    for seed in 0..200 {
        for g in batch(&s, seed, 0.0) {
            let (sum, n) = g
                .members
                .iter()
                .filter(|m| live(m))
                .fold((0.0, 0usize), |(s, n), m| (s + m.reward, n + 1));
            match group_advantages(&g) {
                Err(_) => assert_eq!(n, 0),
                Ok(adv) => {
                    let mean = sum / n as f64;
                    for (m, a) in g.members.iter().zip(&adv) {
                        let want = if live(m) { m.reward - mean } else { 0.0 };
                        assert_eq!(*a, want);
                    }
                    let total: f64 = adv.iter().sum();
                    assert!(total.abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn gradient_at_old_parameters_is_weighted_score_minus_kl() {
    for seed in 0..10 {
        let s = model(seed, vec![5]);
        let reference = ReferenceState::new(&nudged(&s, seed, 0.3));
        let groups = batch(&s, 100 + seed, 0.0);
        let beta = 0.05;
        let cfg = config(beta);
        let got = surrogate_loss(&groups, &s, &reference, &cfg).grad;

        // Σ λ A ∇log π over live members, from whole-sequence gradients
        let mut want = vec![0.0; s.param_count()];
        let mut contexts = Vec::new();
        for g in &groups {
            let Ok(adv) = group_advantages(g) else { continue };
            let lambda = match g.key.role {
                Role::Policy => cfg.lambda_pol,
                Role::Critic => cfg.lambda_crit,
            };
            for (m, a) in g.members.iter().zip(adv) {
                if !live(m) {
                    continue;
                }
                for (w, d) in want.iter_mut().zip(s.grad_logprob(&m.prompt, &m.generated)) {
                    *w -= lambda * a * d;
                }
                for t in 0..m.generated.len() {
                    contexts.push([m.prompt.as_slice(), &m.generated[..t]].concat());
                }
            }
        }
        // β ∇KL by central differences of the summed exact token KL
        let kl_sum = |st: &ModelState| -> f64 {
            contexts.iter().map(|c| st.exact_token_kl(&reference, c)).sum()
        };
        let h = 1e-5;
        for i in 0..s.param_count() {
            let mut up = s.clone();
            up.params_mut()[i] += h;
            let mut dn = s.clone();
            dn.params_mut()[i] -= h;
            want[i] += beta * (kl_sum(&up) - kl_sum(&dn)) / (2.0 * h);
        }
        let err = max_abs(&got, &want);
        assert!(err < 1e-8, "seed {seed}: max abs error {err}");
    }
}

#[test]
fn surrogate_gradient_matches_finite_differences() {
    for seed in 0..6 {
        let s = model(seed, if seed % 2 == 0 { vec![6] } else { vec![] });
        let reference = ReferenceState::new(&nudged(&s, seed, 0.2));
        let groups = batch(&s, 200 + seed, 0.5);
        let cfg = config(0.02);
        let out = surrogate_loss(&groups, &s, &reference, &cfg);
        let loss = |st: &ModelState| surrogate_loss(&groups, st, &reference, &cfg).loss;
        let h = 1e-5;
        let fd: Vec<f64> = (0..s.param_count())
            .map(|i| {
                let mut up = s.clone();
                up.params_mut()[i] += h;
                let mut dn = s.clone();
                dn.params_mut()[i] -= h;
                (loss(&up) - loss(&dn)) / (2.0 * h)
            })
            .collect();
        let err = rel_l2(&out.grad, &fd);
        assert!(err <= 1e-5, "seed {seed}: relative L2 {err}");
        assert!(out.breakdown.tokens > 0);
    }
}

#[test]
fn small_descent_step_improves_the_surrogate() {
    let mut improved = 0;
    for seed in 0..20 {
        let s = model(seed, vec![5]);
        let reference = ReferenceState::new(&s);
        let groups = batch(&s, 300 + seed, 0.0);
        let cfg = config(1e-3);
        let out = surrogate_loss(&groups, &s, &reference, &cfg);
        let norm = out.grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let mut next = s.clone();
        for (p, g) in next.params_mut().iter_mut().zip(&out.grad) {
            *p -= 1e-3 * g / norm;
        }
        if surrogate_loss(&groups, &next, &reference, &cfg).loss < out.loss {
            improved += 1;
        }
    }
    assert!(improved >= 19, "{improved}/20 batches improved");
}

#[test]
fn group_order_does_not_matter() {
    let s = model(4, vec![5]);
    let reference = ReferenceState::new(&nudged(&s, 4, 0.2));
    let mut groups = batch(&s, 400, 0.3);
    groups.extend(batch(&s, 401, 0.3));
    let cfg = config(0.01);
    let a = surrogate_loss(&groups, &s, &reference, &cfg);
    groups.shuffle(&mut rng::stream(5, &[]));
    let b = surrogate_loss(&groups, &s, &reference, &cfg);
    assert!((a.loss - b.loss).abs() < 1e-12);
    assert!(max_abs(&a.grad, &b.grad) < 1e-12);
    assert_eq!(a.breakdown.tokens, b.breakdown.tokens);
}

#[test]
fn dead_members_contribute_nothing() {
    let s = model(6, vec![5]);
    let reference = ReferenceState::new(&nudged(&s, 6, 0.3));
    let cfg = config(0.1);
    let groups = batch(&s, 500, 0.2);
    let pruned: Vec<Group> = groups
        .iter()
        .map(|g| Group {
            key: g.key.clone(),
            members: g.members.iter().filter(|m| live(m)).cloned().collect(),
        })
        .collect();
    let a = surrogate_loss(&groups, &s, &reference, &cfg);
    let b = surrogate_loss(&pruned, &s, &reference, &cfg);
    assert!((a.loss - b.loss).abs() < 1e-12);
    assert!(max_abs(&a.grad, &b.grad) < 1e-12);
}

#[test]
fn groups_without_live_members_are_dropped_and_counted() {
    let s = model(7, vec![]);
    let reference = ReferenceState::new(&s);
    let mut groups = batch(&s, 600, 0.0);
    for m in &mut groups[0].members {
        m.mask = false;
    }
    let out = surrogate_loss(&groups, &s, &reference, &config(0.0));
    assert_eq!(out.breakdown.dropped_groups, 1);
    assert!(group_advantages(&groups[0]).is_err());
}

#[test]
fn role_weights_scale_their_groups_linearly() {
    let s = model(8, vec![4]);
    let reference = ReferenceState::new(&s);
    let groups = batch(&s, 700, 0.1);
    let mut one = config(0.0);
    one.lambda_pol = 1.0;
    one.lambda_crit = 0.0;
    let mut other = config(0.0);
    other.lambda_pol = 0.0;
    other.lambda_crit = 1.0;
    let both = config(0.0);
    let a = surrogate_loss(&groups, &s, &reference, &one).grad;
    let b = surrogate_loss(&groups, &s, &reference, &other).grad;
    let c = surrogate_loss(&groups, &s, &reference, &both).grad;
    let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.6 * x + 0.4 * y).collect();
    assert!(max_abs(&c, &mix) < 1e-12);
}

#[test]
fn adamw_matches_a_direct_transcription() {
    let cfg = AdamWConfig {
        lr: 0.01,
        weight_decay: 0.1,
        max_grad_norm: 0.5,
        ..AdamWConfig::default()
    };
    let mut r = rng::stream(9, &[]);
    let n = 6;
    let mut params: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
    let mut mine = params.clone();
    let (mut m, mut v) = (vec![0.0; n], vec![0.0; n]);
    let mut opt = AdamW::new(cfg, n);
    for step in 1..=25 {
        let grad: Vec<f64> = (0..n).map(|_| r.gen_range(-2.0..2.0)).collect();
        opt.step(&mut params, &grad, cfg.lr);
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        let k = if norm > cfg.max_grad_norm { cfg.max_grad_norm / norm } else { 1.0 };
        for i in 0..n {
            let g = grad[i] * k;
            m[i] = 0.9 * m[i] + 0.1 * g;
            v[i] = 0.999 * v[i] + 0.001 * g * g;
            let mh = m[i] / (1.0 - 0.9f64.powi(step));
            let vh = v[i] / (1.0 - 0.999f64.powi(step));
            mine[i] -= cfg.lr * (mh / (vh.sqrt() + cfg.eps) + cfg.weight_decay * mine[i]);
        }
    }
    assert!(max_abs(&params, &mine) < 1e-12);
}

#[test]
fn equal_rewards_give_no_gradient_without_kl() {
    let s = model(10, vec![5]);
    let reference = ReferenceState::new(&nudged(&s, 10, 0.3));
    let mut groups = batch(&s, 800, 0.2);
    for g in &mut groups {
        for m in &mut g.members {
            m.reward = 0.37;
        }
    }
    let out = surrogate_loss(&groups, &s, &reference, &config(0.0));
    assert!(out.grad.iter().all(|g| *g == 0.0));
}
