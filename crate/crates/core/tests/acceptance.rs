//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion.
//!
//! The process exits 0 after reporting unless `RARO_ACCEPTANCE_STRICT=1`, in
//! which case any FAIL makes it exit 1.

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::fs;
use std::time::Instant;

use rand::Rng;
use raro_core::grpo::*;
use raro_core::oracle::*;
use raro_core::replay::ReplayBuffer;
use raro_core::rewards::{reward_critic, reward_policy, CriticLabel, Slot, TieRewards};
use raro_core::rng::{self, StreamRng};
use raro_core::rollout::{ComparisonTriplet, CriticOptions, Origin, PromptMode};
use raro_core::tasks::{countdown_dataset, CountdownSpec};
use raro_core::trainer::*;
use raro_core::tts::{run_tournament, tts_eval, Judge, TournamentConfig};
use raro_core::{Arch, ModelState, ReferenceState, Token, Vocab};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn report(n: usize, name: &str, run: impl FnOnce() -> Outcome) -> bool {
    let t = Instant::now();
    let o = run();
    println!(
        "{} {n:>2} {name}: {} [{:.1}s]",
        if o.pass { "PASS" } else { "FAIL" },
        o.detail,
        t.elapsed().as_secs_f64()
    );
    o.pass
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn sample_variance(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

// ---------------------------------------------------------------- 1-3

fn gibbs_optimality() -> Outcome {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    for s in 0..20 {
        let space = EnumerableSpace::random(1000 + s, 3, 8, 4);
        let phi = space.random_params(s);
        for beta in [0.1, 1.0, 10.0] {
            let closed = gibbs_policy(&space, &phi, beta);
            for ((q, pi), r) in space.questions.iter().zip(&closed).zip(space.rewards(&phi)) {
                worst = worst.max(total_variation(pi, &maximize_on_simplex(&r, &q.ref_dist, beta)));
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(worst <= 1e-6 && secs < 60.0, format!("max TV {worst:.2e} over 20 spaces x 3 betas in {secs:.1}s"))
}

fn ml_gradient() -> Outcome {
    let (mut rel, mut zero): (f64, f64) = (0.0, 0.0);
    for s in 0..4 {
        let space = EnumerableSpace::random(2000 + s, 4, 500, 20);
        let phi = space.random_params(s);
        for beta in [0.1, 1.0, 10.0] {
            rel = rel.max(check_reward_gradient(&space, &phi, beta, 1e-5).relative_error);
            let matched = space.with_expert(gibbs_policy(&space, &phi, beta));
            let g = contrastive_gradient(&matched, &phi, beta);
            zero = zero.max(g.iter().fold(0.0, |m, x| m.max(x.abs())));
        }
    }
    outcome(
        rel <= 1e-6 && zero <= 1e-10,
        format!("rel L2 {rel:.2e} (500 answers, 20 params); at Gibbs expert max |g| {zero:.2e}"),
    )
}

fn reinforce_identity() -> Outcome {
    let mut worst: f64 = 0.0;
    for s in 0..20 {
        let space = EnumerableSpace::random(3000 + s, 3, 12, 5);
        let psi = space.random_params(s + 7);
        worst = worst.max(check_critic_reinforce(&space, &psi, 1.0, 1e-5).max_abs_error);
    }
    outcome(worst <= 1e-12, format!("max abs error {worst:.2e} over 20 two-label critics"))
}

// ---------------------------------------------------------------- 4

fn scrambled(arch: Arch, vocab: Vocab, seed: u64) -> ModelState {
    let mut s = ModelState::random(arch, vocab, seed);
    let mut r = rng::stream(seed, &[41]);
    for p in s.params_mut() {
        *p = r.gen_range(-0.7..0.7);
    }
    s
}

fn random_tokens(r: &mut StreamRng, n: usize, v: usize) -> Vec<Token> {
    (0..n).map(|_| Token(r.gen_range(0..v) as u16)).collect()
}

fn model_gradients() -> Outcome {
    let data = countdown_dataset(&CountdownSpec::micro(50, 0)).expect("data");
    let vocab = vocab_for(&data);
    let shapes: [(usize, usize, Vec<usize>); 4] = [(4, 2, vec![]), (6, 3, vec![8]), (8, 4, vec![16]), (6, 3, vec![8, 8])];
    let (mut fd_worst, mut score_worst): (f64, f64) = (0.0, 0.0);
    let mut sizes = Vec::new();
    for (i, (window, embed, hidden)) in shapes.into_iter().enumerate() {
        let arch = Arch {
            window,
            embed,
            hidden,
            vocab_size: vocab.len(),
        };
        let s = scrambled(arch, vocab.clone(), i as u64);
        if s.param_count() > 2000 {
            return outcome(false, format!("shape {i} has {} parameters", s.param_count()));
        }
        sizes.push(s.param_count());
        let mut r = rng::stream(i as u64, &[42]);
        for _ in 0..3 {
            let (np, ng) = (r.gen_range(0..6), r.gen_range(1..6));
            let prefix = random_tokens(&mut r, np, vocab.len());
            let gen = random_tokens(&mut r, ng, vocab.len());
            let analytic = s.grad_logprob(&prefix, &gen);
            let h = 1e-5;
            let mut probe = s.clone();
            let numeric: Vec<f64> = (0..s.param_count())
                .map(|k| {
                    let orig = probe.params()[k];
                    probe.params_mut()[k] = orig + h;
                    let up = probe.sequence_logprob(&prefix, &gen).0;
                    probe.params_mut()[k] = orig - h;
                    let dn = probe.sequence_logprob(&prefix, &gen).0;
                    probe.params_mut()[k] = orig;
                    (up - dn) / (2.0 * h)
                })
                .collect();
            let num: f64 = analytic.iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let den: f64 = numeric.iter().map(|x| x * x).sum::<f64>().sqrt();
            fd_worst = fd_worst.max(num / den);

            // Σ_t p(t) ∇log p(t) = ∇Σ_t p(t) = 0
            let p = s.next_token_dist(&prefix);
            let mut acc = vec![0.0; s.param_count()];
            for (t, pt) in p.iter().enumerate() {
                s.accumulate_grad_logprob(&prefix, &[Token(t as u16)], *pt, &mut acc);
            }
            score_worst = acc.iter().fold(score_worst, |m, x| m.max(x.abs()));
        }
    }
    outcome(
        fd_worst <= 1e-5 && score_worst <= 1e-8,
        format!("rel L2 {fd_worst:.2e}, max |E[score]| {score_worst:.2e}, parameter counts {sizes:?}"),
    )
}

// ---------------------------------------------------------------- 5

fn grpo_batch(state: &ModelState, seed: u64) -> Vec<Group> {
    let mut r = rng::stream(seed, &[43]);
    let v = state.vocab().len();
    (0..r.gen_range(2..5))
        .map(|g| {
            let np = r.gen_range(1..4);
            let prompt = random_tokens(&mut r, np, v);
            let members = (0..r.gen_range(2..5))
                .map(|_| {
                    let ng = r.gen_range(1..5);
                    let generated = random_tokens(&mut r, ng, v);
                    let old_logprobs = state.sequence_logprob(&prompt, &generated).1;
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

fn grpo_correctness() -> Outcome {
    let vocab = Vocab::new(3);
    let arch = Arch {
        window: 4,
        embed: 3,
        hidden: vec![5],
        vocab_size: vocab.len(),
    };
    let live = |m: &Member| m.mask && !m.overlength;
    let cfg = SurrogateConfig {
        bounds: ClipBounds::default(),
        beta_kl: 0.05,
        lambda_pol: 1.0,
        lambda_crit: 1.0,
        kl_on_critic: true,
    };
    let mut adv_exact = true;
    let mut grad_err: f64 = 0.0;
    let mut improved = 0;
    for seed in 0..20u64 {
        let s = scrambled(arch.clone(), vocab.clone(), seed);
        let mut shifted = s.clone();
        let mut r = rng::stream(seed, &[44]);
        for p in shifted.params_mut() {
            *p += r.gen_range(-0.3..0.3);
        }
        let reference = ReferenceState::new(&shifted);
        let groups = grpo_batch(&s, seed);
        let mut want = vec![0.0; s.param_count()];
        let mut contexts = Vec::new();
        for g in &groups {
            let live_rewards: Vec<f64> = g.members.iter().filter(|m| live(m)).map(|m| m.reward).collect();
            match group_advantages(g) {
                Err(_) => adv_exact &= live_rewards.is_empty(),
                Ok(adv) => {
                    let mean = live_rewards.iter().sum::<f64>() / live_rewards.len() as f64;
                    for (m, a) in g.members.iter().zip(&adv) {
                        adv_exact &= *a == if live(m) { m.reward - mean } else { 0.0 };
                        if live(m) {
                            for (w, d) in want.iter_mut().zip(s.grad_logprob(&m.prompt, &m.generated)) {
                                *w -= a * d;
                            }
                            for t in 0..m.generated.len() {
                                contexts.push([m.prompt.as_slice(), &m.generated[..t]].concat());
                            }
                        }
                    }
                }
            }
        }
        let h = 1e-5;
        let kl = |st: &ModelState| -> f64 { contexts.iter().map(|c| st.exact_token_kl(&reference, c)).sum() };
        for (i, w) in want.iter_mut().enumerate() {
            let mut up = s.clone();
            up.params_mut()[i] += h;
            let mut dn = s.clone();
            dn.params_mut()[i] -= h;
            *w += cfg.beta_kl * (kl(&up) - kl(&dn)) / (2.0 * h);
        }
        let out = surrogate_loss(&groups, &s, &reference, &cfg);
        grad_err = out.grad.iter().zip(&want).fold(grad_err, |m, (a, b)| m.max((a - b).abs()));

        let norm = out.grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        let mut next = s.clone();
        for (p, g) in next.params_mut().iter_mut().zip(&out.grad) {
            *p -= 1e-3 * g / norm.max(1e-300);
        }
        if surrogate_loss(&groups, &next, &reference, &cfg).loss < out.loss {
            improved += 1;
        }
    }
    outcome(
        adv_exact && grad_err <= 1e-8 && improved >= 19,
        format!("advantages exact: {adv_exact}; gradient max abs error {grad_err:.2e}; {improved}/20 steps improved"),
    )
}

// ---------------------------------------------------------------- 6-8

fn reward_algebra() -> Outcome {
    let labels = [CriticLabel::Slot1, CriticLabel::Slot2, CriticLabel::Tie, CriticLabel::Invalid];
    let mut r = rng::stream(6, &[]);
    let mut taus = vec![TrainConfig::desk(Method::Raro, 0).taus];
    for _ in 0..50 {
        taus.push(TieRewards::new(r.gen_range(0.0..1.0), r.gen_range(0.0..1.0)).expect("taus in range"));
    }
    let mut cases = 0;
    for t in &taus {
        for slot in [Slot::One, Slot::Two] {
            for label in labels {
                let (c, cm) = reward_critic(label, slot, t);
                let (p, pm) = reward_policy(label, slot, t);
                let ok = match label {
                    CriticLabel::Tie => cm && pm && p + c == t.tau_pol + t.tau_crit,
                    CriticLabel::Invalid => !cm && !pm,
                    _ => cm && pm && p + c == 1.0 && (c == 1.0) == label.picks(slot),
                };
                if !ok {
                    return outcome(false, format!("{label:?} with expert in {slot:?} under {t:?}"));
                }
                cases += 1;
            }
        }
    }
    outcome(true, format!("8 label/slot cases x {} tie settings ({cases} checks)", taus.len()))
}

fn triplet(id: u64) -> ComparisonTriplet {
    ComparisonTriplet {
        question_ref: format!("q{id}"),
        question: vec![Token::number(1)],
        slot1_tokens: vec![Token::number(2)],
        slot2_tokens: vec![Token::number(3)],
        expert_slot: if id % 2 == 0 { Slot::One } else { Slot::Two },
        origin: Origin::Fresh,
    }
}

fn replay_mixing() -> Outcome {
    let mut buf = ReplayBuffer::new(None);
    buf.append_all((0..500).map(triplet));
    let mut r = rng::stream(7, &[]);
    let (mut replayed, mut total) = (0usize, 0usize);
    for _ in 0..10_000 {
        let n = r.gen_range(1..65);
        let fresh: Vec<ComparisonTriplet> = (0..n).map(|i| triplet(10_000 + i)).collect();
        let mixed = buf.mix(&fresh, &mut r);
        replayed += mixed.iter().filter(|t| t.origin == Origin::Replay).count();
        total += mixed.len();
    }
    let frac = replayed as f64 / total as f64;

    let mut next = 0u64;
    let mut fifo_ok = true;
    for _ in 0..100_000 {
        let cap = if r.gen_bool(0.25) { None } else { Some(r.gen_range(1..12)) };
        let mut buf = ReplayBuffer::new(cap);
        let mut model = VecDeque::new();
        for _ in 0..r.gen_range(1..10) {
            let batch: Vec<u64> = (0..r.gen_range(0..6))
                .map(|_| {
                    next += 1;
                    next
                })
                .collect();
            buf.append_all(batch.iter().map(|&i| triplet(i)));
            for i in batch {
                model.push_back(i);
                if cap.is_some_and(|c| model.len() > c) {
                    model.pop_front();
                }
            }
            fifo_ok &= buf.len() == model.len();
            if !model.is_empty() {
                let i = r.gen_range(0..model.len());
                fifo_ok &= buf.get(i) == Some(&triplet(model[i]));
            }
        }
        fifo_ok &= buf.iter().map(|t| t.question_ref.clone()).eq(model.iter().map(|i| format!("q{i}")));
    }
    outcome(
        (frac - 0.5).abs() <= 0.02 && fifo_ok,
        format!("replay fraction {frac:.4} over 10k mixes; FIFO model agreement over 100k sequences: {fifo_ok}"),
    )
}

struct Planted(Vec<Token>);

impl Judge for Planted {
    fn judge(&self, _: &[Token], a: &[Token], b: &[Token], rng: &mut StreamRng) -> CriticLabel {
        if a == self.0.as_slice() {
            CriticLabel::Slot1
        } else if b == self.0.as_slice() {
            CriticLabel::Slot2
        } else {
            [CriticLabel::Slot1, CriticLabel::Slot2, CriticLabel::Tie][rng.gen_range(0..3)]
        }
    }
}

fn tournament() -> Outcome {
    let cfg = TournamentConfig {
        votes_per_match: 4,
        ..TournamentConfig::default()
    };
    let right = vec![Token::number(7)];
    let mut brackets = 0;
    for n in [2usize, 4, 8, 16] {
        for seat in 0..n {
            let mut cands: Vec<Vec<Token>> = (0..n as u32).map(|i| vec![Token::number(100 + i)]).collect();
            cands[seat] = right.clone();
            for seed in 0..5 {
                if run_tournament(&Planted(right.clone()), &[], &cands, &cfg, seed).winner != seat {
                    return outcome(false, format!("planted answer lost: n {n}, seat {seat}, seed {seed}"));
                }
                brackets += 1;
            }
        }
    }
    // two votes each way: A needs more than K/2
    let votes = std::sync::atomic::AtomicUsize::new(0);
    let alternating = |_: &[Token], _: &[Token], _: &[Token]| {
        if votes.fetch_add(1, std::sync::atomic::Ordering::SeqCst) % 2 == 0 {
            CriticLabel::Slot1
        } else {
            CriticLabel::Slot2
        }
    };
    let t = run_tournament(&alternating, &[], &[vec![Token::number(1)], vec![Token::number(2)]], &cfg, 0);
    let m = &t.matches[0];
    let tie_rule = m.votes_a == 2 && t.winner == 1;
    outcome(
        tie_rule,
        format!("planted answer won {brackets}/{brackets} brackets; K=4 with 2 votes for A -> winner {}", ["A", "B"][t.winner]),
    )
}

// ---------------------------------------------------------------- 9-12

struct SeedRuns {
    base: f64,
    sft: f64,
    rlvr: f64,
    raro: f64,
    raro_state: ModelState,
    raro_critic_trace: Vec<f64>,
    splits: Splits,
    init: ModelState,
}

fn desk_splits(seed: u64) -> Splits {
    let data = countdown_dataset(&CountdownSpec::micro(2000 + 128 + 256, 100 + seed)).expect("micro-countdown");
    Splits::from_examples(data, 128, 256).expect("splits")
}

fn critic_trace(out: &RunOutcome) -> Vec<f64> {
    out.records.iter().filter_map(|r| r.critic_reward_mean).collect()
}

fn run_seed(seed: u64) -> SeedRuns {
    let splits = desk_splits(seed);
    let raro_cfg = TrainConfig::desk(Method::Raro, seed);
    let budgets = raro_cfg.budgets;
    let test = |s: &ModelState, mode| {
        evaluate(s, &splits.test, EvalMode::GreedyAccuracy, mode, budgets, None).expect("evaluation")
    };
    let t = Instant::now();
    let init = format_warmup(&splits.train, &raro_cfg.model, seed).expect("warm-up");
    let base = test(&init, PromptMode::Reasoning);
    let sft = train_sft(&TrainConfig::desk(Method::Sft, seed), &splits, &init, None).expect("sft");
    let sft = test(&sft.state, PromptMode::Direct);
    let rlvr = train_rlvr(&TrainConfig::desk(Method::Rlvr, seed), &splits, &init, None).expect("rlvr");
    let rlvr = test(rlvr.selected(), PromptMode::Reasoning);
    let raro = train_raro(&raro_cfg, &splits, &init, None).expect("raro");
    let raro_acc = test(raro.selected(), PromptMode::Reasoning);
    println!(
        "     seed {seed}: base {base:.3}  sft {sft:.3}  rlvr {rlvr:.3}  raro {raro_acc:.3}  ({:.0}s)",
        t.elapsed().as_secs_f64()
    );
    SeedRuns {
        base,
        sft,
        rlvr,
        raro: raro_acc,
        raro_state: raro.selected().clone(),
        raro_critic_trace: critic_trace(&raro),
        splits,
        init,
    }
}

fn end_to_end(runs: &[SeedRuns], secs: f64) -> Outcome {
    let m = |f: fn(&SeedRuns) -> f64| median(runs.iter().map(f).collect());
    let (base, sft, rlvr, raro) = (m(|r| r.base), m(|r| r.sft), m(|r| r.rlvr), m(|r| r.raro));
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let checks = [
        ("base < SFT", base < sft),
        ("SFT <= RARO", sft <= raro),
        ("RARO >= 0.8 x RLVR", raro >= 0.8 * rlvr),
        ("runtime <= 60 min", secs <= 3600.0),
    ];
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    outcome(
        failed.is_empty(),
        format!(
            "medians base {base:.3} sft {sft:.3} rlvr {rlvr:.3} raro {raro:.3}; {:.1} min on {cores} core(s){}",
            secs / 60.0,
            if failed.is_empty() { String::new() } else { format!("; not met: {}", failed.join(", ")) }
        ),
    )
}

fn tts_shape(runs: &[SeedRuns]) -> Outcome {
    let ns = [1usize, 4, 16];
    let mut per_n: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for (seed, r) in runs.iter().enumerate() {
        let cfg = TrainConfig::desk(Method::Raro, seed as u64);
        for n in ns {
            let tc = TournamentConfig {
                n_candidates: n,
                ..TournamentConfig::default()
            };
            let rep = tts_eval(
                &r.raro_state,
                &r.splits.test,
                None,
                n,
                &tc,
                cfg.budgets,
                CriticOptions::default(),
                seed as u64,
            )
            .expect("tts");
            per_n.entry(n).or_default().push(rep.accuracy);
        }
    }
    let medians: Vec<f64> = ns.iter().map(|n| median(per_n[n].clone())).collect();
    let ok = medians.windows(2).all(|w| w[0] <= w[1]);
    outcome(ok, format!("median accuracy at N=1,4,16: {:.3} {:.3} {:.3}", medians[0], medians[1], medians[2]))
}

fn ablations(runs: &[SeedRuns]) -> Outcome {
    let setters: [(&str, fn(&mut Ablations)); 5] = [
        ("no_tie", |a| a.no_tie = true),
        ("no_relativistic", |a| a.no_relativistic = true),
        ("no_replay", |a| a.no_replay = true),
        ("no_critic_reasoning", |a| a.no_critic_reasoning = true),
        ("no_shared_model", |a| a.no_shared_model = true),
    ];
    let mut metas = HashSet::new();
    metas.insert(serde_json::to_string(&full_metadata(runs)).expect("metadata"));
    let mut variance_rows = Vec::new();
    let mut variance_ok = true;
    for (name, set) in setters {
        let seeds: Vec<usize> = if name == "no_replay" { (0..runs.len()).collect() } else { vec![0] };
        for seed in seeds {
            let r = &runs[seed];
            let mut cfg = TrainConfig::desk(Method::Raro, seed as u64);
            if name != "no_replay" {
                // completion and labelling only; the full length is spent on no_replay
                cfg.iterations = 100;
            }
            set(&mut cfg.ablations);
            let dir = tempfile::tempdir().expect("tempdir");
            let run = RunDir::create(dir.path()).expect("run dir");
            let out = match train_raro(&cfg, &r.splits, &r.init, Some(&run)) {
                Ok(o) => o,
                Err(e) => return outcome(false, format!("{name} failed: {e}")),
            };
            let meta = fs::read_to_string(dir.path().join("run.json")).expect("run.json");
            if seed == 0 && !metas.insert(serde_json::to_string(&out.metadata).expect("metadata")) {
                return outcome(false, format!("{name} metadata is not distinguishable: {meta}"));
            }
            if name == "no_replay" {
                let tail = |v: &[f64]| sample_variance(&v[v.len().saturating_sub(50)..]);
                let (full, ablated) = (tail(&r.raro_critic_trace), tail(&critic_trace(&out)));
                variance_ok &= ablated > full;
                variance_rows.push(format!("seed {seed}: {ablated:.2e} vs {full:.2e}"));
            }
        }
    }
    outcome(
        variance_ok,
        format!(
            "5 ablations ran with distinct metadata; critic-reward variance, last 50 iterations, no-replay vs full: {}",
            variance_rows.join("; ")
        ),
    )
}

fn full_metadata(runs: &[SeedRuns]) -> RunMetadata {
    let cfg = TrainConfig {
        iterations: 1,
        ..TrainConfig::desk(Method::Raro, 0)
    };
    train_raro(&cfg, &runs[0].splits, &runs[0].init, None).expect("raro").metadata
}

fn determinism(runs: &[SeedRuns]) -> Outcome {
    let cfg = TrainConfig {
        iterations: 25,
        ..TrainConfig::desk(Method::Raro, 5)
    };
    let dirs: Vec<tempfile::TempDir> = (0..2).map(|_| tempfile::tempdir().expect("tempdir")).collect();
    for d in &dirs {
        let run = RunDir::create(d.path()).expect("run dir");
        train_raro(&cfg, &runs[0].splits, &runs[0].init, Some(&run)).expect("raro");
    }
    let files = ["metrics.jsonl", "checkpoints/final.json", "checkpoints/final.optim.json", "buffer.jsonl"];
    let differing: Vec<&str> = files
        .iter()
        .copied()
        .filter(|f| fs::read(dirs[0].path().join(f)).ok() != fs::read(dirs[1].path().join(f)).ok())
        .collect();
    outcome(
        differing.is_empty(),
        if differing.is_empty() {
            format!("{} files bit-identical across two {}-iteration runs", files.len(), cfg.iterations)
        } else {
            format!("differ: {differing:?}")
        },
    )
}

fn main() {
    // `cargo test` passes harness flags such as `--nocapture`; a name filter
    // that excludes this target skips the run.
    let args: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if !args.is_empty() && !args.iter().any(|a| "acceptance".contains(a.as_str())) {
        return;
    }
    let mut results = Vec::new();
    results.push(report(1, "Gibbs policy optimality", gibbs_optimality));
    results.push(report(2, "ML reward gradient", ml_gradient));
    results.push(report(3, "critic REINFORCE identity", reinforce_identity));
    results.push(report(4, "model gradients", model_gradients));
    results.push(report(5, "GRPO surrogate", grpo_correctness));
    results.push(report(6, "reward algebra", reward_algebra));
    results.push(report(7, "replay mixing", replay_mixing));
    results.push(report(8, "tournament", tournament));

    let t = Instant::now();
    let runs: Vec<SeedRuns> = (0..3).map(run_seed).collect();
    let secs = t.elapsed().as_secs_f64();
    results.push(report(9, "end-to-end ordering on micro-countdown", || end_to_end(&runs, secs)));
    results.push(report(10, "test-time scaling shape", || tts_shape(&runs)));
    results.push(report(11, "ablation harness", || ablations(&runs)));
    results.push(report(12, "determinism", || determinism(&runs)));

    let passed = results.iter().filter(|p| **p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    let strict = std::env::var("RARO_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if strict && passed < results.len() {
        std::process::exit(1);
    }
}
