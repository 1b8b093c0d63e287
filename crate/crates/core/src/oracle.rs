//! Exact checks of the IRL derivation on enumerable answer spaces.
//!
//! Every question has an explicit finite answer set with a reference
//! distribution `ρ`, an expert distribution and a feature vector per answer.
//! Rewards are linear, `r_φ(a, q) = φ · f(a, q)`, except in the critic check
//! where the reward is the critic's own expert probability.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionSpace {
    /// Question marginal.
    pub weight: f64,
    /// Feature vector of each answer.
    pub features: Vec<Vec<f64>>,
    pub ref_dist: Vec<f64>,
    pub expert_dist: Vec<f64>,
}

impl QuestionSpace {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnumerableSpace {
    pub questions: Vec<QuestionSpace>,
    pub dim: usize,
}

fn random_dist<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

impl EnumerableSpace {
    /// A seeded random space. Feature 0 is the answer's normalized length
    /// (its index scaled to [0, 1]), feature 1 an indicator of the first
    /// answer, the rest uniform in [-1, 1].
    pub fn random(seed: u64, questions: usize, answers: usize, dim: usize) -> Self {
        assert!(questions >= 1 && answers >= 1 && dim >= 2);
        let mut r = rng::stream(seed, &[0x0a]);
        let qw = random_dist(&mut r, questions);
        let questions = qw
            .into_iter()
            .map(|weight| {
                let features = (0..answers)
                    .map(|a| {
                        let mut f = Vec::with_capacity(dim);
                        f.push(a as f64 / answers.max(2).saturating_sub(1) as f64);
                        f.push(if a == 0 { 1.0 } else { 0.0 });
                        f.extend((2..dim).map(|_| r.gen_range(-1.0..1.0)));
                        f
                    })
                    .collect();
                QuestionSpace {
                    weight,
                    features,
                    ref_dist: random_dist(&mut r, answers),
                    expert_dist: random_dist(&mut r, answers),
                }
            })
            .collect();
        EnumerableSpace { questions, dim }
    }

    pub fn random_params(&self, seed: u64) -> Vec<f64> {
        let mut r = rng::stream(seed, &[0x0b]);
        (0..self.dim).map(|_| r.gen_range(-1.0..1.0)).collect()
    }

    pub fn rewards(&self, phi: &[f64]) -> Vec<Vec<f64>> {
        self.questions
            .iter()
            .map(|q| q.features.iter().map(|f| dot(f, phi)).collect())
            .collect()
    }

    /// The same space with the expert replaced by `dists`.
    pub fn with_expert(&self, dists: Vec<Vec<f64>>) -> Self {
        let mut s = self.clone();
        for (q, d) in s.questions.iter_mut().zip(dists) {
            q.expert_dist = d;
        }
        s
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `ρ exp(r/β) / Z` for one question, normalized in log space.
pub fn gibbs_from_rewards(rewards: &[f64], ref_dist: &[f64], beta: f64) -> Vec<f64> {
    assert!(beta > 0.0, "beta must be positive");
    let logits: Vec<f64> = rewards
        .iter()
        .zip(ref_dist)
        .map(|(r, p)| p.ln() + r / beta)
        .collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits.iter().map(|l| (l - max).exp()).sum();
    logits.iter().map(|l| (l - max).exp() / z).collect()
}

pub fn gibbs_policy(space: &EnumerableSpace, phi: &[f64], beta: f64) -> Vec<Vec<f64>> {
    space
        .rewards(phi)
        .iter()
        .zip(&space.questions)
        .map(|(r, q)| gibbs_from_rewards(r, &q.ref_dist, beta))
        .collect()
}

/// `Σ π r - β KL(π ‖ ρ)`.
pub fn regularized_objective(pi: &[f64], rewards: &[f64], ref_dist: &[f64], beta: f64) -> f64 {
    pi.iter()
        .zip(rewards)
        .zip(ref_dist)
        .map(|((p, r), q)| {
            if *p > 0.0 {
                p * r - beta * p * (p / q).ln()
            } else {
                0.0
            }
        })
        .sum()
}

/// Numerically maximizes the regularized objective over the simplex without
/// using its closed form: a coarse grid for the start (three answers or
/// fewer), then Newton steps restricted to the simplex with backtracking.
pub fn maximize_on_simplex(rewards: &[f64], ref_dist: &[f64], beta: f64) -> Vec<f64> {
    let n = rewards.len();
    let f = |p: &[f64]| regularized_objective(p, rewards, ref_dist, beta);
    let mut pi = vec![1.0 / n as f64; n];
    if n == 2 || n == 3 {
        let steps = 100;
        let mut best = f(&pi);
        for i in 1..steps {
            for j in 1..(steps - i).max(1) {
                let cand: Vec<f64> = if n == 2 {
                    vec![i as f64 / steps as f64, 1.0 - i as f64 / steps as f64]
                } else {
                    let (a, b) = (i as f64 / steps as f64, j as f64 / steps as f64);
                    if a + b >= 1.0 {
                        continue;
                    }
                    vec![a, b, 1.0 - a - b]
                };
                let v = f(&cand);
                if v > best {
                    best = v;
                    pi = cand;
                }
            }
        }
    }
    for _ in 0..10_000 {
        // gradient of the objective and its diagonal Hessian -β/π
        let g: Vec<f64> = (0..n)
            .map(|a| rewards[a] - beta * ((pi[a] / ref_dist[a]).ln() + 1.0))
            .collect();
        let gbar = dot(&pi, &g);
        let d: Vec<f64> = (0..n).map(|a| pi[a] / beta * (g[a] - gbar)).collect();
        let decrement = dot(&d, &g);
        if decrement < 1e-30 {
            break;
        }
        let base = f(&pi);
        let mut t = 1.0;
        loop {
            let cand: Vec<f64> = (0..n).map(|a| pi[a] + t * d[a]).collect();
            if cand.iter().all(|p| *p > 0.0) && f(&cand) >= base {
                let s: f64 = cand.iter().sum();
                pi = cand.into_iter().map(|p| p / s).collect();
                break;
            }
            t *= 0.5;
            if t < 1e-30 {
                return pi;
            }
        }
    }
    pi
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// `E_q E_{a~expert} log π*_φ(a | q)`.
pub fn ml_objective(space: &EnumerableSpace, phi: &[f64], beta: f64) -> f64 {
    gibbs_policy(space, phi, beta)
        .iter()
        .zip(&space.questions)
        .map(|(pi, q)| q.weight * dot(&q.expert_dist, &pi.iter().map(|p| p.ln()).collect::<Vec<_>>()))
        .sum()
}

/// `(1/β)(E_expert[f] - E_Gibbs[f])`, the gradient of [`ml_objective`].
pub fn contrastive_gradient(space: &EnumerableSpace, phi: &[f64], beta: f64) -> Vec<f64> {
    let pis = gibbs_policy(space, phi, beta);
    let mut g = vec![0.0; space.dim];
    for (q, pi) in space.questions.iter().zip(&pis) {
        for (a, f) in q.features.iter().enumerate() {
            let w = q.weight * (q.expert_dist[a] - pi[a]) / beta;
            g.iter_mut().zip(f).for_each(|(gi, fi)| *gi += w * fi);
        }
    }
    g
}

pub fn central_difference<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut p = x.to_vec();
            let mut m = x.to_vec();
            p[i] += h;
            m[i] -= h;
            (f(&p) - f(&m)) / (2.0 * h)
        })
        .collect()
}

pub fn relative_l2(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientReport {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub relative_error: f64,
    pub max_abs_error: f64,
}

pub fn check_reward_gradient(space: &EnumerableSpace, phi: &[f64], beta: f64, h: f64) -> GradientReport {
    assert!(h > 0.0);
    let analytic = contrastive_gradient(space, phi, beta);
    let numeric = central_difference(|p| ml_objective(space, p, beta), phi, h);
    report(analytic, numeric)
}

fn report(analytic: Vec<f64>, numeric: Vec<f64>) -> GradientReport {
    let max_abs_error = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    GradientReport {
        relative_error: relative_l2(&analytic, &numeric),
        analytic,
        numeric,
        max_abs_error,
    }
}

/// Two-label critic `c_ψ(expert | a, q) = σ(ψ · f(a, q))`.
pub fn critic_expert_prob(features: &[f64], psi: &[f64]) -> f64 {
    let z = dot(features, psi);
    1.0 / (1.0 + (-z).exp())
}

/// `∇ log c(ℓ)` for the two labels: `(1 - p_E) f` and `-p_E f`.
fn critic_scores(features: &[f64], psi: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let p = critic_expert_prob(features, psi);
    let se = features.iter().map(|f| (1.0 - p) * f).collect();
    let sp = features.iter().map(|f| -p * f).collect();
    (p, se, sp)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReinforceReport {
    /// Largest deviation between the enumerated REINFORCE expectation and the
    /// direct derivative of `p_E`.
    pub max_abs_error: f64,
    /// Contrastive critic gradient against finite differences of the ML
    /// objective with `r = p_E`.
    pub contrastive: GradientReport,
}

/// ML objective with the critic's expert probability as the reward.
pub fn critic_ml_objective(space: &EnumerableSpace, psi: &[f64], beta: f64) -> f64 {
    space
        .questions
        .iter()
        .map(|q| {
            let r: Vec<f64> = q.features.iter().map(|f| critic_expert_prob(f, psi)).collect();
            let pi = gibbs_from_rewards(&r, &q.ref_dist, beta);
            q.weight
                * q.expert_dist
                    .iter()
                    .zip(&pi)
                    .map(|(e, p)| e * p.ln())
                    .sum::<f64>()
        })
        .sum()
}

pub fn check_critic_reinforce(space: &EnumerableSpace, psi: &[f64], beta: f64, h: f64) -> ReinforceReport {
    let mut max_abs_error: f64 = 0.0;
    let mut grad = vec![0.0; space.dim];
    for q in &space.questions {
        let r: Vec<f64> = q.features.iter().map(|f| critic_expert_prob(f, psi)).collect();
        let pi = gibbs_from_rewards(&r, &q.ref_dist, beta);
        for (a, f) in q.features.iter().enumerate() {
            let (p, score_e, score_p) = critic_scores(f, psi);
            // exact two-outcome expectation of 1[ℓ = expert] ∇ log c(ℓ)
            let reinforce: Vec<f64> = score_e.iter().map(|s| p * s).collect();
            let z = dot(f, psi);
            let direct: Vec<f64> = f
                .iter()
                .map(|fi| fi * (-z).exp() / (1.0 + (-z).exp()).powi(2))
                .collect();
            for (x, y) in reinforce.iter().zip(&direct) {
                max_abs_error = max_abs_error.max((x - y).abs());
            }
            // expert term from the demonstrations, policy term under π*
            let policy_reinforce: Vec<f64> = score_p.iter().map(|s| (1.0 - p) * s).collect();
            for k in 0..space.dim {
                grad[k] += q.weight / beta
                    * (q.expert_dist[a] * reinforce[k] + pi[a] * policy_reinforce[k]);
            }
        }
    }
    let numeric = central_difference(|p| critic_ml_objective(space, p, beta), psi, h);
    ReinforceReport {
        max_abs_error,
        contrastive: report(grad, numeric),
    }
}

/// One pass/fail line of the oracle suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub name: String,
    pub max_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl OracleReport {
    fn new(name: &str, max_error: f64, tolerance: f64) -> Self {
        OracleReport {
            name: name.to_string(),
            max_error,
            tolerance,
            passed: max_error <= tolerance,
        }
    }
}

/// Runs the three checks over seeded random spaces.
pub fn run_suite(seed: u64, spaces: usize) -> Vec<OracleReport> {
    let mut tv: f64 = 0.0;
    let mut ml: f64 = 0.0;
    let mut fixed_point: f64 = 0.0;
    let mut reinforce: f64 = 0.0;
    for i in 0..spaces as u64 {
        let s = seed.wrapping_add(i);
        let space = EnumerableSpace::random(s, 3, 3, 4);
        let phi = space.random_params(s);
        for beta in [0.1, 1.0, 10.0] {
            let closed = gibbs_policy(&space, &phi, beta);
            for ((q, pi), r) in space.questions.iter().zip(&closed).zip(space.rewards(&phi)) {
                tv = tv.max(total_variation(pi, &maximize_on_simplex(&r, &q.ref_dist, beta)));
            }
        }
        let big = EnumerableSpace::random(s, 4, 120, 12);
        let phi = big.random_params(s);
        ml = ml.max(check_reward_gradient(&big, &phi, 1.0, 1e-5).relative_error);
        let matched = big.with_expert(gibbs_policy(&big, &phi, 1.0));
        let g = contrastive_gradient(&matched, &phi, 1.0);
        fixed_point = fixed_point.max(g.iter().map(|x| x.abs()).fold(0.0, f64::max));
        reinforce = reinforce.max(check_critic_reinforce(&space, &phi, 1.0, 1e-5).max_abs_error);
    }
    vec![
        OracleReport::new("gibbs-optimality (TV)", tv, 1e-6),
        OracleReport::new("ml-gradient (rel L2)", ml, 1e-6),
        OracleReport::new("ml-gradient at matched expert (abs)", fixed_point, 1e-10),
        OracleReport::new("critic-reinforce (abs)", reinforce, 1e-12),
    ]
}
