//! Micro-Countdown: combine every operand exactly once with `+ - * /` and
//! parentheses to reach the target.

use std::cmp::Ordering;
use std::collections::HashMap;

use num_rational::Ratio;
use num_traits::{CheckedAdd, CheckedDiv, CheckedMul, CheckedSub};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ExpertDemo;
use crate::error::{Error, Result};
use crate::seqmodel::Token;

type Q = Ratio<i64>;

/// Largest number of candidate expressions the exhaustive search may visit
/// per instance.
pub const DEFAULT_SEARCH_LIMIT: u128 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountdownInstance {
    pub id: String,
    pub operands: Vec<u32>,
    pub target: u32,
}

impl CountdownInstance {
    /// `operands = target`, one symbol per token.
    pub fn prompt_tokens(&self) -> Vec<Token> {
        let mut out: Vec<Token> = self.operands.iter().map(|&n| Token::number(n)).collect();
        out.push(Token::EQUALS);
        out.push(Token::number(self.target));
        out
    }
}

/// Generation parameters. The desk preset is `n = 3`, operands in `[1, 9]`,
/// target 10; the original puzzle is `n = 4`, `[1, 50]`, target 24.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountdownSpec {
    pub count: usize,
    pub n: usize,
    pub lo: u32,
    pub hi: u32,
    pub target: u32,
    pub seed: u64,
    #[serde(default = "default_limit")]
    pub search_limit: u128,
}

fn default_limit() -> u128 {
    DEFAULT_SEARCH_LIMIT
}

impl CountdownSpec {
    pub fn new(count: usize, n: usize, lo: u32, hi: u32, target: u32, seed: u64) -> Self {
        CountdownSpec {
            count,
            n,
            lo,
            hi,
            target,
            seed,
            search_limit: DEFAULT_SEARCH_LIMIT,
        }
    }

    pub fn micro(count: usize, seed: u64) -> Self {
        Self::new(count, 3, 1, 9, 10, seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Op {
    Add,
    Sub,
    Mul,
    Div,
}

impl Op {
    const ALL: [Op; 4] = [Op::Add, Op::Sub, Op::Mul, Op::Div];

    fn token(self) -> Token {
        match self {
            Op::Add => Token::PLUS,
            Op::Sub => Token::MINUS,
            Op::Mul => Token::TIMES,
            Op::Div => Token::DIVIDE,
        }
    }

    fn precedence(self) -> u8 {
        match self {
            Op::Add | Op::Sub => 1,
            Op::Mul | Op::Div => 2,
        }
    }

    fn apply(self, a: Q, b: Q) -> Option<Q> {
        match self {
            Op::Add => a.checked_add(&b),
            Op::Sub => a.checked_sub(&b),
            Op::Mul => a.checked_mul(&b),
            Op::Div => {
                if *b.numer() == 0 {
                    None
                } else {
                    a.checked_div(&b)
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
enum Expr {
    Num(u32),
    Bin(Op, Box<Expr>, Box<Expr>),
}

impl Expr {
    fn eval(&self) -> Option<Q> {
        match self {
            Expr::Num(n) => Some(Q::from_integer(*n as i64)),
            Expr::Bin(op, a, b) => op.apply(a.eval()?, b.eval()?),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Num(_) => 3,
            Expr::Bin(op, ..) => op.precedence(),
        }
    }

    /// Renders with only the parentheses needed under left-associative
    /// precedence parsing.
    fn render(&self, out: &mut Vec<Token>) {
        match self {
            Expr::Num(n) => out.push(Token::number(*n)),
            Expr::Bin(op, a, b) => {
                let p = op.precedence();
                let wrap_left = a.precedence() < p;
                let wrap_right = b.precedence() < p
                    || (b.precedence() == p && matches!(op, Op::Sub | Op::Div));
                render_wrapped(a, wrap_left, out);
                out.push(op.token());
                render_wrapped(b, wrap_right, out);
            }
        }
    }
}

fn render_wrapped(e: &Expr, wrap: bool, out: &mut Vec<Token>) {
    if wrap {
        out.push(Token::LPAREN);
        e.render(out);
        out.push(Token::RPAREN);
    } else {
        e.render(out);
    }
}

/// Number of expressions the exhaustive search visits for `n` operands:
/// `n! · Catalan(n-1) · 4^(n-1)`.
pub fn search_space_size(n: usize) -> u128 {
    let fact: u128 = (1..=n as u128).product();
    let m = n.saturating_sub(1) as u128;
    // Catalan(m) = C(2m, m) / (m + 1)
    let mut c: u128 = 1;
    for k in 0..m {
        c = c * (2 * m - k) / (k + 1);
    }
    let catalan = c / (m + 1);
    fact * catalan * 4u128.pow(m as u32)
}

fn trees(leaves: &[u32]) -> Vec<Expr> {
    if leaves.len() == 1 {
        return vec![Expr::Num(leaves[0])];
    }
    let mut out = Vec::new();
    for split in 1..leaves.len() {
        let lefts = trees(&leaves[..split]);
        let rights = trees(&leaves[split..]);
        for l in &lefts {
            for r in &rights {
                for op in Op::ALL {
                    out.push(Expr::Bin(op, Box::new(l.clone()), Box::new(r.clone())));
                }
            }
        }
    }
    out
}

fn permutations(items: &[u32]) -> Vec<Vec<u32>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

fn random_tree<R: Rng + ?Sized>(leaves: &[u32], rng: &mut R) -> Expr {
    if leaves.len() == 1 {
        return Expr::Num(leaves[0]);
    }
    let split = rng.gen_range(1..leaves.len());
    let op = Op::ALL[rng.gen_range(0..Op::ALL.len())];
    Expr::Bin(
        op,
        Box::new(random_tree(&leaves[..split], rng)),
        Box::new(random_tree(&leaves[split..], rng)),
    )
}

/// A well-formed expression using every operand once, with random order,
/// shape and operators. Usually wrong; used to teach the answer format.
pub fn random_expression<R: Rng + ?Sized>(operands: &[u32], rng: &mut R) -> Vec<Token> {
    use rand::seq::SliceRandom;
    assert!(!operands.is_empty());
    let mut perm = operands.to_vec();
    perm.shuffle(rng);
    let mut out = Vec::new();
    random_tree(&perm, rng).render(&mut out);
    out
}

/// Orders token sequences by length, then by their symbol strings.
pub fn demo_order(a: &[Token], b: &[Token]) -> Ordering {
    a.len().cmp(&b.len()).then_with(|| {
        let sa: Vec<String> = a.iter().map(|t| t.symbol()).collect();
        let sb: Vec<String> = b.iter().map(|t| t.symbol()).collect();
        sa.cmp(&sb)
    })
}

/// Exhaustive search for the shortest, then lexicographically least,
/// expression reaching `target`. `Ok(None)` means unsolvable.
pub fn solve(operands: &[u32], target: u32, limit: u128) -> Result<Option<Vec<Token>>> {
    let size = search_space_size(operands.len());
    if size > limit {
        return Err(Error::SearchSpaceTooLarge { size, limit });
    }
    let goal = Q::from_integer(target as i64);
    let mut best: Option<Vec<Token>> = None;
    for perm in permutations(operands) {
        for e in trees(&perm) {
            if e.eval() != Some(goal) {
                continue;
            }
            let mut toks = Vec::new();
            e.render(&mut toks);
            let better = match &best {
                None => true,
                Some(b) => demo_order(&toks, b) == Ordering::Less,
            };
            if better {
                best = Some(toks);
            }
        }
    }
    Ok(best)
}

/// Draws `spec.count` solvable instances, each with its canonical expert
/// expression. Unsolvable draws are discarded.
pub fn generate_countdown(spec: &CountdownSpec) -> Result<Vec<(CountdownInstance, ExpertDemo)>> {
    if spec.count == 0 || spec.n < 2 || spec.lo < 1 || spec.hi < spec.lo {
        return Err(Error::ConfigInvalid(format!(
            "countdown parameters out of range: {spec:?}"
        )));
    }
    let size = search_space_size(spec.n);
    if size > spec.search_limit {
        return Err(Error::SearchSpaceTooLarge {
            size,
            limit: spec.search_limit,
        });
    }
    let max_attempts = 1000 + 200 * spec.count;
    let mut rng = crate::rng::stream(spec.seed, &[0xC0DE]);
    let mut cache: HashMap<Vec<u32>, Option<Vec<Token>>> = HashMap::new();
    let mut out = Vec::with_capacity(spec.count);
    let mut attempts = 0;
    while out.len() < spec.count {
        if attempts == max_attempts {
            return Err(Error::InfeasibleParameters { attempts });
        }
        attempts += 1;
        let operands: Vec<u32> = (0..spec.n)
            .map(|_| rng.gen_range(spec.lo..=spec.hi))
            .collect();
        let mut key = operands.clone();
        key.sort_unstable();
        let demo = match cache.get(&key) {
            Some(d) => d.clone(),
            None => {
                let d = solve(&key, spec.target, spec.search_limit)?;
                cache.insert(key, d.clone());
                d
            }
        };
        if let Some(answer_tokens) = demo {
            let id = format!("cd-{}-{:05}", spec.seed, out.len());
            out.push((
                CountdownInstance {
                    id: id.clone(),
                    operands,
                    target: spec.target,
                },
                ExpertDemo {
                    question_ref: id,
                    answer_tokens,
                },
            ));
        }
    }
    Ok(out)
}

struct Parser<'a> {
    toks: &'a [Token],
    pos: usize,
    used: Vec<u32>,
}

impl Parser<'_> {
    fn peek(&self) -> Option<Token> {
        self.toks.get(self.pos).copied()
    }

    fn expr(&mut self) -> Option<Q> {
        let mut acc = self.term()?;
        while let Some(t @ (Token::PLUS | Token::MINUS)) = self.peek() {
            self.pos += 1;
            let rhs = self.term()?;
            acc = if t == Token::PLUS {
                acc.checked_add(&rhs)?
            } else {
                acc.checked_sub(&rhs)?
            };
        }
        Some(acc)
    }

    fn term(&mut self) -> Option<Q> {
        let mut acc = self.factor()?;
        while let Some(t @ (Token::TIMES | Token::DIVIDE)) = self.peek() {
            self.pos += 1;
            let rhs = self.factor()?;
            acc = if t == Token::TIMES {
                acc.checked_mul(&rhs)?
            } else if *rhs.numer() == 0 {
                return None;
            } else {
                acc.checked_div(&rhs)?
            };
        }
        Some(acc)
    }

    fn factor(&mut self) -> Option<Q> {
        let t = self.peek()?;
        self.pos += 1;
        if t == Token::LPAREN {
            let v = self.expr()?;
            if self.peek()? != Token::RPAREN {
                return None;
            }
            self.pos += 1;
            Some(v)
        } else {
            let n = t.as_number()?;
            self.used.push(n);
            Some(Q::from_integer(n as i64))
        }
    }
}

/// Evaluates an infix expression exactly; `None` on any syntax error or
/// division by zero.
pub fn evaluate(tokens: &[Token]) -> Option<(Q, Vec<u32>)> {
    let mut p = Parser {
        toks: tokens,
        pos: 0,
        used: Vec::new(),
    };
    let v = p.expr()?;
    (p.pos == tokens.len()).then_some((v, p.used))
}

/// True iff `answer` parses, uses each operand exactly once and evaluates to
/// the target under exact rational arithmetic.
pub fn verify_countdown(instance: &CountdownInstance, answer: &[Token]) -> bool {
    let Some((value, mut used)) = evaluate(answer) else {
        return false;
    };
    let mut want = instance.operands.clone();
    used.sort_unstable();
    want.sort_unstable();
    used == want && value == Q::from_integer(instance.target as i64)
}
