use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// A token id. The layout is fixed: structural markers, operators, the
/// hidden-rule alphabet, then the integers `0..=max_number`. Only the number
/// range varies between vocabularies, so token meaning never depends on which
/// [`Vocab`] produced it.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Token(pub u16);

const SPECIAL: [&str; 16] = [
    "<pad>", "<eos>", "<policy>", "<critic>", "<think>", "<answer>", "<1>", "<2>", "<tie>", "+",
    "-", "*", "/", "(", ")", "=",
];
pub const LETTERS: usize = 8;
const NUM_BASE: u16 = (SPECIAL.len() + LETTERS) as u16;

impl Token {
    pub const PAD: Token = Token(0);
    pub const EOS: Token = Token(1);
    pub const ROLE_POLICY: Token = Token(2);
    pub const ROLE_CRITIC: Token = Token(3);
    pub const SEP_THINK: Token = Token(4);
    pub const SEP_ANSWER: Token = Token(5);
    pub const L1: Token = Token(6);
    pub const L2: Token = Token(7);
    pub const LTIE: Token = Token(8);
    pub const PLUS: Token = Token(9);
    pub const MINUS: Token = Token(10);
    pub const TIMES: Token = Token(11);
    pub const DIVIDE: Token = Token(12);
    pub const LPAREN: Token = Token(13);
    pub const RPAREN: Token = Token(14);
    pub const EQUALS: Token = Token(15);

    pub fn number(n: u32) -> Token {
        Token(NUM_BASE + n as u16)
    }

    pub fn as_number(self) -> Option<u32> {
        (self.0 >= NUM_BASE).then(|| (self.0 - NUM_BASE) as u32)
    }

    /// Letter `i` of the hidden-rule alphabet (`A` = 0).
    pub fn letter(i: usize) -> Token {
        assert!(i < LETTERS, "letter index {i} out of range");
        Token((SPECIAL.len() + i) as u16)
    }

    pub fn as_letter(self) -> Option<usize> {
        let i = self.0 as usize;
        (SPECIAL.len()..SPECIAL.len() + LETTERS)
            .contains(&i)
            .then(|| i - SPECIAL.len())
    }

    pub fn is_label(self) -> bool {
        matches!(self, Token::L1 | Token::L2 | Token::LTIE)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn symbol(self) -> String {
        if let Some(n) = self.as_number() {
            n.to_string()
        } else if let Some(i) = self.as_letter() {
            ((b'A' + i as u8) as char).to_string()
        } else {
            SPECIAL[self.0 as usize].to_string()
        }
    }

    pub fn parse(sym: &str) -> Result<Token> {
        if let Some(i) = SPECIAL.iter().position(|s| *s == sym) {
            return Ok(Token(i as u16));
        }
        if let Ok(n) = sym.parse::<u32>() {
            return Ok(Token::number(n));
        }
        let b = sym.as_bytes();
        if b.len() == 1 && (b'A'..b'A' + LETTERS as u8).contains(&b[0]) {
            return Ok(Token::letter((b[0] - b'A') as usize));
        }
        Err(Error::UnknownToken(sym.to_string()))
    }
}

impl fmt::Debug for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.symbol())
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.symbol())
    }
}

/// Space-joined rendering of a token sequence.
pub fn render(tokens: &[Token]) -> String {
    tokens
        .iter()
        .map(|t| t.symbol())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Parses a space-separated symbol string.
pub fn parse_tokens(text: &str) -> Result<Vec<Token>> {
    text.split_whitespace().map(Token::parse).collect()
}

/// The model's output alphabet: every fixed token plus numbers up to
/// `max_number`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    pub max_number: u32,
}

impl Vocab {
    pub fn new(max_number: u32) -> Self {
        Vocab { max_number }
    }

    pub fn len(&self) -> usize {
        NUM_BASE as usize + self.max_number as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, t: Token) -> bool {
        t.index() < self.len()
    }

    pub fn check(&self, tokens: &[Token]) -> Result<()> {
        match tokens.iter().find(|t| !self.contains(**t)) {
            Some(t) => Err(Error::TokenOutOfRange {
                id: t.0,
                size: self.len(),
            }),
            None => Ok(()),
        }
    }

    pub fn tokens(&self) -> impl Iterator<Item = Token> {
        (0..self.len() as u16).map(Token)
    }

    /// SHA-256 over the ordered symbol list; checkpoints record it so a model
    /// is never paired with a differently laid out alphabet.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for t in self.tokens() {
            h.update(t.symbol().as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn symbols_roundtrip_and_markers_are_distinct() {
        let v = Vocab::new(50);
        let syms: HashSet<String> = v.tokens().map(|t| t.symbol()).collect();
        assert_eq!(syms.len(), v.len());
        assert!(v.len() <= 256);
        for t in v.tokens() {
            assert_eq!(Token::parse(&t.symbol()).unwrap(), t);
        }
        assert_eq!(
            parse_tokens("48 / ( 19 - 11 )").unwrap(),
            vec![
                Token::number(48),
                Token::DIVIDE,
                Token::LPAREN,
                Token::number(19),
                Token::MINUS,
                Token::number(11),
                Token::RPAREN
            ]
        );
        assert!(Token::parse("Z").is_err());
    }

    #[test]
    fn hash_depends_on_number_range() {
        assert_eq!(Vocab::new(10).hash(), Vocab::new(10).hash());
        assert_ne!(Vocab::new(10).hash(), Vocab::new(11).hash());
        assert!(Vocab::new(9).check(&[Token::number(10)]).is_err());
    }
}
