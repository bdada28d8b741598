//! Canonical text form of representation expressions.
//!
//! `R` scalar, `P` pseudoscalar, `P[a:b]` determinant of the base block
//! `a..b`, `V` base, `+` direct sum, `*` tensor product, `X^k` the k-fold
//! direct sum. `^` binds tighter than `*`, which binds tighter than `+`.

use std::fmt;

use super::rep::{Rep, RepKind};
use crate::error::{Error, Result};

struct Parser<'a> {
    input: &'a str,
    chars: Vec<char>,
    pos: usize,
    base_dim: usize,
}

impl<'a> Parser<'a> {
    fn err(&self, reason: impl Into<String>) -> Error {
        Error::RepParse {
            input: self.input.to_string(),
            reason: format!("{} (at offset {})", reason.into(), self.pos),
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn number(&mut self) -> Result<usize> {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err("expected a number"));
        }
        let s: String = self.chars[start..self.pos].iter().collect();
        s.parse().map_err(|_| self.err("number out of range"))
    }

    fn sum(&mut self) -> Result<Rep> {
        let mut parts = vec![self.product()?];
        while self.eat('+') {
            parts.push(self.product()?);
        }
        Rep::sum(parts)
    }

    fn product(&mut self) -> Result<Rep> {
        let mut parts = vec![self.power()?];
        while self.eat('*') {
            parts.push(self.power()?);
        }
        Rep::tensor(parts)
    }

    fn power(&mut self) -> Result<Rep> {
        let atom = self.atom()?;
        if self.eat('^') {
            let k = self.number()?;
            if k == 0 {
                return Err(self.err("zero-fold sum"));
            }
            return atom.power(k);
        }
        Ok(atom)
    }

    fn atom(&mut self) -> Result<Rep> {
        match self.peek() {
            Some('R') => {
                self.pos += 1;
                Ok(Rep::scalar(self.base_dim))
            }
            Some('V') => {
                self.pos += 1;
                Ok(Rep::base(self.base_dim))
            }
            Some('P') => {
                self.pos += 1;
                if self.eat('[') {
                    let start = self.number()?;
                    if !self.eat(':') {
                        return Err(self.err("expected ':'"));
                    }
                    let end = self.number()?;
                    if !self.eat(']') {
                        return Err(self.err("expected ']'"));
                    }
                    if end <= start {
                        return Err(self.err("empty determinant block"));
                    }
                    Rep::block_pseudoscalar(self.base_dim, start, end - start)
                        .map_err(|e| self.err(e.to_string()))
                } else {
                    Ok(Rep::pseudoscalar(self.base_dim))
                }
            }
            Some('(') => {
                self.pos += 1;
                let inner = self.sum()?;
                if !self.eat(')') {
                    return Err(self.err("unbalanced parenthesis"));
                }
                Ok(inner)
            }
            Some(c) => Err(self.err(format!("unexpected '{c}'"))),
            None => Err(self.err("unexpected end of input")),
        }
    }
}

/// Parses the canonical text form for a group with the given base dimension.
pub fn parse_rep(text: &str, base_dim: usize) -> Result<Rep> {
    let chars: Vec<char> = text.chars().filter(|c| !c.is_whitespace()).collect();
    let mut p = Parser {
        input: text,
        chars,
        pos: 0,
        base_dim,
    };
    let rep = p.sum()?;
    if p.pos != p.chars.len() {
        return Err(p.err("trailing input"));
    }
    Ok(rep)
}

fn is_power(parts: &[Rep]) -> bool {
    parts.len() >= 2 && parts.iter().all(|p| p == &parts[0])
}

fn write_atomic(rep: &Rep, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match rep.kind() {
        RepKind::Sum(_) | RepKind::Tensor(_) => write!(f, "({rep})"),
        _ => write!(f, "{rep}"),
    }
}

impl fmt::Display for Rep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind() {
            RepKind::Base => write!(f, "V"),
            RepKind::Scalar => write!(f, "R"),
            RepKind::Pseudoscalar => write!(f, "P"),
            RepKind::BlockPseudoscalar { start, len } => write!(f, "P[{start}:{}]", start + len),
            RepKind::Sum(parts) if is_power(parts) => {
                write_atomic(&parts[0], f)?;
                write!(f, "^{}", parts.len())
            }
            RepKind::Sum(parts) => {
                for (i, p) in parts.iter().enumerate() {
                    if i > 0 {
                        write!(f, "+")?;
                    }
                    match p.kind() {
                        RepKind::Sum(inner) if !is_power(inner) => write!(f, "({p})")?,
                        _ => write!(f, "{p}")?,
                    }
                }
                Ok(())
            }
            RepKind::Tensor(parts) => {
                for (i, p) in parts.iter().enumerate() {
                    if i > 0 {
                        write!(f, "*")?;
                    }
                    match p.kind() {
                        RepKind::Tensor(_) => write!(f, "({p})")?,
                        RepKind::Sum(inner) if !is_power(inner) => write!(f, "({p})")?,
                        _ => write!(f, "{p}")?,
                    }
                }
                Ok(())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_catalog_style() {
        let r = parse_rep("R+P^5+R+P^4", 2).unwrap();
        assert_eq!(r.dim(), 11);
        assert_eq!(r.to_string(), "R+P^5+R+P^4");
        let r = parse_rep("(R + V)^5", 3).unwrap();
        assert_eq!(r.dim(), 20);
        assert_eq!(r.to_string(), "(R+V)^5");
        let r = parse_rep("V*V", 3).unwrap();
        assert_eq!(r.dim(), 9);
        let r = parse_rep("P[0:1]*V", 2).unwrap();
        assert_eq!(r.dim(), 2);
    }

    #[test]
    fn precedence() {
        let r = parse_rep("V*V^2", 2).unwrap();
        assert_eq!(r.dim(), 8);
        let r = parse_rep("R+V*V", 2).unwrap();
        assert_eq!(r.dim(), 5);
    }

    #[test]
    fn parse_errors() {
        for bad in ["", "R+", "(R", "X", "V^0", "P[1:1]", "P[0:5]", "R)"] {
            assert!(parse_rep(bad, 2).is_err(), "{bad}");
        }
    }

    fn arb_rep(base_dim: usize) -> impl Strategy<Value = Rep> {
        let leaf = prop_oneof![
            Just(Rep::scalar(base_dim)),
            Just(Rep::pseudoscalar(base_dim)),
            Just(Rep::base(base_dim)),
            Just(Rep::block_pseudoscalar(base_dim, 0, 1).unwrap()),
        ];
        leaf.prop_recursive(3, 16, 3, move |inner| {
            prop_oneof![
                prop::collection::vec(inner.clone(), 2..4).prop_map(|v| Rep::sum(v).unwrap()),
                prop::collection::vec(inner.clone(), 2..3).prop_map(|v| Rep::tensor(v).unwrap()),
                (inner, 2usize..4).prop_map(|(r, k)| r.power(k).unwrap()),
            ]
        })
    }

    fn expected_dim(rep: &Rep) -> usize {
        match rep.kind() {
            RepKind::Base => rep.base_dim(),
            RepKind::Sum(p) => p.iter().map(expected_dim).sum(),
            RepKind::Tensor(p) => p.iter().map(expected_dim).product(),
            _ => 1,
        }
    }

    proptest! {
        #[test]
        fn print_parse_round_trip(rep in arb_rep(2)) {
            let text = rep.to_string();
            let back = parse_rep(&text, 2).unwrap();
            prop_assert_eq!(back, rep);
        }

        #[test]
        fn cached_dims_match_tree(rep in arb_rep(3)) {
            prop_assert_eq!(rep.dim(), expected_dim(&rep));
        }
    }
}
