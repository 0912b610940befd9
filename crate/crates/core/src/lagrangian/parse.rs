//! Recursive-descent parser for polynomial Lagrangian densities.
//!
//! Grammar (whitespace ignored):
//!
//! ```text
//! expr  := term (("+" | "-") term)*
//! term  := unary ("*" unary)*
//! unary := "-" unary | "+" unary | power
//! power := atom ("^" integer)?
//! atom  := number | identifier | "(" expr ")"
//! ```
//!
//! Identifiers `z`, `zt` and `zx` are the field, its time derivative and its
//! space derivative; any other identifier must be bound in the parameter map.

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};

/// Exponents of (z, zt, zx).
pub(crate) type Monomial = [u32; 3];

/// Sparse multivariate polynomial over (z, zt, zx).
pub(crate) type MultiPoly = BTreeMap<Monomial, f64>;

const MAX_EXPONENT: u32 = 32;

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Caret,
    LParen,
    RParen,
}

fn tokenize(text: &str) -> Result<Vec<(usize, Token)>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let tok = match c {
            '+' => Token::Plus,
            '-' => Token::Minus,
            '*' => Token::Star,
            '^' => Token::Caret,
            '(' => Token::LParen,
            ')' => Token::RParen,
            c if c.is_ascii_digit() || c == '.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let lit = &text[start..i];
                let value = lit.parse::<f64>().map_err(|_| Error::Syntax {
                    pos: start,
                    msg: format!("malformed number `{lit}`"),
                })?;
                out.push((start, Token::Num(value)));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((start, Token::Ident(text[start..i].to_string())));
                continue;
            }
            other => {
                return Err(Error::Syntax {
                    pos: start,
                    msg: format!("unexpected character `{other}`"),
                })
            }
        };
        out.push((start, tok));
        i += 1;
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<(usize, Token)>,
    idx: usize,
    end: usize,
    params: &'a HashMap<String, f64>,
}

fn constant(c: f64) -> MultiPoly {
    let mut p = MultiPoly::new();
    if c != 0.0 {
        p.insert([0, 0, 0], c);
    }
    p
}

fn add(mut a: MultiPoly, b: &MultiPoly, sign: f64) -> MultiPoly {
    for (m, c) in b {
        *a.entry(*m).or_insert(0.0) += sign * c;
    }
    a.retain(|_, c| *c != 0.0);
    a
}

fn mul(a: &MultiPoly, b: &MultiPoly) -> MultiPoly {
    let mut out = MultiPoly::new();
    for (ma, ca) in a {
        for (mb, cb) in b {
            let m = [ma[0] + mb[0], ma[1] + mb[1], ma[2] + mb[2]];
            *out.entry(m).or_insert(0.0) += ca * cb;
        }
    }
    out.retain(|_, c| *c != 0.0);
    out
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.idx).map(|(_, t)| t)
    }

    fn pos(&self) -> usize {
        self.tokens.get(self.idx).map(|(p, _)| *p).unwrap_or(self.end)
    }

    fn expr(&mut self) -> Result<MultiPoly> {
        let mut acc = self.term()?;
        loop {
            match self.peek() {
                Some(Token::Plus) => {
                    self.idx += 1;
                    let rhs = self.term()?;
                    acc = add(acc, &rhs, 1.0);
                }
                Some(Token::Minus) => {
                    self.idx += 1;
                    let rhs = self.term()?;
                    acc = add(acc, &rhs, -1.0);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<MultiPoly> {
        let mut acc = self.unary()?;
        while let Some(Token::Star) = self.peek() {
            self.idx += 1;
            let rhs = self.unary()?;
            acc = mul(&acc, &rhs);
        }
        Ok(acc)
    }

    fn unary(&mut self) -> Result<MultiPoly> {
        match self.peek() {
            Some(Token::Minus) => {
                self.idx += 1;
                let inner = self.unary()?;
                Ok(add(MultiPoly::new(), &inner, -1.0))
            }
            Some(Token::Plus) => {
                self.idx += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<MultiPoly> {
        let base = self.atom()?;
        if let Some(Token::Caret) = self.peek() {
            self.idx += 1;
            let pos = self.pos();
            let exp = match self.peek() {
                Some(Token::Num(v)) if v.fract() == 0.0 && *v >= 0.0 => *v,
                _ => {
                    return Err(Error::Syntax {
                        pos,
                        msg: "exponent must be a non-negative integer literal".into(),
                    })
                }
            };
            if exp > MAX_EXPONENT as f64 {
                return Err(Error::Syntax {
                    pos,
                    msg: format!("exponent exceeds {MAX_EXPONENT}"),
                });
            }
            self.idx += 1;
            let mut acc = constant(1.0);
            for _ in 0..exp as u32 {
                acc = mul(&acc, &base);
            }
            return Ok(acc);
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<MultiPoly> {
        let pos = self.pos();
        let tok = self.peek().cloned();
        match tok {
            Some(Token::Num(v)) => {
                self.idx += 1;
                Ok(constant(v))
            }
            Some(Token::Ident(name)) => {
                self.idx += 1;
                let mono = match name.as_str() {
                    "z" => Some([1, 0, 0]),
                    "zt" => Some([0, 1, 0]),
                    "zx" => Some([0, 0, 1]),
                    _ => None,
                };
                if let Some(m) = mono {
                    let mut p = MultiPoly::new();
                    p.insert(m, 1.0);
                    return Ok(p);
                }
                match self.params.get(&name) {
                    Some(v) => Ok(constant(*v)),
                    None => Err(Error::UnknownSymbol { pos, name }),
                }
            }
            Some(Token::LParen) => {
                self.idx += 1;
                let inner = self.expr()?;
                match self.peek() {
                    Some(Token::RParen) => {
                        self.idx += 1;
                        Ok(inner)
                    }
                    _ => Err(Error::Syntax {
                        pos: self.pos(),
                        msg: "expected `)`".into(),
                    }),
                }
            }
            Some(_) => Err(Error::Syntax {
                pos,
                msg: "expected a number, symbol or `(`".into(),
            }),
            None => Err(Error::Syntax {
                pos,
                msg: "unexpected end of input".into(),
            }),
        }
    }
}

/// Expands `text` into a polynomial in (z, zt, zx) with parameters substituted.
pub(crate) fn expand(text: &str, params: &HashMap<String, f64>) -> Result<MultiPoly> {
    let tokens = tokenize(text)?;
    if tokens.is_empty() {
        return Err(Error::Syntax {
            pos: 0,
            msg: "empty expression".into(),
        });
    }
    let mut parser = Parser {
        tokens,
        idx: 0,
        end: text.len(),
        params,
    };
    let poly = parser.expr()?;
    if parser.idx != parser.tokens.len() {
        return Err(Error::Syntax {
            pos: parser.pos(),
            msg: "unexpected trailing input".into(),
        });
    }
    Ok(poly)
}
