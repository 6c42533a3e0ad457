//! Text form of polynomials.
//!
//! Grammar (whitespace ignored, juxtaposition means multiplication):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*')? unary)*
//! unary  := ('+' | '-') unary | power
//! power  := atom ('^' integer)?
//! atom   := number | variable | '(' expr ')'
//! ```
//!
//! Variables are `x1..xn`; with at most three variables `x`, `y`, `z` alias
//! `x1`, `x2`, `x3`. Parenthesized sub-expressions are expanded, so the
//! result is always the canonical sparse form.

use std::collections::BTreeMap;

use super::{PolyError, Polynomial, MAX_EXPONENT};

type Sparse = BTreeMap<Vec<u32>, f64>;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Caret,
    LParen,
    RParen,
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, PolyError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        let start = i;
        match c {
            ' ' | '\t' | '\n' | '\r' => {
                i += 1;
                continue;
            }
            '+' => out.push((Tok::Plus, start)),
            '-' => out.push((Tok::Minus, start)),
            '*' => out.push((Tok::Star, start)),
            '^' => out.push((Tok::Caret, start)),
            '(' => out.push((Tok::LParen, start)),
            ')' => out.push((Tok::RParen, start)),
            _ if c.is_ascii_digit() || c == '.' => {
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
                let v: f64 = lit.parse().map_err(|_| PolyError::Syntax {
                    position: start,
                    message: format!("malformed number `{lit}`"),
                })?;
                out.push((Tok::Num(v), start));
                continue;
            }
            _ if c.is_ascii_alphabetic() || c == '_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((Tok::Ident(text[start..i].to_string()), start));
                continue;
            }
            _ => {
                return Err(PolyError::Syntax {
                    position: start,
                    message: format!("unexpected character `{c}`"),
                })
            }
        }
        i += 1;
    }
    Ok(out)
}

struct Parser<'a> {
    toks: &'a [(Tok, usize)],
    pos: usize,
    end: usize,
    n_vars: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map(|(_, p)| *p).unwrap_or(self.end)
    }

    fn syntax(&self, message: impl Into<String>) -> PolyError {
        PolyError::Syntax {
            position: self.offset(),
            message: message.into(),
        }
    }

    fn expr(&mut self) -> Result<Sparse, PolyError> {
        let mut acc = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    add_into(&mut acc, &rhs, 1.0);
                }
                Some(Tok::Minus) => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    add_into(&mut acc, &rhs, -1.0);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<Sparse, PolyError> {
        let mut acc = self.unary()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.pos += 1;
                    let rhs = self.unary()?;
                    acc = mul(&acc, &rhs);
                }
                Some(Tok::Num(_)) | Some(Tok::Ident(_)) | Some(Tok::LParen) => {
                    let rhs = self.unary()?;
                    acc = mul(&acc, &rhs);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn unary(&mut self) -> Result<Sparse, PolyError> {
        match self.peek() {
            Some(Tok::Minus) => {
                self.pos += 1;
                let mut v = self.unary()?;
                v.values_mut().for_each(|c| *c = -*c);
                Ok(v)
            }
            Some(Tok::Plus) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Sparse, PolyError> {
        let base = self.atom()?;
        if self.peek() != Some(&Tok::Caret) {
            return Ok(base);
        }
        self.pos += 1;
        let at = self.offset();
        match self.peek() {
            Some(Tok::Num(v)) => {
                let v = *v;
                if v < 0.0 || v.fract() != 0.0 || v > MAX_EXPONENT as f64 {
                    return Err(PolyError::Syntax {
                        position: at,
                        message: format!("exponent must be an integer in 0..={MAX_EXPONENT}"),
                    });
                }
                self.pos += 1;
                Ok(pow(&base, v as u32, self.n_vars))
            }
            _ => Err(self.syntax("expected an integer exponent after `^`")),
        }
    }

    fn atom(&mut self) -> Result<Sparse, PolyError> {
        let at = self.offset();
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(constant(v, self.n_vars))
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                let index = resolve_variable(&name, self.n_vars, at)?;
                let mut e = vec![0u32; self.n_vars];
                e[index] = 1;
                Ok(Sparse::from([(e, 1.0)]))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let inner = self.expr()?;
                if self.peek() != Some(&Tok::RParen) {
                    return Err(self.syntax("expected `)`"));
                }
                self.pos += 1;
                Ok(inner)
            }
            Some(_) => Err(self.syntax("expected a number, variable or `(`")),
            None => Err(self.syntax("unexpected end of input")),
        }
    }
}

fn resolve_variable(name: &str, n_vars: usize, position: usize) -> Result<usize, PolyError> {
    let alias = match name {
        "x" => Some(0),
        "y" => Some(1),
        "z" => Some(2),
        _ => None,
    };
    if let Some(index) = alias {
        if n_vars > 3 {
            return Err(PolyError::UnknownVariable {
                name: name.to_string(),
                position,
            });
        }
        if index >= n_vars {
            return Err(PolyError::VariableOutOfRange {
                index: index + 1,
                n_vars,
                position,
            });
        }
        return Ok(index);
    }
    if let Some(digits) = name.strip_prefix('x') {
        if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
            let index: usize = digits.parse().map_err(|_| PolyError::UnknownVariable {
                name: name.to_string(),
                position,
            })?;
            if index == 0 || index > n_vars {
                return Err(PolyError::VariableOutOfRange {
                    index,
                    n_vars,
                    position,
                });
            }
            return Ok(index - 1);
        }
    }
    Err(PolyError::UnknownVariable {
        name: name.to_string(),
        position,
    })
}

fn constant(v: f64, n_vars: usize) -> Sparse {
    Sparse::from([(vec![0u32; n_vars], v)])
}

fn add_into(acc: &mut Sparse, rhs: &Sparse, sign: f64) {
    for (e, c) in rhs {
        *acc.entry(e.clone()).or_insert(0.0) += sign * c;
    }
}

fn mul(a: &Sparse, b: &Sparse) -> Sparse {
    let mut out = Sparse::new();
    for (ea, ca) in a {
        for (eb, cb) in b {
            let e: Vec<u32> = ea.iter().zip(eb).map(|(x, y)| x + y).collect();
            *out.entry(e).or_insert(0.0) += ca * cb;
        }
    }
    out
}

fn pow(base: &Sparse, k: u32, n_vars: usize) -> Sparse {
    let mut out = constant(1.0, n_vars);
    for _ in 0..k {
        out = mul(&out, base);
    }
    out
}

/// Parses `text` as a polynomial in `n_vars` variables.
pub fn parse(text: &str, n_vars: usize) -> Result<Polynomial, PolyError> {
    if n_vars < 2 {
        return Err(PolyError::TooFewVariables(n_vars));
    }
    let toks = lex(text)?;
    if toks.is_empty() {
        return Err(PolyError::Syntax {
            position: 0,
            message: "empty expression".into(),
        });
    }
    let mut p = Parser {
        toks: &toks,
        pos: 0,
        end: text.len(),
        n_vars,
    };
    let sparse = p.expr()?;
    if p.pos != toks.len() {
        return Err(p.syntax("unexpected trailing input"));
    }
    Polynomial::from_terms(n_vars, sparse)
}
