//! Text format for reaction networks.
//!
//! Statements are separated by `;` or newlines, `#` starts a comment that
//! runs to end of line. A reaction statement is
//!
//! ```text
//! <complex> -> <complex>, k=<rate>
//! <complex> <-> <complex>, k=<forward>, k=<backward>
//! ```
//!
//! A complex is `0` (the empty complex) or `+`-separated terms
//! `[coeff] Species` with an optional positive integer coefficient
//! (default 1), e.g. `2 A1 + A2` or `2A`. Species are indexed by first
//! appearance unless a `species A, B, C;` header fixes the order up front.

use super::{Complex, Network, NetworkError, Reaction};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
#[error("syntax error at line {line}, column {col}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(u64),
    Float(f64),
    Plus,
    Comma,
    Equals,
    Arrow,   // ->
    BiArrow, // <->
    Sep,     // ; or newline
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

fn err(line: usize, col: usize, message: impl Into<String>) -> ParseError {
    ParseError {
        line,
        col,
        message: message.into(),
    }
}

fn lex(text: &str) -> Result<Vec<Spanned>, ParseError> {
    let mut toks = Vec::new();
    let mut line = 1usize;
    let mut col = 1usize;
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        let (tline, tcol) = (line, col);
        let mut bump = |chars: &mut std::iter::Peekable<std::str::Chars>| {
            let c = chars.next().unwrap();
            if c == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
            c
        };
        match c {
            '#' => {
                while let Some(&c) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    bump(&mut chars);
                }
            }
            '\n' | ';' => {
                bump(&mut chars);
                toks.push(Spanned {
                    tok: Tok::Sep,
                    line: tline,
                    col: tcol,
                });
            }
            c if c.is_whitespace() => {
                bump(&mut chars);
            }
            '+' => {
                bump(&mut chars);
                toks.push(Spanned {
                    tok: Tok::Plus,
                    line: tline,
                    col: tcol,
                });
            }
            ',' => {
                bump(&mut chars);
                toks.push(Spanned {
                    tok: Tok::Comma,
                    line: tline,
                    col: tcol,
                });
            }
            '=' => {
                bump(&mut chars);
                toks.push(Spanned {
                    tok: Tok::Equals,
                    line: tline,
                    col: tcol,
                });
            }
            '<' => {
                bump(&mut chars);
                if chars.peek() == Some(&'-') {
                    bump(&mut chars);
                    if chars.peek() == Some(&'>') {
                        bump(&mut chars);
                        toks.push(Spanned {
                            tok: Tok::BiArrow,
                            line: tline,
                            col: tcol,
                        });
                        continue;
                    }
                }
                return Err(err(tline, tcol, "expected `<->`"));
            }
            '-' => {
                bump(&mut chars);
                if chars.peek() == Some(&'>') {
                    bump(&mut chars);
                    toks.push(Spanned {
                        tok: Tok::Arrow,
                        line: tline,
                        col: tcol,
                    });
                    continue;
                }
                // Negative number (only legal as a rate value; the rate
                // validator rejects it with a better message than a lex
                // error would give).
                let mut buf = String::from("-");
                let mut saw_digit = false;
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_digit() || c == '.' || c == 'e' || c == 'E' {
                        buf.push(bump(&mut chars));
                        saw_digit = true;
                    } else if (c == '+' || c == '-')
                        && (buf.ends_with('e') || buf.ends_with('E'))
                    {
                        buf.push(bump(&mut chars));
                    } else {
                        break;
                    }
                }
                if !saw_digit {
                    return Err(err(tline, tcol, "expected `->` or a number after `-`"));
                }
                let v: f64 = buf
                    .parse()
                    .map_err(|_| err(tline, tcol, format!("invalid number `{buf}`")))?;
                toks.push(Spanned {
                    tok: Tok::Float(v),
                    line: tline,
                    col: tcol,
                });
            }
            c if c.is_ascii_digit() => {
                let mut buf = String::new();
                let mut is_int = true;
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_digit() {
                        buf.push(bump(&mut chars));
                    } else if c == '.' || c == 'e' || c == 'E' {
                        is_int = false;
                        buf.push(bump(&mut chars));
                        if let Some(&s) = chars.peek() {
                            if s == '+' || s == '-' {
                                buf.push(bump(&mut chars));
                            }
                        }
                    } else {
                        break;
                    }
                }
                if is_int {
                    let v: u64 = buf
                        .parse()
                        .map_err(|_| err(tline, tcol, format!("invalid integer `{buf}`")))?;
                    toks.push(Spanned {
                        tok: Tok::Int(v),
                        line: tline,
                        col: tcol,
                    });
                } else {
                    let v: f64 = buf
                        .parse()
                        .map_err(|_| err(tline, tcol, format!("invalid number `{buf}`")))?;
                    toks.push(Spanned {
                        tok: Tok::Float(v),
                        line: tline,
                        col: tcol,
                    });
                }
            }
            c if c.is_alphabetic() || c == '_' => {
                let mut buf = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_alphanumeric() || c == '_' {
                        buf.push(bump(&mut chars));
                    } else {
                        break;
                    }
                }
                toks.push(Spanned {
                    tok: Tok::Ident(buf),
                    line: tline,
                    col: tcol,
                });
            }
            other => {
                return Err(err(tline, tcol, format!("unexpected character `{other}`")));
            }
        }
    }
    Ok(toks)
}

/// Complex as written in the source: (coefficient, species name) terms, or
/// empty for `0`.
type RawComplex = Vec<(u32, String)>;

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Spanned> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Spanned> {
        let t = self.toks.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn here(&self) -> (usize, usize) {
        self.toks
            .get(self.pos.min(self.toks.len().saturating_sub(1)))
            .map(|s| (s.line, s.col))
            .unwrap_or((1, 1))
    }

    fn skip_seps(&mut self) {
        while matches!(self.peek().map(|s| &s.tok), Some(Tok::Sep)) {
            self.pos += 1;
        }
    }

    fn expect_sep_or_end(&mut self) -> Result<(), ParseError> {
        match self.peek() {
            None => Ok(()),
            Some(s) if s.tok == Tok::Sep => {
                self.pos += 1;
                Ok(())
            }
            Some(s) => Err(err(
                s.line,
                s.col,
                "expected end of statement (`;` or newline)",
            )),
        }
    }

    fn parse_complex(&mut self) -> Result<RawComplex, ParseError> {
        let (line, col) = self.here();
        match self.peek().map(|s| s.tok.clone()) {
            Some(Tok::Int(0)) => {
                self.pos += 1;
                Ok(Vec::new())
            }
            Some(Tok::Int(_)) | Some(Tok::Ident(_)) => {
                let mut terms = Vec::new();
                loop {
                    let coeff = match self.peek().map(|s| s.tok.clone()) {
                        Some(Tok::Int(c)) => {
                            self.pos += 1;
                            let (l, c2) = self.here();
                            if c == 0 {
                                return Err(err(l, c2, "zero coefficient in complex term"));
                            }
                            u32::try_from(c)
                                .map_err(|_| err(l, c2, "coefficient too large"))?
                        }
                        _ => 1,
                    };
                    match self.next() {
                        Some(Spanned {
                            tok: Tok::Ident(name),
                            ..
                        }) => terms.push((coeff, name)),
                        Some(s) => {
                            return Err(err(s.line, s.col, "expected species name"));
                        }
                        None => {
                            let (l, c) = self.here();
                            return Err(err(l, c, "expected species name"));
                        }
                    }
                    if matches!(self.peek().map(|s| &s.tok), Some(Tok::Plus)) {
                        self.pos += 1;
                    } else {
                        break;
                    }
                }
                Ok(terms)
            }
            _ => Err(err(line, col, "expected a complex (`0` or species terms)")),
        }
    }

    fn parse_rate(&mut self) -> Result<f64, ParseError> {
        // `, k=<number>`
        match self.next() {
            Some(Spanned { tok: Tok::Comma, .. }) => {}
            Some(s) => return Err(err(s.line, s.col, "expected `,` before rate constant")),
            None => {
                let (l, c) = self.here();
                return Err(err(l, c, "expected `, k=<rate>`"));
            }
        }
        match self.next() {
            Some(Spanned {
                tok: Tok::Ident(k), ..
            }) if k == "k" => {}
            Some(s) => return Err(err(s.line, s.col, "expected `k`")),
            None => {
                let (l, c) = self.here();
                return Err(err(l, c, "expected `k`"));
            }
        }
        match self.next() {
            Some(Spanned {
                tok: Tok::Equals, ..
            }) => {}
            Some(s) => return Err(err(s.line, s.col, "expected `=` after `k`")),
            None => {
                let (l, c) = self.here();
                return Err(err(l, c, "expected `=` after `k`"));
            }
        }
        match self.next() {
            Some(Spanned {
                tok: Tok::Float(v), ..
            }) => Ok(v),
            Some(Spanned { tok: Tok::Int(v), .. }) => Ok(v as f64),
            Some(s) => Err(err(s.line, s.col, "expected a rate value")),
            None => {
                let (l, c) = self.here();
                Err(err(l, c, "expected a rate value"))
            }
        }
    }
}

/// Parse the text format into a validated [`Network`].
pub fn parse_network(text: &str) -> Result<Network, NetworkError> {
    let toks = lex(text).map_err(NetworkError::Parse)?;
    let mut p = Parser { toks, pos: 0 };

    let mut species: Vec<String> = Vec::new();
    let mut species_fixed = false;
    // Raw reactions as (reactant terms, product terms, rate)
    let mut raw: Vec<(RawComplex, RawComplex, f64)> = Vec::new();

    p.skip_seps();
    // Optional species header.
    if let Some(Spanned {
        tok: Tok::Ident(w), ..
    }) = p.peek()
    {
        if w == "species" {
            p.pos += 1;
            loop {
                match p.next() {
                    Some(Spanned {
                        tok: Tok::Ident(name),
                        line,
                        col,
                    }) => {
                        if species.contains(&name) {
                            return Err(NetworkError::Parse(err(
                                line,
                                col,
                                format!("duplicate species `{name}` in header"),
                            )));
                        }
                        species.push(name);
                    }
                    Some(s) => {
                        return Err(NetworkError::Parse(err(
                            s.line,
                            s.col,
                            "expected species name in header",
                        )))
                    }
                    None => {
                        let (l, c) = p.here();
                        return Err(NetworkError::Parse(err(l, c, "unterminated species header")));
                    }
                }
                match p.peek().map(|s| s.tok.clone()) {
                    Some(Tok::Comma) => {
                        p.pos += 1;
                    }
                    _ => break,
                }
            }
            p.expect_sep_or_end().map_err(NetworkError::Parse)?;
            species_fixed = true;
        }
    }

    loop {
        p.skip_seps();
        if p.peek().is_none() {
            break;
        }
        let lhs = p.parse_complex().map_err(NetworkError::Parse)?;
        let bidirectional = match p.next() {
            Some(Spanned { tok: Tok::Arrow, .. }) => false,
            Some(Spanned {
                tok: Tok::BiArrow, ..
            }) => true,
            Some(s) => {
                return Err(NetworkError::Parse(err(
                    s.line,
                    s.col,
                    "expected `->` or `<->`",
                )))
            }
            None => {
                let (l, c) = p.here();
                return Err(NetworkError::Parse(err(l, c, "expected `->` or `<->`")));
            }
        };
        let rhs = p.parse_complex().map_err(NetworkError::Parse)?;
        let k_fwd = p.parse_rate().map_err(NetworkError::Parse)?;
        if bidirectional {
            let k_bwd = p.parse_rate().map_err(NetworkError::Parse)?;
            raw.push((lhs.clone(), rhs.clone(), k_fwd));
            raw.push((rhs, lhs, k_bwd));
        } else {
            raw.push((lhs, rhs, k_fwd));
        }
        p.expect_sep_or_end().map_err(NetworkError::Parse)?;
    }

    // Resolve species indices (first appearance order unless fixed).
    let mut resolve = |name: &str| -> Result<usize, NetworkError> {
        if let Some(i) = species.iter().position(|s| s == name) {
            return Ok(i);
        }
        if species_fixed {
            return Err(NetworkError::Parse(err(
                1,
                1,
                format!("species `{name}` not declared in header"),
            )));
        }
        species.push(name.to_string());
        Ok(species.len() - 1)
    };
    type IndexedSide = Vec<(usize, u32)>;
    let mut indexed: Vec<(IndexedSide, IndexedSide, f64)> = Vec::new();
    for (lhs, rhs, rate) in &raw {
        let mut side = |terms: &RawComplex| -> Result<IndexedSide, NetworkError> {
            terms
                .iter()
                .map(|(c, name)| Ok((resolve(name)?, *c)))
                .collect()
        };
        let l = side(lhs)?;
        let r = side(rhs)?;
        indexed.push((l, r, *rate));
    }

    let dim = species.len().max(1);
    if species.is_empty() {
        // Only possible when no reaction mentions a species, i.e. every
        // complex was `0`; such statements are self-loops and rejected below,
        // but build a placeholder dimension so Complex construction works.
        species.push("A".to_string());
    }
    let build = |terms: &[(usize, u32)]| -> Complex {
        let mut v = vec![0u32; dim];
        for &(i, c) in terms {
            v[i] += c;
        }
        Complex(v)
    };
    let reactions: Vec<Reaction> = indexed
        .iter()
        .map(|(l, r, rate)| Reaction {
            reactant: build(l),
            product: build(r),
            rate: *rate,
        })
        .collect();

    Network::new(species, reactions)
}
