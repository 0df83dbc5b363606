use super::ast::{Operand, Power, PulseProgram, Quantity, RepeatMode, Step, SweepValues, Unit};
use super::validate::validate;
use super::PulseError;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Qty(Quantity),
    Ident(String),
    Arrow,
    LParen,
    RParen,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    Comma,
    Eq,
    Times,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number {v}"),
            Tok::Qty(q) => format!("quantity {q}"),
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Arrow => "`->`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Eq => "`=`".into(),
            Tok::Times => "`x`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    column: usize,
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> PulseError {
    PulseError::Syntax { line, column, message: message.into() }
}

fn lex(text: &str) -> Result<Vec<Spanned>, PulseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let advance = |i: &mut usize, col: &mut usize, n: usize| {
        *i += n;
        *col += n;
    };
    while i < chars.len() {
        let c = chars[i];
        let (l0, c0) = (line, col);
        let push = |out: &mut Vec<Spanned>, tok| out.push(Spanned { tok, line: l0, column: c0 });
        match c {
            '\n' => {
                i += 1;
                line += 1;
                col = 1;
            }
            c if c.is_whitespace() => advance(&mut i, &mut col, 1),
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            '-' if chars.get(i + 1) == Some(&'>') => {
                push(&mut out, Tok::Arrow);
                advance(&mut i, &mut col, 2);
            }
            '→' => {
                push(&mut out, Tok::Arrow);
                advance(&mut i, &mut col, 1);
            }
            '×' => {
                push(&mut out, Tok::Times);
                advance(&mut i, &mut col, 1);
            }
            '(' | ')' | '[' | ']' | '{' | '}' | ',' | '=' => {
                let tok = match c {
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    '[' => Tok::LBracket,
                    ']' => Tok::RBracket,
                    '{' => Tok::LBrace,
                    '}' => Tok::RBrace,
                    ',' => Tok::Comma,
                    _ => Tok::Eq,
                };
                push(&mut out, tok);
                advance(&mut i, &mut col, 1);
            }
            c if c.is_ascii_digit() || c == '.' || c == '-' || c == '+' => {
                let start = i;
                let mut j = i;
                if c == '-' || c == '+' {
                    j += 1;
                }
                let digits_from = j;
                while j < chars.len() && (chars[j].is_ascii_digit() || chars[j] == '.') {
                    j += 1;
                }
                if j == digits_from {
                    return Err(syntax(l0, c0, format!("unexpected character `{c}`")));
                }
                if j < chars.len() && (chars[j] == 'e' || chars[j] == 'E') {
                    let mut k = j + 1;
                    if k < chars.len() && (chars[k] == '-' || chars[k] == '+') {
                        k += 1;
                    }
                    if k < chars.len() && chars[k].is_ascii_digit() {
                        while k < chars.len() && chars[k].is_ascii_digit() {
                            k += 1;
                        }
                        j = k;
                    }
                }
                let literal: String = chars[start..j].iter().collect();
                let value: f64 =
                    literal.parse().map_err(|_| syntax(l0, c0, format!("malformed number `{literal}`")))?;
                if !value.is_finite() {
                    return Err(syntax(l0, c0, format!("number `{literal}` is not finite")));
                }
                let ustart = j;
                while j < chars.len() && (chars[j].is_alphabetic()) {
                    j += 1;
                }
                let tok = if j > ustart {
                    let u: String = chars[ustart..j].iter().collect();
                    let unit = Unit::from_symbol(&u)
                        .ok_or_else(|| syntax(l0, c0 + (ustart - start), format!("unknown unit `{u}`")))?;
                    Tok::Qty(Quantity::new(value, unit))
                } else {
                    Tok::Num(value)
                };
                push(&mut out, tok);
                advance(&mut i, &mut col, j - start);
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                let mut j = i;
                while j < chars.len() && (chars[j].is_alphanumeric() || chars[j] == '_') {
                    j += 1;
                }
                let word: String = chars[start..j].iter().collect();
                push(&mut out, Tok::Ident(word));
                advance(&mut i, &mut col, j - start);
            }
            other => return Err(syntax(l0, c0, format!("unexpected character `{other}`"))),
        }
    }
    out.push(Spanned { tok: Tok::Eof, line, column: col });
    Ok(out)
}

const KEYWORDS: [&str; 7] = ["pr", "h", "wait", "mw", "sweep", "range", "x"];

pub(crate) fn is_keyword(s: &str) -> bool {
    KEYWORDS.contains(&s.to_ascii_lowercase().as_str())
}

fn is_step_start(t: &Tok) -> bool {
    match t {
        Tok::LBracket | Tok::LBrace => true,
        Tok::Ident(s) => matches!(s.to_ascii_lowercase().as_str(), "pr" | "h" | "wait" | "mw" | "sweep"),
        _ => false,
    }
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Spanned {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> Spanned {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error_here(&self, message: impl Into<String>) -> PulseError {
        let t = self.peek();
        syntax(t.line, t.column, message)
    }

    fn expect(&mut self, want: Tok) -> Result<(), PulseError> {
        if self.peek().tok == want {
            self.next();
            Ok(())
        } else {
            Err(self.error_here(format!("expected {}, found {}", want.describe(), self.peek().tok.describe())))
        }
    }

    fn sequence(&mut self, closer: Option<Tok>) -> Result<Vec<Step>, PulseError> {
        let mut body = Vec::new();
        let at_end = |p: &Self| match &closer {
            Some(c) => p.peek().tok == *c,
            None => p.peek().tok == Tok::Eof,
        };
        if at_end(self) {
            return Ok(body);
        }
        loop {
            body.push(self.step()?);
            if self.peek().tok == Tok::Arrow {
                self.next();
                continue;
            }
            if at_end(self) {
                return Ok(body);
            }
            let found = self.peek().tok.clone();
            return Err(if is_step_start(&found) {
                self.error_here(format!("expected `->` before {}", found.describe()))
            } else {
                let want = closer.as_ref().map_or("end of input".to_string(), Tok::describe);
                self.error_here(format!("expected `->` or {want}, found {}", found.describe()))
            });
        }
    }

    fn operand(&mut self, what: &str) -> Result<Operand, PulseError> {
        let t = self.next();
        match t.tok {
            Tok::Qty(q) => Ok(Operand::Lit(q)),
            Tok::Ident(s) if !is_keyword(&s) => Ok(Operand::Sym(s)),
            Tok::Num(v) => Err(syntax(t.line, t.column, format!("{what} `{v}` needs a unit suffix"))),
            other => Err(syntax(t.line, t.column, format!("expected {what}, found {}", other.describe()))),
        }
    }

    fn count(&mut self) -> Result<u32, PulseError> {
        let t = self.next();
        let parse_int = |v: f64, line, column| -> Result<u32, PulseError> {
            if v.fract() == 0.0 && v >= 1.0 && v <= u32::MAX as f64 {
                Ok(v as u32)
            } else {
                Err(syntax(line, column, format!("repeat count must be a positive integer, got {v}")))
            }
        };
        match t.tok {
            Tok::Times => {}
            Tok::Ident(ref s) if s == "x" || s == "X" => {}
            Tok::Ident(ref s) if (s.starts_with('x') || s.starts_with('X')) && s.len() > 1 => {
                let digits = &s[1..];
                return match digits.parse::<u32>() {
                    Ok(n) if n >= 1 && digits.chars().all(|c| c.is_ascii_digit()) => Ok(n),
                    _ => Err(syntax(t.line, t.column, format!("malformed repeat count `{s}`"))),
                };
            }
            other => return Err(syntax(t.line, t.column, format!("expected `x <count>`, found {}", other.describe()))),
        }
        let n = self.next();
        match n.tok {
            Tok::Num(v) => parse_int(v, n.line, n.column),
            other => Err(syntax(n.line, n.column, format!("expected repeat count, found {}", other.describe()))),
        }
    }

    fn sweep_values(&mut self) -> Result<SweepValues, PulseError> {
        let t = self.next();
        match t.tok {
            Tok::Ident(ref s) if s.eq_ignore_ascii_case("range") => {
                self.expect(Tok::LParen)?;
                let mut qs = Vec::new();
                for i in 0..3 {
                    if i > 0 {
                        self.expect(Tok::Comma)?;
                    }
                    let q = self.next();
                    match q.tok {
                        Tok::Qty(v) => qs.push(v),
                        other => {
                            return Err(syntax(
                                q.line,
                                q.column,
                                format!("expected quantity in range, found {}", other.describe()),
                            ))
                        }
                    }
                }
                self.expect(Tok::RParen)?;
                Ok(SweepValues::Range { start: qs[0], stop: qs[1], step: qs[2] })
            }
            Tok::LBracket => {
                let mut items: Vec<(Tok, usize, usize)> = Vec::new();
                if self.peek().tok != Tok::RBracket {
                    loop {
                        let v = self.next();
                        match v.tok {
                            Tok::Qty(_) | Tok::Num(_) => items.push((v.tok, v.line, v.column)),
                            other => {
                                return Err(syntax(
                                    v.line,
                                    v.column,
                                    format!("expected sweep value, found {}", other.describe()),
                                ))
                            }
                        }
                        if self.peek().tok == Tok::Comma {
                            self.next();
                        } else {
                            break;
                        }
                    }
                }
                self.expect(Tok::RBracket)?;
                let shared = match &self.peek().tok {
                    Tok::Ident(u) => match Unit::from_symbol(u) {
                        Some(unit) => {
                            self.next();
                            Some(unit)
                        }
                        None => None,
                    },
                    _ => None,
                };
                let mut list = Vec::with_capacity(items.len());
                for (tok, line, column) in items {
                    list.push(match (tok, shared) {
                        (Tok::Qty(q), _) => q,
                        (Tok::Num(v), Some(unit)) => Quantity::new(v, unit),
                        (Tok::Num(v), None) => {
                            return Err(syntax(line, column, format!("sweep value `{v}` needs a unit suffix")))
                        }
                        _ => unreachable!("only numbers and quantities are collected"),
                    });
                }
                if list.is_empty() {
                    return Err(syntax(t.line, t.column, "sweep list is empty"));
                }
                Ok(SweepValues::List(list))
            }
            other => Err(syntax(t.line, t.column, format!("expected `[` or `range(`, found {}", other.describe()))),
        }
    }

    fn step(&mut self) -> Result<Step, PulseError> {
        let t = self.next();
        match t.tok {
            Tok::LBracket | Tok::LBrace => {
                let (closer, mode) = if t.tok == Tok::LBracket {
                    (Tok::RBracket, RepeatMode::Accumulate)
                } else {
                    (Tok::RBrace, RepeatMode::Separate)
                };
                let body = self.sequence(Some(closer.clone()))?;
                self.expect(closer)?;
                let count = self.count()?;
                Ok(Step::Repeat { body, count, mode })
            }
            Tok::Ident(word) => match word.to_ascii_lowercase().as_str() {
                "pr" => Ok(Step::Pr(self.operand("duration")?)),
                "wait" => Ok(Step::Wait(self.operand("duration")?)),
                "mw" => {
                    let frequency = self.operand("frequency")?;
                    let duration = self.operand("duration")?;
                    Ok(Step::Mw { frequency, duration })
                }
                "h" => {
                    self.expect(Tok::LParen)?;
                    let p = self.next();
                    let power = match p.tok {
                        Tok::Num(v) => Power::Scale(v),
                        Tok::Ident(ref s)
                            if s.len() > 2
                                && s[..2].eq_ignore_ascii_case("od")
                                && s[2..].chars().all(|c| c.is_ascii_digit()) =>
                        {
                            Power::Od(
                                s[2..]
                                    .parse()
                                    .map_err(|_| syntax(p.line, p.column, format!("attenuator `{s}` out of range")))?,
                            )
                        }
                        other => {
                            return Err(syntax(
                                p.line,
                                p.column,
                                format!("expected `ODnn` or a power scale, found {}", other.describe()),
                            ))
                        }
                    };
                    self.expect(Tok::RParen)?;
                    let duration = self.operand("duration")?;
                    Ok(Step::Heat { power, duration })
                }
                "sweep" => {
                    let s = self.next();
                    let symbol = match s.tok {
                        Tok::Ident(name) if !is_keyword(&name) => name,
                        other => {
                            return Err(syntax(
                                s.line,
                                s.column,
                                format!("expected sweep symbol, found {}", other.describe()),
                            ))
                        }
                    };
                    self.expect(Tok::Eq)?;
                    let values = self.sweep_values()?;
                    self.expect(Tok::LParen)?;
                    let body = self.sequence(Some(Tok::RParen))?;
                    self.expect(Tok::RParen)?;
                    Ok(Step::Sweep { symbol, values, body })
                }
                _ => Err(syntax(t.line, t.column, format!("unknown step `{word}`"))),
            },
            other => Err(syntax(t.line, t.column, format!("expected a step, found {}", other.describe()))),
        }
    }
}

/// Parses and validates a program.
pub fn parse(text: &str) -> Result<PulseProgram, PulseError> {
    let mut p = Parser { toks: lex(text)?, pos: 0 };
    let body = p.sequence(None)?;
    let program = PulseProgram { body };
    validate(&program)?;
    Ok(program)
}
