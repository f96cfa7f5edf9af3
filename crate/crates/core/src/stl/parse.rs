use std::fmt;

use thiserror::Error;

use super::{Formula, Interval, Predicate, SignalExpr, StlError};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{line}:{column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

/// A non-fatal diagnostic, e.g. a predicate whose signal is not provably
/// inside `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseWarning {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for ParseWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: warning: {}", self.line, self.column, self.message)
    }
}

#[derive(Debug, Clone)]
pub struct Parsed {
    pub formula: Formula,
    pub warnings: Vec<ParseWarning>,
}

pub fn parse_formula(text: &str) -> Result<Formula, ParseError> {
    let parsed = parse_formula_with_warnings(text)?;
    for w in &parsed.warnings {
        log::warn!("{w}");
    }
    Ok(parsed.formula)
}

pub fn parse_formula_with_warnings(text: &str) -> Result<Parsed, ParseError> {
    let tokens = lex(text)?;
    let mut p = Parser { tokens, pos: 0, warnings: Vec::new() };
    let formula = p.formula()?;
    let tok = p.peek();
    if tok.kind != Tok::Eof {
        return Err(p.error_at(p.pos, format!("unexpected {}", tok.kind)));
    }
    Ok(Parsed { formula, warnings: p.warnings })
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(f64),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Amp,
    Pipe,
    Bang,
    Le,
    Ge,
    Plus,
    Minus,
    Star,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Number(n) => write!(f, "number {n}"),
            Tok::LParen => write!(f, "`(`"),
            Tok::RParen => write!(f, "`)`"),
            Tok::LBracket => write!(f, "`[`"),
            Tok::RBracket => write!(f, "`]`"),
            Tok::Comma => write!(f, "`,`"),
            Tok::Amp => write!(f, "`&`"),
            Tok::Pipe => write!(f, "`|`"),
            Tok::Bang => write!(f, "`!`"),
            Tok::Le => write!(f, "`<=`"),
            Tok::Ge => write!(f, "`>=`"),
            Tok::Plus => write!(f, "`+`"),
            Tok::Minus => write!(f, "`-`"),
            Tok::Star => write!(f, "`*`"),
            Tok::Eof => write!(f, "end of input"),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: Tok,
    line: usize,
    column: usize,
}

const KEYWORDS: &[&str] = &["true", "false", "alw", "ev", "until", "norm", "clamp"];

fn lex(text: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        let (start_line, start_col) = (line, col);
        let err = |message: String| ParseError { line: start_line, column: start_col, message };
        let mut push = |kind: Tok| tokens.push(Token { kind, line: start_line, column: start_col });
        match c {
            '\n' => {
                i += 1;
                line += 1;
                col = 1;
                continue;
            }
            c if c.is_whitespace() => {}
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
                continue;
            }
            '(' => push(Tok::LParen),
            ')' => push(Tok::RParen),
            '[' => push(Tok::LBracket),
            ']' => push(Tok::RBracket),
            ',' => push(Tok::Comma),
            '&' => push(Tok::Amp),
            '|' => push(Tok::Pipe),
            '!' => push(Tok::Bang),
            '+' => push(Tok::Plus),
            '-' => push(Tok::Minus),
            '*' => push(Tok::Star),
            '<' | '>' => {
                if chars.get(i + 1) != Some(&'=') {
                    return Err(err(format!("expected `{c}=`")));
                }
                push(if c == '<' { Tok::Le } else { Tok::Ge });
                i += 2;
                col += 2;
                continue;
            }
            c if c.is_ascii_digit() || c == '.' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        i = j;
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let s: String = chars[start..i].iter().collect();
                let v: f64 = s.parse().map_err(|_| err(format!("malformed number `{s}`")))?;
                push(Tok::Number(v));
                col += i - start;
                continue;
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len()
                    && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '.')
                {
                    i += 1;
                }
                let s: String = chars[start..i].iter().collect();
                push(Tok::Ident(s));
                col += i - start;
                continue;
            }
            other => return Err(err(format!("unexpected character `{other}`"))),
        }
        i += 1;
        col += 1;
    }
    tokens.push(Token { kind: Tok::Eof, line, column: col });
    Ok(tokens)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    warnings: Vec<ParseWarning>,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn peek_at(&self, offset: usize) -> &Tok {
        let i = (self.pos + offset).min(self.tokens.len() - 1);
        &self.tokens[i].kind
    }

    fn bump(&mut self) -> Tok {
        let t = self.tokens[self.pos].kind.clone();
        if t != Tok::Eof {
            self.pos += 1;
        }
        t
    }

    fn error_at(&self, pos: usize, message: String) -> ParseError {
        let t = &self.tokens[pos.min(self.tokens.len() - 1)];
        ParseError { line: t.line, column: t.column, message }
    }

    fn semantic(&self, pos: usize, e: StlError) -> ParseError {
        self.error_at(pos, e.to_string())
    }

    fn expect(&mut self, want: Tok) -> Result<(), ParseError> {
        let got = self.peek().kind.clone();
        if got == want {
            self.bump();
            Ok(())
        } else {
            Err(self.error_at(self.pos, format!("expected {want}, found {got}")))
        }
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(&self.peek().kind, Tok::Ident(s) if s == kw)
    }

    // formula := disjunction [ "until" interval disjunction ]
    fn formula(&mut self) -> Result<Formula, ParseError> {
        let lhs = self.disjunction()?;
        if self.is_keyword("until") {
            self.bump();
            let interval = self.interval()?;
            let rhs = self.disjunction()?;
            return Ok(Formula::until(interval, lhs, rhs));
        }
        Ok(lhs)
    }

    fn disjunction(&mut self) -> Result<Formula, ParseError> {
        let mut items = vec![self.conjunction()?];
        while self.peek().kind == Tok::Pipe {
            self.bump();
            items.push(self.conjunction()?);
        }
        Ok(if items.len() == 1 { items.pop().unwrap() } else { Formula::Or(items) })
    }

    fn conjunction(&mut self) -> Result<Formula, ParseError> {
        let mut items = vec![self.unary()?];
        while self.peek().kind == Tok::Amp {
            self.bump();
            items.push(self.unary()?);
        }
        Ok(if items.len() == 1 { items.pop().unwrap() } else { Formula::And(items) })
    }

    fn unary(&mut self) -> Result<Formula, ParseError> {
        if self.peek().kind == Tok::Bang {
            self.bump();
            return Ok(Formula::not(self.unary()?));
        }
        if self.is_keyword("alw") || self.is_keyword("ev") {
            let always = self.is_keyword("alw");
            self.bump();
            let interval = self.interval()?;
            let inner = self.unary()?;
            return Ok(if always {
                Formula::always(interval, inner)
            } else {
                Formula::eventually(interval, inner)
            });
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Formula, ParseError> {
        if self.is_keyword("true") {
            self.bump();
            return Ok(Formula::True);
        }
        if self.is_keyword("false") {
            self.bump();
            return Ok(Formula::not(Formula::True));
        }
        if self.peek().kind == Tok::LParen {
            // either a parenthesised formula or a predicate whose signal
            // expression starts with a parenthesis
            let save = (self.pos, self.warnings.len());
            self.bump();
            let attempt = self.formula().and_then(|f| self.expect(Tok::RParen).map(|_| f));
            let followed_by_comparison = matches!(self.peek().kind, Tok::Le | Tok::Ge);
            let formula_err = match attempt {
                Ok(f) if !followed_by_comparison => return Ok(f),
                Ok(_) => None,
                Err(e) => Some(e),
            };
            self.pos = save.0;
            self.warnings.truncate(save.1);
            return self.predicate().map_err(|e| match formula_err {
                // report whichever failure got further into the input
                Some(fe) if (fe.line, fe.column) > (e.line, e.column) => fe,
                _ => e,
            });
        }
        self.predicate()
    }

    fn predicate(&mut self) -> Result<Formula, ParseError> {
        let start = self.pos;
        let expr = self.sexpr()?;
        let at_least = match self.peek().kind {
            Tok::Le => false,
            Tok::Ge => true,
            ref other => {
                return Err(self.error_at(self.pos, format!("expected `<=` or `>=`, found {other}")))
            }
        };
        self.bump();
        let threshold_pos = self.pos;
        let threshold = self.signed_number()?;
        let pred = if at_least {
            Predicate::at_least(expr, threshold)
        } else {
            Predicate::new(expr, threshold)
        }
        .map_err(|e| self.semantic(threshold_pos, e))?;
        if !pred.is_normalized() {
            let t = &self.tokens[start];
            self.warnings.push(ParseWarning {
                line: t.line,
                column: t.column,
                message: format!(
                    "signal `{}` is not provably within [-1, 1]; wrap it in clamp(.., lo, hi)",
                    pred.expr()
                ),
            });
        }
        Ok(Formula::Predicate(pred))
    }

    fn interval(&mut self) -> Result<Interval, ParseError> {
        let start = self.pos;
        self.expect(Tok::LBracket)?;
        let lo = self.signed_number()?;
        self.expect(Tok::Comma)?;
        let hi = self.signed_number()?;
        self.expect(Tok::RBracket)?;
        Interval::new(lo, hi).map_err(|e| self.semantic(start, e))
    }

    fn signed_number(&mut self) -> Result<f64, ParseError> {
        let negative = if self.peek().kind == Tok::Minus {
            self.bump();
            true
        } else {
            false
        };
        match self.bump() {
            Tok::Number(v) => Ok(if negative { -v } else { v }),
            other => Err(self.error_at(self.pos.saturating_sub(1), format!("expected a number, found {other}"))),
        }
    }

    fn sexpr(&mut self) -> Result<SignalExpr, ParseError> {
        let mut acc = self.sterm()?;
        loop {
            match self.peek().kind {
                Tok::Plus => {
                    self.bump();
                    acc = SignalExpr::Sum(Box::new(acc), Box::new(self.sterm()?));
                }
                Tok::Minus => {
                    self.bump();
                    acc = SignalExpr::Difference(Box::new(acc), Box::new(self.sterm()?));
                }
                _ => return Ok(acc),
            }
        }
    }

    // sterm := [-]number "*" sfactor | sfactor
    fn sterm(&mut self) -> Result<SignalExpr, ParseError> {
        let scaled = matches!(
            (self.peek_at(0), self.peek_at(1), self.peek_at(2)),
            (Tok::Number(_), Tok::Star, _) | (Tok::Minus, Tok::Number(_), Tok::Star)
        );
        if scaled {
            let c = self.signed_number()?;
            self.expect(Tok::Star)?;
            return Ok(SignalExpr::Scale(c, Box::new(self.sfactor()?)));
        }
        self.sfactor()
    }

    fn sfactor(&mut self) -> Result<SignalExpr, ParseError> {
        let pos = self.pos;
        match self.bump() {
            Tok::Minus => {
                if let Tok::Number(v) = self.peek().kind {
                    self.bump();
                    return Ok(SignalExpr::Const(-v));
                }
                Ok(SignalExpr::Negate(Box::new(self.sfactor()?)))
            }
            Tok::Number(v) => Ok(SignalExpr::Const(v)),
            Tok::LParen => {
                let e = self.sexpr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Tok::Ident(name) if name == "norm" => {
                self.expect(Tok::LParen)?;
                let mut args = vec![self.sexpr()?];
                while self.peek().kind == Tok::Comma {
                    self.bump();
                    args.push(self.sexpr()?);
                }
                self.expect(Tok::RParen)?;
                Ok(SignalExpr::EuclideanNorm(args))
            }
            Tok::Ident(name) if name == "clamp" => {
                self.expect(Tok::LParen)?;
                let arg = self.sexpr()?;
                self.expect(Tok::Comma)?;
                let lower = self.signed_number()?;
                self.expect(Tok::Comma)?;
                let upper = self.signed_number()?;
                self.expect(Tok::RParen)?;
                SignalExpr::clamp_scale(arg, lower, upper).map_err(|e| self.semantic(pos, e))
            }
            Tok::Ident(name) if KEYWORDS.contains(&name.as_str()) => {
                Err(self.error_at(pos, format!("keyword `{name}` cannot be used as a signal")))
            }
            Tok::Ident(name) => Ok(SignalExpr::Channel(name)),
            other => Err(self.error_at(pos, format!("expected a signal expression, found {other}"))),
        }
    }
}
