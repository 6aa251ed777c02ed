use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use super::BenchError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }

    /// Left and right binding powers.
    fn binding(self) -> (u8, u8) {
        match self {
            BinOp::Add | BinOp::Sub => (10, 11),
            BinOp::Mul | BinOp::Div => (20, 21),
            BinOp::Pow => (41, 40),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sqrt,
    Log10,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sqrt => "sqrt",
            Func::Log10 => "log10",
        }
    }

    fn lookup(name: &str) -> Option<Self> {
        match name {
            "sqrt" => Some(Func::Sqrt),
            "log10" => Some(Func::Log10),
            _ => None,
        }
    }
}

const PREFIX_NEG: u8 = 30;

/// Parsed target expression over named metrics.
#[derive(Clone, Debug, PartialEq)]
pub enum TargetExpr {
    /// Non-negative literal; negation is always [`TargetExpr::Neg`].
    Num(f64),
    Var(String),
    Neg(Box<TargetExpr>),
    Bin(BinOp, Box<TargetExpr>, Box<TargetExpr>),
    Call(Func, Box<TargetExpr>),
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(BinOp),
    LParen,
    RParen,
    End,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn syntax(offset: usize, msg: impl Into<String>) -> BenchError {
        BenchError::Syntax { offset, msg: msg.into() }
    }

    /// Next token and its starting byte offset.
    fn next(&mut self) -> Result<(Tok, usize), BenchError> {
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        let Some(&c) = bytes.get(start) else { return Ok((Tok::End, start)) };
        let tok = match c {
            b'+' => Tok::Op(BinOp::Add),
            b'-' => Tok::Op(BinOp::Sub),
            b'*' => Tok::Op(BinOp::Mul),
            b'/' => Tok::Op(BinOp::Div),
            b'^' => Tok::Op(BinOp::Pow),
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b'0'..=b'9' | b'.' => {
                let mut end = start;
                while end < bytes.len() && (bytes[end].is_ascii_digit() || bytes[end] == b'.') {
                    end += 1;
                }
                if end < bytes.len() && (bytes[end] == b'e' || bytes[end] == b'E') {
                    let mut e = end + 1;
                    if e < bytes.len() && (bytes[e] == b'+' || bytes[e] == b'-') {
                        e += 1;
                    }
                    if e < bytes.len() && bytes[e].is_ascii_digit() {
                        while e < bytes.len() && bytes[e].is_ascii_digit() {
                            e += 1;
                        }
                        end = e;
                    }
                }
                let text = &self.src[start..end];
                let v: f64 = text.parse().map_err(|_| Self::syntax(start, format!("bad number {text:?}")))?;
                self.pos = end;
                return Ok((Tok::Num(v), start));
            }
            b'a'..=b'z' | b'_' => {
                let mut end = start;
                while end < bytes.len() && matches!(bytes[end], b'a'..=b'z' | b'0'..=b'9' | b'_') {
                    end += 1;
                }
                self.pos = end;
                return Ok((Tok::Ident(self.src[start..end].to_string()), start));
            }
            _ => {
                let ch = self.src[start..].chars().next().unwrap_or('?');
                return Err(Self::syntax(start, format!("unexpected character {ch:?}")));
            }
        };
        self.pos += 1;
        Ok((tok, start))
    }
}

struct Parser<'a> {
    lexer: Lexer<'a>,
    tok: Tok,
    at: usize,
}

impl<'a> Parser<'a> {
    fn advance(&mut self) -> Result<(), BenchError> {
        (self.tok, self.at) = self.lexer.next()?;
        Ok(())
    }

    fn expr(&mut self, min_bp: u8) -> Result<TargetExpr, BenchError> {
        let mut lhs = self.prefix()?;
        while let Tok::Op(op) = self.tok {
            let (lbp, rbp) = op.binding();
            if lbp < min_bp {
                break;
            }
            self.advance()?;
            let rhs = self.expr(rbp)?;
            lhs = TargetExpr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn prefix(&mut self) -> Result<TargetExpr, BenchError> {
        let at = self.at;
        match std::mem::replace(&mut self.tok, Tok::End) {
            Tok::Num(v) => {
                self.advance()?;
                Ok(TargetExpr::Num(v))
            }
            Tok::Op(BinOp::Sub) => {
                self.advance()?;
                Ok(TargetExpr::Neg(Box::new(self.expr(PREFIX_NEG)?)))
            }
            Tok::LParen => {
                self.advance()?;
                let inner = self.expr(0)?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                self.advance()?;
                if self.tok != Tok::LParen {
                    return Ok(TargetExpr::Var(name));
                }
                let func = Func::lookup(&name).ok_or(BenchError::UnknownFunction { name, offset: at })?;
                self.advance()?;
                let arg = self.expr(0)?;
                self.expect_rparen()?;
                Ok(TargetExpr::Call(func, Box::new(arg)))
            }
            Tok::End => Err(Lexer::syntax(at, "unexpected end of input")),
            other => Err(Lexer::syntax(at, format!("unexpected {}", describe(&other)))),
        }
    }

    fn expect_rparen(&mut self) -> Result<(), BenchError> {
        if self.tok != Tok::RParen {
            return Err(Lexer::syntax(self.at, format!("expected ')', found {}", describe(&self.tok))));
        }
        self.advance()
    }
}

fn describe(tok: &Tok) -> String {
    match tok {
        Tok::Num(v) => format!("number {v}"),
        Tok::Ident(s) => format!("identifier {s:?}"),
        Tok::Op(op) => format!("'{}'", op.symbol()),
        Tok::LParen => "'('".into(),
        Tok::RParen => "')'".into(),
        Tok::End => "end of input".into(),
    }
}

/// Parses a target expression; errors carry the byte offset of the offending token.
pub fn parse_target(text: &str) -> Result<TargetExpr, BenchError> {
    let mut lexer = Lexer { src: text, pos: 0 };
    let (tok, at) = lexer.next()?;
    let mut p = Parser { lexer, tok, at };
    let e = p.expr(0)?;
    if p.tok != Tok::End {
        return Err(Lexer::syntax(p.at, format!("unexpected {}", describe(&p.tok))));
    }
    Ok(e)
}

impl FromStr for TargetExpr {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, BenchError> {
        parse_target(s)
    }
}

impl TargetExpr {
    /// Distinct identifiers in first-use order.
    pub fn identifiers(&self) -> Vec<&str> {
        fn walk<'a>(e: &'a TargetExpr, out: &mut Vec<&'a str>) {
            match e {
                TargetExpr::Num(_) => {}
                TargetExpr::Var(v) => {
                    if !out.contains(&v.as_str()) {
                        out.push(v);
                    }
                }
                TargetExpr::Neg(x) | TargetExpr::Call(_, x) => walk(x, out),
                TargetExpr::Bin(_, a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out
    }

    pub fn eval(&self, metrics: &BTreeMap<String, f64>) -> Result<f64, BenchError> {
        let v = match self {
            TargetExpr::Num(v) => *v,
            TargetExpr::Var(name) => *metrics.get(name).ok_or_else(|| BenchError::Unbound(name.clone()))?,
            TargetExpr::Neg(x) => -x.eval(metrics)?,
            TargetExpr::Call(f, x) => {
                let a = x.eval(metrics)?;
                match f {
                    Func::Sqrt if a < 0.0 => return Err(BenchError::Domain(format!("sqrt of negative value {a}"))),
                    Func::Sqrt => a.sqrt(),
                    Func::Log10 if a <= 0.0 => return Err(BenchError::Domain(format!("log10 of non-positive value {a}"))),
                    Func::Log10 => a.log10(),
                }
            }
            TargetExpr::Bin(op, l, r) => {
                let (a, b) = (l.eval(metrics)?, r.eval(metrics)?);
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div if b == 0.0 => return Err(BenchError::Domain("division by zero".into())),
                    BinOp::Div => a / b,
                    BinOp::Pow if b.fract() == 0.0 => a.powf(b),
                    BinOp::Pow if a <= 0.0 => {
                        return Err(BenchError::Domain(format!("{a} raised to non-integer power {b}")))
                    }
                    BinOp::Pow => (b * a.ln()).exp(),
                }
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(BenchError::Domain(format!("non-finite result in {self}")))
        }
    }

    fn is_atom(&self) -> bool {
        matches!(self, TargetExpr::Num(_) | TargetExpr::Var(_) | TargetExpr::Call(..))
    }
}

/// Sub-expressions other than atoms are parenthesized, so printing then parsing is lossless.
impl fmt::Display for TargetExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let wrap = |e: &TargetExpr, f: &mut fmt::Formatter<'_>| {
            if e.is_atom() {
                write!(f, "{e}")
            } else {
                write!(f, "({e})")
            }
        };
        match self {
            TargetExpr::Num(v) => write!(f, "{v:?}"),
            TargetExpr::Var(v) => f.write_str(v),
            TargetExpr::Neg(x) => {
                f.write_str("-")?;
                wrap(x, f)
            }
            TargetExpr::Call(func, x) => write!(f, "{}({x})", func.name()),
            TargetExpr::Bin(op, a, b) => {
                wrap(a, f)?;
                write!(f, " {} ", op.symbol())?;
                wrap(b, f)
            }
        }
    }
}
