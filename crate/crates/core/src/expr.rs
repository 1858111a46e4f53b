//! Arithmetic expressions in one variable `x`.
//!
//! Grammar (whitespace ignored):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := ('-' | '+') unary | power
//! power   := primary ('^' unary)?          right associative, binds tighter than unary minus
//! primary := number | 'x' | func '(' expr (',' expr)* ')' | '(' expr ')'
//! func    := sqrt | exp | log | abs        one argument
//!          | min | max                     two arguments
//! ```
//!
//! `log` is the natural logarithm. Numbers use `.` as decimal separator and
//! may carry an exponent (`2.5e-3`).

use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sqrt,
    Exp,
    Log,
    Abs,
    Min,
    Max,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sqrt" => Func::Sqrt,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "abs" => Func::Abs,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sqrt => "sqrt",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Abs => "abs",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    X,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

impl Expr {
    pub fn parse(input: &str) -> Result<Expr> {
        let tokens = tokenize(input)?;
        let mut p = Parser {
            tokens: &tokens,
            pos: 0,
            end: input.len(),
        };
        let e = p.expr()?;
        if let Some(t) = p.peek() {
            return Err(Error::syntax(t.pos, format!("unexpected {}", t.kind)));
        }
        Ok(e)
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Expr::Num(c) => *c,
            Expr::X => x,
            Expr::Neg(a) => -a.eval(x),
            Expr::Add(a, b) => a.eval(x) + b.eval(x),
            Expr::Sub(a, b) => a.eval(x) - b.eval(x),
            Expr::Mul(a, b) => a.eval(x) * b.eval(x),
            Expr::Div(a, b) => a.eval(x) / b.eval(x),
            Expr::Pow(a, b) => libm::pow(a.eval(x), b.eval(x)),
            Expr::Call(f, args) => match f {
                Func::Sqrt => libm::sqrt(args[0].eval(x)),
                Func::Exp => libm::exp(args[0].eval(x)),
                Func::Log => libm::log(args[0].eval(x)),
                Func::Abs => args[0].eval(x).abs(),
                Func::Min => libm::fmin(args[0].eval(x), args[1].eval(x)),
                Func::Max => libm::fmax(args[0].eval(x), args[1].eval(x)),
            },
        }
    }

    /// If the expression is structurally a monomial `c·x^p`, returns `(c, p)`.
    ///
    /// Only products, quotients, negation, `sqrt` and powers with constant
    /// exponents of constants and `x` are recognised; sums never are.
    pub fn as_monomial(&self) -> Option<(f64, f64)> {
        match self {
            Expr::Num(c) => Some((*c, 0.0)),
            Expr::X => Some((1.0, 1.0)),
            Expr::Neg(a) => a.as_monomial().map(|(c, p)| (-c, p)),
            Expr::Mul(a, b) => {
                let (ca, pa) = a.as_monomial()?;
                let (cb, pb) = b.as_monomial()?;
                Some((ca * cb, pa + pb))
            }
            Expr::Div(a, b) => {
                let (ca, pa) = a.as_monomial()?;
                let (cb, pb) = b.as_monomial()?;
                (cb != 0.0).then(|| (ca / cb, pa - pb))
            }
            Expr::Pow(a, b) => {
                let (cb, pb) = b.as_monomial()?;
                if pb != 0.0 {
                    return None;
                }
                let (ca, pa) = a.as_monomial()?;
                (ca > 0.0).then(|| (libm::pow(ca, cb), pa * cb))
            }
            Expr::Call(Func::Sqrt, args) => {
                let (c, p) = args[0].as_monomial()?;
                (c > 0.0).then(|| (libm::sqrt(c), 0.5 * p))
            }
            _ => None,
        }
    }
}

// Fully parenthesised so that printing and re-parsing reproduces the tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(c) if *c < 0.0 => write!(f, "(-{})", -c),
            Expr::Num(c) => write!(f, "{c}"),
            Expr::X => f.write_str("x"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, b) => write!(f, "({a} ^ {b})"),
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum TokenKind {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenKind::Num(v) => write!(f, "number {v}"),
            TokenKind::Ident(s) => write!(f, "identifier '{s}'"),
            TokenKind::Op(c) => write!(f, "operator '{c}'"),
            TokenKind::LParen => f.write_str("'('"),
            TokenKind::RParen => f.write_str("')'"),
            TokenKind::Comma => f.write_str("','"),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokenKind,
    pos: usize,
}

fn tokenize(input: &str) -> Result<Vec<Token>> {
    let bytes = input.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => i += 1,
            b'0'..=b'9' | b'.' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                // exponent only when a digit follows, so "2e" is not swallowed
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
                let text = &input[start..i];
                let v: f64 = text
                    .parse()
                    .map_err(|_| Error::syntax(start, format!("malformed number '{text}'")))?;
                out.push(Token { kind: TokenKind::Num(v), pos: start });
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push(Token {
                    kind: TokenKind::Ident(input[start..i].to_string()),
                    pos: start,
                });
            }
            b'+' | b'-' | b'*' | b'/' | b'^' => {
                out.push(Token { kind: TokenKind::Op(c as char), pos: i });
                i += 1;
            }
            b'(' => {
                out.push(Token { kind: TokenKind::LParen, pos: i });
                i += 1;
            }
            b')' => {
                out.push(Token { kind: TokenKind::RParen, pos: i });
                i += 1;
            }
            b',' => {
                out.push(Token { kind: TokenKind::Comma, pos: i });
                i += 1;
            }
            _ => {
                let ch = input[i..].chars().next().unwrap_or('?');
                return Err(Error::syntax(i, format!("unexpected character '{ch}'")));
            }
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: &'a [Token],
    pos: usize,
    end: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<&Token> {
        let t = self.tokens.get(self.pos);
        self.pos += 1;
        t
    }

    fn here(&self) -> usize {
        self.peek().map_or(self.end, |t| t.pos)
    }

    fn eat_op(&mut self, ops: &[char]) -> Option<char> {
        match self.peek() {
            Some(Token { kind: TokenKind::Op(c), .. }) if ops.contains(c) => {
                let c = *c;
                self.pos += 1;
                Some(c)
            }
            _ => None,
        }
    }

    fn expect(&mut self, kind: TokenKind, what: &str) -> Result<()> {
        let at = self.here();
        match self.next() {
            Some(t) if t.kind == kind => Ok(()),
            Some(t) => Err(Error::syntax(at, format!("expected {what}, found {}", t.kind))),
            None => Err(Error::syntax(at, format!("expected {what}, found end of input"))),
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Some(op) = self.eat_op(&['+', '-']) {
            let rhs = self.term()?;
            lhs = if op == '+' {
                Expr::Add(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Sub(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.eat_op(&['*', '/']) {
            let rhs = self.unary()?;
            lhs = if op == '*' {
                Expr::Mul(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Div(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        match self.eat_op(&['-', '+']) {
            Some('-') => Ok(Expr::Neg(Box::new(self.unary()?))),
            Some(_) => self.unary(),
            None => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.primary()?;
        if self.eat_op(&['^']).is_some() {
            let exp = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr> {
        let at = self.here();
        let Some(tok) = self.next() else {
            return Err(Error::syntax(at, "unexpected end of input"));
        };
        match tok.kind.clone() {
            TokenKind::Num(v) => Ok(Expr::Num(v)),
            TokenKind::Ident(name) if name == "x" => Ok(Expr::X),
            TokenKind::Ident(name) => {
                let func = Func::from_name(&name)
                    .ok_or_else(|| Error::syntax(at, format!("unknown identifier '{name}'")))?;
                self.expect(TokenKind::LParen, "'('")?;
                let mut args = alloc::vec![self.expr()?];
                while matches!(self.peek(), Some(Token { kind: TokenKind::Comma, .. })) {
                    self.pos += 1;
                    args.push(self.expr()?);
                }
                self.expect(TokenKind::RParen, "')'")?;
                if args.len() != func.arity() {
                    return Err(Error::syntax(
                        at,
                        format!(
                            "{} takes {} argument(s), got {}",
                            func.name(),
                            func.arity(),
                            args.len()
                        ),
                    ));
                }
                Ok(Expr::Call(func, args))
            }
            TokenKind::LParen => {
                let e = self.expr()?;
                self.expect(TokenKind::RParen, "')'")?;
                Ok(e)
            }
            other => Err(Error::syntax(at, format!("unexpected {other}"))),
        }
    }
}
