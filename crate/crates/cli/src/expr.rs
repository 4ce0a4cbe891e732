//! Arithmetic expressions for problem data.
//!
//! A small language over the variables `t`, `x`, `y`, the constant `pi`, the
//! functions `sin`, `cos`, `exp`, `sqrt` and `abs`, the binary operators
//! `+ - * / ^` and unary minus. Precedence from loosest to tightest is
//! `+ -`, then `* /`, then unary minus, then the right-associative `^`;
//! in particular `-2^2` is `-(2^2) = -4`. Parse errors carry the byte
//! offset of the offending token, evaluation errors quote the subexpression
//! that produced a non-finite value.

use std::fmt;

/// Variables an expression may reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    T,
    X,
    Y,
}

/// Built-in unary functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
    Abs,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Exp => v.exp(),
            Func::Sqrt => v.sqrt(),
            Func::Abs => v.abs(),
        }
    }
}

/// Binary operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

/// Parsed expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Neg(Box<Expr>),
    Bin(Op, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

/// Parse failure at a byte offset of the input.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "byte {}: {}", self.offset, self.message)
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

fn tokenize(src: &str) -> Result<Vec<(usize, Token)>, ParseError> {
    let bytes = src.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        match b {
            b' ' | b'\t' | b'\r' | b'\n' => i += 1,
            b'+' => {
                tokens.push((i, Token::Plus));
                i += 1;
            }
            b'-' => {
                tokens.push((i, Token::Minus));
                i += 1;
            }
            b'*' => {
                tokens.push((i, Token::Star));
                i += 1;
            }
            b'/' => {
                tokens.push((i, Token::Slash));
                i += 1;
            }
            b'^' => {
                tokens.push((i, Token::Caret));
                i += 1;
            }
            b'(' => {
                tokens.push((i, Token::LParen));
                i += 1;
            }
            b')' => {
                tokens.push((i, Token::RParen));
                i += 1;
            }
            b'0'..=b'9' | b'.' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    i += 1;
                    if i < bytes.len() && (bytes[i] == b'+' || bytes[i] == b'-') {
                        i += 1;
                    }
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                let text = &src[start..i];
                let value: f64 = text.parse().map_err(|_| ParseError {
                    offset: start,
                    message: format!("malformed number `{text}`"),
                })?;
                if !value.is_finite() {
                    return Err(ParseError {
                        offset: start,
                        message: format!("number `{text}` overflows"),
                    });
                }
                tokens.push((start, Token::Num(value)));
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                tokens.push((start, Token::Ident(src[start..i].to_string())));
            }
            _ => {
                return Err(ParseError {
                    offset: i,
                    message: format!("unexpected character `{}`", &src[i..].chars().next().unwrap()),
                })
            }
        }
    }
    Ok(tokens)
}

struct Parser<'a> {
    tokens: &'a [(usize, Token)],
    pos: usize,
    end: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.end, |(o, _)| *o)
    }

    fn bump(&mut self) -> Option<&Token> {
        let t = self.tokens.get(self.pos).map(|(_, t)| t);
        self.pos += 1;
        t
    }

    fn error(&self, message: impl Into<String>) -> ParseError {
        ParseError {
            offset: self.offset(),
            message: message.into(),
        }
    }

    fn parse_sum(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.parse_product()?;
        loop {
            let op = match self.peek() {
                Some(Token::Plus) => Op::Add,
                Some(Token::Minus) => Op::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.parse_product()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn parse_product(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.parse_unary()?;
        loop {
            let op = match self.peek() {
                Some(Token::Star) => Op::Mul,
                Some(Token::Slash) => Op::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.parse_unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn parse_unary(&mut self) -> Result<Expr, ParseError> {
        if let Some(Token::Minus) = self.peek() {
            self.pos += 1;
            let inner = self.parse_unary()?;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.parse_power()
    }

    fn parse_power(&mut self) -> Result<Expr, ParseError> {
        let base = self.parse_atom()?;
        if let Some(Token::Caret) = self.peek() {
            self.pos += 1;
            // Right-associative; the recursion through unary admits `2^-3`.
            let exponent = self.parse_unary()?;
            return Ok(Expr::Bin(Op::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn parse_atom(&mut self) -> Result<Expr, ParseError> {
        let offset = self.offset();
        match self.bump() {
            Some(Token::Num(v)) => Ok(Expr::Const(*v)),
            Some(Token::Ident(name)) => match name.as_str() {
                "t" => Ok(Expr::Var(Var::T)),
                "x" => Ok(Expr::Var(Var::X)),
                "y" => Ok(Expr::Var(Var::Y)),
                "pi" => Ok(Expr::Const(std::f64::consts::PI)),
                "sin" | "cos" | "exp" | "sqrt" | "abs" => {
                    let func = match name.as_str() {
                        "sin" => Func::Sin,
                        "cos" => Func::Cos,
                        "exp" => Func::Exp,
                        "sqrt" => Func::Sqrt,
                        _ => Func::Abs,
                    };
                    match self.bump() {
                        Some(Token::LParen) => {}
                        _ => {
                            self.pos -= 1;
                            return Err(self.error(format!(
                                "function `{}` needs a parenthesized argument",
                                func.name()
                            )));
                        }
                    }
                    let arg = self.parse_sum()?;
                    match self.bump() {
                        Some(Token::RParen) => Ok(Expr::Call(func, Box::new(arg))),
                        _ => {
                            self.pos -= 1;
                            Err(self.error("expected `)`"))
                        }
                    }
                }
                other => Err(ParseError {
                    offset,
                    message: format!("unknown identifier `{other}`"),
                }),
            },
            Some(Token::LParen) => {
                let inner = self.parse_sum()?;
                match self.bump() {
                    Some(Token::RParen) => Ok(inner),
                    _ => {
                        self.pos -= 1;
                        Err(self.error("expected `)`"))
                    }
                }
            }
            Some(_) => Err(ParseError {
                offset,
                message: "expected a number, variable or `(`".into(),
            }),
            None => Err(ParseError {
                offset,
                message: "unexpected end of expression".into(),
            }),
        }
    }
}

/// Parses `src` into an expression tree.
pub fn parse(src: &str) -> Result<Expr, ParseError> {
    let tokens = tokenize(src)?;
    let mut parser = Parser {
        tokens: &tokens,
        pos: 0,
        end: src.len(),
    };
    if parser.peek().is_none() {
        return Err(parser.error("empty expression"));
    }
    let expr = parser.parse_sum()?;
    if parser.peek().is_some() {
        return Err(parser.error("trailing input"));
    }
    Ok(expr)
}

impl Expr {
    /// Printing precedence: sums 1, products 2, unary minus 3, powers 4,
    /// atoms 5. Negative constants print with a leading minus and take the
    /// unary level so reparsing reproduces the tree shape.
    fn level(&self) -> u8 {
        match self {
            Expr::Const(c) if *c < 0.0 => 3,
            Expr::Const(_) | Expr::Var(_) | Expr::Call(..) => 5,
            Expr::Neg(_) => 3,
            Expr::Bin(Op::Pow, ..) => 4,
            Expr::Bin(Op::Mul | Op::Div, ..) => 2,
            Expr::Bin(Op::Add | Op::Sub, ..) => 1,
        }
    }

    /// Evaluates at the point `(t, x, y)`. Non-finite intermediate results
    /// are reported with the offending subexpression.
    pub fn eval(&self, t: f64, x: f64, y: f64) -> Result<f64, String> {
        let v = match self {
            Expr::Const(c) => *c,
            Expr::Var(Var::T) => t,
            Expr::Var(Var::X) => x,
            Expr::Var(Var::Y) => y,
            Expr::Neg(e) => -e.eval(t, x, y)?,
            Expr::Bin(op, l, r) => {
                let a = l.eval(t, x, y)?;
                let b = r.eval(t, x, y)?;
                match op {
                    Op::Add => a + b,
                    Op::Sub => a - b,
                    Op::Mul => a * b,
                    Op::Div => a / b,
                    Op::Pow => a.powf(b),
                }
            }
            Expr::Call(func, a) => func.apply(a.eval(t, x, y)?),
        };
        if !v.is_finite() {
            return Err(format!("`{self}` evaluated to {v}"));
        }
        Ok(v)
    }

    /// Whether the expression references the time variable.
    pub fn uses_time(&self) -> bool {
        match self {
            Expr::Const(_) => false,
            Expr::Var(v) => *v == Var::T,
            Expr::Neg(e) | Expr::Call(_, e) => e.uses_time(),
            Expr::Bin(_, l, r) => l.uses_time() || r.uses_time(),
        }
    }
}

impl fmt::Display for Expr {
    /// Canonical form: parentheses exactly where reparsing would otherwise
    /// change the tree, so parse . print is the identity on trees.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let child = |f: &mut fmt::Formatter<'_>, e: &Expr, wrap: bool| -> fmt::Result {
            if wrap {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        };
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(Var::T) => write!(f, "t"),
            Expr::Var(Var::X) => write!(f, "x"),
            Expr::Var(Var::Y) => write!(f, "y"),
            Expr::Neg(e) => {
                write!(f, "-")?;
                child(f, e, e.level() < 3)
            }
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
            Expr::Bin(op, l, r) => {
                let own = self.level();
                let (symbol, wrap_l, wrap_r) = match op {
                    // Right-associative: wrap the left child unless atomic.
                    Op::Pow => ("^", l.level() <= own, r.level() < own),
                    Op::Add => ("+", l.level() < own, r.level() <= own),
                    Op::Sub => ("-", l.level() < own, r.level() <= own),
                    Op::Mul => ("*", l.level() < own, r.level() <= own),
                    Op::Div => ("/", l.level() < own, r.level() <= own),
                };
                child(f, l, wrap_l)?;
                write!(f, "{symbol}")?;
                child(f, r, wrap_r)
            }
        }
    }
}
