//! Arithmetic expressions over the coordinates of a point.
//!
//! Grammar (usual precedence, `^` right-associative):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?
//! atom   := number | ident | ident '(' expr ')' | '(' expr ')'
//! ```
//!
//! Coordinates are named `x<n>_<k>` (1-based group and coordinate), `x<n>`
//! when `s = 1`, and plain `x` when `r = s = 1`. Constants `pi` and `e` and
//! the functions `sin cos tan exp ln log sqrt abs` are available.

use crate::error::{Error, Result};
use crate::geometry::IndexShape;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Ln,
    Sqrt,
    Abs,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Var(usize),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

/// A parsed expression bound to an [`IndexShape`].
#[derive(Debug, Clone, PartialEq)]
pub struct Expression {
    root: Node,
    source: String,
}

impl Expression {
    pub fn parse(source: &str, shape: IndexShape) -> Result<Self> {
        let tokens = tokenize(source)?;
        let mut parser = Parser {
            tokens,
            pos: 0,
            shape,
        };
        let root = parser.expr()?;
        if parser.pos != parser.tokens.len() {
            return Err(Error::Expression(format!(
                "unexpected trailing input in '{source}'"
            )));
        }
        Ok(Self {
            root,
            source: source.to_string(),
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        eval_node(&self.root, x)
    }
}

fn eval_node(node: &Node, x: &[f64]) -> f64 {
    match node {
        Node::Num(v) => *v,
        Node::Var(l) => x[*l],
        Node::Neg(a) => -eval_node(a, x),
        Node::Bin(op, a, b) => {
            let a = eval_node(a, x);
            let b = eval_node(b, x);
            match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div => a / b,
                BinOp::Pow => {
                    if b.fract() == 0.0 && b.abs() <= i32::MAX as f64 {
                        a.powi(b as i32)
                    } else {
                        a.powf(b)
                    }
                }
            }
        }
        Node::Call(f, a) => {
            let a = eval_node(a, x);
            match f {
                Func::Sin => a.sin(),
                Func::Cos => a.cos(),
                Func::Tan => a.tan(),
                Func::Exp => a.exp(),
                Func::Ln => a.ln(),
                Func::Sqrt => a.sqrt(),
                Func::Abs => a.abs(),
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            // exponent part
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
            let text: String = chars[start..i].iter().collect();
            let v: f64 = text
                .parse()
                .map_err(|_| Error::Expression(format!("bad number '{text}'")))?;
            out.push(Token::Num(v));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token::Ident(chars[start..i].iter().collect()));
        } else if "+-*/^".contains(c) {
            out.push(Token::Op(c));
            i += 1;
        } else if c == '(' {
            out.push(Token::LParen);
            i += 1;
        } else if c == ')' {
            out.push(Token::RParen);
            i += 1;
        } else {
            return Err(Error::Expression(format!("unexpected character '{c}'")));
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    shape: IndexShape,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        while let Some(Token::Op(c @ ('+' | '-'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.term()?;
            let op = if c == '+' { BinOp::Add } else { BinOp::Sub };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        while let Some(Token::Op(c @ ('*' | '/'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.unary()?;
            let op = if c == '*' { BinOp::Mul } else { BinOp::Div };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node> {
        if let Some(Token::Op('-')) = self.peek() {
            self.pos += 1;
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        if let Some(Token::Op('+')) = self.peek() {
            self.pos += 1;
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if let Some(Token::Op('^')) = self.peek() {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Node::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        match self.next() {
            Some(Token::Num(v)) => Ok(Node::Num(v)),
            Some(Token::LParen) => {
                let inner = self.expr()?;
                match self.next() {
                    Some(Token::RParen) => Ok(inner),
                    _ => Err(Error::Expression("missing ')'".into())),
                }
            }
            Some(Token::Ident(name)) => {
                if let Some(Token::LParen) = self.peek() {
                    let func = match name.as_str() {
                        "sin" => Func::Sin,
                        "cos" => Func::Cos,
                        "tan" => Func::Tan,
                        "exp" => Func::Exp,
                        "ln" | "log" => Func::Ln,
                        "sqrt" => Func::Sqrt,
                        "abs" => Func::Abs,
                        _ => return Err(Error::Expression(format!("unknown function '{name}'"))),
                    };
                    self.pos += 1;
                    let arg = self.expr()?;
                    match self.next() {
                        Some(Token::RParen) => Ok(Node::Call(func, Box::new(arg))),
                        _ => Err(Error::Expression("missing ')' after function argument".into())),
                    }
                } else {
                    self.identifier(&name)
                }
            }
            Some(t) => Err(Error::Expression(format!("unexpected token {t:?}"))),
            None => Err(Error::Expression("unexpected end of expression".into())),
        }
    }

    fn identifier(&self, name: &str) -> Result<Node> {
        match name {
            "pi" => return Ok(Node::Num(std::f64::consts::PI)),
            "e" => return Ok(Node::Num(std::f64::consts::E)),
            _ => {}
        }
        let (r, s) = (self.shape.r(), self.shape.s());
        let bad = || Error::Expression(format!("unknown variable '{name}' for shape {}", self.shape));
        let rest = name.strip_prefix('x').ok_or_else(bad)?;
        if rest.is_empty() {
            return if r == 1 && s == 1 { Ok(Node::Var(0)) } else { Err(bad()) };
        }
        let (n, k) = match rest.split_once('_') {
            Some((n, k)) => (
                n.parse::<usize>().map_err(|_| bad())?,
                k.parse::<usize>().map_err(|_| bad())?,
            ),
            None if s == 1 => (rest.parse::<usize>().map_err(|_| bad())?, 1),
            None => return Err(bad()),
        };
        if n == 0 || k == 0 || n > r || k > s {
            return Err(bad());
        }
        Ok(Node::Var((n - 1) * s + (k - 1)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(r: usize, s: usize) -> IndexShape {
        IndexShape::new(r, s).unwrap()
    }

    #[test]
    fn precedence_and_associativity() {
        let e = Expression::parse("1 + 2 * 3 ^ 2 ^ 1 - 4 / 2", shape(1, 1)).unwrap();
        assert_eq!(e.eval(&[0.0]), 1.0 + 18.0 - 2.0);
        let e = Expression::parse("-2^2", shape(1, 1)).unwrap();
        assert_eq!(e.eval(&[0.0]), -4.0);
        let e = Expression::parse("2^-1", shape(1, 1)).unwrap();
        assert_eq!(e.eval(&[0.0]), 0.5);
    }

    #[test]
    fn variables_by_shape() {
        let e = Expression::parse("x1^2 * x2", shape(2, 1)).unwrap();
        assert_eq!(e.eval(&[3.0, 2.0]), 18.0);
        let e = Expression::parse("x1_2 - x2_1", shape(2, 2)).unwrap();
        assert_eq!(e.eval(&[0.0, 5.0, 1.5, 0.0]), 3.5);
        let e = Expression::parse("x", shape(1, 1)).unwrap();
        assert_eq!(e.eval(&[0.25]), 0.25);
        assert!(Expression::parse("x", shape(2, 1)).is_err());
        assert!(Expression::parse("x3", shape(2, 1)).is_err());
        assert!(Expression::parse("x1", shape(1, 2)).is_err());
    }

    #[test]
    fn functions_and_constants() {
        let e = Expression::parse("sin(pi * x) + exp(0) + sqrt(4) + abs(-1) + ln(e)", shape(1, 1)).unwrap();
        assert!((e.eval(&[0.5]) - 6.0).abs() < 1e-15);
        let e = Expression::parse("1.5e-1 * 2", shape(1, 1)).unwrap();
        assert!((e.eval(&[0.0]) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn syntax_errors() {
        for bad in ["", "1 +", "(1", "foo(1)", "1 $ 2", "x1 x2", "sin 1"] {
            assert!(Expression::parse(bad, shape(2, 1)).is_err(), "{bad}");
        }
    }
}
