//! Closed-form field expressions for run configs.
//!
//! Grammar: arithmetic over numbers, `pi`, `L` (torus side), the coordinates
//! `x` and `y`, and the functions `cos` and `sin`, e.g.
//! `0.01*cos(2*pi*x/L) - 0.005*sin(4*pi*y)`.

use crate::error::{Error, Result};
use crate::grid::{PeriodicGrid, Point, ScalarField};

#[derive(Clone, Debug, PartialEq)]
enum Node {
    Num(f64),
    Var(usize),
    Length,
    Neg(Box<Node>),
    Bin(char, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Func {
    Cos,
    Sin,
}

/// Parsed expression, evaluated at cell centers.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldExpr {
    source: String,
    root: Node,
}

impl FieldExpr {
    pub fn parse(source: &str) -> Result<Self> {
        let tokens = tokenize(source)?;
        let mut p = Parser { tokens, pos: 0, source };
        let root = p.sum()?;
        if p.pos != p.tokens.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(Self { source: source.to_string(), root })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Largest coordinate index referenced (0 for x, 1 for y), if any.
    pub fn max_axis(&self) -> Option<usize> {
        fn walk(n: &Node) -> Option<usize> {
            match n {
                Node::Var(a) => Some(*a),
                Node::Num(_) | Node::Length => None,
                Node::Neg(a) | Node::Call(_, a) => walk(a),
                Node::Bin(_, a, b) => walk(a).max(walk(b)),
            }
        }
        walk(&self.root)
    }

    pub fn eval(&self, x: Point, length: f64) -> f64 {
        fn go(n: &Node, x: Point, l: f64) -> f64 {
            match n {
                Node::Num(c) => *c,
                Node::Var(a) => x[*a],
                Node::Length => l,
                Node::Neg(a) => -go(a, x, l),
                Node::Bin(op, a, b) => {
                    let (a, b) = (go(a, x, l), go(b, x, l));
                    match op {
                        '+' => a + b,
                        '-' => a - b,
                        '*' => a * b,
                        _ => a / b,
                    }
                }
                Node::Call(Func::Cos, a) => go(a, x, l).cos(),
                Node::Call(Func::Sin, a) => go(a, x, l).sin(),
            }
        }
        go(&self.root, x, length)
    }

    /// Samples the expression at the cell centers of `grid`.
    pub fn sample(&self, grid: PeriodicGrid) -> Result<ScalarField> {
        if let Some(axis) = self.max_axis() {
            if axis >= grid.dim() {
                return Err(Error::Config(format!("expression `{}` uses y on a one-dimensional grid", self.source)));
            }
        }
        let l = grid.length();
        let field = ScalarField::from_fn(grid, |x| self.eval(x, l))?;
        if !field.is_finite() {
            return Err(Error::Config(format!("expression `{}` is not finite on the grid", self.source)));
        }
        Ok(field)
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
}

fn tokenize(src: &str) -> Result<Vec<(Tok, usize)>> {
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
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                i += 1;
                if i < chars.len() && (chars[i] == '+' || chars[i] == '-') {
                    i += 1;
                }
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            let text: String = chars[start..i].iter().collect();
            let v = text
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad number `{text}` at column {} in `{src}`", start + 1)))?;
            out.push((Tok::Num(v), start));
        } else if c.is_ascii_alphabetic() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_alphanumeric() {
                i += 1;
            }
            out.push((Tok::Ident(chars[start..i].iter().collect()), start));
        } else if "+-*/()".contains(c) {
            out.push((Tok::Op(c), i));
            i += 1;
        } else {
            return Err(Error::Config(format!("unexpected character `{c}` at column {} in `{src}`", i + 1)));
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<(Tok, usize)>,
    pos: usize,
    source: &'a str,
}

impl Parser<'_> {
    fn error(&self, msg: &str) -> Error {
        let col = self.tokens.get(self.pos).map_or(self.source.chars().count(), |t| t.1) + 1;
        Error::Config(format!("{msg} at column {col} in `{}`", self.source))
    }

    fn peek_op(&self) -> Option<char> {
        match self.tokens.get(self.pos) {
            Some((Tok::Op(c), _)) => Some(*c),
            _ => None,
        }
    }

    fn sum(&mut self) -> Result<Node> {
        let mut lhs = self.product()?;
        while let Some(op @ ('+' | '-')) = self.peek_op() {
            self.pos += 1;
            let rhs = self.product()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn product(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        while let Some(op @ ('*' | '/')) = self.peek_op() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node> {
        match self.peek_op() {
            Some('-') => {
                self.pos += 1;
                Ok(Node::Neg(Box::new(self.unary()?)))
            }
            Some('+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.atom(),
        }
    }

    fn atom(&mut self) -> Result<Node> {
        let Some((tok, _)) = self.tokens.get(self.pos).cloned() else {
            return Err(self.error("unexpected end of expression"));
        };
        match tok {
            Tok::Num(v) => {
                self.pos += 1;
                Ok(Node::Num(v))
            }
            Tok::Op('(') => {
                self.pos += 1;
                let inner = self.sum()?;
                self.expect(')')?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                let node = match name.as_str() {
                    "pi" => Node::Num(std::f64::consts::PI),
                    "L" => Node::Length,
                    "x" => Node::Var(0),
                    "y" => Node::Var(1),
                    "cos" | "sin" => {
                        self.pos += 1;
                        self.expect('(')?;
                        let arg = self.sum()?;
                        self.expect(')')?;
                        let f = if name == "cos" { Func::Cos } else { Func::Sin };
                        return Ok(Node::Call(f, Box::new(arg)));
                    }
                    _ => return Err(self.error(&format!("unknown identifier `{name}`"))),
                };
                self.pos += 1;
                Ok(node)
            }
            Tok::Op(_) => Err(self.error("expected a number, identifier or `(`")),
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.peek_op() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(&format!("expected `{c}`")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn evaluates_trig_sums() {
        let e = FieldExpr::parse("0.01*cos(2*pi*x) - 3e-3*sin(4*pi*y/L) + 1").unwrap();
        let x = [0.1, 0.3];
        let want = 0.01 * (2.0 * PI * 0.1).cos() - 3e-3 * (4.0 * PI * 0.3 / 2.0).sin() + 1.0;
        assert!((e.eval(x, 2.0) - want).abs() < 1e-15);
        assert_eq!(e.max_axis(), Some(1));
    }

    #[test]
    fn precedence_and_unary_minus() {
        let e = FieldExpr::parse("-2*3 + 8/4/2 - (1 - 2)").unwrap();
        assert_eq!(e.eval([0.0, 0.0], 1.0), -6.0 + 1.0 + 1.0);
    }

    #[test]
    fn rejects_malformed_input() {
        for bad in ["", "cos(x", "exp(x)", "2 * * x", "x $ 1", "1 2", "z"] {
            assert!(matches!(FieldExpr::parse(bad), Err(Error::Config(_))), "{bad}");
        }
    }

    #[test]
    fn sampling_checks_dimension() {
        let g1 = PeriodicGrid::unit(8).unwrap();
        let e = FieldExpr::parse("cos(2*pi*y)").unwrap();
        assert!(e.sample(g1).is_err());
        let f = FieldExpr::parse("sin(2*pi*x)").unwrap().sample(g1).unwrap();
        assert!(f.integral().abs() < 1e-15);
    }
}
