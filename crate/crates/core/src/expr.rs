//! Scalar expressions in the coordinates `x1..xn`.
//!
//! Grammar, loosest to tightest binding:
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' ['-'] integer)?
//! primary := number | 'x' index | func '(' expr ')' | '(' expr ')'
//! func    := sin | cos | exp | log | sqrt
//! ```
//!
//! `-x1^2` is therefore `-(x1^2)`. Exponents are integer literals only.
//! Evaluation is generic over [`Real`], so the same tree yields values,
//! directional derivatives and second derivatives by dual propagation.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::real::{Dual, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
        }
    }
}

impl FromStr for Func {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        Ok(match s {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            _ => return Err(()),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    /// Zero-based coordinate index (`x1` is `Coord(0)`).
    Coord(usize),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, i32),
    Call(Func, Box<Node>),
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Const(c) => write!(f, "{c:?}"),
            Node::Coord(i) => write!(f, "x{}", i + 1),
            Node::Neg(a) => write!(f, "(-{a})"),
            Node::Add(a, b) => write!(f, "({a} + {b})"),
            Node::Sub(a, b) => write!(f, "({a} - {b})"),
            Node::Mul(a, b) => write!(f, "({a} * {b})"),
            Node::Div(a, b) => write!(f, "({a} / {b})"),
            Node::Pow(a, k) => write!(f, "({a}^{k})"),
            Node::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

fn domain_err(node: &Node, reason: &str) -> Error {
    Error::Domain {
        subterm: node.to_string(),
        reason: reason.to_string(),
    }
}

impl Node {
    fn eval<S: Real>(&self, x: &[S]) -> Result<S> {
        Ok(match self {
            Node::Const(c) => S::cst(*c),
            Node::Coord(i) => x[*i],
            Node::Neg(a) => -a.eval(x)?,
            Node::Add(a, b) => a.eval(x)? + b.eval(x)?,
            Node::Sub(a, b) => a.eval(x)? - b.eval(x)?,
            Node::Mul(a, b) => a.eval(x)? * b.eval(x)?,
            Node::Div(a, b) => {
                let den = b.eval(x)?;
                if den.re() == 0.0 {
                    return Err(domain_err(self, "division by zero"));
                }
                let q = a.eval(x)? / den;
                if !q.all_finite() {
                    return Err(domain_err(self, "non-finite quotient"));
                }
                q
            }
            Node::Pow(a, k) => {
                let base = a.eval(x)?;
                if *k < 0 && base.re() == 0.0 {
                    return Err(domain_err(self, "zero raised to a negative power"));
                }
                let v = base.powi(*k);
                if !v.all_finite() {
                    return Err(domain_err(self, "non-finite power"));
                }
                v
            }
            Node::Call(func, a) => {
                let arg = a.eval(x)?;
                let v = match func {
                    Func::Sin => arg.sin(),
                    Func::Cos => arg.cos(),
                    Func::Exp => arg.exp(),
                    Func::Log => {
                        if arg.re() <= 0.0 {
                            return Err(domain_err(self, "logarithm of a non-positive value"));
                        }
                        arg.ln()
                    }
                    Func::Sqrt => {
                        if arg.re() < 0.0 {
                            return Err(domain_err(self, "square root of a negative value"));
                        }
                        arg.sqrt()
                    }
                };
                if !v.all_finite() {
                    return Err(domain_err(self, "non-finite result"));
                }
                v
            }
        })
    }

    fn max_coord(&self) -> Option<usize> {
        match self {
            Node::Const(_) => None,
            Node::Coord(i) => Some(*i),
            Node::Neg(a) | Node::Pow(a, _) | Node::Call(_, a) => a.max_coord(),
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
                a.max_coord().max(b.max_coord())
            }
        }
    }
}

/// A parsed scalar function of `n` coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Expression {
    root: Node,
    dim: usize,
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.root.fmt(f)
    }
}

impl Expression {
    pub fn constant(c: f64, dim: usize) -> Self {
        Self {
            root: Node::Const(c),
            dim,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    /// True when the expression is a literal zero; used to skip work.
    pub fn is_zero(&self) -> bool {
        matches!(self.root, Node::Const(c) if c == 0.0)
    }

    /// Fully parenthesized canonical text; re-parses to an equivalent tree.
    pub fn serialize(&self) -> String {
        self.root.to_string()
    }

    /// Generic evaluation; `x.len()` must equal the declared dimension.
    pub fn eval<S: Real>(&self, x: &[S]) -> Result<S> {
        if x.len() != self.dim {
            return Err(Error::Dimension(format!(
                "expression over {} coordinates evaluated at a point of length {}",
                self.dim,
                x.len()
            )));
        }
        let v = self.root.eval(x)?;
        if !v.all_finite() {
            return Err(domain_err(&self.root, "non-finite result"));
        }
        Ok(v)
    }

    pub fn evaluate(&self, p: &[f64]) -> Result<f64> {
        self.eval(p)
    }

    /// `(e(p), D_v e(p))` by one pass of dual propagation.
    pub fn directional_derivative(&self, p: &[f64], v: &[f64]) -> Result<(f64, f64)> {
        check_len(self.dim, v.len())?;
        let out = self.eval(&Dual::seed(p, v))?;
        Ok((out.re, out.eps))
    }

    /// `D_u D_v e(p)` by nesting dual propagation one level.
    pub fn second_directional(&self, p: &[f64], u: &[f64], v: &[f64]) -> Result<f64> {
        check_len(self.dim, u.len())?;
        check_len(self.dim, v.len())?;
        let x: Vec<Dual<Dual<f64>>> = (0..self.dim)
            .map(|i| Dual::new(Dual::new(p[i], v[i]), Dual::new(u[i], 0.0)))
            .collect();
        Ok(self.eval(&x)?.eps.eps)
    }
}

fn check_len(dim: usize, len: usize) -> Result<()> {
    if dim != len {
        return Err(Error::Dimension(format!("expected {dim} components, got {len}")));
    }
    Ok(())
}

pub fn parse_expression(text: &str, n: usize) -> Result<Expression> {
    let mut p = Parser {
        src: text,
        pos: 0,
        dim: n,
    };
    p.skip_ws();
    if p.at_end() {
        return Err(Error::Syntax {
            offset: 0,
            message: "empty expression".into(),
        });
    }
    let root = p.expr()?;
    p.skip_ws();
    if !p.at_end() {
        return Err(p.syntax("unexpected trailing input"));
    }
    debug_assert!(root.max_coord().map_or(true, |i| i < n));
    Ok(Expression { root, dim: n })
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    dim: usize,
}

impl Parser<'_> {
    fn bytes(&self) -> &[u8] {
        self.src.as_bytes()
    }

    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn peek(&self) -> Option<u8> {
        self.bytes().get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(b) if b.is_ascii_whitespace()) {
            self.pos += 1;
        }
    }

    fn syntax(&self, message: &str) -> Error {
        Error::Syntax {
            offset: self.pos,
            message: message.to_string(),
        }
    }

    fn eat(&mut self, c: u8) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat(b'-') {
                lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat(b'*') {
                lhs = Node::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat(b'/') {
                lhs = Node::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Node> {
        if self.eat(b'-') {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.primary()?;
        if !self.eat(b'^') {
            return Ok(base);
        }
        let k = self.integer_exponent()?;
        self.skip_ws();
        if self.peek() == Some(b'^') {
            return Err(self.syntax("chained powers must be parenthesized"));
        }
        Ok(Node::Pow(Box::new(base), k))
    }

    fn integer_exponent(&mut self) -> Result<i32> {
        let paren = self.eat(b'(');
        let neg = self.eat(b'-');
        self.skip_ws();
        let start = self.pos;
        while matches!(self.peek(), Some(b) if b.is_ascii_digit()) {
            self.pos += 1;
        }
        if start == self.pos || matches!(self.peek(), Some(b'.' | b'e' | b'E')) {
            self.pos = start;
            return Err(self.syntax("exponent must be an integer literal"));
        }
        let k: i32 = self.src[start..self.pos]
            .parse()
            .map_err(|_| Error::Syntax {
                offset: start,
                message: "exponent out of range".into(),
            })?;
        if paren && !self.eat(b')') {
            return Err(self.syntax("expected `)`"));
        }
        Ok(if neg { -k } else { k })
    }

    fn primary(&mut self) -> Result<Node> {
        self.skip_ws();
        let start = self.pos;
        match self.peek() {
            None => Err(self.syntax("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.syntax("expected `)`"));
                }
                Ok(inner)
            }
            Some(b) if b.is_ascii_digit() || b == b'.' => self.number(),
            Some(b) if b.is_ascii_alphabetic() => {
                while matches!(self.peek(), Some(b) if b.is_ascii_alphanumeric() || b == b'_') {
                    self.pos += 1;
                }
                let ident = &self.src[start..self.pos];
                self.skip_ws();
                if self.peek() == Some(b'(') {
                    let func: Func = ident.parse().map_err(|_| Error::UnknownFunction {
                        name: ident.to_string(),
                        offset: start,
                    })?;
                    self.pos += 1;
                    let arg = self.expr()?;
                    if !self.eat(b')') {
                        return Err(self.syntax("expected `)`"));
                    }
                    return Ok(Node::Call(func, Box::new(arg)));
                }
                self.coordinate(ident, start)
            }
            Some(_) => Err(self.syntax("unexpected character")),
        }
    }

    fn coordinate(&self, ident: &str, offset: usize) -> Result<Node> {
        let unknown = || Error::UnknownCoordinate {
            name: ident.to_string(),
            offset,
            dim: self.dim,
        };
        let digits = ident.strip_prefix('x').ok_or_else(unknown)?;
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(unknown());
        }
        let k: usize = digits.parse().map_err(|_| unknown())?;
        if k == 0 || k > self.dim {
            return Err(unknown());
        }
        Ok(Node::Coord(k - 1))
    }

    fn number(&mut self) -> Result<Node> {
        let start = self.pos;
        while matches!(self.peek(), Some(b) if b.is_ascii_digit() || b == b'.') {
            self.pos += 1;
        }
        if matches!(self.peek(), Some(b'e' | b'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.peek(), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            let digits = self.pos;
            while matches!(self.peek(), Some(b) if b.is_ascii_digit()) {
                self.pos += 1;
            }
            if digits == self.pos {
                self.pos = save;
            }
        }
        let text = &self.src[start..self.pos];
        text.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .map(Node::Const)
            .ok_or(Error::Syntax {
                offset: start,
                message: format!("malformed number `{text}`"),
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(text: &str, n: usize) -> Expression {
        parse_expression(text, n).unwrap()
    }

    #[test]
    fn coordinate_projection() {
        assert_eq!(e("x1", 3).evaluate(&[1.5, -2.0, 4.0]).unwrap(), 1.5);
    }

    #[test]
    fn square_plus_sine() {
        assert_eq!(e("x1^2 + sin(x2)", 2).evaluate(&[2.0, 0.0]).unwrap(), 4.0);
    }

    #[test]
    fn out_of_range_coordinate() {
        let err = parse_expression("x4", 3).unwrap_err();
        assert!(err.to_string().contains("unknown coordinate"), "{err}");
        assert!(matches!(
            parse_expression("x0", 3),
            Err(Error::UnknownCoordinate { .. })
        ));
        assert!(matches!(
            parse_expression("y + 1", 3),
            Err(Error::UnknownCoordinate { offset: 0, .. })
        ));
    }

    #[test]
    fn unknown_function_and_syntax_offsets() {
        assert!(matches!(
            parse_expression("1 + tan(x1)", 1),
            Err(Error::UnknownFunction { offset: 4, .. })
        ));
        assert!(matches!(
            parse_expression("x1 + * 2", 1),
            Err(Error::Syntax { offset: 5, .. })
        ));
        assert!(matches!(
            parse_expression("(x1 + 2", 1),
            Err(Error::Syntax { offset: 7, .. })
        ));
        assert!(matches!(parse_expression("x1^1.5", 1), Err(Error::Syntax { .. })));
        assert!(matches!(parse_expression("", 1), Err(Error::Syntax { offset: 0, .. })));
        assert!(matches!(parse_expression("x1^2^2", 1), Err(Error::Syntax { .. })));
    }

    #[test]
    fn precedence() {
        // power binds tighter than unary minus
        assert_eq!(e("-x1^2", 1).evaluate(&[3.0]).unwrap(), -9.0);
        assert_eq!(e("(-x1)^2", 1).evaluate(&[3.0]).unwrap(), 9.0);
        // left associativity
        assert_eq!(e("8 - 3 - 2", 1).evaluate(&[0.0]).unwrap(), 3.0);
        assert_eq!(e("8 / 4 / 2", 1).evaluate(&[0.0]).unwrap(), 1.0);
        assert_eq!(e("1 + 2 * 3", 1).evaluate(&[0.0]).unwrap(), 7.0);
        assert_eq!(e("2 * -x1", 1).evaluate(&[3.0]).unwrap(), -6.0);
        assert_eq!(e("x1^-2", 1).evaluate(&[2.0]).unwrap(), 0.25);
        assert_eq!(e("x1^(-1)", 1).evaluate(&[4.0]).unwrap(), 0.25);
        assert_eq!(e("1.5e1 + 2E-1", 1).evaluate(&[0.0]).unwrap(), 15.2);
    }

    #[test]
    fn evaluate_examples() {
        assert_eq!(e("exp(x1)", 1).evaluate(&[0.0]).unwrap(), 1.0);
        assert_eq!(e("x1*x2 + x3^3", 3).evaluate(&[1.0, 2.0, 2.0]).unwrap(), 10.0);
    }

    #[test]
    fn domain_errors_name_the_subterm() {
        match e("1/x1", 1).evaluate(&[0.0]) {
            Err(Error::Domain { subterm, .. }) => assert_eq!(subterm, "(1.0 / x1)"),
            other => panic!("expected domain error, got {other:?}"),
        }
        match e("2 + log(x1 - 1)", 1).evaluate(&[0.5]) {
            Err(Error::Domain { subterm, .. }) => assert_eq!(subterm, "log((x1 - 1.0))"),
            other => panic!("expected domain error, got {other:?}"),
        }
        assert!(e("sqrt(x1)", 1).evaluate(&[-1.0]).is_err());
        assert!(e("x1^-1", 1).evaluate(&[0.0]).is_err());
        assert!(e("exp(x1)", 1).evaluate(&[1000.0]).is_err());
        // value fine, derivative unbounded
        assert_eq!(e("sqrt(x1)", 1).evaluate(&[0.0]).unwrap(), 0.0);
        assert!(e("sqrt(x1)", 1).directional_derivative(&[0.0], &[1.0]).is_err());
    }

    #[test]
    fn directional_examples() {
        assert_eq!(
            e("x1^2", 1).directional_derivative(&[3.0], &[1.0]).unwrap(),
            (9.0, 6.0)
        );
        let ex = e("x1*x2 + sin(x3)", 3);
        let (v, d) = ex
            .directional_derivative(&[0.3, -1.0, 2.0], &[0.0, 0.0, 0.0])
            .unwrap();
        assert_eq!(v, ex.evaluate(&[0.3, -1.0, 2.0]).unwrap());
        assert_eq!(d, 0.0);
    }

    #[test]
    fn directional_against_central_difference() {
        // oracle: central difference, step 1e-6
        let ex = e("sin(x1)*x2", 2);
        let p = [0.0, 2.0];
        let h = 1e-6;
        let fd = (ex.evaluate(&[h, 2.0]).unwrap() - ex.evaluate(&[-h, 2.0]).unwrap()) / (2.0 * h);
        let (v, d) = ex.directional_derivative(&p, &[1.0, 0.0]).unwrap();
        assert_eq!(v, 0.0);
        assert!((fd - 2.0).abs() < 1e-8);
        assert!((d - fd).abs() < 1e-8);
        assert_eq!(d, 2.0);
    }

    #[test]
    fn second_directional_examples() {
        let p = [0.7, -1.3];
        assert_eq!(
            e("x1*x2", 2).second_directional(&p, &[1.0, 0.0], &[0.0, 1.0]).unwrap(),
            1.0
        );
        assert_eq!(e("x1^2", 1).second_directional(&[5.0], &[1.0], &[1.0]).unwrap(), 2.0);
        assert_eq!(e("sin(x1)", 1).second_directional(&[0.0], &[1.0], &[1.0]).unwrap(), 0.0);
    }

    #[test]
    fn canonical_form_reparses() {
        let ex = e("-x1^2 + 3*sin(x2)/x1 - exp(-x2)^3 + 1e-3", 2);
        let text = ex.serialize();
        let again = parse_expression(&text, 2).unwrap();
        assert_eq!(again, ex);
        assert_eq!(again.serialize(), text);
    }
}
