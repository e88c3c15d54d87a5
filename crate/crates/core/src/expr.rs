//! Coefficient expressions: parsing, evaluation and exact differentiation.
//!
//! The grammar covers what vector-field coefficients need here:
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary ('*' unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' int)?        int may carry a sign or be parenthesised
//! atom   := number | var | func '(' expr ')' | '(' expr ')'
//! var    := 'x1' .. 'xd' | 't'     't' names the last coordinate
//! func   := 'exp' | 'sin' | 'cos'
//! ```

use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};
use core::fmt;

use crate::error::{Error, Result};
use crate::poly::Poly;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Exp,
    Sin,
    Cos,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Sin => "sin",
            Func::Cos => "cos",
        }
    }

    pub(crate) fn apply(self, v: f64) -> f64 {
        match self {
            Func::Exp => libm::exp(v),
            Func::Sin => libm::sin(v),
            Func::Cos => libm::cos(v),
        }
    }
}

/// Expression tree over the coordinates `x1 … xd` (`Var(i)` is `x_{i+1}`).
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Func(Func, Box<Expr>),
}

pub(crate) fn powi(mut base: f64, n: i32) -> f64 {
    let mut e = n.unsigned_abs();
    let mut acc = 1.0;
    while e > 0 {
        if e & 1 == 1 {
            acc *= base;
        }
        base *= base;
        e >>= 1;
    }
    if n < 0 {
        1.0 / acc
    } else {
        acc
    }
}

impl Expr {
    pub fn zero() -> Expr {
        Expr::Const(0.0)
    }

    pub fn one() -> Expr {
        Expr::Const(1.0)
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    pub fn neg(a: Expr) -> Expr {
        match a {
            Expr::Const(c) => Expr::Const(-c),
            Expr::Neg(inner) => *inner,
            other => Expr::Neg(Box::new(other)),
        }
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::Const(x + y),
            (Some(x), _) if x == 0.0 => b,
            (_, Some(y)) if y == 0.0 => a,
            _ => match b {
                Expr::Neg(inner) => Expr::Sub(Box::new(a), inner),
                b => Expr::Add(Box::new(a), Box::new(b)),
            },
        }
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::Const(x - y),
            (Some(x), _) if x == 0.0 => Expr::neg(b),
            (_, Some(y)) if y == 0.0 => a,
            _ if a == b => Expr::zero(),
            _ => Expr::Sub(Box::new(a), Box::new(b)),
        }
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::Const(x * y),
            (Some(x), _) | (_, Some(x)) if x == 0.0 => Expr::zero(),
            (Some(x), _) if x == 1.0 => b,
            (_, Some(y)) if y == 1.0 => a,
            (Some(x), _) if x == -1.0 => Expr::neg(b),
            (_, Some(y)) if y == -1.0 => Expr::neg(a),
            // keep constants on the left
            (None, Some(_)) => Expr::Mul(Box::new(b), Box::new(a)),
            _ => Expr::Mul(Box::new(a), Box::new(b)),
        }
    }

    pub fn pow(a: Expr, n: i32) -> Expr {
        match (a.as_const(), n) {
            (_, 0) => Expr::one(),
            (_, 1) => a,
            (Some(c), n) => Expr::Const(powi(c, n)),
            _ => Expr::Pow(Box::new(a), n),
        }
    }

    pub fn func(f: Func, a: Expr) -> Expr {
        match a.as_const() {
            Some(c) => Expr::Const(f.apply(c)),
            None => Expr::Func(f, Box::new(a)),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => x[*i],
            Expr::Neg(a) => -a.eval(x),
            Expr::Add(a, b) => a.eval(x) + b.eval(x),
            Expr::Sub(a, b) => a.eval(x) - b.eval(x),
            Expr::Mul(a, b) => a.eval(x) * b.eval(x),
            Expr::Pow(a, n) => powi(a.eval(x), *n),
            Expr::Func(f, a) => f.apply(a.eval(x)),
        }
    }

    /// Exact partial derivative with respect to `Var(var)`.
    pub fn derivative(&self, var: usize) -> Expr {
        match self {
            Expr::Const(_) => Expr::zero(),
            Expr::Var(i) => Expr::Const(if *i == var { 1.0 } else { 0.0 }),
            Expr::Neg(a) => Expr::neg(a.derivative(var)),
            Expr::Add(a, b) => Expr::add(a.derivative(var), b.derivative(var)),
            Expr::Sub(a, b) => Expr::sub(a.derivative(var), b.derivative(var)),
            Expr::Mul(a, b) => Expr::add(
                Expr::mul(a.derivative(var), (**b).clone()),
                Expr::mul((**a).clone(), b.derivative(var)),
            ),
            Expr::Pow(a, n) => Expr::mul(
                Expr::mul(Expr::Const(*n as f64), Expr::pow((**a).clone(), n - 1)),
                a.derivative(var),
            ),
            Expr::Func(f, a) => {
                let outer = match f {
                    Func::Exp => Expr::func(Func::Exp, (**a).clone()),
                    Func::Sin => Expr::func(Func::Cos, (**a).clone()),
                    Func::Cos => Expr::neg(Expr::func(Func::Sin, (**a).clone())),
                };
                Expr::mul(outer, a.derivative(var))
            }
        }
    }

    /// Rebuilds the tree through the folding constructors.
    pub fn simplify(&self) -> Expr {
        self.map_vars(&|i| Expr::Var(i))
    }

    /// Replaces `Var(var)` by the constant `value` and folds.
    pub fn substitute(&self, var: usize, value: f64) -> Expr {
        self.map_vars(&|i| if i == var { Expr::Const(value) } else { Expr::Var(i) })
    }

    fn map_vars(&self, f: &dyn Fn(usize) -> Expr) -> Expr {
        match self {
            Expr::Const(c) => Expr::Const(*c),
            Expr::Var(i) => f(*i),
            Expr::Neg(a) => Expr::neg(a.map_vars(f)),
            Expr::Add(a, b) => Expr::add(a.map_vars(f), b.map_vars(f)),
            Expr::Sub(a, b) => Expr::sub(a.map_vars(f), b.map_vars(f)),
            Expr::Mul(a, b) => Expr::mul(a.map_vars(f), b.map_vars(f)),
            Expr::Pow(a, n) => Expr::pow(a.map_vars(f), *n),
            Expr::Func(g, a) => Expr::func(*g, a.map_vars(f)),
        }
    }

    /// Bit `i` is set when `Var(i)` occurs.
    pub fn var_mask(&self) -> u64 {
        match self {
            Expr::Const(_) => 0,
            Expr::Var(i) => 1u64 << *i,
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Func(_, a) => a.var_mask(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => a.var_mask() | b.var_mask(),
        }
    }

    pub fn max_var(&self) -> Option<usize> {
        let m = self.var_mask();
        (m != 0).then(|| 63 - m.leading_zeros() as usize)
    }

    /// Evaluates with polynomial-valued variables; `None` if the result is
    /// not a polynomial that fits the coefficient budget.
    pub fn eval_poly(&self, vars: &[Poly]) -> Option<Poly> {
        Some(match self {
            Expr::Const(c) => Poly::constant(*c),
            Expr::Var(i) => vars[*i],
            Expr::Neg(a) => a.eval_poly(vars)?.scale(-1.0),
            Expr::Add(a, b) => a.eval_poly(vars)?.add(&b.eval_poly(vars)?),
            Expr::Sub(a, b) => a.eval_poly(vars)?.add(&b.eval_poly(vars)?.scale(-1.0)),
            Expr::Mul(a, b) => a.eval_poly(vars)?.mul(&b.eval_poly(vars)?)?,
            Expr::Pow(a, n) => {
                let base = a.eval_poly(vars)?;
                if *n >= 0 {
                    base.powi(*n as u32)?
                } else if base.is_constant() {
                    Poly::constant(powi(base.coeff(0), *n))
                } else {
                    return None;
                }
            }
            Expr::Func(f, a) => {
                let arg = a.eval_poly(vars)?;
                if !arg.is_constant() {
                    return None;
                }
                Poly::constant(f.apply(arg.coeff(0)))
            }
        })
    }

    /// Parses `text` over `dim` coordinates.
    pub fn parse(text: &str, dim: usize) -> Result<Expr> {
        let mut p = Parser { src: text, bytes: text.as_bytes(), pos: 0, dim };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos < p.bytes.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(e)
    }
}

struct Parser<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
    dim: usize,
}

impl<'a> Parser<'a> {
    fn error(&self, message: &str) -> Error {
        Error::Syntax { offset: self.pos, message: message.to_string() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut acc = self.term()?;
        loop {
            if self.eat(b'+') {
                acc = Expr::add(acc, self.term()?);
            } else if self.eat(b'-') {
                acc = Expr::sub(acc, self.term()?);
            } else {
                return Ok(acc);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut acc = self.unary()?;
        while self.eat(b'*') {
            acc = Expr::mul(acc, self.unary()?);
        }
        Ok(acc)
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat(b'-') {
            return Ok(Expr::neg(self.unary()?));
        }
        if self.eat(b'+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if !self.eat(b'^') {
            return Ok(base);
        }
        let paren = self.eat(b'(');
        let negative = if self.eat(b'-') {
            true
        } else {
            self.eat(b'+');
            false
        };
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.error("expected integer exponent"));
        }
        let mag: i32 = self.src[start..self.pos]
            .parse()
            .map_err(|_| Error::Syntax { offset: start, message: "exponent too large".to_string() })?;
        if paren && !self.eat(b')') {
            return Err(self.error("expected `)`"));
        }
        Ok(Expr::pow(base, if negative { -mag } else { mag }))
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek() {
            None => Err(self.error("expected operand, found end of input")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.error("expected `)`"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.identifier(),
            Some(_) => Err(self.error("unexpected character")),
        }
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        let b = self.bytes;
        while self.pos < b.len() && (b[self.pos].is_ascii_digit() || b[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < b.len() && (b[self.pos] == b'e' || b[self.pos] == b'E') {
            let mut q = self.pos + 1;
            if q < b.len() && (b[q] == b'+' || b[q] == b'-') {
                q += 1;
            }
            if q < b.len() && b[q].is_ascii_digit() {
                while q < b.len() && b[q].is_ascii_digit() {
                    q += 1;
                }
                self.pos = q;
            }
        }
        self.src[start..self.pos]
            .parse::<f64>()
            .map(Expr::Const)
            .map_err(|_| Error::Syntax { offset: start, message: "malformed number".to_string() })
    }

    fn identifier(&mut self) -> Result<Expr> {
        let start = self.pos;
        let b = self.bytes;
        while self.pos < b.len() && (b[self.pos].is_ascii_alphanumeric() || b[self.pos] == b'_') {
            self.pos += 1;
        }
        let name = &self.src[start..self.pos];
        let func = match name {
            "exp" => Some(Func::Exp),
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            _ => None,
        };
        if let Some(f) = func {
            if !self.eat(b'(') {
                return Err(self.error("expected `(` after function name"));
            }
            let arg = self.expr()?;
            if !self.eat(b')') {
                return Err(self.error("expected `)`"));
            }
            return Ok(Expr::func(f, arg));
        }
        if name == "pi" {
            return Ok(Expr::Const(core::f64::consts::PI));
        }
        if name == "t" && self.dim > 0 {
            return Ok(Expr::Var(self.dim - 1));
        }
        if let Some(idx) = name.strip_prefix('x').and_then(|s| s.parse::<usize>().ok()) {
            if (1..=self.dim).contains(&idx) && !name[1..].starts_with('0') {
                return Ok(Expr::Var(idx - 1));
            }
        }
        Err(Error::UnknownIdentifier { offset: start, name: String::from(name) })
    }
}

fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Add(..) | Expr::Sub(..) => 1,
        Expr::Mul(..) => 2,
        Expr::Neg(..) => 3,
        Expr::Pow(..) => 4,
        Expr::Const(c) if *c < 0.0 => 3,
        _ => 5,
    }
}

fn write_operand(f: &mut fmt::Formatter<'_>, e: &Expr, min: u8) -> fmt::Result {
    if precedence(e) < min {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => {
                let s = format!("{c:?}");
                f.write_str(s.strip_suffix(".0").unwrap_or(&s))
            }
            Expr::Var(i) => write!(f, "x{}", i + 1),
            Expr::Neg(a) => {
                f.write_str("-")?;
                write_operand(f, a, 4)
            }
            Expr::Add(a, b) => {
                write!(f, "{a} + ")?;
                write_operand(f, b, 2)
            }
            Expr::Sub(a, b) => {
                write!(f, "{a} - ")?;
                write_operand(f, b, 2)
            }
            Expr::Mul(a, b) => {
                write_operand(f, a, 2)?;
                f.write_str("*")?;
                write_operand(f, b, 4)
            }
            Expr::Pow(a, n) => {
                write_operand(f, a, 5)?;
                if *n < 0 {
                    write!(f, "^({n})")
                } else {
                    write!(f, "^{n}")
                }
            }
            Expr::Func(g, a) => write!(f, "{}({a})", g.name()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn p(s: &str, d: usize) -> Expr {
        Expr::parse(s, d).unwrap()
    }

    #[test]
    fn parses_and_evaluates() {
        let e = p("2*x1^2 - 3*x2 + exp(x1*x2)", 2);
        let x = [0.5, -1.25];
        let want = 2.0 * 0.25 + 3.75 + libm::exp(-0.625);
        assert!((e.eval(&x) - want).abs() < 1e-15);
        assert_eq!(p("-x1^2", 1).eval(&[3.0]), -9.0);
        assert_eq!(p("x1^(-2)", 1).eval(&[2.0]), 0.25);
        assert_eq!(p("1.5e-1 * x1", 1).eval(&[2.0]), 0.3);
    }

    #[test]
    fn t_names_the_last_slot() {
        let e = p("t^3 + x1", 4);
        assert_eq!(e.var_mask(), 0b1001);
        assert_eq!(e.eval(&[1.0, 0.0, 0.0, 2.0]), 9.0);
    }

    #[test]
    fn trailing_operator_reports_offset() {
        match Expr::parse("x1 +", 4) {
            Err(Error::Syntax { offset, .. }) => assert_eq!(offset, 4),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(Expr::parse("(x1", 2), Err(Error::Syntax { offset: 3, .. })));
        assert!(matches!(Expr::parse("x1 x2", 2), Err(Error::Syntax { offset: 3, .. })));
    }

    #[test]
    fn unknown_identifiers() {
        assert!(matches!(
            Expr::parse("x5", 4),
            Err(Error::UnknownIdentifier { offset: 0, .. })
        ));
        assert!(matches!(
            Expr::parse("1 + y", 2),
            Err(Error::UnknownIdentifier { offset: 4, .. })
        ));
        assert!(Expr::parse("x0", 2).is_err());
    }

    #[test]
    fn derivative_of_product_and_chain() {
        // d/dx1 [x1^3 * sin(x2 * x1)] = 3x1^2 sin(x1x2) + x1^3 x2 cos(x1x2)
        let e = p("x1^3 * sin(x2 * x1)", 2);
        let d = e.derivative(0);
        let (a, b) = (0.7, -0.4);
        let want = 3.0 * a * a * libm::sin(a * b) + a * a * a * b * libm::cos(a * b);
        assert!((d.eval(&[a, b]) - want).abs() < 1e-14);
        assert!(p("x2", 2).derivative(0).is_zero());
    }

    #[test]
    fn substitution_folds_constants() {
        let e = p("x1 + t*x2", 3).substitute(2, 0.0);
        assert_eq!(e, Expr::Var(0));
        assert!(p("t^2*x1", 3).substitute(2, 0.0).is_zero());
    }

    #[test]
    fn display_round_trips() {
        for s in ["x1 - (x2 - x3)", "-(x1 + 2)*x2^3", "exp(-x1^2)*cos(x2)", "x1^(-2) - -3"] {
            let e = p(s, 3);
            let back = p(&e.to_string(), 3);
            let x = [0.3, -0.8, 1.1];
            assert!((e.eval(&x) - back.eval(&x)).abs() < 1e-14, "{s} -> {e}");
        }
    }

    #[test]
    fn polynomial_evaluation() {
        let e = p("1 + x1^2 - 3*x1*x2", 2);
        let vars = [Poly::linear(0.5, 1.0), Poly::constant(2.0)];
        let poly = e.eval_poly(&vars).unwrap();
        let tau = 0.3;
        assert!((poly.eval(tau) - e.eval(&[0.5 + tau, 2.0])).abs() < 1e-14);
        assert!(p("exp(x1)", 1).eval_poly(&[Poly::linear(0.0, 1.0)]).is_none());
        assert!(p("exp(x1)", 1).eval_poly(&[Poly::constant(1.0)]).is_some());
    }
}
