//! Minimal arithmetic expressions over `x1..xn`, `t1`, `t2`.
//!
//! Grammar (`^` binds tighter than unary minus and is right associative):
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | power
//! power := atom ('^' unary)?
//! atom  := number | ident | '(' expr ')'
//! ```

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    /// State component, zero based.
    X(usize),
    /// Parameter component, zero based.
    T(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExprError {
    pub column: usize,
    pub msg: String,
}

impl fmt::Display for ExprError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "column {}: {}", self.column, self.msg)
    }
}

impl Expr {
    pub fn parse(src: &str, dim: usize) -> Result<Expr, ExprError> {
        let mut p = Parser { src: src.as_bytes(), pos: 0, dim };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(p.err("unexpected trailing input"));
        }
        Ok(e)
    }

    pub fn eval(&self, x: &[f64], t: [f64; 2]) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Var(Var::X(i)) => x[*i],
            Expr::Var(Var::T(i)) => t[*i],
            Expr::Neg(a) => -a.eval(x, t),
            Expr::Add(a, b) => a.eval(x, t) + b.eval(x, t),
            Expr::Sub(a, b) => a.eval(x, t) - b.eval(x, t),
            Expr::Mul(a, b) => a.eval(x, t) * b.eval(x, t),
            Expr::Div(a, b) => a.eval(x, t) / b.eval(x, t),
            Expr::Pow(a, b) => {
                let base = a.eval(x, t);
                match b.as_ref() {
                    Expr::Num(n) if n.fract() == 0.0 && n.abs() < 64.0 => base.powi(*n as i32),
                    _ => base.powf(b.eval(x, t)),
                }
            }
        }
    }

    pub fn depends_on(&self, v: Var) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var(w) => *w == v,
            Expr::Neg(a) => a.depends_on(v),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b) => a.depends_on(v) || b.depends_on(v),
        }
    }

    /// Symbolic partial derivative, lightly simplified.
    pub fn derivative(&self, v: Var) -> Expr {
        match self {
            Expr::Num(_) => Expr::Num(0.0),
            Expr::Var(w) => Expr::Num(if *w == v { 1.0 } else { 0.0 }),
            Expr::Neg(a) => neg(a.derivative(v)),
            Expr::Add(a, b) => add(a.derivative(v), b.derivative(v)),
            Expr::Sub(a, b) => sub(a.derivative(v), b.derivative(v)),
            Expr::Mul(a, b) => add(
                mul(a.derivative(v), (**b).clone()),
                mul((**a).clone(), b.derivative(v)),
            ),
            Expr::Div(a, b) => div(
                sub(
                    mul(a.derivative(v), (**b).clone()),
                    mul((**a).clone(), b.derivative(v)),
                ),
                pow((**b).clone(), Expr::Num(2.0)),
            ),
            Expr::Pow(a, b) => {
                // Callers reject variable exponents (see `has_variable_exponent`).
                debug_assert!(!b.has_variables());
                let lowered = match b.as_ref() {
                    Expr::Num(n) => Expr::Num(n - 1.0),
                    other => sub(other.clone(), Expr::Num(1.0)),
                };
                mul(mul((**b).clone(), pow((**a).clone(), lowered)), a.derivative(v))
            }
        }
    }

    pub fn has_variables(&self) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var(_) => true,
            Expr::Neg(a) => a.has_variables(),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b) => a.has_variables() || b.has_variables(),
        }
    }

    /// True if some `^` has an exponent that depends on a variable.
    pub fn has_variable_exponent(&self) -> bool {
        match self {
            Expr::Num(_) | Expr::Var(_) => false,
            Expr::Neg(a) => a.has_variable_exponent(),
            Expr::Pow(a, b) => b.has_variables() || a.has_variable_exponent(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.has_variable_exponent() || b.has_variable_exponent()
            }
        }
    }
}

fn is_num(e: &Expr, v: f64) -> bool {
    matches!(e, Expr::Num(n) if *n == v)
}

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Num(n) => Expr::Num(-n),
        Expr::Neg(inner) => *inner,
        other => Expr::Neg(Box::new(other)),
    }
}

fn add(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Num(x), Expr::Num(y)) => Expr::Num(x + y),
        _ if is_num(&a, 0.0) => b,
        _ if is_num(&b, 0.0) => a,
        _ => Expr::Add(Box::new(a), Box::new(b)),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Num(x), Expr::Num(y)) => Expr::Num(x - y),
        _ if is_num(&b, 0.0) => a,
        _ if is_num(&a, 0.0) => neg(b),
        _ => Expr::Sub(Box::new(a), Box::new(b)),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Num(x), Expr::Num(y)) => Expr::Num(x * y),
        _ if is_num(&a, 0.0) || is_num(&b, 0.0) => Expr::Num(0.0),
        _ if is_num(&a, 1.0) => b,
        _ if is_num(&b, 1.0) => a,
        _ => Expr::Mul(Box::new(a), Box::new(b)),
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        _ if is_num(&a, 0.0) => Expr::Num(0.0),
        _ if is_num(&b, 1.0) => a,
        _ => Expr::Div(Box::new(a), Box::new(b)),
    }
}

fn pow(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        _ if is_num(&b, 0.0) => Expr::Num(1.0),
        _ if is_num(&b, 1.0) => a,
        (Expr::Num(x), Expr::Num(y)) => Expr::Num(x.powf(*y)),
        _ => Expr::Pow(Box::new(a), Box::new(b)),
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    dim: usize,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> ExprError {
        ExprError { column: self.pos + 1, msg: msg.to_string() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        while let Some(c) = self.peek() {
            match c {
                b'+' => {
                    self.pos += 1;
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                b'-' => {
                    self.pos += 1;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => break,
            }
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(c) = self.peek() {
            match c {
                b'*' => {
                    self.pos += 1;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                b'/' => {
                    self.pos += 1;
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => break,
            }
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.peek() == Some(b'+') {
            self.pos += 1;
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            None => Err(self.err("unexpected end of expression")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.err("expected `)`"));
                }
                self.pos += 1;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.ident(),
            Some(c) => Err(self.err(&format!("unexpected character `{}`", c as char))),
        }
    }

    fn number(&mut self) -> Result<Expr, ExprError> {
        let start = self.pos;
        let s = self.src;
        while self.pos < s.len() && (s[self.pos].is_ascii_digit() || s[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < s.len() && (s[self.pos] == b'e' || s[self.pos] == b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < s.len() && (s[self.pos] == b'+' || s[self.pos] == b'-') {
                self.pos += 1;
            }
            let digits = self.pos;
            while self.pos < s.len() && s[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if digits == self.pos {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&s[start..self.pos]).unwrap();
        text.parse::<f64>().map(Expr::Num).map_err(|_| ExprError {
            column: start + 1,
            msg: format!("bad number `{text}`"),
        })
    }

    fn ident(&mut self) -> Result<Expr, ExprError> {
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        let bad = || ExprError { column: start + 1, msg: format!("unknown variable `{name}`") };
        let (head, idx) = name.split_at(1);
        let idx: usize = idx.parse().map_err(|_| bad())?;
        match head {
            "x" if idx >= 1 && idx <= self.dim => Ok(Expr::Var(Var::X(idx - 1))),
            "t" if idx == 1 || idx == 2 => Ok(Expr::Var(Var::T(idx - 1))),
            _ => Err(bad()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(src: &str, x: &[f64], t: [f64; 2]) -> f64 {
        Expr::parse(src, x.len()).unwrap().eval(x, t)
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(ev("1 + 2*3", &[0.0], [0.0; 2]), 7.0);
        assert_eq!(ev("-x1^2", &[3.0], [0.0; 2]), -9.0);
        assert_eq!(ev("2^3^2", &[0.0], [0.0; 2]), 512.0);
        assert_eq!(ev("(1-2)-3", &[0.0], [0.0; 2]), -4.0);
        assert_eq!(ev("8/2/2", &[0.0], [0.0; 2]), 2.0);
        assert_eq!(ev("1.5e1 + t2", &[0.0], [0.0, 1.0]), 16.0);
    }

    #[test]
    fn cusp_rhs() {
        assert_eq!(ev("t2 + t1*x1 - x1^3", &[1.0], [1.0, 0.0]), 0.0);
    }

    #[test]
    fn parse_errors_carry_columns() {
        let e = Expr::parse("x1 + y", 1).unwrap_err();
        assert_eq!(e.column, 6);
        assert!(Expr::parse("x2", 1).is_err());
        assert!(Expr::parse("(x1", 1).is_err());
        assert!(Expr::parse("x1 x1", 1).is_err());
        assert!(Expr::parse("", 1).is_err());
    }

    #[test]
    fn symbolic_derivative_matches_hand_result() {
        let e = Expr::parse("t2 + t1*x1 + 2*x1^3 - x1^5", 1).unwrap();
        let d = e.derivative(Var::X(0));
        for &x in &[-1.3f64, 0.0, 0.4, 2.0] {
            let t = [0.7, -0.2];
            let expect = t[0] + 6.0 * x * x - 5.0 * x.powi(4);
            assert!((d.eval(&[x], t) - expect).abs() < 1e-12);
        }
        let dt = e.derivative(Var::T(0));
        assert_eq!(dt.eval(&[1.7], [0.0, 0.0]), 1.7);
    }

    #[test]
    fn variable_exponent_is_flagged() {
        assert!(Expr::parse("x1^t1", 1).unwrap().has_variable_exponent());
        assert!(!Expr::parse("x1^(2+1)", 1).unwrap().has_variable_exponent());
    }

    #[test]
    fn quotient_rule() {
        let e = Expr::parse("x1/(1 + x1^2)", 1).unwrap();
        let d = e.derivative(Var::X(0));
        let x: f64 = 0.8;
        let expect = (1.0 - x * x) / (1.0 + x * x).powi(2);
        assert!((d.eval(&[x], [0.0; 2]) - expect).abs() < 1e-12);
    }
}
