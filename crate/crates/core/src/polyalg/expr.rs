//! Arithmetic expressions over state variables `x1..xn` and named
//! parameters.
//!
//! Problem files write dynamics like `-(ks*(x1-x3) + ks/10*(x1-x3)^3)/mb`.
//! An [`Expr`] can be lowered to a [`Polynomial`] once parameter values are
//! known, or evaluated pointwise (which additionally allows `sqrt`, `abs`,
//! `exp` and real powers, used for analytic reference curves).

use std::collections::HashMap;

use super::{PolyError, Polynomial};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sqrt,
    Abs,
    Exp,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(usize),
    Param(String),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
}

fn tokenize(s: &str) -> Result<Vec<(usize, Tok)>, PolyError> {
    let bytes = s.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < bytes.len() && ((bytes[i] as char).is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text = &s[start..i];
            let v: f64 = text.parse().map_err(|_| PolyError::Parse {
                pos: start,
                msg: format!("bad number `{text}`"),
            })?;
            out.push((start, Tok::Num(v)));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Tok::Ident(s[start..i].to_string())));
        } else if "+-*/^()".contains(c) {
            out.push((i, Tok::Op(c)));
            i += 1;
        } else {
            return Err(PolyError::Parse {
                pos: i,
                msg: format!("unexpected character `{c}`"),
            });
        }
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    n: usize,
    src: &'a str,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn here(&self) -> usize {
        self.toks.get(self.pos).map(|(p, _)| *p).unwrap_or(self.src.len())
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, PolyError> {
        Err(PolyError::Parse {
            pos: self.here(),
            msg: msg.into(),
        })
    }

    fn eat(&mut self, op: char) -> bool {
        if self.peek() == Some(&Tok::Op(op)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr, PolyError> {
        let mut lhs = self.term()?;
        loop {
            if self.eat('+') {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat('-') {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr, PolyError> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat('*') {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat('/') {
                lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, PolyError> {
        if self.eat('-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.eat('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, PolyError> {
        let base = self.atom()?;
        if self.eat('^') {
            let exp = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, PolyError> {
        let Some(tok) = self.peek().cloned() else {
            return self.err("unexpected end of expression");
        };
        match tok {
            Tok::Num(v) => {
                self.pos += 1;
                Ok(Expr::Num(v))
            }
            Tok::Op('(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(')') {
                    return self.err("expected `)`");
                }
                Ok(e)
            }
            Tok::Ident(name) => {
                self.pos += 1;
                if self.peek() == Some(&Tok::Op('(')) {
                    let func = match name.as_str() {
                        "sqrt" => Func::Sqrt,
                        "abs" => Func::Abs,
                        "exp" => Func::Exp,
                        _ => return self.err(format!("unknown function `{name}`")),
                    };
                    self.pos += 1;
                    let arg = self.expr()?;
                    if !self.eat(')') {
                        return self.err("expected `)`");
                    }
                    return Ok(Expr::Call(func, Box::new(arg)));
                }
                if let Some(idx) = variable_index(&name, self.n) {
                    if idx >= self.n {
                        return self.err(format!("variable `{name}` exceeds state dimension {}", self.n));
                    }
                    return Ok(Expr::Var(idx));
                }
                Ok(Expr::Param(name))
            }
            Tok::Op(c) => self.err(format!("unexpected `{c}`")),
        }
    }
}

fn variable_index(name: &str, n: usize) -> Option<usize> {
    if name == "x" && n == 1 {
        return Some(0);
    }
    let digits = name.strip_prefix('x')?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let k: usize = digits.parse().ok()?;
    if k == 0 {
        return None;
    }
    Some(k - 1)
}

impl Expr {
    /// Parses an expression in the state variables `x1..xn` (plain `x` is
    /// accepted when `n = 1`). Any other identifier is a parameter.
    pub fn parse(src: &str, n: usize) -> Result<Expr, PolyError> {
        let toks = tokenize(src)?;
        let mut p = Parser {
            toks,
            pos: 0,
            n,
            src,
        };
        let e = p.expr()?;
        if p.pos != p.toks.len() {
            return p.err("trailing input");
        }
        Ok(e)
    }

    /// Names of all parameters referenced, sorted and deduplicated.
    pub fn params(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_params(&mut out);
        out.sort();
        out.dedup();
        out
    }

    fn collect_params(&self, out: &mut Vec<String>) {
        match self {
            Expr::Param(s) => out.push(s.clone()),
            Expr::Num(_) | Expr::Var(_) => {}
            Expr::Neg(a) | Expr::Call(_, a) => a.collect_params(out),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.collect_params(out);
                b.collect_params(out);
            }
        }
    }

    /// Lowers the expression to a polynomial in `n` variables. Division and
    /// function calls are only allowed on constant subexpressions; powers
    /// need a non-negative integer exponent.
    pub fn to_polynomial(&self, n: usize, params: &HashMap<String, f64>) -> Result<Polynomial, PolyError> {
        let constant = |p: &Polynomial, what: &str| -> Result<f64, PolyError> {
            match p.degree() {
                None => Ok(0.0),
                Some(0) => Ok(p.coeff(&super::Monomial::one(n))),
                Some(_) => Err(PolyError::NotPolynomial(format!("{what} must be constant"))),
            }
        };
        Ok(match self {
            Expr::Num(v) => Polynomial::constant(n, *v),
            Expr::Var(i) => Polynomial::var(n, *i),
            Expr::Param(name) => {
                let v = params
                    .get(name)
                    .ok_or_else(|| PolyError::UnknownSymbol(name.clone()))?;
                Polynomial::constant(n, *v)
            }
            Expr::Neg(a) => -&a.to_polynomial(n, params)?,
            Expr::Add(a, b) => &a.to_polynomial(n, params)? + &b.to_polynomial(n, params)?,
            Expr::Sub(a, b) => &a.to_polynomial(n, params)? - &b.to_polynomial(n, params)?,
            Expr::Mul(a, b) => &a.to_polynomial(n, params)? * &b.to_polynomial(n, params)?,
            Expr::Div(a, b) => {
                let d = constant(&b.to_polynomial(n, params)?, "divisor")?;
                if d == 0.0 {
                    return Err(PolyError::NotPolynomial("division by zero".into()));
                }
                a.to_polynomial(n, params)?.scale(1.0 / d)
            }
            Expr::Pow(a, b) => {
                let e = constant(&b.to_polynomial(n, params)?, "exponent")?;
                if e < 0.0 || e.fract() != 0.0 || e > 64.0 {
                    return Err(PolyError::NotPolynomial(format!(
                        "exponent {e} is not a small non-negative integer"
                    )));
                }
                a.to_polynomial(n, params)?.powi(e as u32)
            }
            Expr::Call(f, a) => {
                let v = constant(&a.to_polynomial(n, params)?, "function argument")?;
                Polynomial::constant(n, apply(*f, v))
            }
        })
    }

    /// Pointwise evaluation.
    pub fn eval(&self, x: &[f64], params: &HashMap<String, f64>) -> Result<f64, PolyError> {
        Ok(match self {
            Expr::Num(v) => *v,
            Expr::Var(i) => *x.get(*i).ok_or(PolyError::DimensionMismatch {
                expected: i + 1,
                got: x.len(),
            })?,
            Expr::Param(name) => *params
                .get(name)
                .ok_or_else(|| PolyError::UnknownSymbol(name.clone()))?,
            Expr::Neg(a) => -a.eval(x, params)?,
            Expr::Add(a, b) => a.eval(x, params)? + b.eval(x, params)?,
            Expr::Sub(a, b) => a.eval(x, params)? - b.eval(x, params)?,
            Expr::Mul(a, b) => a.eval(x, params)? * b.eval(x, params)?,
            Expr::Div(a, b) => a.eval(x, params)? / b.eval(x, params)?,
            Expr::Pow(a, b) => {
                let base = a.eval(x, params)?;
                let e = b.eval(x, params)?;
                if e.fract() == 0.0 && e.abs() < 64.0 {
                    base.powi(e as i32)
                } else {
                    base.powf(e)
                }
            }
            Expr::Call(f, a) => apply(*f, a.eval(x, params)?),
        })
    }
}

fn apply(f: Func, v: f64) -> f64 {
    match f {
        Func::Sqrt => v.sqrt(),
        Func::Abs => v.abs(),
        Func::Exp => v.exp(),
    }
}

/// Parses polynomial text (the canonical `c*x1^a*...` form or any
/// parameter-free expression) into a [`Polynomial`].
pub fn parse_polynomial(src: &str, n: usize) -> Result<Polynomial, PolyError> {
    Expr::parse(src, n)?.to_polynomial(n, &HashMap::new())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_canonical_text() {
        let p = parse_polynomial("-0.1*x1 - 0.1*x1^3", 1).unwrap();
        assert_eq!(p.to_string(), "-0.1*x1 - 0.1*x1^3");
        let q = parse_polynomial(&p.to_string(), 1).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn expands_products_and_powers() {
        let p = parse_polynomial("(x1 + x2)*(x1 - x2)", 2).unwrap();
        assert_eq!(p, parse_polynomial("x1^2 - x2^2", 2).unwrap());
        let c = parse_polynomial("(x1-x3)^3/10", 3).unwrap();
        assert_eq!(c.len(), 4);
    }

    #[test]
    fn parameters_substitute() {
        let e = Expr::parse("-(ks*(x1-x2))/mb", 2).unwrap();
        assert_eq!(e.params(), vec!["ks".to_string(), "mb".to_string()]);
        let params = HashMap::from([("ks".to_string(), 2.0), ("mb".to_string(), 4.0)]);
        let p = e.to_polynomial(2, &params).unwrap();
        assert_eq!(p, parse_polynomial("-0.5*x1 + 0.5*x2", 2).unwrap());
        assert!(matches!(
            e.to_polynomial(2, &HashMap::new()),
            Err(PolyError::UnknownSymbol(_))
        ));
    }

    #[test]
    fn rejects_non_polynomials() {
        assert!(parse_polynomial("1/x1", 1).is_err());
        assert!(parse_polynomial("x1^0.5", 1).is_err());
        assert!(parse_polynomial("sqrt(x1)", 1).is_err());
        assert!(parse_polynomial("x3", 2).is_err());
        assert!(parse_polynomial("x1 +", 1).is_err());
        assert!(parse_polynomial("x1 $ 2", 1).is_err());
    }

    #[test]
    fn evaluates_analytic_reference() {
        let e = Expr::parse("x^3/150 + sqrt(101*x^2 + 100)^3/15150 - 20/303", 1).unwrap();
        let v0 = e.eval(&[0.0], &HashMap::new()).unwrap();
        assert!(v0.abs() < 1e-15);
        let v1 = e.eval(&[1.0], &HashMap::new()).unwrap();
        let expect = 1.0 / 150.0 + 201f64.sqrt().powi(3) / 15150.0 - 20.0 / 303.0;
        assert!((v1 - expect).abs() < 1e-15);
    }

    #[test]
    fn scientific_notation() {
        let p = parse_polynomial("1e-3*x1 + 2.5E2", 1).unwrap();
        assert_eq!(p.coeff(&super::super::Monomial::var(1, 0)), 1e-3);
    }
}
