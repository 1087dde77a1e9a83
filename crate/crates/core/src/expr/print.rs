//! Infix printer.
//!
//! Trees as produced by the parser print back to text that reparses to the
//! same tree. Canonical (simplified) trees get a friendlier rendering:
//! negative coefficients become subtraction and negative integer powers
//! become denominators.

use std::fmt;

use super::{Expr, Node, Number};

const SUM: u8 = 1;
const PRODUCT: u8 = 2;
const UNARY: u8 = 3;
const POWER: u8 = 4;
const ATOM: u8 = 5;

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render(self).0)
    }
}

fn at(e: &Expr, required: u8) -> String {
    let (s, p) = render(e);
    if p < required {
        format!("({s})")
    } else {
        s
    }
}

fn number(n: Number) -> (String, u8) {
    match n {
        Number::Rational(r) => {
            if r.is_integer() {
                let p = if *r.numer() < 0 { UNARY } else { ATOM };
                (r.numer().to_string(), p)
            } else {
                (format!("{}/{}", r.numer(), r.denom()), PRODUCT)
            }
        }
        Number::Float(v) => {
            let p = if v < 0.0 { UNARY } else { ATOM };
            (format!("{v:?}"), p)
        }
    }
}

fn negative_power(e: &Expr) -> Option<(&Expr, Number)> {
    if let Node::Power(b, ex) = e.node() {
        if let Some(n) = ex.as_const() {
            if n.is_negative() {
                return Some((b, n.neg()));
            }
        }
    }
    None
}

fn power_text(base: &Expr, exponent: Number) -> String {
    if exponent.is_one() {
        at(base, POWER)
    } else {
        let (s, p) = number(exponent);
        let s = if p < ATOM { format!("({s})") } else { s };
        format!("{}^{}", at(base, ATOM), s)
    }
}

/// Products needing the friendly rendering: leading negative or fractional
/// coefficient, or explicit negative powers.
fn pretty_product(factors: &[Expr]) -> bool {
    let lead = factors
        .first()
        .and_then(Expr::as_const)
        .is_some_and(|c| c.is_negative() || matches!(c, Number::Rational(r) if !r.is_integer()));
    lead || factors.iter().any(|f| negative_power(f).is_some())
}

/// Returns (is_negative, unsigned text) for a pretty product.
fn product_parts(factors: &[Expr]) -> (bool, String) {
    let mut negative = false;
    let mut num: Vec<String> = Vec::new();
    let mut den: Vec<String> = Vec::new();
    for (i, f) in factors.iter().enumerate() {
        if i == 0 {
            if let Some(c) = f.as_const() {
                negative = c.is_negative();
                let c = c.abs();
                match c {
                    Number::Rational(r) => {
                        if !r.numer().eq(&1) {
                            num.push(r.numer().to_string());
                        }
                        if !r.denom().eq(&1) {
                            den.push(r.denom().to_string());
                        }
                    }
                    Number::Float(_) => {
                        if !c.is_one() {
                            num.push(number(c).0);
                        }
                    }
                }
                continue;
            }
        }
        match negative_power(f) {
            Some((b, e)) => den.push(power_text(b, e)),
            None => num.push(at(f, POWER)),
        }
    }
    let mut s = if num.is_empty() { "1".to_string() } else { num.join("*") };
    match den.len() {
        0 => {}
        1 => {
            s.push('/');
            s.push_str(&den[0]);
        }
        _ => {
            s.push_str("/(");
            s.push_str(&den.join("*"));
            s.push(')');
        }
    }
    (negative, s)
}

fn render(e: &Expr) -> (String, u8) {
    match e.node() {
        Node::Const(n) => number(*n),
        Node::Var(n) | Node::Param(n) => (n.to_string(), ATOM),
        Node::Exp(a) => (format!("exp({})", render(a).0), ATOM),
        Node::Log(a) => (format!("log({})", render(a).0), ATOM),
        Node::Neg(a) => (format!("-{}", at(a, POWER)), UNARY),
        Node::Power(b, ex) => {
            if let Some((b, n)) = negative_power(e) {
                return (format!("1/{}", power_text(b, n)), PRODUCT);
            }
            (format!("{}^{}", at(b, ATOM), at(ex, POWER)), POWER)
        }
        Node::Quotient(a, b) => (format!("{}/{}", at(a, PRODUCT), at(b, POWER)), PRODUCT),
        Node::Product(fs) => {
            if pretty_product(fs) {
                let (neg, s) = product_parts(fs);
                if neg {
                    (format!("-{s}"), PRODUCT)
                } else {
                    (s, PRODUCT)
                }
            } else {
                let parts: Vec<String> = fs.iter().map(|f| at(f, POWER)).collect();
                (parts.join("*"), PRODUCT)
            }
        }
        Node::Sum(ts) => {
            // Canonical sums may lead with a negative coefficient; open with
            // a positive term instead. Parser output (leading Neg) is kept.
            let mut order: Vec<&Expr> = ts.iter().collect();
            let lead_negative = !matches!(ts[0].node(), Node::Neg(_)) && subtracted(&ts[0]).is_some();
            if lead_negative {
                if let Some(i) = ts.iter().position(|t| subtracted(t).is_none()) {
                    let t = order.remove(i);
                    order.insert(0, t);
                }
            }
            let mut s = String::new();
            for (i, t) in order.into_iter().enumerate() {
                if i == 0 {
                    s.push_str(&at(t, PRODUCT));
                    continue;
                }
                match subtracted(t) {
                    Some(text) => {
                        s.push_str(" - ");
                        s.push_str(&text);
                    }
                    None => {
                        s.push_str(" + ");
                        s.push_str(&at(t, PRODUCT));
                    }
                }
            }
            (s, SUM)
        }
    }
}

/// Text of `u` when a sum term is `-u` in some form.
fn subtracted(t: &Expr) -> Option<String> {
    match t.node() {
        Node::Neg(u) => Some(at(u, PRODUCT)),
        Node::Const(n) if n.is_negative() => Some(number(n.abs()).0),
        Node::Product(fs) if pretty_product(fs) => {
            let (neg, s) = product_parts(fs);
            neg.then_some(s)
        }
        _ => None,
    }
}
