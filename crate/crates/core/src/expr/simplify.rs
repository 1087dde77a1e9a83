//! Terminating rewrite system.
//!
//! Each pass rebuilds the tree bottom-up into a canonical shape: negation
//! and quotients become products with `-1` and `^-1`, sums and products
//! are flattened and sorted, constants are folded, identical terms and
//! identical bases are collected, and `exp`/`log` pairs cancel. Passes
//! repeat until nothing changes, bounded by [`MAX_PASSES`].

use std::collections::BTreeMap;

use super::{Expr, Node, Number};

pub const MAX_PASSES: usize = 64;

pub(super) fn simplify(e: &Expr) -> Expr {
    let mut current = e.clone();
    for _ in 0..MAX_PASSES {
        let next = pass(&current);
        if next == current {
            return next;
        }
        current = next;
    }
    current
}

fn pass(e: &Expr) -> Expr {
    match e.node() {
        Node::Const(_) | Node::Var(_) | Node::Param(_) => e.clone(),
        Node::Neg(a) => make_mul(vec![Expr::int(-1), pass(a)]),
        Node::Quotient(a, b) => make_mul(vec![pass(a), make_pow(pass(b), Expr::int(-1))]),
        Node::Sum(ts) => make_add(ts.iter().map(pass).collect()),
        Node::Product(fs) => make_mul(fs.iter().map(pass).collect()),
        Node::Power(b, ex) => make_pow(pass(b), pass(ex)),
        Node::Exp(a) => make_exp(pass(a)),
        Node::Log(a) => make_log(pass(a)),
    }
}

/// Split a term into numeric coefficient and the remaining factor.
fn split_coefficient(term: &Expr) -> (Number, Expr) {
    match term.node() {
        Node::Const(n) => (*n, Expr::one()),
        Node::Product(fs) => match fs.first().and_then(Expr::as_const) {
            Some(c) => (c, Expr::product(fs[1..].to_vec())),
            None => (Number::int(1), term.clone()),
        },
        _ => (Number::int(1), term.clone()),
    }
}

pub(super) fn make_add(terms: Vec<Expr>) -> Expr {
    let mut flat = Vec::with_capacity(terms.len());
    for t in terms {
        match t.node() {
            Node::Sum(inner) => flat.extend(inner.iter().cloned()),
            _ => flat.push(t),
        }
    }
    let mut constant = Number::int(0);
    let mut groups: BTreeMap<Expr, Number> = BTreeMap::new();
    for t in flat {
        let (c, rest) = split_coefficient(&t);
        if rest.is_one() {
            constant = constant.add(c);
            continue;
        }
        let slot = groups.entry(rest).or_insert(Number::int(0));
        *slot = slot.add(c);
    }
    let mut out = Vec::with_capacity(groups.len() + 1);
    if !constant.is_zero() {
        out.push(Expr::constant(constant));
    }
    for (rest, c) in groups {
        if c.is_zero() {
            continue;
        }
        if c.is_one() {
            out.push(rest);
        } else {
            out.push(make_mul(vec![Expr::constant(c), rest]));
        }
    }
    Expr::sum(out)
}

pub(super) fn make_mul(factors: Vec<Expr>) -> Expr {
    let mut flat = Vec::with_capacity(factors.len());
    for f in factors {
        match f.node() {
            Node::Product(inner) => flat.extend(inner.iter().cloned()),
            _ => flat.push(f),
        }
    }
    let mut coefficient = Number::int(1);
    let mut exp_args: Vec<Expr> = Vec::new();
    let mut powers: BTreeMap<Expr, Vec<Expr>> = BTreeMap::new();
    for f in flat {
        match f.node() {
            Node::Const(n) => coefficient = coefficient.mul(*n),
            Node::Exp(a) => exp_args.push(a.clone()),
            Node::Power(b, ex) => powers.entry(b.clone()).or_default().push(ex.clone()),
            _ => powers.entry(f.clone()).or_default().push(Expr::one()),
        }
    }
    if coefficient.is_zero() {
        return Expr::zero();
    }
    let mut out = Vec::new();
    for (base, exps) in powers {
        let ex = make_add(exps);
        if ex.is_zero() {
            continue;
        }
        let p = if ex.is_one() { base } else { make_pow(base, ex) };
        match p.node() {
            Node::Const(n) => coefficient = coefficient.mul(*n),
            _ => out.push(p),
        }
    }
    if !exp_args.is_empty() {
        let e = make_exp(make_add(exp_args));
        match e.node() {
            Node::Const(n) => coefficient = coefficient.mul(*n),
            _ => out.push(e),
        }
    }
    if coefficient.is_zero() {
        return Expr::zero();
    }
    // A numeric coefficient is distributed over the only sum factor, so that
    // like terms inside can meet terms outside and grouping does not matter.
    if !coefficient.is_one() {
        let mut sums = out.iter().enumerate().filter(|(_, f)| matches!(f.node(), Node::Sum(_)));
        if let (Some((i, f)), None) = (sums.next(), sums.next()) {
            let Node::Sum(ts) = f.node() else { unreachable!() };
            let spread = make_add(ts.iter().map(|t| make_mul(vec![Expr::constant(coefficient), t.clone()])).collect());
            if out.len() == 1 {
                return spread;
            }
            out[i] = spread;
            return make_mul(out);
        }
    }
    if !coefficient.is_one() || out.is_empty() {
        out.insert(0, Expr::constant(coefficient));
    }
    Expr::product(out)
}

pub(super) fn make_pow(base: Expr, ex: Expr) -> Expr {
    if ex.is_zero() {
        return Expr::one();
    }
    if ex.is_one() {
        return base;
    }
    if base.is_one() {
        return Expr::one();
    }
    if let (Some(b), Some(n)) = (base.as_const(), ex.as_const()) {
        if b.is_zero() && !n.is_negative() {
            return Expr::zero();
        }
        // Symbolic roots of rationals are kept as written.
        let exact = matches!(b, Number::Float(_)) || matches!(n, Number::Float(_)) || n.as_integer().is_some();
        if exact {
            if let Some(v) = b.pow(n) {
                return Expr::constant(v);
            }
        }
    }
    let integer_exponent = ex.as_const().and_then(Number::as_integer);
    match base.node() {
        Node::Exp(a) => return make_exp(make_mul(vec![a.clone(), ex])),
        Node::Power(b2, e2) if integer_exponent.is_some() => {
            return make_pow(b2.clone(), make_mul(vec![e2.clone(), ex]));
        }
        Node::Product(fs) if integer_exponent.is_some() => {
            return make_mul(fs.iter().map(|f| make_pow(f.clone(), ex.clone())).collect());
        }
        Node::Sum(ts) if integer_exponent.is_some() => {
            if let Some((num, den)) = content(ts) {
                let inverse = Expr::ratio(den, num);
                let primitive = make_add(ts.iter().map(|t| make_mul(vec![inverse.clone(), t.clone()])).collect());
                let scale =
                    Number::ratio(num, den).pow(ex.as_const().expect("integer exponent")).expect("rational power");
                return make_mul(vec![Expr::constant(scale), Expr::new(Node::Power(primitive, ex))]);
            }
        }
        _ => {}
    }
    Expr::new(Node::Power(base, ex))
}

/// Rational content of a sum, signed so the first term of the primitive
/// part is positive; `None` when it is already 1 or a coefficient is a float.
fn content(terms: &[Expr]) -> Option<(i64, i64)> {
    let mut num = 0i64;
    let mut den = 1i64;
    for t in terms {
        let Number::Rational(r) = split_coefficient(t).0 else {
            return None;
        };
        num = num_integer::gcd(num, *r.numer());
        den = num_integer::lcm(den, *r.denom());
    }
    if split_coefficient(terms.first()?).0.is_negative() {
        num = -num;
    }
    (num != 0 && (num, den) != (1, 1)).then_some((num, den))
}

pub(super) fn make_exp(arg: Expr) -> Expr {
    if arg.is_zero() {
        return Expr::one();
    }
    match arg.node() {
        Node::Log(u) => u.clone(),
        Node::Const(Number::Float(v)) => Expr::constant(v.exp()),
        _ => Expr::new(Node::Exp(arg)),
    }
}

pub(super) fn make_log(arg: Expr) -> Expr {
    if arg.is_one() {
        return Expr::zero();
    }
    match arg.node() {
        Node::Exp(u) => u.clone(),
        Node::Const(Number::Float(v)) if *v > 0.0 => Expr::constant(v.ln()),
        _ => Expr::new(Node::Log(arg)),
    }
}

#[cfg(test)]
mod tests {
    use crate::expr::{Expr, SymbolTable};

    fn table() -> SymbolTable {
        SymbolTable::new().with_params(["a", "b", "alpha", "beta"])
    }

    fn s(src: &str) -> Expr {
        table().parse(src).unwrap().simplify()
    }

    #[test]
    fn identities() {
        assert_eq!(s("x + 0"), Expr::var("x"));
        assert_eq!(s("1*x"), Expr::var("x"));
        assert_eq!(s("0*exp(x)"), Expr::zero());
        assert_eq!(s("x^1"), Expr::var("x"));
        assert_eq!(s("x^0"), Expr::one());
        assert_eq!(s("x - x"), Expr::zero());
        assert_eq!(s("x/x"), Expr::one());
    }

    #[test]
    fn exponentials_merge() {
        assert_eq!(s("exp(alpha*t)*exp(alpha*t)"), s("exp(2*alpha*t)"));
        assert_eq!(s("exp(t)*exp(-t)"), Expr::one());
        assert_eq!(s("exp(a*t)^2"), s("exp(2*a*t)"));
        assert_eq!(s("exp(log(x))"), Expr::var("x"));
        assert_eq!(s("log(exp(x + t))"), s("t + x"));
    }

    #[test]
    fn constant_folding_is_exact() {
        assert_eq!(s("1/2 + 1/2"), Expr::one());
        assert_eq!(s("2^-2"), Expr::ratio(1, 4));
        assert_eq!(s("(2*alpha)/(2*alpha)"), Expr::one());
        assert_eq!(s("1/2*x + x/2"), Expr::var("x"));
    }

    #[test]
    fn like_terms_collect() {
        assert_eq!(s("a*x + x*a"), s("2*a*x"));
        assert_eq!(s("x*x*x"), s("x^3"));
        assert_eq!(s("t + t"), s("2*t"));
    }

    #[test]
    fn idempotent_on_samples() {
        for src in ["-exp(-2*alpha*t)/(2*alpha)", "exp(-alpha*t)*(x + beta/alpha)", "(a*x + b)^2/x", "log(x*t)"] {
            let once = s(src);
            assert_eq!(once.simplify(), once, "{src}");
        }
    }
}
