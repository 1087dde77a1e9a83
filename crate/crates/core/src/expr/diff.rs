use super::{Expr, Node};

/// Unsimplified partial derivative with respect to `var`.
pub(super) fn derivative(e: &Expr, var: &str) -> Expr {
    if !e.depends_on(var) {
        return Expr::zero();
    }
    match e.node() {
        Node::Const(_) | Node::Param(_) => Expr::zero(),
        Node::Var(n) => {
            if &**n == var {
                Expr::one()
            } else {
                Expr::zero()
            }
        }
        Node::Sum(ts) => Expr::sum(ts.iter().map(|t| derivative(t, var)).collect()),
        Node::Product(fs) => {
            let mut terms = Vec::new();
            for (i, fi) in fs.iter().enumerate() {
                if !fi.depends_on(var) {
                    continue;
                }
                let mut factors: Vec<Expr> = Vec::with_capacity(fs.len());
                for (j, fj) in fs.iter().enumerate() {
                    if i != j {
                        factors.push(fj.clone());
                    }
                }
                factors.push(derivative(fi, var));
                terms.push(Expr::product(factors));
            }
            Expr::sum(terms)
        }
        Node::Quotient(a, b) => {
            let da = derivative(a, var);
            let db = derivative(b, var);
            (da * b - a * db) / b.powi(2)
        }
        Node::Power(b, ex) => {
            let db = derivative(b, var);
            if !ex.depends_on(var) {
                ex * b.pow(ex - Expr::one()) * db
            } else {
                let dex = derivative(ex, var);
                e * (dex * b.ln() + ex * db / b)
            }
        }
        Node::Exp(a) => e * derivative(a, var),
        Node::Log(a) => derivative(a, var) / a,
        Node::Neg(a) => -derivative(a, var),
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use crate::expr::{Expr, SymbolTable};

    fn table() -> SymbolTable {
        SymbolTable::new().with_params(["a", "alpha", "c1", "c3"])
    }

    #[test]
    fn constants_differentiate_to_zero() {
        let t = table();
        for src in ["3", "a", "exp(alpha)", "x"] {
            assert!(t.parse(src).unwrap().diff("t").is_zero(), "{src}");
        }
    }

    #[test]
    fn exponential_coefficient() {
        let t = table();
        let e = t.parse("exp(alpha*t)*x").unwrap();
        assert_eq!(e.diff("x"), t.parse("exp(alpha*t)").unwrap().simplify());
    }

    #[test]
    fn linear_time_coefficient() {
        let t = table();
        let tau = t.parse("2*c1*t + c3").unwrap();
        assert_eq!(tau.diff("t"), t.parse("2*c1").unwrap().simplify());
    }

    #[test]
    fn cubic_matches_central_difference() {
        let t = table();
        let e = t.parse("x^3 + t*x").unwrap();
        let d = e.diff("x");
        let at = |x: f64| {
            let p: HashMap<String, f64> = [("t".into(), 2.0), ("x".into(), x)].into();
            p
        };
        let exact = d.eval(&at(5.0)).unwrap();
        assert_eq!(exact, 77.0);
        let h = 1e-5;
        let fd = (e.eval(&at(5.0 + h)).unwrap() - e.eval(&at(5.0 - h)).unwrap()) / (2.0 * h);
        assert!(((fd - exact) / exact).abs() < 1e-6);
    }

    #[test]
    fn quotient_log_and_general_power() {
        let t = table();
        let point: HashMap<String, f64> = [("x".into(), 1.7), ("t".into(), 0.3), ("a".into(), 1.2)].into();
        type Derivative = fn(f64, f64, f64) -> f64;
        let cases: [(&str, Derivative); 3] = [
            ("a/x", |x, _, a| -a / (x * x)),
            ("log(x^2 + t)", |x, t, _| 2.0 * x / (x * x + t)),
            ("x^x", |x, _, _| x.powf(x) * (x.ln() + 1.0)),
        ];
        for (src, exact) in cases {
            let d = t.parse(src).unwrap().diff("x");
            let got = d.eval(&point).unwrap();
            let want = exact(1.7, 0.3, 1.2);
            assert!((got - want).abs() < 1e-12 * want.abs().max(1.0), "{src}: {got} vs {want}");
        }
        let e: Expr = t.parse("-x").unwrap();
        assert_eq!(e.diff("x"), Expr::int(-1));
    }
}
