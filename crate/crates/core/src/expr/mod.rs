//! Small computer-algebra kernel over scalar expressions.
//!
//! Expressions are immutable trees shared through [`Arc`], so cloning is
//! cheap and values can cross threads freely. The alphabet is closed:
//! constants, variables, parameters, sums, products, powers, quotients,
//! `exp`, `log` and negation.

mod diff;
mod eval;
mod parse;
mod print;
mod simplify;

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::ops;
use std::sync::Arc;

use num_rational::Rational64;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub use eval::{CompiledExpr, EvalError};
pub use parse::{ParseError, ParseErrorKind};

/// Names treated as independent variables unless a problem declares otherwise.
pub const DEFAULT_VARIABLES: [&str; 5] = ["t", "x", "y", "s", "eps"];

/// A numeric literal: exact rational when it came from integer arithmetic,
/// a double otherwise.
#[derive(Clone, Copy, Debug)]
pub enum Number {
    Rational(Rational64),
    Float(f64),
}

// Exact arithmetic that falls back to floats; not the operator traits.
#[allow(clippy::should_implement_trait)]
impl Number {
    pub fn int(n: i64) -> Self {
        Number::Rational(Rational64::from_integer(n))
    }

    pub fn ratio(num: i64, den: i64) -> Self {
        Number::Rational(Rational64::new(num, den))
    }

    pub fn to_f64(self) -> f64 {
        match self {
            Number::Rational(r) => r.to_f64().unwrap_or(f64::NAN),
            Number::Float(f) => f,
        }
    }

    pub fn is_zero(self) -> bool {
        match self {
            Number::Rational(r) => r.is_zero(),
            Number::Float(f) => f == 0.0,
        }
    }

    pub fn is_one(self) -> bool {
        match self {
            Number::Rational(r) => r.is_one(),
            Number::Float(f) => f == 1.0,
        }
    }

    pub fn is_negative(self) -> bool {
        match self {
            Number::Rational(r) => r.is_negative(),
            Number::Float(f) => f < 0.0,
        }
    }

    /// Integer value if the number is an exact integer.
    pub fn as_integer(self) -> Option<i64> {
        match self {
            Number::Rational(r) if r.is_integer() => Some(*r.numer()),
            _ => None,
        }
    }

    pub fn abs(self) -> Self {
        match self {
            Number::Rational(r) => Number::Rational(r.abs()),
            Number::Float(f) => Number::Float(f.abs()),
        }
    }

    pub fn add(self, other: Number) -> Number {
        use num_traits::CheckedAdd;
        match (self, other) {
            (Number::Rational(a), Number::Rational(b)) => match a.checked_add(&b) {
                Some(r) => Number::Rational(r),
                None => Number::Float(self.to_f64() + other.to_f64()),
            },
            _ => Number::Float(self.to_f64() + other.to_f64()),
        }
    }

    pub fn mul(self, other: Number) -> Number {
        use num_traits::CheckedMul;
        match (self, other) {
            (Number::Rational(a), Number::Rational(b)) => match a.checked_mul(&b) {
                Some(r) => Number::Rational(r),
                None => Number::Float(self.to_f64() * other.to_f64()),
            },
            _ => Number::Float(self.to_f64() * other.to_f64()),
        }
    }

    pub fn neg(self) -> Number {
        match self {
            Number::Rational(r) => Number::Rational(-r),
            Number::Float(f) => Number::Float(-f),
        }
    }

    /// `self^exp`, exact when both are rational and the exponent is an integer.
    /// Returns `None` when the result would not be real.
    pub fn pow(self, exp: Number) -> Option<Number> {
        if let (Number::Rational(b), Some(n)) = (self, exp.as_integer()) {
            if b.is_zero() && n < 0 {
                return None;
            }
            if n.unsigned_abs() <= 64 {
                if let Some(r) = checked_rational_pow(b, n) {
                    return Some(Number::Rational(r));
                }
            }
        }
        let (b, e) = (self.to_f64(), exp.to_f64());
        if b < 0.0 && e.fract() != 0.0 {
            return None;
        }
        if b == 0.0 && e < 0.0 {
            return None;
        }
        Some(Number::Float(b.powf(e)))
    }

    fn kind_rank(self) -> u8 {
        match self {
            Number::Rational(_) => 0,
            Number::Float(_) => 1,
        }
    }
}

fn checked_rational_pow(base: Rational64, n: i64) -> Option<Rational64> {
    use num_traits::CheckedMul;
    let mut acc = Rational64::one();
    for _ in 0..n.unsigned_abs() {
        acc = acc.checked_mul(&base)?;
    }
    if n < 0 {
        if acc.is_zero() {
            return None;
        }
        acc = acc.recip();
    }
    Some(acc)
}

impl PartialEq for Number {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Number {}

impl PartialOrd for Number {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Number {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Number::Rational(a), Number::Rational(b)) => a.cmp(b),
            (Number::Float(a), Number::Float(b)) => a.total_cmp(b),
            _ => self.to_f64().total_cmp(&other.to_f64()).then(self.kind_rank().cmp(&other.kind_rank())),
        }
    }
}

impl Hash for Number {
    fn hash<H: Hasher>(&self, state: &mut H) {
        match self {
            Number::Rational(r) => {
                0u8.hash(state);
                r.numer().hash(state);
                r.denom().hash(state);
            }
            Number::Float(f) => {
                1u8.hash(state);
                f.to_bits().hash(state);
            }
        }
    }
}

impl From<i64> for Number {
    fn from(n: i64) -> Self {
        Number::int(n)
    }
}

impl From<f64> for Number {
    fn from(f: f64) -> Self {
        Number::Float(f)
    }
}

/// One node of an expression tree.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Node {
    Const(Number),
    Var(Arc<str>),
    Param(Arc<str>),
    Sum(Vec<Expr>),
    Product(Vec<Expr>),
    Power(Expr, Expr),
    Quotient(Expr, Expr),
    Exp(Expr),
    Log(Expr),
    Neg(Expr),
}

impl Node {
    fn rank(&self) -> u8 {
        match self {
            Node::Const(_) => 0,
            Node::Param(_) => 1,
            Node::Var(_) => 2,
            Node::Power(..) => 3,
            Node::Product(_) => 4,
            Node::Sum(_) => 5,
            Node::Exp(_) => 6,
            Node::Log(_) => 7,
            Node::Quotient(..) => 8,
            Node::Neg(_) => 9,
        }
    }
}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        use Node::*;
        match (self, other) {
            (Const(a), Const(b)) => a.cmp(b),
            (Var(a), Var(b)) | (Param(a), Param(b)) => a.cmp(b),
            (Sum(a), Sum(b)) | (Product(a), Product(b)) => a.cmp(b),
            (Power(a1, a2), Power(b1, b2)) | (Quotient(a1, a2), Quotient(b1, b2)) => {
                a1.cmp(b1).then_with(|| a2.cmp(b2))
            }
            (Exp(a), Exp(b)) | (Log(a), Log(b)) | (Neg(a), Neg(b)) => a.cmp(b),
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

/// Immutable, cheaply clonable expression tree.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Expr(Arc<Node>);

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({self})")
    }
}

impl Expr {
    pub fn new(node: Node) -> Self {
        Expr(Arc::new(node))
    }

    pub fn node(&self) -> &Node {
        &self.0
    }

    pub fn constant(n: impl Into<Number>) -> Self {
        Expr::new(Node::Const(n.into()))
    }

    pub fn int(n: i64) -> Self {
        Expr::constant(Number::int(n))
    }

    pub fn ratio(num: i64, den: i64) -> Self {
        Expr::constant(Number::ratio(num, den))
    }

    pub fn zero() -> Self {
        Expr::int(0)
    }

    pub fn one() -> Self {
        Expr::int(1)
    }

    pub fn var(name: &str) -> Self {
        Expr::new(Node::Var(name.into()))
    }

    pub fn param(name: &str) -> Self {
        Expr::new(Node::Param(name.into()))
    }

    pub fn sum(terms: Vec<Expr>) -> Self {
        match terms.len() {
            0 => Expr::zero(),
            1 => terms.into_iter().next().unwrap(),
            _ => Expr::new(Node::Sum(terms)),
        }
    }

    pub fn product(factors: Vec<Expr>) -> Self {
        match factors.len() {
            0 => Expr::one(),
            1 => factors.into_iter().next().unwrap(),
            _ => Expr::new(Node::Product(factors)),
        }
    }

    pub fn pow(&self, exponent: Expr) -> Self {
        Expr::new(Node::Power(self.clone(), exponent))
    }

    pub fn powi(&self, n: i64) -> Self {
        self.pow(Expr::int(n))
    }

    pub fn exp(&self) -> Self {
        Expr::new(Node::Exp(self.clone()))
    }

    pub fn ln(&self) -> Self {
        Expr::new(Node::Log(self.clone()))
    }

    pub fn as_const(&self) -> Option<Number> {
        match self.node() {
            Node::Const(n) => Some(*n),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const().is_some_and(Number::is_zero)
    }

    pub fn is_one(&self) -> bool {
        self.as_const().is_some_and(Number::is_one)
    }

    /// Direct children, in order.
    pub fn children(&self) -> Vec<&Expr> {
        match self.node() {
            Node::Const(_) | Node::Var(_) | Node::Param(_) => Vec::new(),
            Node::Sum(v) | Node::Product(v) => v.iter().collect(),
            Node::Power(a, b) | Node::Quotient(a, b) => vec![a, b],
            Node::Exp(a) | Node::Log(a) | Node::Neg(a) => vec![a],
        }
    }

    /// True if the named variable or parameter occurs anywhere in the tree.
    pub fn depends_on(&self, name: &str) -> bool {
        match self.node() {
            Node::Var(n) | Node::Param(n) => &**n == name,
            Node::Const(_) => false,
            _ => self.children().into_iter().any(|c| c.depends_on(name)),
        }
    }

    /// Every variable and parameter name in the tree.
    pub fn symbols(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_symbols(&mut out);
        out
    }

    fn collect_symbols(&self, out: &mut BTreeSet<String>) {
        match self.node() {
            Node::Var(n) | Node::Param(n) => {
                out.insert(n.to_string());
            }
            _ => {
                for c in self.children() {
                    c.collect_symbols(out);
                }
            }
        }
    }

    /// Number of nodes in the tree.
    pub fn size(&self) -> usize {
        1 + self.children().into_iter().map(Expr::size).sum::<usize>()
    }

    /// Simultaneous substitution of variables or parameters.
    pub fn substitute(&self, bindings: &HashMap<String, Expr>) -> Expr {
        if bindings.is_empty() {
            return self.clone();
        }
        self.subst_inner(bindings)
    }

    fn subst_inner(&self, b: &HashMap<String, Expr>) -> Expr {
        match self.node() {
            Node::Var(n) | Node::Param(n) => b.get(&**n).cloned().unwrap_or_else(|| self.clone()),
            Node::Const(_) => self.clone(),
            Node::Sum(v) => Expr::new(Node::Sum(v.iter().map(|c| c.subst_inner(b)).collect())),
            Node::Product(v) => Expr::new(Node::Product(v.iter().map(|c| c.subst_inner(b)).collect())),
            Node::Power(a, e) => Expr::new(Node::Power(a.subst_inner(b), e.subst_inner(b))),
            Node::Quotient(a, e) => Expr::new(Node::Quotient(a.subst_inner(b), e.subst_inner(b))),
            Node::Exp(a) => Expr::new(Node::Exp(a.subst_inner(b))),
            Node::Log(a) => Expr::new(Node::Log(a.subst_inner(b))),
            Node::Neg(a) => Expr::new(Node::Neg(a.subst_inner(b))),
        }
    }

    /// Symbolic partial derivative, simplified.
    pub fn diff(&self, var: &str) -> Expr {
        diff::derivative(self, var).simplify()
    }

    /// Rewrite to the canonical simplified form (idempotent).
    pub fn simplify(&self) -> Expr {
        simplify::simplify(self)
    }

    /// Double-precision evaluation with every symbol bound by name.
    pub fn eval(&self, point: &HashMap<String, f64>) -> Result<f64, EvalError> {
        eval::eval_tree(self, &|name| point.get(name).copied())
    }

    /// Like [`Expr::eval`] with an arbitrary lookup.
    pub fn eval_with(&self, lookup: &dyn Fn(&str) -> Option<f64>) -> Result<f64, EvalError> {
        eval::eval_tree(self, lookup)
    }

    /// Compile over `[t, x]` with parameters fixed to the given values.
    pub fn compile_with_params(&self, params: &HashMap<String, f64>) -> Result<CompiledExpr, EvalError> {
        let b: HashMap<String, Expr> =
            self.symbols().into_iter().filter_map(|s| params.get(&s).map(|v| (s, Expr::constant(*v)))).collect();
        self.substitute(&b).compile(&["t", "x"])
    }

    /// Compile for fast repeated evaluation; `slots` fixes the argument order.
    pub fn compile(&self, slots: &[&str]) -> Result<CompiledExpr, EvalError> {
        CompiledExpr::new(self, slots)
    }
}

/// Closed set of identifiers accepted by the parser.
#[derive(Clone, Debug, Default)]
pub struct SymbolTable {
    variables: BTreeSet<String>,
    parameters: BTreeSet<String>,
}

impl SymbolTable {
    /// Table holding the default variables and no parameters.
    pub fn new() -> Self {
        SymbolTable {
            variables: DEFAULT_VARIABLES.iter().map(|s| s.to_string()).collect(),
            parameters: BTreeSet::new(),
        }
    }

    pub fn with_params<I, S>(mut self, params: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        for p in params {
            self.add_param(p);
        }
        self
    }

    pub fn add_param(&mut self, name: impl Into<String>) {
        self.parameters.insert(name.into());
    }

    pub fn add_variable(&mut self, name: impl Into<String>) {
        self.variables.insert(name.into());
    }

    pub fn is_variable(&self, name: &str) -> bool {
        self.variables.contains(name)
    }

    pub fn is_param(&self, name: &str) -> bool {
        self.parameters.contains(name)
    }

    pub fn params(&self) -> impl Iterator<Item = &str> {
        self.parameters.iter().map(String::as_str)
    }

    pub fn parse(&self, text: &str) -> Result<Expr, ParseError> {
        parse::parse(text, self)
    }
}

/// Parse with the default symbol table extended by `params`.
pub fn parse(text: &str, symbols: &SymbolTable) -> Result<Expr, ParseError> {
    parse::parse(text, symbols)
}

macro_rules! binary_op {
    ($trait:ident, $method:ident, $build:expr) => {
        impl ops::$trait<Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                $build(self, rhs)
            }
        }
        impl ops::$trait<&Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                $build(self.clone(), rhs.clone())
            }
        }
        impl ops::$trait<&Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                $build(self, rhs.clone())
            }
        }
        impl ops::$trait<Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                $build(self.clone(), rhs)
            }
        }
    };
}

binary_op!(Add, add, |a, b| Expr::new(Node::Sum(vec![a, b])));
binary_op!(Sub, sub, |a, b: Expr| Expr::new(Node::Sum(vec![a, -b])));
binary_op!(Mul, mul, |a, b| Expr::new(Node::Product(vec![a, b])));
binary_op!(Div, div, |a, b| Expr::new(Node::Quotient(a, b)));

impl ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::new(Node::Neg(self))
    }
}

impl ops::Neg for &Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::new(Node::Neg(self.clone()))
    }
}

impl From<i64> for Expr {
    fn from(n: i64) -> Self {
        Expr::int(n)
    }
}

impl From<f64> for Expr {
    fn from(f: f64) -> Self {
        Expr::constant(f)
    }
}

/// Round a double to a nearby small-denominator rational when one lies
/// within `tol`; used to present numerically solved coefficients exactly.
pub fn snap_number(value: f64, tol: f64) -> Number {
    if !value.is_finite() {
        return Number::Float(value);
    }
    for den in 1..=12i64 {
        let num = (value * den as f64).round();
        if num.abs() < 1e15 && (value - num / den as f64).abs() <= tol * value.abs().max(1.0) {
            return Number::Rational(Rational64::new(num as i64, den));
        }
    }
    Number::Float(value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_arithmetic_stays_exact() {
        let half = Number::ratio(1, 2);
        assert_eq!(half.add(half), Number::int(1));
        assert_eq!(half.mul(Number::int(4)), Number::int(2));
        assert_eq!(Number::int(2).pow(Number::int(-2)), Some(Number::ratio(1, 4)));
        assert_eq!(Number::int(0).pow(Number::int(-1)), None);
        assert!(matches!(half.add(Number::Float(0.5)), Number::Float(f) if f == 1.0));
    }

    #[test]
    fn substitute_with_empty_bindings_is_identity() {
        let e = Expr::param("a") * Expr::var("x") + Expr::param("b");
        assert_eq!(e.substitute(&HashMap::new()), e);
    }

    #[test]
    fn substitute_is_simultaneous() {
        let (x, y) = (Expr::var("x"), Expr::var("y"));
        let e = &x - &y;
        let b: HashMap<String, Expr> = [("x".to_string(), y.clone()), ("y".to_string(), x.clone())].into();
        assert_eq!(e.substitute(&b), &y - &x);
    }

    #[test]
    fn substitute_then_simplify_collects() {
        let t = Expr::var("t");
        let e = &t + Expr::var("y");
        let b: HashMap<String, Expr> = [("y".to_string(), t.clone())].into();
        assert_eq!(e.substitute(&b).simplify(), (Expr::int(2) * t).simplify());
    }

    #[test]
    fn snapping_recovers_small_rationals() {
        assert_eq!(snap_number(0.5000000000001, 1e-9), Number::ratio(1, 2));
        assert_eq!(snap_number(-2.0, 1e-9), Number::int(-2));
        assert!(matches!(snap_number(std::f64::consts::PI, 1e-9), Number::Float(_)));
    }
}
