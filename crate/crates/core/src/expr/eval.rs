//! Numeric evaluation: a direct tree walk, and a compiled stack program for
//! hot loops (path simulation, matrix assembly).

use thiserror::Error;

use super::{Expr, Node, Number};

#[derive(Clone, Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("unbound symbol '{0}'")]
    Unbound(String),
    #[error("division by zero in '{0}'")]
    DivisionByZero(String),
    #[error("logarithm of non-positive value in '{0}'")]
    LogDomain(String),
    #[error("non-real power in '{0}'")]
    PowerDomain(String),
    #[error("non-finite value in '{0}'")]
    NonFinite(String),
}

impl EvalError {
    pub fn is_domain(&self) -> bool {
        !matches!(self, EvalError::Unbound(_))
    }
}

fn power(e: &Expr, base: f64, exponent: f64, exp_const: Option<i64>) -> Result<f64, EvalError> {
    if base == 0.0 && exponent < 0.0 {
        return Err(EvalError::DivisionByZero(e.to_string()));
    }
    let v = match exp_const {
        Some(n) if n.unsigned_abs() <= i32::MAX as u64 => base.powi(n as i32),
        _ => {
            if base < 0.0 && exponent.fract() != 0.0 {
                return Err(EvalError::PowerDomain(e.to_string()));
            }
            base.powf(exponent)
        }
    };
    Ok(v)
}

fn finite(e: &Expr, v: f64) -> Result<f64, EvalError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EvalError::NonFinite(e.to_string()))
    }
}

pub(super) fn eval_tree(e: &Expr, lookup: &dyn Fn(&str) -> Option<f64>) -> Result<f64, EvalError> {
    let v = match e.node() {
        Node::Const(n) => n.to_f64(),
        Node::Var(n) | Node::Param(n) => lookup(n).ok_or_else(|| EvalError::Unbound(n.to_string()))?,
        Node::Sum(ts) => {
            let mut acc = 0.0;
            for t in ts {
                acc += eval_tree(t, lookup)?;
            }
            acc
        }
        Node::Product(fs) => {
            let mut acc = 1.0;
            for f in fs {
                acc *= eval_tree(f, lookup)?;
            }
            acc
        }
        Node::Quotient(a, b) => {
            let num = eval_tree(a, lookup)?;
            let den = eval_tree(b, lookup)?;
            if den == 0.0 {
                return Err(EvalError::DivisionByZero(e.to_string()));
            }
            num / den
        }
        Node::Power(b, ex) => {
            let base = eval_tree(b, lookup)?;
            let exponent = eval_tree(ex, lookup)?;
            power(e, base, exponent, ex.as_const().and_then(Number::as_integer))?
        }
        Node::Exp(a) => eval_tree(a, lookup)?.exp(),
        Node::Log(a) => {
            let v = eval_tree(a, lookup)?;
            if v <= 0.0 {
                return Err(EvalError::LogDomain(e.to_string()));
            }
            v.ln()
        }
        Node::Neg(a) => -eval_tree(a, lookup)?,
    };
    finite(e, v)
}

#[derive(Clone, Debug)]
enum Op {
    Const(f64),
    Load(usize),
    Add(usize),
    Mul(usize),
    /// Divide; index into the failure table.
    Div(usize),
    PowI(i32, usize),
    Pow(usize),
    Exp,
    Log(usize),
    Neg,
}

/// Expression lowered to a postfix program over a fixed slot layout.
#[derive(Clone, Debug)]
pub struct CompiledExpr {
    ops: Vec<Op>,
    // Subexpressions that can fail, for error messages.
    sites: Vec<Expr>,
    max_stack: usize,
    root: Expr,
}

impl CompiledExpr {
    pub fn new(e: &Expr, slots: &[&str]) -> Result<Self, EvalError> {
        let mut c = CompiledExpr { ops: Vec::new(), sites: Vec::new(), max_stack: 0, root: e.clone() };
        let mut depth = 0;
        c.emit(e, slots, &mut depth)?;
        Ok(c)
    }

    fn push_op(&mut self, op: Op, depth: &mut usize, delta: isize) {
        self.ops.push(op);
        *depth = (*depth as isize + delta) as usize;
        self.max_stack = self.max_stack.max(*depth);
    }

    fn site(&mut self, e: &Expr) -> usize {
        self.sites.push(e.clone());
        self.sites.len() - 1
    }

    fn emit(&mut self, e: &Expr, slots: &[&str], depth: &mut usize) -> Result<(), EvalError> {
        match e.node() {
            Node::Const(n) => self.push_op(Op::Const(n.to_f64()), depth, 1),
            Node::Var(n) | Node::Param(n) => {
                let idx = slots.iter().position(|s| *s == &**n).ok_or_else(|| EvalError::Unbound(n.to_string()))?;
                self.push_op(Op::Load(idx), depth, 1);
            }
            Node::Sum(ts) => {
                for t in ts {
                    self.emit(t, slots, depth)?;
                }
                self.push_op(Op::Add(ts.len()), depth, 1 - ts.len() as isize);
            }
            Node::Product(fs) => {
                for f in fs {
                    self.emit(f, slots, depth)?;
                }
                self.push_op(Op::Mul(fs.len()), depth, 1 - fs.len() as isize);
            }
            Node::Quotient(a, b) => {
                self.emit(a, slots, depth)?;
                self.emit(b, slots, depth)?;
                let s = self.site(e);
                self.push_op(Op::Div(s), depth, -1);
            }
            Node::Power(b, ex) => {
                self.emit(b, slots, depth)?;
                let s = self.site(e);
                match ex.as_const().and_then(Number::as_integer) {
                    Some(n) if n.unsigned_abs() <= i32::MAX as u64 => self.push_op(Op::PowI(n as i32, s), depth, 0),
                    _ => {
                        self.emit(ex, slots, depth)?;
                        self.push_op(Op::Pow(s), depth, -1);
                    }
                }
            }
            Node::Exp(a) => {
                self.emit(a, slots, depth)?;
                self.push_op(Op::Exp, depth, 0);
            }
            Node::Log(a) => {
                self.emit(a, slots, depth)?;
                let s = self.site(e);
                self.push_op(Op::Log(s), depth, 0);
            }
            Node::Neg(a) => {
                self.emit(a, slots, depth)?;
                self.push_op(Op::Neg, depth, 0);
            }
        }
        Ok(())
    }

    pub fn expr(&self) -> &Expr {
        &self.root
    }

    /// Evaluate with `slots[i]` bound to `values[i]`.
    pub fn eval(&self, values: &[f64]) -> Result<f64, EvalError> {
        let mut stack: Vec<f64> = Vec::with_capacity(self.max_stack);
        self.eval_in(values, &mut stack)
    }

    /// As [`eval`](Self::eval), reusing a caller-owned stack buffer.
    pub fn eval_in(&self, values: &[f64], stack: &mut Vec<f64>) -> Result<f64, EvalError> {
        stack.clear();
        for op in &self.ops {
            match *op {
                Op::Const(v) => stack.push(v),
                Op::Load(i) => stack.push(values[i]),
                Op::Add(n) => {
                    let start = stack.len() - n;
                    let s: f64 = stack[start..].iter().sum();
                    stack.truncate(start);
                    stack.push(s);
                }
                Op::Mul(n) => {
                    let start = stack.len() - n;
                    let p: f64 = stack[start..].iter().product();
                    stack.truncate(start);
                    stack.push(p);
                }
                Op::Div(site) => {
                    let den = stack.pop().unwrap();
                    let num = stack.pop().unwrap();
                    if den == 0.0 {
                        return Err(EvalError::DivisionByZero(self.sites[site].to_string()));
                    }
                    stack.push(num / den);
                }
                Op::PowI(n, site) => {
                    let b = stack.pop().unwrap();
                    if b == 0.0 && n < 0 {
                        return Err(EvalError::DivisionByZero(self.sites[site].to_string()));
                    }
                    stack.push(b.powi(n));
                }
                Op::Pow(site) => {
                    let ex = stack.pop().unwrap();
                    let b = stack.pop().unwrap();
                    stack.push(power(&self.sites[site], b, ex, None)?);
                }
                Op::Exp => {
                    let a = stack.pop().unwrap();
                    stack.push(a.exp());
                }
                Op::Log(site) => {
                    let a = stack.pop().unwrap();
                    if a <= 0.0 {
                        return Err(EvalError::LogDomain(self.sites[site].to_string()));
                    }
                    stack.push(a.ln());
                }
                Op::Neg => {
                    let a = stack.pop().unwrap();
                    stack.push(-a);
                }
            }
        }
        let v = stack.pop().unwrap_or(f64::NAN);
        finite(&self.root, v)
    }
}
