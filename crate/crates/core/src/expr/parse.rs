//! Recursive-descent parser.
//!
//! ```text
//! expr     := term (('+' | '-') term)*
//! term     := factor (('*' | '/') factor)*
//! factor   := '-' factor | base ('^' exponent)?
//! exponent := factor
//! base     := number | ident | '(' expr ')' | 'exp(' expr ')' | 'log(' expr ')'
//! ```
//!
//! Integer literals become exact rationals; literals with a decimal point
//! or exponent become doubles.

use std::fmt;

use thiserror::Error;

use super::{Expr, Node, Number, SymbolTable};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax,
    UnknownSymbol(String),
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub struct ParseError {
    /// Character offset into the input.
    pub position: usize,
    pub kind: ParseErrorKind,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "at position {}: {}", self.position, self.message)
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(Number),
    Ident(String),
    Op(char),
    End,
}

struct Lexer {
    toks: Vec<(Tok, usize)>,
}

fn lex(text: &str) -> Result<Lexer, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(char::is_ascii_digit)) {
            let start = i;
            let mut is_float = false;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            if i < chars.len() && chars[i] == '.' {
                is_float = true;
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    is_float = true;
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let lit: String = chars[start..i].iter().collect();
            let num = if is_float {
                lit.parse::<f64>().map(Number::Float).ok()
            } else {
                lit.parse::<i64>().map(Number::int).ok()
            };
            match num {
                Some(n) => toks.push((Tok::Num(n), start)),
                None => return Err(syntax(start, format!("malformed number '{lit}'"))),
            }
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            toks.push((Tok::Ident(chars[start..i].iter().collect()), start));
        } else if "+-*/^()".contains(c) {
            toks.push((Tok::Op(c), i));
            i += 1;
        } else {
            return Err(syntax(i, format!("unexpected character '{c}'")));
        }
    }
    toks.push((Tok::End, chars.len()));
    Ok(Lexer { toks })
}

fn syntax(position: usize, message: String) -> ParseError {
    ParseError { position, kind: ParseErrorKind::Syntax, message }
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    symbols: &'a SymbolTable,
}

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        if *self.peek() == Tok::Op(c) {
            self.bump();
            Ok(())
        } else {
            Err(syntax(self.offset(), format!("expected '{c}'")))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut terms = vec![self.term()?];
        loop {
            match self.peek() {
                Tok::Op('+') => {
                    self.bump();
                    terms.push(self.term()?);
                }
                Tok::Op('-') => {
                    self.bump();
                    let t = self.term()?;
                    terms.push(Expr::new(Node::Neg(t)));
                }
                _ => break,
            }
        }
        Ok(Expr::sum(terms))
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut current = self.factor()?;
        // Factors joined by '*' accumulate into one flat product; a '/' closes it.
        let mut open_product: Option<Vec<Expr>> = None;
        loop {
            match self.peek() {
                Tok::Op('*') => {
                    self.bump();
                    let rhs = self.factor()?;
                    match open_product.as_mut() {
                        Some(v) => v.push(rhs),
                        None => open_product = Some(vec![current.clone(), rhs]),
                    }
                }
                Tok::Op('/') => {
                    self.bump();
                    let rhs = self.factor()?;
                    let lhs = match open_product.take() {
                        Some(v) => Expr::new(Node::Product(v)),
                        None => current.clone(),
                    };
                    current = Expr::new(Node::Quotient(lhs, rhs));
                }
                _ => break,
            }
        }
        Ok(match open_product {
            Some(v) => Expr::new(Node::Product(v)),
            None => current,
        })
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Op('-') {
            self.bump();
            let inner = self.factor()?;
            return Ok(Expr::new(Node::Neg(inner)));
        }
        let base = self.base()?;
        if *self.peek() == Tok::Op('^') {
            self.bump();
            let exponent = self.factor()?;
            return Ok(Expr::new(Node::Power(base, exponent)));
        }
        Ok(base)
    }

    fn base(&mut self) -> Result<Expr, ParseError> {
        let at = self.offset();
        match self.bump() {
            Tok::Num(n) => Ok(Expr::new(Node::Const(n))),
            Tok::Op('(') => {
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if (name == "exp" || name == "log") && *self.peek() == Tok::Op('(') {
                    self.bump();
                    let arg = self.expr()?;
                    self.expect(')')?;
                    return Ok(if name == "exp" { arg.exp() } else { arg.ln() });
                }
                if self.symbols.is_variable(&name) {
                    Ok(Expr::var(&name))
                } else if self.symbols.is_param(&name) {
                    Ok(Expr::param(&name))
                } else {
                    Err(ParseError {
                        position: at,
                        kind: ParseErrorKind::UnknownSymbol(name.clone()),
                        message: format!("unknown symbol '{name}'"),
                    })
                }
            }
            Tok::End => Err(syntax(at, "unexpected end of input".into())),
            Tok::Op(c) => Err(syntax(at, format!("unexpected '{c}'"))),
        }
    }
}

pub(super) fn parse(text: &str, symbols: &SymbolTable) -> Result<Expr, ParseError> {
    let lexer = lex(text)?;
    let mut p = Parser { toks: lexer.toks, pos: 0, symbols };
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return Err(syntax(p.offset(), "unexpected trailing input".into()));
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> SymbolTable {
        SymbolTable::new().with_params(["a", "b", "alpha", "beta"])
    }

    #[test]
    fn affine_drift() {
        let e = parse("a*x + b", &table()).unwrap();
        let want = Expr::sum(vec![Expr::product(vec![Expr::param("a"), Expr::var("x")]), Expr::param("b")]);
        assert_eq!(e, want);
    }

    #[test]
    fn exponential_with_flat_product() {
        let e = parse("exp(2*alpha*t)", &table()).unwrap();
        let want = Expr::product(vec![Expr::int(2), Expr::param("alpha"), Expr::var("t")]).exp();
        assert_eq!(e, want);
    }

    #[test]
    fn quotient_drift() {
        let e = parse("a/x", &table()).unwrap();
        assert_eq!(e, Expr::new(Node::Quotient(Expr::param("a"), Expr::var("x"))));
    }

    #[test]
    fn literals() {
        assert_eq!(parse("3", &table()).unwrap(), Expr::int(3));
        assert_eq!(parse("0.5", &table()).unwrap(), Expr::constant(0.5));
        assert_eq!(parse("1e-5", &table()).unwrap(), Expr::constant(1e-5));
        assert_eq!(parse("2.5E2", &table()).unwrap(), Expr::constant(250.0));
    }

    #[test]
    fn unary_minus_and_right_associative_power() {
        let e = parse("-x^2^t", &table()).unwrap();
        let x = Expr::var("x");
        assert_eq!(e, -x.pow(Expr::int(2).pow(Expr::var("t"))));
        let e = parse("x^-1", &table()).unwrap();
        assert_eq!(e, Expr::var("x").pow(-Expr::int(1)));
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = parse("a*(x + 1", &table()).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::Syntax);
        assert_eq!(err.position, 8);
        let err = parse("x + * 2", &table()).unwrap_err();
        assert_eq!(err.position, 4);
        let err = parse("x $ 2", &table()).unwrap_err();
        assert_eq!(err.position, 2);
        assert!(parse("x y", &table()).is_err());
    }

    #[test]
    fn unknown_symbol_is_rejected() {
        let err = parse("c*x", &table()).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UnknownSymbol("c".into()));
        assert_eq!(err.position, 0);
        let err = parse("sin(x)", &table()).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UnknownSymbol("sin".into()));
    }
}
