//! Bound expressions used in `<Constraint Range="[lo, hi]">`.
//!
//! The grammar is deliberately small: numeric literals, attribute
//! references, `+ - * /`, unary minus, parentheses and `^` with an integer
//! exponent. `^` binds tightest and is right-associative.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("unexpected character {0:?} at offset {1}")]
    UnexpectedChar(char, usize),
    #[error("unexpected end of expression")]
    UnexpectedEnd,
    #[error("unexpected token {0:?}")]
    UnexpectedToken(String),
    #[error("invalid number literal {0:?}")]
    BadNumber(String),
    #[error("unbound name {0:?}")]
    Unbound(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("exponent {0} is not an integer")]
    NonIntegerPower(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Ref(String),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
            BinOp::Pow => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '[' | ']')
}

fn tokenize(src: &str) -> Result<Vec<Token>, ExprError> {
    let chars: Vec<(usize, char)> = src.char_indices().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].1.is_ascii_digit() || chars[i].1 == '.') {
                i += 1;
            }
            // exponent suffix, e.g. 1e-3
            if i < chars.len() && matches!(chars[i].1, 'e' | 'E') {
                let mut j = i + 1;
                if j < chars.len() && matches!(chars[j].1, '+' | '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].1.is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].1.is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().map(|&(_, c)| c).collect();
            let value = text.parse::<f64>().map_err(|_| ExprError::BadNumber(text.clone()))?;
            tokens.push(Token::Num(value));
        } else if is_ident_start(c) {
            let start = i;
            while i < chars.len() && is_ident_char(chars[i].1) {
                i += 1;
            }
            tokens.push(Token::Ident(chars[start..i].iter().map(|&(_, c)| c).collect()));
        } else {
            match c {
                '+' | '-' | '*' | '/' | '^' => tokens.push(Token::Op(c)),
                '(' => tokens.push(Token::LParen),
                ')' => tokens.push(Token::RParen),
                _ => return Err(ExprError::UnexpectedChar(c, pos)),
            }
            i += 1;
        }
    }
    Ok(tokens)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        while let Some(Token::Op(c @ ('+' | '-'))) = self.peek() {
            let op = if *c == '+' { BinOp::Add } else { BinOp::Sub };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(Token::Op(c @ ('*' | '/'))) = self.peek() {
            let op = if *c == '*' { BinOp::Mul } else { BinOp::Div };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if let Some(Token::Op('-')) = self.peek() {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.primary()?;
        if let Some(Token::Op('^')) = self.peek() {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ExprError> {
        match self.next() {
            Some(Token::Num(v)) => Ok(Expr::Num(v)),
            Some(Token::Ident(name)) => Ok(Expr::Ref(name)),
            Some(Token::LParen) => {
                let inner = self.expr()?;
                match self.next() {
                    Some(Token::RParen) => Ok(inner),
                    Some(t) => Err(ExprError::UnexpectedToken(format!("{t:?}"))),
                    None => Err(ExprError::UnexpectedEnd),
                }
            }
            Some(t) => Err(ExprError::UnexpectedToken(format!("{t:?}"))),
            None => Err(ExprError::UnexpectedEnd),
        }
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr, ExprError> {
        let tokens = tokenize(src)?;
        let mut parser = Parser { tokens, pos: 0 };
        let expr = parser.expr()?;
        match parser.next() {
            None => Ok(expr),
            Some(t) => Err(ExprError::UnexpectedToken(format!("{t:?}"))),
        }
    }

    /// Evaluates against a name lookup.
    pub fn eval<F>(&self, lookup: &F) -> Result<f64, ExprError>
    where
        F: Fn(&str) -> Option<f64>,
    {
        match self {
            Expr::Num(v) => Ok(*v),
            Expr::Ref(name) => lookup(name).ok_or_else(|| ExprError::Unbound(name.clone())),
            Expr::Neg(inner) => Ok(-inner.eval(lookup)?),
            Expr::Bin(op, a, b) => {
                let a = a.eval(lookup)?;
                let b = b.eval(lookup)?;
                match op {
                    BinOp::Add => Ok(a + b),
                    BinOp::Sub => Ok(a - b),
                    BinOp::Mul => Ok(a * b),
                    BinOp::Div => {
                        if b == 0.0 {
                            Err(ExprError::DivisionByZero)
                        } else {
                            Ok(a / b)
                        }
                    }
                    BinOp::Pow => {
                        if b.fract() != 0.0 || b.abs() > i32::MAX as f64 {
                            return Err(ExprError::NonIntegerPower(b));
                        }
                        Ok(a.powi(b as i32))
                    }
                }
            }
        }
    }

    /// Names referenced anywhere in the expression.
    pub fn references(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_refs(&mut out);
        out
    }

    fn collect_refs(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Num(_) => {}
            Expr::Ref(name) => {
                out.insert(name.clone());
            }
            Expr::Neg(inner) => inner.collect_refs(out),
            Expr::Bin(_, a, b) => {
                a.collect_refs(out);
                b.collect_refs(out);
            }
        }
    }

    pub fn constant(&self) -> Option<f64> {
        match self {
            Expr::Num(v) => Some(*v),
            _ => None,
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, parent: u8) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Ref(name) => f.write_str(name),
            Expr::Neg(inner) => {
                f.write_str("-")?;
                inner.fmt_prec(f, 4)
            }
            Expr::Bin(op, a, b) => {
                let p = op.precedence();
                let wrap = p < parent;
                if wrap {
                    f.write_str("(")?;
                }
                // left operand of ^ and right operands of - and / need tighter binding
                let (lp, rp) = match op {
                    BinOp::Pow => (p + 1, p),
                    _ => (p, p + 1),
                };
                a.fmt_prec(f, lp)?;
                write!(f, " {} ", op.symbol())?;
                b.fmt_prec(f, rp)?;
                if wrap {
                    f.write_str(")")?;
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn eval_with(src: &str, bindings: &[(&str, f64)]) -> Result<f64, ExprError> {
        let lookup = |name: &str| bindings.iter().find(|(n, _)| *n == name).map(|(_, v)| *v);
        Expr::parse(src)?.eval(&lookup)
    }

    /// Second evaluator for cross-checking: shunting-yard to RPN, then a
    /// stack machine. Shares nothing with the recursive-descent parser.
    fn rpn_eval(src: &str, bindings: &[(&str, f64)]) -> f64 {
        let toks = tokenize(src).unwrap();
        let prec = |c: char| match c {
            '+' | '-' => 1,
            '*' | '/' => 2,
            '^' => 3,
            _ => 0,
        };
        let mut out: Vec<Token> = Vec::new();
        let mut ops: Vec<Token> = Vec::new();
        for t in toks {
            match t {
                Token::Num(_) | Token::Ident(_) => out.push(t),
                Token::Op(c) => {
                    while let Some(Token::Op(top)) = ops.last() {
                        let right_assoc = c == '^';
                        if prec(*top) > prec(c) || (prec(*top) == prec(c) && !right_assoc) {
                            out.push(ops.pop().unwrap());
                        } else {
                            break;
                        }
                    }
                    ops.push(Token::Op(c));
                }
                Token::LParen => ops.push(t),
                Token::RParen => {
                    while let Some(top) = ops.pop() {
                        if top == Token::LParen {
                            break;
                        }
                        out.push(top);
                    }
                }
            }
        }
        while let Some(top) = ops.pop() {
            out.push(top);
        }
        let mut stack: Vec<f64> = Vec::new();
        for t in out {
            match t {
                Token::Num(v) => stack.push(v),
                Token::Ident(n) => stack.push(bindings.iter().find(|(k, _)| *k == n).unwrap().1),
                Token::Op(c) => {
                    let b = stack.pop().unwrap();
                    let a = stack.pop().unwrap();
                    stack.push(match c {
                        '+' => a + b,
                        '-' => a - b,
                        '*' => a * b,
                        '/' => a / b,
                        '^' => a.powi(b as i32),
                        _ => unreachable!(),
                    });
                }
                _ => unreachable!(),
            }
        }
        stack.pop().unwrap()
    }

    #[test]
    fn square_of_reference() {
        assert_eq!(eval_with("n^2", &[("n", 5.0)]).unwrap(), 25.0);
    }

    #[test]
    fn bare_reference() {
        assert_eq!(eval_with("grid_size", &[("grid_size", 7.0)]).unwrap(), 7.0);
    }

    #[test]
    fn precedence_matches_hand_evaluation() {
        // 2*3 - 1 = 5
        assert_eq!(eval_with("2*n - 1", &[("n", 3.0)]).unwrap(), 5.0);
        assert_eq!(rpn_eval("2*n - 1", &[("n", 3.0)]), 5.0);
        assert_eq!(eval_with("2^3^2", &[]).unwrap(), 512.0);
        assert_eq!(eval_with("10 - 4 - 3", &[]).unwrap(), 3.0);
        assert_eq!(eval_with("-(n + 1) * 2", &[("n", 2.0)]).unwrap(), -6.0);
    }

    #[test]
    fn errors() {
        assert_eq!(eval_with("m + 1", &[]), Err(ExprError::Unbound("m".into())));
        assert_eq!(eval_with("1 / (n - 3)", &[("n", 3.0)]), Err(ExprError::DivisionByZero));
        assert!(matches!(eval_with("2 ^ 0.5", &[]), Err(ExprError::NonIntegerPower(_))));
        assert!(Expr::parse("1 +").is_err());
        assert!(Expr::parse("(1").is_err());
        assert!(Expr::parse("1 $ 2").is_err());
        assert!(Expr::parse("1 2").is_err());
    }

    #[test]
    fn references_are_collected() {
        let e = Expr::parse("a * (b + a) - 3").unwrap();
        let refs: Vec<_> = e.references().into_iter().collect();
        assert_eq!(refs, vec!["a".to_string(), "b".to_string()]);
    }

    fn arb_expr_src() -> impl Strategy<Value = String> {
        let leaf = prop_oneof![
            (1u32..20).prop_map(|v| v.to_string()),
            Just("n".to_string()),
            Just("m".to_string()),
        ];
        leaf.prop_recursive(4, 24, 2, |inner| {
            prop_oneof![
                (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("{a} + {b}")),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("{a} - {b}")),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("{a} * {b}")),
                inner.clone().prop_map(|a| format!("({a})")),
                (inner.clone(), 0u32..3).prop_map(|(a, k)| format!("({a})^{k}")),
            ]
        })
    }

    proptest! {
        #[test]
        fn agrees_with_rpn_evaluator(src in arb_expr_src(), n in 1.0f64..9.0, m in 1.0f64..9.0) {
            let bindings = [("n", n), ("m", m)];
            let a = eval_with(&src, &bindings).unwrap();
            let b = rpn_eval(&src, &bindings);
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{src}: {a} vs {b}");
        }

        #[test]
        fn display_reparses_to_same_value(src in arb_expr_src(), n in 1.0f64..9.0, m in 1.0f64..9.0) {
            let bindings = [("n", n), ("m", m)];
            let e = Expr::parse(&src).unwrap();
            let printed = e.to_string();
            let a = eval_with(&src, &bindings).unwrap();
            let b = eval_with(&printed, &bindings).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{src} -> {printed}");
        }
    }
}
