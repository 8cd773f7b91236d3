//! Recursive-descent parser for the expression grammar:
//!
//! ```text
//! expr   := term (('+'|'-') term)*
//! term   := factor (('*'|'/') factor)*
//! factor := base ('^' integer)?
//! base   := number | ident | '(' expr ')' | '-' base | func '(' expr ')'
//! func   := 'sin' | 'cos' | 'exp' | 'sqrt' ; ident := 'pi' | variable-name
//! ```
//!
//! Operators are left-associative, `^` binds tighter than `*` `/` which bind
//! tighter than `+` `-`. Errors carry the byte offset they occurred at. A
//! nesting-depth limit keeps adversarial input from overflowing the stack.

use super::ScalarExpr;
use thiserror::Error;

const MAX_DEPTH: usize = 200;
// Left-associative chains grow the tree depth without growing the parser
// recursion, so the total production count is capped as well; the recursive
// consumers (differentiate, evaluate, printing) stay within stack limits.
const MAX_NODES: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    UnexpectedChar(char),
    UnexpectedEnd,
    TrailingInput,
    InvalidNumber,
    InvalidExponent,
    UnknownIdentifier(String),
    MissingParen,
    TooDeep,
    TooLarge,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{} at byte {offset}", self.describe())]
pub struct ParseError {
    pub offset: usize,
    pub kind: ParseErrorKind,
}

impl ParseError {
    fn describe(&self) -> String {
        match &self.kind {
            ParseErrorKind::UnexpectedChar(c) => format!("unexpected character `{c}`"),
            ParseErrorKind::UnexpectedEnd => "unexpected end of input".to_owned(),
            ParseErrorKind::TrailingInput => "unexpected trailing input".to_owned(),
            ParseErrorKind::InvalidNumber => "invalid numeric literal".to_owned(),
            ParseErrorKind::InvalidExponent => "invalid integer exponent".to_owned(),
            ParseErrorKind::UnknownIdentifier(name) => format!("unknown identifier `{name}`"),
            ParseErrorKind::MissingParen => "expected `)`".to_owned(),
            ParseErrorKind::TooDeep => "expression too deeply nested".to_owned(),
            ParseErrorKind::TooLarge => "expression too large".to_owned(),
        }
    }
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
    vars: &'a [&'a str],
    nodes: usize,
}

/// Parses `text` over the given chart variables.
pub fn parse(text: &str, vars: &[&str]) -> Result<ScalarExpr, ParseError> {
    let mut p = Parser {
        bytes: text.as_bytes(),
        pos: 0,
        vars,
        nodes: 0,
    };
    let e = p.expr(0)?;
    p.skip_ws();
    if p.pos < p.bytes.len() {
        return Err(p.err_here(ParseErrorKind::TrailingInput));
    }
    Ok(e)
}

impl<'a> Parser<'a> {
    fn err_here(&self, kind: ParseErrorKind) -> ParseError {
        ParseError {
            offset: self.pos,
            kind,
        }
    }

    fn charge_node(&mut self) -> Result<(), ParseError> {
        self.nodes += 1;
        if self.nodes > MAX_NODES {
            return Err(self.err_here(ParseErrorKind::TooLarge));
        }
        Ok(())
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

    fn expr(&mut self, depth: usize) -> Result<ScalarExpr, ParseError> {
        if depth > MAX_DEPTH {
            return Err(self.err_here(ParseErrorKind::TooDeep));
        }
        let mut acc = self.term(depth + 1)?;
        while let Some(c) = self.peek() {
            match c {
                b'+' => {
                    self.pos += 1;
                    self.charge_node()?;
                    acc = ScalarExpr::add(acc, self.term(depth + 1)?);
                }
                b'-' => {
                    self.pos += 1;
                    self.charge_node()?;
                    acc = ScalarExpr::sub(acc, self.term(depth + 1)?);
                }
                _ => break,
            }
        }
        Ok(acc)
    }

    fn term(&mut self, depth: usize) -> Result<ScalarExpr, ParseError> {
        if depth > MAX_DEPTH {
            return Err(self.err_here(ParseErrorKind::TooDeep));
        }
        let mut acc = self.factor(depth + 1)?;
        while let Some(c) = self.peek() {
            match c {
                b'*' => {
                    self.pos += 1;
                    self.charge_node()?;
                    acc = ScalarExpr::mul(acc, self.factor(depth + 1)?);
                }
                b'/' => {
                    self.pos += 1;
                    self.charge_node()?;
                    acc = ScalarExpr::div(acc, self.factor(depth + 1)?);
                }
                _ => break,
            }
        }
        Ok(acc)
    }

    fn factor(&mut self, depth: usize) -> Result<ScalarExpr, ParseError> {
        if depth > MAX_DEPTH {
            return Err(self.err_here(ParseErrorKind::TooDeep));
        }
        let base = self.base(depth + 1)?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let k = self.integer()?;
            return Ok(ScalarExpr::powi(base, k));
        }
        Ok(base)
    }

    fn base(&mut self, depth: usize) -> Result<ScalarExpr, ParseError> {
        if depth > MAX_DEPTH {
            return Err(self.err_here(ParseErrorKind::TooDeep));
        }
        self.charge_node()?;
        match self.peek() {
            None => Err(self.err_here(ParseErrorKind::UnexpectedEnd)),
            Some(b'-') => {
                self.pos += 1;
                Ok(ScalarExpr::neg(self.base(depth + 1)?))
            }
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr(depth + 1)?;
                if self.peek() != Some(b')') {
                    return Err(self.err_here(ParseErrorKind::MissingParen));
                }
                self.pos += 1;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.ident(depth),
            Some(c) => Err(self.err_here(ParseErrorKind::UnexpectedChar(c as char))),
        }
    }

    fn number(&mut self) -> Result<ScalarExpr, ParseError> {
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.bytes.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
        }
        if matches!(self.bytes.get(self.pos), Some(b'e') | Some(b'E')) {
            // Only consume the exponent marker when an actual exponent follows,
            // so that `2e` fails cleanly instead of eating the `e`.
            let mut probe = self.pos + 1;
            if matches!(self.bytes.get(probe), Some(b'+') | Some(b'-')) {
                probe += 1;
            }
            if self.bytes.get(probe).is_some_and(u8::is_ascii_digit) {
                self.pos = probe;
                while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
            }
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos]).expect("ascii slice");
        let value: f64 = text.parse().map_err(|_| ParseError {
            offset: start,
            kind: ParseErrorKind::InvalidNumber,
        })?;
        if !value.is_finite() {
            return Err(ParseError {
                offset: start,
                kind: ParseErrorKind::InvalidNumber,
            });
        }
        Ok(ScalarExpr::constant(value))
    }

    fn integer(&mut self) -> Result<i32, ParseError> {
        self.skip_ws();
        let start = self.pos;
        if self.bytes.get(self.pos) == Some(&b'-') {
            self.pos += 1;
        }
        let digits_start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos == digits_start {
            return Err(ParseError {
                offset: start,
                kind: ParseErrorKind::InvalidExponent,
            });
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos]).expect("ascii slice");
        text.parse().map_err(|_| ParseError {
            offset: start,
            kind: ParseErrorKind::InvalidExponent,
        })
    }

    fn ident(&mut self, depth: usize) -> Result<ScalarExpr, ParseError> {
        let start = self.pos;
        while self.pos < self.bytes.len()
            && (self.bytes[self.pos].is_ascii_alphanumeric() || self.bytes[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.bytes[start..self.pos]).expect("ascii slice");
        match name {
            "pi" => Ok(ScalarExpr::pi()),
            "sin" | "cos" | "exp" | "sqrt" => {
                if self.peek() != Some(b'(') {
                    return Err(self.err_here(ParseErrorKind::UnexpectedEnd));
                }
                self.pos += 1;
                let arg = self.expr(depth + 1)?;
                if self.peek() != Some(b')') {
                    return Err(self.err_here(ParseErrorKind::MissingParen));
                }
                self.pos += 1;
                Ok(match name {
                    "sin" => arg.sin(),
                    "cos" => arg.cos(),
                    "exp" => arg.exp(),
                    _ => arg.sqrt(),
                })
            }
            _ if self.vars.contains(&name) => Ok(ScalarExpr::var(name)),
            _ => Err(ParseError {
                offset: start,
                kind: ParseErrorKind::UnknownIdentifier(name.to_owned()),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::{is_zero, SampleDomain, ScalarExpr};
    use super::*;

    const R4: [&str; 4] = ["x1", "x2", "y1", "y2"];
    const KT: [&str; 4] = ["x1", "x2", "x3", "x4"];

    #[test]
    fn single_token_variable() {
        assert_eq!(parse("x2", &R4).unwrap(), ScalarExpr::var("x2"));
    }

    #[test]
    fn function_of_product() {
        let e = parse("sin(2*pi*x4)", &KT).unwrap();
        let expect = (ScalarExpr::constant(2.0) * ScalarExpr::pi() * ScalarExpr::var("x4")).sin();
        assert_eq!(e, expect);
    }

    #[test]
    fn unbalanced_paren_reports_offset() {
        let err = parse("(x1+", &R4).unwrap_err();
        assert_eq!(err.offset, 4);
        assert_eq!(err.kind, ParseErrorKind::UnexpectedEnd);
    }

    #[test]
    fn unknown_identifier_reports_name_and_offset() {
        let err = parse("x1 + q7", &R4).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UnknownIdentifier("q7".into()));
        assert_eq!(err.offset, 5);
    }

    #[test]
    fn precedence_and_associativity() {
        // 1 - x1 - x2 is (1 - x1) - x2, and ^ binds over * over +.
        let e = parse("1 - x1 - x2", &R4).unwrap();
        let v = e
            .evaluate(
                &[("x1", 5.0), ("x2", 3.0)]
                    .iter()
                    .map(|(k, v)| ((*k).to_owned(), *v))
                    .collect(),
            )
            .unwrap();
        assert_eq!(v, -7.0);
        let e = parse("2*x1^2 + 1", &R4).unwrap();
        let expect = ScalarExpr::constant(2.0) * ScalarExpr::var("x1").pow(2) + ScalarExpr::one();
        assert_eq!(e, expect);
    }

    #[test]
    fn unary_minus_binds_before_power() {
        // Per the grammar, -x1^2 parses as (-x1)^2.
        let e = parse("-x1^2", &R4).unwrap();
        assert_eq!(e, ScalarExpr::neg(ScalarExpr::var("x1")).pow(2));
    }

    #[test]
    fn no_implicit_multiplication() {
        let err = parse("2pi", &KT).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::TrailingInput);
        assert_eq!(err.offset, 1);
    }

    #[test]
    fn rejects_nonfinite_literal() {
        assert_eq!(
            parse("1e999", &R4).unwrap_err().kind,
            ParseErrorKind::InvalidNumber
        );
    }

    #[test]
    fn depth_limit_is_an_error_not_a_crash() {
        let s = "(".repeat(100_000);
        let err = parse(&s, &R4).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::TooDeep);
    }

    #[test]
    fn size_limit_covers_flat_chains() {
        // Left-associative chains deepen the tree without parser recursion;
        // the node budget keeps the recursive consumers safe.
        let s = vec!["x1"; 60_000].join("+");
        let err = parse(&s, &R4).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::TooLarge);
    }

    #[test]
    fn print_parse_round_trip_samples() {
        for src in [
            "x1 + 2*x2 - y1/(1 + y2^2)",
            "sin(2*pi*x1)*exp(x2) - sqrt(2 + cos(y1))",
            "-(x1^3) + (x1 + y1)^2",
            "1/2 - 0.125*x1^-2",
        ] {
            let e = parse(src, &R4).unwrap();
            let printed = e.to_string();
            let reparsed = parse(&printed, &R4).unwrap();
            assert_eq!(e, reparsed, "round trip changed `{src}` -> `{printed}`");
            assert_eq!(printed, reparsed.to_string());
        }
    }

    #[test]
    fn printed_difference_of_parses_is_zero() {
        let dom = SampleDomain::unit(&R4);
        let e = parse("(x1 - y1)*(x1 + y1)", &R4).unwrap();
        let again = parse(&e.to_string(), &R4).unwrap();
        assert!(is_zero(&(e - again), &dom).unwrap());
    }
}
