use thiserror::Error;

use super::{BinaryOp, Constant, Expr, UnaryOp};

#[derive(Clone, Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: {message} (expected one of: {})", expected.join(", "))]
    Syntax {
        offset: usize,
        message: String,
        expected: Vec<&'static str>,
    },
    #[error("unknown function `{name}` at byte {offset}")]
    UnknownFunction { name: String, offset: usize },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match self {
            ParseError::Syntax { offset, .. } | ParseError::UnknownFunction { offset, .. } => {
                *offset
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    LParen,
    RParen,
    Comma,
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    Lt,
    Le,
    Gt,
    Ge,
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::End => "end of input".to_string(),
            other => format!("`{}`", other.symbol()),
        }
    }

    fn symbol(&self) -> &'static str {
        match self {
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::Comma => ",",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
            Tok::Slash => "/",
            Tok::Caret => "^",
            Tok::Lt => "<",
            Tok::Le => "<=",
            Tok::Gt => ">",
            Tok::Ge => ">=",
            Tok::Num(_) | Tok::Ident(_) | Tok::End => "",
        }
    }
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let tok = match c {
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b',' => Tok::Comma,
            b'+' => Tok::Plus,
            b'-' => Tok::Minus,
            b'*' => Tok::Star,
            b'/' => Tok::Slash,
            b'^' => Tok::Caret,
            b'<' | b'>' => {
                let eq = bytes.get(i + 1) == Some(&b'=');
                if eq {
                    i += 1;
                }
                match (c, eq) {
                    (b'<', false) => Tok::Lt,
                    (b'<', true) => Tok::Le,
                    (_, false) => Tok::Gt,
                    (_, true) => Tok::Ge,
                }
            }
            b'0'..=b'9' | b'.' => {
                let mut j = i;
                while j < bytes.len() && (bytes[j].is_ascii_digit() || bytes[j] == b'.') {
                    j += 1;
                }
                if j < bytes.len() && (bytes[j] == b'e' || bytes[j] == b'E') {
                    let mut m = j + 1;
                    if m < bytes.len() && (bytes[m] == b'+' || bytes[m] == b'-') {
                        m += 1;
                    }
                    if m < bytes.len() && bytes[m].is_ascii_digit() {
                        while m < bytes.len() && bytes[m].is_ascii_digit() {
                            m += 1;
                        }
                        j = m;
                    }
                }
                let lit = &text[i..j];
                let v: f64 = lit.parse().map_err(|_| ParseError::Syntax {
                    offset: start,
                    message: format!("malformed number `{lit}`"),
                    expected: vec!["number"],
                })?;
                i = j;
                out.push((Tok::Num(v), start));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let mut j = i;
                while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_') {
                    j += 1;
                }
                out.push((Tok::Ident(text[i..j].to_string()), start));
                i = j;
                continue;
            }
            _ => {
                let ch = text[i..].chars().next().unwrap_or('?');
                return Err(ParseError::Syntax {
                    offset: start,
                    message: format!("unexpected character `{ch}`"),
                    expected: vec!["expression"],
                });
            }
        };
        out.push((tok, start));
        i += 1;
    }
    out.push((Tok::End, text.len()));
    Ok(out)
}

fn is_variable_name(name: &str) -> bool {
    if name == "k" {
        return true;
    }
    let mut chars = name.chars();
    matches!(chars.next(), Some('x' | 'y'))
        && name.len() > 1
        && chars.clone().all(|c| c.is_ascii_digit())
        && !name[1..].starts_with('0')
}

const ATOM_START: &[&str] = &["number", "variable", "constant", "function", "(", "-", "not"];

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
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

    fn peek_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn error(&self, message: impl Into<String>, expected: &[&'static str]) -> ParseError {
        ParseError::Syntax {
            offset: self.offset(),
            message: message.into(),
            expected: expected.to_vec(),
        }
    }

    fn expect(&mut self, tok: Tok) -> Result<(), ParseError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            let found = self.peek().describe();
            Err(self.error(format!("found {found}"), &[tok.symbol()]))
        }
    }

    fn or_expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.and_expr()?;
        while self.peek_keyword("or") {
            self.bump();
            let rhs = self.and_expr()?;
            lhs = Expr::binary(BinaryOp::Or, lhs, rhs);
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.not_expr()?;
        while self.peek_keyword("and") {
            self.bump();
            let rhs = self.not_expr()?;
            lhs = Expr::binary(BinaryOp::And, lhs, rhs);
        }
        Ok(lhs)
    }

    fn not_expr(&mut self) -> Result<Expr, ParseError> {
        if self.peek_keyword("not") {
            self.bump();
            let inner = self.not_expr()?;
            return Ok(Expr::unary(UnaryOp::Not, inner));
        }
        self.comparison()
    }

    fn comparison(&mut self) -> Result<Expr, ParseError> {
        let lhs = self.additive()?;
        let op = match self.peek() {
            Tok::Lt => BinaryOp::Lt,
            Tok::Le => BinaryOp::Le,
            Tok::Gt => BinaryOp::Gt,
            Tok::Ge => BinaryOp::Ge,
            _ => return Ok(lhs),
        };
        self.bump();
        let rhs = self.additive()?;
        if matches!(self.peek(), Tok::Lt | Tok::Le | Tok::Gt | Tok::Ge) {
            return Err(self.error(
                "comparisons do not chain; use `and`",
                &["and", "or", ")", "end of input"],
            ));
        }
        Ok(Expr::binary(op, lhs, rhs))
    }

    fn additive(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.multiplicative()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinaryOp::Add,
                Tok::Minus => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.multiplicative()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn multiplicative(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinaryOp::Mul,
                Tok::Slash => BinaryOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Minus {
            self.bump();
            let inner = self.unary()?;
            return Ok(Expr::unary(UnaryOp::Neg, inner));
        }
        self.power()
    }

    // `^` is right-associative and binds tighter than unary minus, but its
    // exponent may itself carry a sign: `-2^2 = -4`, `2^-1 = 0.5`.
    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if *self.peek() == Tok::Caret {
            self.bump();
            let exponent = self.unary()?;
            return Ok(Expr::binary(BinaryOp::Pow, base, exponent));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let offset = self.offset();
        match self.bump() {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::LParen => {
                let inner = self.or_expr()?;
                self.expect(Tok::RParen)?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                if *self.peek() == Tok::LParen {
                    return self.call(name, offset);
                }
                if let Some(c) = Constant::from_name(&name) {
                    Ok(Expr::Const(c))
                } else if is_variable_name(&name) {
                    Ok(Expr::Var(name))
                } else {
                    Err(ParseError::Syntax {
                        offset,
                        message: format!("unknown identifier `{name}`"),
                        expected: ATOM_START.to_vec(),
                    })
                }
            }
            other => {
                self.pos -= usize::from(other != Tok::End);
                Err(ParseError::Syntax {
                    offset,
                    message: format!("found {}", other.describe()),
                    expected: ATOM_START.to_vec(),
                })
            }
        }
    }

    fn call(&mut self, name: String, offset: usize) -> Result<Expr, ParseError> {
        let unary = UnaryOp::FUNCTIONS
            .iter()
            .copied()
            .find(|op| op.function_name() == Some(name.as_str()));
        let binary = BinaryOp::from_function_name(&name);
        if unary.is_none() && binary.is_none() {
            return Err(ParseError::UnknownFunction { name, offset });
        }
        self.expect(Tok::LParen)?;
        let a = self.or_expr()?;
        let out = if let Some(op) = binary {
            self.expect(Tok::Comma)?;
            let b = self.or_expr()?;
            Expr::binary(op, a, b)
        } else {
            Expr::unary(unary.expect("checked above"), a)
        };
        self.expect(Tok::RParen)?;
        Ok(out)
    }
}

/// Parses an expression string.
pub fn parse(text: &str) -> Result<Expr, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0 };
    let e = p.or_expr()?;
    if *p.peek() != Tok::End {
        let found = p.peek().describe();
        return Err(p.error(
            format!("unexpected {found}"),
            &["operator", "and", "or", "end of input"],
        ));
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(name: &str) -> Expr {
        Expr::var(name)
    }

    #[test]
    fn single_variable() {
        assert_eq!(parse("x1").unwrap(), v("x1"));
    }

    #[test]
    fn abs_of_difference() {
        let e = parse("abs(x1 - x2)").unwrap();
        let want = Expr::unary(UnaryOp::Abs, Expr::binary(BinaryOp::Sub, v("x1"), v("x2")));
        assert_eq!(e, want);
    }

    #[test]
    fn sawtooth() {
        let e = parse("x1 - floor(1.5*x1)/1.5").unwrap();
        let floor = Expr::unary(
            UnaryOp::Floor,
            Expr::binary(BinaryOp::Mul, Expr::Num(1.5), v("x1")),
        );
        let want = Expr::binary(
            BinaryOp::Sub,
            v("x1"),
            Expr::binary(BinaryOp::Div, floor, Expr::Num(1.5)),
        );
        assert_eq!(e, want);
    }

    #[test]
    fn precedence_of_logic() {
        // or < and < not < comparisons
        let e = parse("not x1 < 1 and x2 > 0 or k >= 3").unwrap();
        match e {
            Expr::Binary(BinaryOp::Or, lhs, _) => match *lhs {
                Expr::Binary(BinaryOp::And, l, _) => {
                    assert!(matches!(*l, Expr::Unary(UnaryOp::Not, _)))
                }
                other => panic!("expected and, got {other:?}"),
            },
            other => panic!("expected or, got {other:?}"),
        }
    }

    #[test]
    fn scientific_literals() {
        assert_eq!(parse("1e-7").unwrap(), Expr::Num(1e-7));
        assert_eq!(parse("2.5E+3").unwrap(), Expr::Num(2500.0));
        assert_eq!(parse(".5").unwrap(), Expr::Num(0.5));
    }

    #[test]
    fn syntax_error_reports_offset() {
        let err = parse("x1 + * 2").unwrap_err();
        assert_eq!(err.offset(), 5);
        assert!(matches!(err, ParseError::Syntax { .. }));
    }

    #[test]
    fn missing_paren_reports_expected_token() {
        match parse("abs(x1").unwrap_err() {
            ParseError::Syntax {
                offset, expected, ..
            } => {
                assert_eq!(offset, 6);
                assert!(expected.contains(&")"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_function() {
        assert_eq!(
            parse("2 * cosh(x1)").unwrap_err(),
            ParseError::UnknownFunction {
                name: "cosh".into(),
                offset: 4
            }
        );
    }

    #[test]
    fn unknown_identifier_is_syntax_error() {
        assert!(matches!(
            parse("z1 + 1").unwrap_err(),
            ParseError::Syntax { offset: 0, .. }
        ));
        assert!(parse("x0").is_err());
    }

    #[test]
    fn chained_comparison_rejected() {
        assert!(parse("0 < x1 < 1").is_err());
    }

    #[test]
    fn trailing_garbage() {
        let err = parse("x1 x2").unwrap_err();
        assert_eq!(err.offset(), 3);
    }

    #[test]
    fn empty_input() {
        assert_eq!(parse("").unwrap_err().offset(), 0);
        assert_eq!(parse("   ").unwrap_err().offset(), 3);
    }
}
