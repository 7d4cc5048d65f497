//! Recursive-descent parser.
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | factor
//! factor := atom ('^' unary)?
//! atom   := number | ident | ident '(' expr (',' expr)? ')' | '(' expr ')'
//! ```
//!
//! Functions: `exp`, `log`, and `integral(g[, upper])` for `∫_0^upper g dt`.
//! `x`, `t`, `w` and `y` are variables; any other identifier is a parameter.
//! Decimal literals are exact rationals; literals with an exponent part are
//! doubles.

use thiserror::Error;

use super::{Expr, Node, Number, Var};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: expected {}, found {found}", expected.join(" or "))]
    Syntax { offset: usize, expected: Vec<String>, found: String },
    #[error("unknown function `{name}` at byte {offset}")]
    UnknownFunction { name: String, offset: usize },
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(Number),
    Ident(String),
    Op(char),
    End,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    /// Returns the token and its starting offset.
    fn next(&mut self) -> Result<(Tok, usize), ParseError> {
        self.skip_ws();
        let start = self.pos;
        let Some(&c) = self.src.get(self.pos) else {
            return Ok((Tok::End, start));
        };
        if c.is_ascii_digit() || (c == b'.' && self.src.get(self.pos + 1).is_some_and(u8::is_ascii_digit)) {
            return self.number(start).map(|n| (Tok::Num(n), start));
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            while self
                .src
                .get(self.pos)
                .is_some_and(|b| b.is_ascii_alphanumeric() || *b == b'_')
            {
                self.pos += 1;
            }
            let s = std::str::from_utf8(&self.src[start..self.pos]).unwrap().to_string();
            return Ok((Tok::Ident(s), start));
        }
        if b"+-*/^(),".contains(&c) {
            self.pos += 1;
            return Ok((Tok::Op(c as char), start));
        }
        Err(ParseError::Syntax {
            offset: start,
            expected: vec!["number".into(), "identifier".into(), "operator".into()],
            found: format!("`{}`", c as char),
        })
    }

    fn number(&mut self, start: usize) -> Result<Number, ParseError> {
        let digits = |lx: &mut Self| {
            while lx.src.get(lx.pos).is_some_and(u8::is_ascii_digit) {
                lx.pos += 1;
            }
        };
        digits(self);
        let int_end = self.pos;
        let mut frac = (int_end, int_end);
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            let fs = self.pos;
            digits(self);
            frac = (fs, self.pos);
        }
        let mut is_float = false;
        if matches!(self.src.get(self.pos), Some(b'e') | Some(b'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+') | Some(b'-')) {
                self.pos += 1;
            }
            if self.src.get(self.pos).is_some_and(u8::is_ascii_digit) {
                digits(self);
                is_float = true;
            } else {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        if is_float {
            return text.parse::<f64>().map(Number::Float).map_err(|_| ParseError::Syntax {
                offset: start,
                expected: vec!["number".into()],
                found: format!("`{text}`"),
            });
        }
        let int_part = std::str::from_utf8(&self.src[start..int_end]).unwrap();
        let frac_part = std::str::from_utf8(&self.src[frac.0..frac.1]).unwrap();
        let all = format!("{int_part}{frac_part}");
        let exact = all.parse::<i128>().ok().and_then(|num| {
            let den = 10i128.checked_pow(frac_part.len() as u32)?;
            Some(Number::ratio(num, den))
        });
        Ok(exact.unwrap_or_else(|| Number::Float(text.parse().unwrap_or(f64::NAN))))
    }
}

struct Parser<'a> {
    lexer: Lexer<'a>,
    tok: Tok,
    offset: usize,
}

impl<'a> Parser<'a> {
    fn advance(&mut self) -> Result<(), ParseError> {
        let (tok, offset) = self.lexer.next()?;
        self.tok = tok;
        self.offset = offset;
        Ok(())
    }

    fn found(&self) -> String {
        match &self.tok {
            Tok::Num(n) => format!("number `{n}`"),
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Op(c) => format!("`{c}`"),
            Tok::End => "end of input".into(),
        }
    }

    fn error(&self, expected: &[&str]) -> ParseError {
        ParseError::Syntax {
            offset: self.offset,
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: self.found(),
        }
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        if self.tok == Tok::Op(c) {
            self.advance()
        } else {
            Err(self.error(&[&format!("`{c}`")]))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut terms = vec![self.term()?];
        loop {
            match self.tok {
                Tok::Op('+') => {
                    self.advance()?;
                    terms.push(self.term()?);
                }
                Tok::Op('-') => {
                    self.advance()?;
                    terms.push(-self.term()?);
                }
                _ => break,
            }
        }
        Ok(if terms.len() == 1 { terms.pop().unwrap() } else { Expr::sum(terms) })
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut factors = vec![self.unary()?];
        loop {
            match self.tok {
                Tok::Op('*') => {
                    self.advance()?;
                    factors.push(self.unary()?);
                }
                Tok::Op('/') => {
                    self.advance()?;
                    factors.push(self.unary()?.recip());
                }
                _ => break,
            }
        }
        Ok(if factors.len() == 1 { factors.pop().unwrap() } else { Expr::product(factors) })
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.tok == Tok::Op('-') {
            self.advance()?;
            return Ok(-self.unary()?);
        }
        self.factor()
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.tok == Tok::Op('^') {
            self.advance()?;
            let exp = self.unary()?;
            return Ok(Expr::new(Node::Power(base, exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.tok.clone() {
            Tok::Num(n) => {
                self.advance()?;
                Ok(Expr::constant(n))
            }
            Tok::Op('(') => {
                self.advance()?;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Ident(name) => {
                let at = self.offset;
                self.advance()?;
                if self.tok == Tok::Op('(') {
                    self.advance()?;
                    let arg = self.expr()?;
                    let e = match name.as_str() {
                        "exp" => arg.exp(),
                        "log" => arg.ln(),
                        "integral" => {
                            let upper = if self.tok == Tok::Op(',') {
                                self.advance()?;
                                self.expr()?
                            } else {
                                Expr::t()
                            };
                            Expr::new(Node::Integral { integrand: arg, upper })
                        }
                        _ => return Err(ParseError::UnknownFunction { name, offset: at }),
                    };
                    self.expect(')')?;
                    return Ok(e);
                }
                Ok(match Var::from_name(&name) {
                    Some(v) => Expr::var(v),
                    None => Expr::param(&name),
                })
            }
            _ => Err(self.error(&["number", "identifier", "`(`", "`-`"])),
        }
    }
}

/// Parses `source` into an (unsimplified) expression tree.
pub fn parse(source: &str) -> Result<Expr, ParseError> {
    let mut p = Parser { lexer: Lexer { src: source.as_bytes(), pos: 0 }, tok: Tok::End, offset: 0 };
    p.advance()?;
    let e = p.expr()?;
    if p.tok != Tok::End {
        return Err(p.error(&["operator", "end of input"]));
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> Expr {
        parse(s).unwrap()
    }

    fn prm(s: &str) -> Expr {
        Expr::param(s)
    }

    #[test]
    fn logistic_drift_tree() {
        let expected = Expr::sum(vec![
            Expr::product(vec![prm("A"), Expr::x()]),
            -Expr::product(vec![prm("B"), Expr::x().pow(Expr::int(2))]),
        ]);
        assert_eq!(p("A*x - B*x^2"), expected);
    }

    #[test]
    fn function_application() {
        assert_eq!(p("x*log(x)"), Expr::product(vec![Expr::x(), Expr::x().ln()]));
    }

    #[test]
    fn nested_exponent_tree() {
        let expected = Expr::product(vec![
            (-Expr::product(vec![prm("k"), Expr::w()])).exp(),
            Expr::x().pow(Expr::sum(vec![
                Expr::int(1),
                Expr::product(vec![prm("k"), prm("S0").pow(Expr::int(-1))]),
            ])),
        ]);
        assert_eq!(p("exp(-(k*w)) * x^(1 + k/S0)"), expected);
    }

    #[test]
    fn literals() {
        assert_eq!(p("0.5"), Expr::rational(1, 2));
        assert_eq!(p("1.5e-3"), Expr::float(1.5e-3));
        assert_eq!(p("2 ^ -1").simplify(), Expr::rational(1, 2));
    }

    #[test]
    fn power_is_right_associative_and_binds_tighter_than_minus() {
        assert_eq!(p("-x^2").simplify(), p("-1*(x^2)").simplify());
        assert_eq!(p("2^3^2").simplify(), Expr::int(512));
    }

    #[test]
    fn syntax_errors_carry_offset_and_expectations() {
        match parse("x + * 2") {
            Err(ParseError::Syntax { offset, expected, .. }) => {
                assert_eq!(offset, 4);
                assert!(expected.iter().any(|e| e == "number"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse("(x"), Err(ParseError::Syntax { offset: 2, .. })));
        assert!(matches!(parse("x y"), Err(ParseError::Syntax { offset: 2, .. })));
    }

    #[test]
    fn unknown_function() {
        assert_eq!(
            parse("1 + sin(x)"),
            Err(ParseError::UnknownFunction { name: "sin".into(), offset: 4 })
        );
    }
}
