//! Recursive-descent parser for the formula syntax.
//!
//! ```text
//! form ::= "true" | "false" | atom | "!" form | form ("&"|"|"|"->") form
//!        | "(" form ")" | ("exists"|"forall") ident "." form
//! atom ::= ident "(" term {"," term} ")" | term ("="|"<"|"<=") term
//! term ::= ident
//! ```
//!
//! Precedence: `!` binds tightest, then `&`, `|`, `->` (right-associative).
//! A quantifier body extends as far to the right as possible. After parsing,
//! bound variables are renamed apart so no shadowing remains.

use std::collections::BTreeSet;

use thiserror::Error;

use super::{CmpOp, Formula, Quantifier, Term};

#[derive(Debug, Error, PartialEq, Eq)]
#[error("parse error at byte {pos}: {msg}")]
pub struct ParseError {
    pub pos: usize,
    pub msg: String,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    LParen,
    RParen,
    Comma,
    Dot,
    Bang,
    Amp,
    Pipe,
    Arrow,
    Eq,
    Less,
    Leq,
    Eof,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer { src, pos: 0 }
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.src[self.pos..].chars().next() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn peek_pos(&mut self) -> usize {
        self.skip_ws();
        self.pos
    }

    fn next(&mut self) -> Result<(usize, Tok), ParseError> {
        self.skip_ws();
        let start = self.pos;
        let Some(c) = self.src[self.pos..].chars().next() else {
            return Ok((start, Tok::Eof));
        };
        let tok = match c {
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            ',' => Tok::Comma,
            '.' => Tok::Dot,
            '!' => Tok::Bang,
            '&' => Tok::Amp,
            '|' => Tok::Pipe,
            '=' => Tok::Eq,
            '-' => {
                if self.src[self.pos..].starts_with("->") {
                    self.pos += 2;
                    return Ok((start, Tok::Arrow));
                }
                return Err(ParseError { pos: start, msg: "expected `->`".into() });
            }
            '<' => {
                if self.src[self.pos..].starts_with("<=") {
                    self.pos += 2;
                    return Ok((start, Tok::Leq));
                }
                Tok::Less
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let rest = &self.src[self.pos..];
                let len = rest
                    .char_indices()
                    .find(|(_, c)| !(c.is_ascii_alphanumeric() || *c == '_'))
                    .map(|(i, _)| i)
                    .unwrap_or(rest.len());
                self.pos += len;
                return Ok((start, Tok::Ident(rest[..len].to_string())));
            }
            other => {
                return Err(ParseError { pos: start, msg: format!("unexpected character `{other}`") })
            }
        };
        self.pos += c.len_utf8();
        Ok((start, tok))
    }
}

struct Parser<'a> {
    lexer: Lexer<'a>,
    lookahead: Option<(usize, Tok)>,
}

impl<'a> Parser<'a> {
    fn peek(&mut self) -> Result<&(usize, Tok), ParseError> {
        if self.lookahead.is_none() {
            self.lookahead = Some(self.lexer.next()?);
        }
        Ok(self.lookahead.as_ref().unwrap())
    }

    fn bump(&mut self) -> Result<(usize, Tok), ParseError> {
        self.peek()?;
        Ok(self.lookahead.take().unwrap())
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), ParseError> {
        let (pos, tok) = self.bump()?;
        if tok == want {
            Ok(())
        } else {
            Err(ParseError { pos, msg: format!("expected {what}, found {tok:?}") })
        }
    }

    // implies (lowest) -> or -> and -> unary
    fn formula(&mut self) -> Result<Formula, ParseError> {
        self.implies()
    }

    fn implies(&mut self) -> Result<Formula, ParseError> {
        let lhs = self.or()?;
        if matches!(self.peek()?.1, Tok::Arrow) {
            self.bump()?;
            let rhs = self.implies()?;
            return Ok(lhs.implies(rhs));
        }
        Ok(lhs)
    }

    fn or(&mut self) -> Result<Formula, ParseError> {
        let mut lhs = self.and()?;
        while matches!(self.peek()?.1, Tok::Pipe) {
            self.bump()?;
            let rhs = self.and()?;
            lhs = lhs.or(rhs);
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Formula, ParseError> {
        let mut lhs = self.unary()?;
        while matches!(self.peek()?.1, Tok::Amp) {
            self.bump()?;
            let rhs = self.unary()?;
            lhs = lhs.and(rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Formula, ParseError> {
        let (pos, tok) = self.bump()?;
        match tok {
            Tok::Bang => Ok(self.unary()?.not()),
            Tok::LParen => {
                let f = self.formula()?;
                // `(term)` alone is not a formula, so this close paren always
                // belongs to the grouping.
                match self.peek()?.1.clone() {
                    Tok::RParen => {
                        self.bump()?;
                        // A parenthesized term may continue as a comparison:
                        // handled below only for bare idents, so nothing here.
                        Ok(f)
                    }
                    other => Err(ParseError {
                        pos: self.peek()?.0,
                        msg: format!("expected `)`, found {other:?}"),
                    }),
                }
            }
            Tok::Ident(id) => match id.as_str() {
                "true" => Ok(Formula::True),
                "false" => Ok(Formula::False),
                "exists" | "forall" => {
                    let (vpos, vtok) = self.bump()?;
                    let Tok::Ident(var) = vtok else {
                        return Err(ParseError { pos: vpos, msg: "expected variable".into() });
                    };
                    self.expect(Tok::Dot, "`.` after quantified variable")?;
                    let body = self.formula()?;
                    let q = if id == "exists" { Quantifier::Exists } else { Quantifier::Forall };
                    Ok(Formula::Quant(q, var, Box::new(body)))
                }
                _ => {
                    // Relation atom or comparison starting with an identifier.
                    match self.peek()?.1.clone() {
                        Tok::LParen => {
                            self.bump()?;
                            let mut terms = vec![self.term()?];
                            loop {
                                match self.bump()? {
                                    (_, Tok::Comma) => terms.push(self.term()?),
                                    (_, Tok::RParen) => break,
                                    (p, other) => {
                                        return Err(ParseError {
                                            pos: p,
                                            msg: format!("expected `,` or `)`, found {other:?}"),
                                        })
                                    }
                                }
                            }
                            Ok(Formula::Atom(id, terms))
                        }
                        Tok::Eq | Tok::Less | Tok::Leq => {
                            let (_, op) = self.bump()?;
                            let rhs = self.term()?;
                            let cmp = match op {
                                Tok::Eq => CmpOp::Eq,
                                Tok::Less => CmpOp::Less,
                                _ => CmpOp::Leq,
                            };
                            Ok(Formula::Cmp(cmp, ident_term(id), rhs))
                        }
                        other => Err(ParseError {
                            pos,
                            msg: format!("identifier `{id}` must start an atom, found {other:?}"),
                        }),
                    }
                }
            },
            other => Err(ParseError { pos, msg: format!("unexpected token {other:?}") }),
        }
    }

    fn term(&mut self) -> Result<Term, ParseError> {
        let (pos, tok) = self.bump()?;
        match tok {
            Tok::Ident(id) => Ok(ident_term(id)),
            other => Err(ParseError { pos, msg: format!("expected term, found {other:?}") }),
        }
    }
}

/// `min` and `max` are the constant symbols; every other identifier is a
/// variable. (Identifiers `p1`, `p2`, … are parameters by convention only —
/// the rule that binds them decides.)
fn ident_term(id: String) -> Term {
    if id == "min" || id == "max" {
        Term::Const(id)
    } else {
        Term::Var(id)
    }
}

/// Parses a formula and renames bound variables apart.
pub fn parse_formula(text: &str) -> Result<Formula, ParseError> {
    let mut parser = Parser { lexer: Lexer::new(text), lookahead: None };
    let f = parser.formula()?;
    let (pos, tok) = parser.bump()?;
    if tok != Tok::Eof {
        return Err(ParseError { pos, msg: format!("trailing input: {tok:?}") });
    }
    let _ = parser.lexer.peek_pos();
    Ok(rename_apart(f))
}

/// Renames bound variables so that no variable is bound twice and no bound
/// variable shadows a free one. Idempotent on already-apart formulas.
pub fn rename_apart(f: Formula) -> Formula {
    let mut taken: BTreeSet<String> = f.free_vars_with(&BTreeSet::new());
    fn fresh(base: &str, taken: &mut BTreeSet<String>) -> String {
        if taken.insert(base.to_string()) {
            return base.to_string();
        }
        for k in 2.. {
            let cand = format!("{base}_{k}");
            if taken.insert(cand.clone()) {
                return cand;
            }
        }
        unreachable!()
    }
    fn go(
        f: Formula,
        ren: &std::collections::BTreeMap<String, String>,
        taken: &mut BTreeSet<String>,
    ) -> Formula {
        let rterm = |t: &Term, ren: &std::collections::BTreeMap<String, String>| match t {
            Term::Var(v) => Term::Var(ren.get(v).cloned().unwrap_or_else(|| v.clone())),
            c => c.clone(),
        };
        match f {
            Formula::True | Formula::False => f,
            Formula::Atom(r, ts) => Formula::Atom(r, ts.iter().map(|t| rterm(t, ren)).collect()),
            Formula::Cmp(op, a, b) => Formula::Cmp(op, rterm(&a, ren), rterm(&b, ren)),
            Formula::Not(g) => go(*g, ren, taken).not(),
            Formula::Bin(op, a, b) => {
                Formula::Bin(op, Box::new(go(*a, ren, taken)), Box::new(go(*b, ren, taken)))
            }
            Formula::Quant(q, v, body) => {
                let nv = fresh(&v, taken);
                let mut ren2 = ren.clone();
                ren2.insert(v, nv.clone());
                Formula::Quant(q, nv, Box::new(go(*body, &ren2, taken)))
            }
        }
    }
    go(f, &std::collections::BTreeMap::new(), &mut taken)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::{BinOp, Formula};

    #[test]
    fn direct_grammar_mapping() {
        let f = parse_formula("E(x,y) | (x = p1)").unwrap();
        let want = Formula::atom("E", &["x", "y"])
            .or(Formula::eq(Term::var("x"), Term::var("p1")));
        assert_eq!(f, want);
    }

    #[test]
    fn exists_body() {
        let f = parse_formula("exists z. (E(x,z) & T(z,y))").unwrap();
        match f {
            Formula::Quant(Quantifier::Exists, v, body) => {
                assert_eq!(v, "z");
                assert!(matches!(*body, Formula::Bin(BinOp::And, _, _)));
            }
            other => panic!("unexpected parse: {other:?}"),
        }
    }

    #[test]
    fn tc_formula_shape() {
        let f = parse_formula("(x = y) | E(x,y) | exists z. (R(x,z) & R(z,y))").unwrap();
        // ((x=y) | E(x,y)) | exists...
        let Formula::Bin(BinOp::Or, lhs, rhs) = f else { panic!() };
        assert!(matches!(*rhs, Formula::Quant(Quantifier::Exists, _, _)));
        assert!(matches!(*lhs, Formula::Bin(BinOp::Or, _, _)));
    }

    #[test]
    fn pretty_print_reparses_structurally_equal() {
        for src in [
            "E(x,y) | (x = p1)",
            "exists z. (E(x,z) & T(z,y))",
            "(x = y) | E(x,y) | exists z. (R(x,z) & R(z,y))",
            "!(x < y) -> (y <= x | forall u. R(u))",
            "exists x. forall y. E(x,y)",
            "R_a(min) & !R_b(max)",
        ] {
            let f = parse_formula(src).unwrap();
            let printed = f.to_string();
            let g = parse_formula(&printed).unwrap();
            assert_eq!(f, g, "round trip failed for `{src}` printed as `{printed}`");
        }
    }

    #[test]
    fn shadowed_variables_renamed_apart() {
        let f = parse_formula("exists z. (E(x,z) & exists z. E(z,z))").unwrap();
        let Formula::Quant(_, outer, body) = &f else { panic!() };
        let mut inner_name = None;
        body.visit(&mut |g| {
            if let Formula::Quant(_, v, _) = g {
                inner_name = Some(v.clone());
            }
        });
        assert_ne!(Some(outer.clone()), inner_name);
        // Renaming is idempotent through a print/parse cycle.
        let g = parse_formula(&f.to_string()).unwrap();
        assert_eq!(f, g);
    }

    #[test]
    fn syntax_error_reports_position() {
        let err = parse_formula("E(x,,y)").unwrap_err();
        assert_eq!(err.pos, 4);
        assert!(parse_formula("exists . E(x)").is_err());
        assert!(parse_formula("E(x) E(y)").is_err());
    }
}
