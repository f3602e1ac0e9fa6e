//! First-order formulas over relational schemas: AST, parser, classifier,
//! and an evaluator for finite databases.

mod eval;
mod parser;

pub use eval::{
    define_relation, define_relation_env, evaluate, evaluate_counting, CompiledFormula,
    EvalError, RelEnv,
};
pub use parser::{parse_formula, rename_apart, ParseError};

use std::collections::BTreeSet;
use std::fmt;

/// A term is a variable or a constant symbol; which one an identifier means
/// is decided by the schema at evaluation time (`min`/`max` by default).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Var(String),
    Const(String),
}

impl Term {
    pub fn var(name: &str) -> Term {
        Term::Var(name.into())
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => write!(f, "{v}"),
            Term::Const(c) => write!(f, "{c}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Less,
    Leq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    And,
    Or,
    Implies,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Quantifier {
    Exists,
    Forall,
}

/// First-order formula AST. Bound variables are renamed apart at parse time,
/// so shadowing never occurs in parsed formulas.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Formula {
    True,
    False,
    Atom(String, Vec<Term>),
    Cmp(CmpOp, Term, Term),
    Not(Box<Formula>),
    Bin(BinOp, Box<Formula>, Box<Formula>),
    Quant(Quantifier, String, Box<Formula>),
}

impl Formula {
    pub fn atom(rel: &str, vars: &[&str]) -> Formula {
        Formula::Atom(rel.into(), vars.iter().map(|v| Term::var(v)).collect())
    }

    pub fn eq(a: Term, b: Term) -> Formula {
        Formula::Cmp(CmpOp::Eq, a, b)
    }

    pub fn less(a: Term, b: Term) -> Formula {
        Formula::Cmp(CmpOp::Less, a, b)
    }

    pub fn not(self) -> Formula {
        Formula::Not(Box::new(self))
    }

    pub fn and(self, other: Formula) -> Formula {
        Formula::Bin(BinOp::And, Box::new(self), Box::new(other))
    }

    pub fn or(self, other: Formula) -> Formula {
        Formula::Bin(BinOp::Or, Box::new(self), Box::new(other))
    }

    pub fn implies(self, other: Formula) -> Formula {
        Formula::Bin(BinOp::Implies, Box::new(self), Box::new(other))
    }

    pub fn exists(var: &str, body: Formula) -> Formula {
        Formula::Quant(Quantifier::Exists, var.into(), Box::new(body))
    }

    pub fn forall(var: &str, body: Formula) -> Formula {
        Formula::Quant(Quantifier::Forall, var.into(), Box::new(body))
    }

    /// Conjunction of a list; `True` when empty.
    pub fn conj(mut fs: Vec<Formula>) -> Formula {
        match fs.len() {
            0 => Formula::True,
            _ => {
                let mut acc = fs.remove(0);
                for f in fs {
                    acc = acc.and(f);
                }
                acc
            }
        }
    }

    /// Disjunction of a list; `False` when empty.
    pub fn disj(mut fs: Vec<Formula>) -> Formula {
        match fs.len() {
            0 => Formula::False,
            _ => {
                let mut acc = fs.remove(0);
                for f in fs {
                    acc = acc.or(f);
                }
                acc
            }
        }
    }

    /// Free variables, with identifiers in `constants` read as constant
    /// symbols rather than variables.
    pub fn free_vars_with(&self, constants: &BTreeSet<String>) -> BTreeSet<String> {
        fn term(t: &Term, consts: &BTreeSet<String>, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
            if let Term::Var(v) = t {
                if !consts.contains(v) && !bound.iter().any(|b| b == v) {
                    out.insert(v.clone());
                }
            }
        }
        fn go(
            f: &Formula,
            consts: &BTreeSet<String>,
            bound: &mut Vec<String>,
            out: &mut BTreeSet<String>,
        ) {
            match f {
                Formula::True | Formula::False => {}
                Formula::Atom(_, ts) => ts.iter().for_each(|t| term(t, consts, bound, out)),
                Formula::Cmp(_, a, b) => {
                    term(a, consts, bound, out);
                    term(b, consts, bound, out);
                }
                Formula::Not(g) => go(g, consts, bound, out),
                Formula::Bin(_, a, b) => {
                    go(a, consts, bound, out);
                    go(b, consts, bound, out);
                }
                Formula::Quant(_, v, body) => {
                    bound.push(v.clone());
                    go(body, consts, bound, out);
                    bound.pop();
                }
            }
        }
        let mut out = BTreeSet::new();
        go(self, constants, &mut Vec::new(), &mut out);
        out
    }

    /// Free variables with the default constant symbols `min`, `max`.
    pub fn free_vars(&self) -> BTreeSet<String> {
        let consts: BTreeSet<String> = ["min", "max"].iter().map(|s| s.to_string()).collect();
        self.free_vars_with(&consts)
    }

    /// Relation symbols mentioned, with their atom arities.
    pub fn relations(&self) -> BTreeSet<(String, usize)> {
        let mut out = BTreeSet::new();
        self.visit(&mut |f| {
            if let Formula::Atom(r, ts) = f {
                out.insert((r.clone(), ts.len()));
            }
        });
        out
    }

    /// Whether any order atom (`<`, `<=`) occurs.
    pub fn uses_order(&self) -> bool {
        let mut found = false;
        self.visit(&mut |f| {
            if matches!(f, Formula::Cmp(CmpOp::Less | CmpOp::Leq, _, _)) {
                found = true;
            }
        });
        found
    }

    /// Whether a constant symbol (per the default `min`/`max` convention)
    /// occurs in any term.
    pub fn uses_constants(&self) -> bool {
        let mut found = false;
        self.visit(&mut |f| {
            let mut check = |t: &Term| {
                if matches!(t, Term::Const(_)) {
                    found = true;
                }
            };
            match f {
                Formula::Atom(_, ts) => ts.iter().for_each(&mut check),
                Formula::Cmp(_, a, b) => {
                    check(a);
                    check(b);
                }
                _ => {}
            }
        });
        found
    }

    fn visit(&self, f: &mut impl FnMut(&Formula)) {
        f(self);
        match self {
            Formula::Not(g) => g.visit(f),
            Formula::Bin(_, a, b) => {
                a.visit(f);
                b.visit(f);
            }
            Formula::Quant(_, _, body) => body.visit(f),
            _ => {}
        }
    }

    /// Substitutes variables by terms (capture is the caller's problem; used
    /// only with fresh or closed replacements).
    pub fn substitute(&self, map: &std::collections::BTreeMap<String, Term>) -> Formula {
        let sub = |t: &Term| match t {
            Term::Var(v) => map.get(v).cloned().unwrap_or_else(|| t.clone()),
            c => c.clone(),
        };
        match self {
            Formula::True => Formula::True,
            Formula::False => Formula::False,
            Formula::Atom(r, ts) => Formula::Atom(r.clone(), ts.iter().map(sub).collect()),
            Formula::Cmp(op, a, b) => Formula::Cmp(*op, sub(a), sub(b)),
            Formula::Not(g) => g.substitute(map).not(),
            Formula::Bin(op, a, b) => {
                Formula::Bin(*op, Box::new(a.substitute(map)), Box::new(b.substitute(map)))
            }
            Formula::Quant(q, v, body) => {
                let mut inner = map.clone();
                inner.remove(v);
                Formula::Quant(*q, v.clone(), Box::new(body.substitute(&inner)))
            }
        }
    }
}

/// Maximum quantifier nesting depth.
pub fn quantifier_rank(f: &Formula) -> usize {
    match f {
        Formula::True | Formula::False | Formula::Atom(..) | Formula::Cmp(..) => 0,
        Formula::Not(g) => quantifier_rank(g),
        Formula::Bin(_, a, b) => quantifier_rank(a).max(quantifier_rank(b)),
        Formula::Quant(_, _, body) => 1 + quantifier_rank(body),
    }
}

/// Syntactic fragment of a formula after internal prenexing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormulaClass {
    QuantifierFree,
    Existential,
    Universal,
    General,
}

/// Classifies by the quantifiers surviving in negation normal form: purely
/// existential, purely universal, quantifier-free, or general.
pub fn classify_formula(f: &Formula) -> FormulaClass {
    fn scan(f: &Formula, negated: bool, has_ex: &mut bool, has_fa: &mut bool) {
        match f {
            Formula::True | Formula::False | Formula::Atom(..) | Formula::Cmp(..) => {}
            Formula::Not(g) => scan(g, !negated, has_ex, has_fa),
            Formula::Bin(BinOp::Implies, a, b) => {
                scan(a, !negated, has_ex, has_fa);
                scan(b, negated, has_ex, has_fa);
            }
            Formula::Bin(_, a, b) => {
                scan(a, negated, has_ex, has_fa);
                scan(b, negated, has_ex, has_fa);
            }
            Formula::Quant(q, _, body) => {
                let effective = match (q, negated) {
                    (Quantifier::Exists, false) | (Quantifier::Forall, true) => Quantifier::Exists,
                    _ => Quantifier::Forall,
                };
                match effective {
                    Quantifier::Exists => *has_ex = true,
                    Quantifier::Forall => *has_fa = true,
                }
                scan(body, negated, has_ex, has_fa);
            }
        }
    }
    let (mut has_ex, mut has_fa) = (false, false);
    scan(f, false, &mut has_ex, &mut has_fa);
    match (has_ex, has_fa) {
        (false, false) => FormulaClass::QuantifierFree,
        (true, false) => FormulaClass::Existential,
        (false, true) => FormulaClass::Universal,
        (true, true) => FormulaClass::General,
    }
}

/// An assignment of domain elements to variables.
pub type Assignment = std::collections::BTreeMap<String, u32>;

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Precedence: -> (1, right) < | (2) < & (3) < ! (4) < atoms.
        fn go(fm: &Formula, prec: u8, out: &mut fmt::Formatter<'_>) -> fmt::Result {
            let mine = match fm {
                Formula::Bin(BinOp::Implies, ..) => 1,
                Formula::Bin(BinOp::Or, ..) => 2,
                Formula::Bin(BinOp::And, ..) => 3,
                Formula::Quant(..) => 1,
                _ => 5,
            };
            let parens = mine < prec;
            if parens {
                write!(out, "(")?;
            }
            match fm {
                Formula::True => write!(out, "true")?,
                Formula::False => write!(out, "false")?,
                Formula::Atom(r, ts) => {
                    write!(out, "{r}(")?;
                    for (i, t) in ts.iter().enumerate() {
                        if i > 0 {
                            write!(out, ",")?;
                        }
                        write!(out, "{t}")?;
                    }
                    write!(out, ")")?;
                }
                Formula::Cmp(op, a, b) => {
                    let sym = match op {
                        CmpOp::Eq => "=",
                        CmpOp::Less => "<",
                        CmpOp::Leq => "<=",
                    };
                    write!(out, "{a} {sym} {b}")?;
                }
                Formula::Not(g) => {
                    write!(out, "!")?;
                    go(g, 4, out)?;
                }
                Formula::Bin(op, a, b) => {
                    let (sym, p) = match op {
                        BinOp::Implies => ("->", 1),
                        BinOp::Or => ("|", 2),
                        BinOp::And => ("&", 3),
                    };
                    // Left-assoc for & and |; implication right-assoc.
                    let (lp, rp) = if *op == BinOp::Implies { (p + 1, p) } else { (p, p + 1) };
                    go(a, lp, out)?;
                    write!(out, " {sym} ")?;
                    go(b, rp, out)?;
                }
                Formula::Quant(q, v, body) => {
                    let kw = match q {
                        Quantifier::Exists => "exists",
                        Quantifier::Forall => "forall",
                    };
                    write!(out, "{kw} {v}. ")?;
                    go(body, 1, out)?;
                }
            }
            if parens {
                write!(out, ")")?;
            }
            Ok(())
        }
        go(self, 0, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantifier_rank_examples() {
        let qf = parse_formula("E(x,y) & !(p1 = x)").unwrap();
        assert_eq!(quantifier_rank(&qf), 0);
        let tc = parse_formula("(x = y) | E(x,y) | exists z. (R(x,z) & R(z,y))").unwrap();
        assert_eq!(quantifier_rank(&tc), 1);
        let two = parse_formula("exists x. forall y. E(x,y)").unwrap();
        assert_eq!(quantifier_rank(&two), 2);
    }

    #[test]
    fn classify_examples() {
        assert_eq!(
            classify_formula(&parse_formula("E(x,y) & !(p1 = x)").unwrap()),
            FormulaClass::QuantifierFree
        );
        assert_eq!(
            classify_formula(&parse_formula("E(x,y) | exists z.(E(z,x) & E(z,y))").unwrap()),
            FormulaClass::Existential
        );
        assert_eq!(
            classify_formula(&parse_formula("exists x. forall y. E(x,y)").unwrap()),
            FormulaClass::General
        );
        // A negated universal is existential.
        assert_eq!(
            classify_formula(&parse_formula("!(forall z. E(z,z))").unwrap()),
            FormulaClass::Existential
        );
        assert_eq!(
            classify_formula(&parse_formula("forall z. E(z,z)").unwrap()),
            FormulaClass::Universal
        );
    }

    #[test]
    fn free_vars_respect_binding_and_constants() {
        let f = parse_formula("exists z. (E(x,z) & z = min)").unwrap();
        let free = f.free_vars();
        assert_eq!(free.into_iter().collect::<Vec<_>>(), vec!["x".to_string()]);
    }
}
