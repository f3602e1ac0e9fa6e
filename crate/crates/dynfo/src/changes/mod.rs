//! Replacement queries and change operations.
//!
//! A replacement rule redefines one relation by a first-order formula over
//! the pre-change database; a replacement query is a set of such rules
//! sharing one parameter tuple. Applying a change evaluates every rule
//! against the old database simultaneously.

pub mod reduce;

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::logic::{define_relation, Assignment, BinOp, EvalError, Formula, Term};
use crate::structures::{validate, Database, Schema, Violation};

/// Calls `f` on every `k`-tuple over `1..=n` in lexicographic order until it
/// returns `false`.
pub(crate) fn for_each_tuple(n: u32, k: usize, mut f: impl FnMut(&[u32]) -> bool) {
    let mut t = vec![1u32; k];
    if k == 0 {
        f(&t);
        return;
    }
    loop {
        if !f(&t) {
            return;
        }
        let mut i = k;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if t[i] < n {
                t[i] += 1;
                break;
            }
            t[i] = 1;
        }
    }
}

/// A replacement rule `R(x̄) ← μ_R(p̄; x̄)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplacementRule {
    pub relation: String,
    pub out_vars: Vec<String>,
    pub formula: Formula,
}

/// A named set of replacement rules for distinct relations, sharing the
/// parameter tuple `params`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplacementQuery {
    pub name: String,
    pub params: Vec<String>,
    pub rules: Vec<ReplacementRule>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum QueryError {
    #[error("two rules target relation `{0}`")]
    DuplicateTarget(String),
    #[error("rule for `{relation}` uses free variable `{var}` outside parameters and outputs")]
    StrayVariable { relation: String, var: String },
    #[error("rule for `{relation}` repeats variable `{var}`")]
    RepeatedVariable { relation: String, var: String },
    #[error("no rule may target `{0}`; it does not exist in the schema")]
    UnknownTarget(String),
    #[error("rule for `{relation}` has {found} output variables, relation has arity {expected}")]
    OutArityMismatch { relation: String, expected: usize, found: usize },
}

impl ReplacementQuery {
    pub fn new(
        name: &str,
        params: &[&str],
        rules: Vec<ReplacementRule>,
    ) -> Result<ReplacementQuery, QueryError> {
        let q = ReplacementQuery {
            name: name.into(),
            params: params.iter().map(|s| s.to_string()).collect(),
            rules,
        };
        q.check_well_formed()?;
        Ok(q)
    }

    fn check_well_formed(&self) -> Result<(), QueryError> {
        let mut targets = std::collections::HashSet::new();
        for rule in &self.rules {
            if !targets.insert(rule.relation.clone()) {
                return Err(QueryError::DuplicateTarget(rule.relation.clone()));
            }
            let mut seen = std::collections::HashSet::new();
            for v in self.params.iter().chain(&rule.out_vars) {
                if !seen.insert(v.clone()) {
                    return Err(QueryError::RepeatedVariable {
                        relation: rule.relation.clone(),
                        var: v.clone(),
                    });
                }
            }
            for v in rule.formula.free_vars() {
                if !seen.contains(&v) {
                    return Err(QueryError::StrayVariable { relation: rule.relation.clone(), var: v });
                }
            }
        }
        Ok(())
    }

    /// Checks rule targets and arities against a schema.
    pub fn check_schema(&self, schema: &Schema) -> Result<(), QueryError> {
        for rule in &self.rules {
            match schema.arity_of(&rule.relation) {
                None => return Err(QueryError::UnknownTarget(rule.relation.clone())),
                Some(a) if a != rule.out_vars.len() => {
                    return Err(QueryError::OutArityMismatch {
                        relation: rule.relation.clone(),
                        expected: a,
                        found: rule.out_vars.len(),
                    })
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn rule_for(&self, relation: &str) -> Option<&ReplacementRule> {
        self.rules.iter().find(|r| r.relation == relation)
    }

    /// Binds parameter values, yielding a change operation.
    pub fn bind(self: &Arc<Self>, args: &[u32]) -> ChangeOp {
        ChangeOp { query: Arc::clone(self), args: args.to_vec() }
    }
}

/// A change operation `δ = (ρ, ā)`: a replacement query with its parameters
/// bound to domain elements.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChangeOp {
    pub query: Arc<ReplacementQuery>,
    pub args: Vec<u32>,
}

impl fmt::Display for ChangeOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.query.name)?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, ")")
    }
}

/// Why a change was refused with the database left unchanged, as opposed to
/// a hard error in the change itself.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Rejection {
    /// The result would put a position into two letter relations.
    WordLetterClash(Vec<Violation>),
    /// The result would break the undirected symmetry convention.
    AsymmetricEdges(Vec<(u32, u32)>),
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rejection::WordLetterClash(vs) => {
                write!(f, "word invariant violated: ")?;
                for (i, v) in vs.iter().enumerate() {
                    if i > 0 {
                        write!(f, "; ")?;
                    }
                    write!(f, "{v}")?;
                }
                Ok(())
            }
            Rejection::AsymmetricEdges(es) => {
                write!(f, "change result not symmetric at {es:?}")
            }
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ChangeError {
    #[error("change `{query}` expects {expected} parameters, got {found}")]
    WrongArgCount { query: String, expected: usize, found: usize },
    #[error("parameter value {value} outside 1..={n}")]
    ArgOutOfRange { value: u32, n: u32 },
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("change rejected: {0}")]
    Rejected(Rejection),
}

/// Applies `δ` to `db`: every ruled relation is replaced by its formula's
/// result on the *pre-change* database; everything else is untouched.
/// Word-mode results that violate the one-letter-per-position invariant and
/// asymmetric results on undirected schemas are rejected atomically.
pub fn apply_change(db: &Database, delta: &ChangeOp) -> Result<Database, ChangeError> {
    let q = &delta.query;
    if delta.args.len() != q.params.len() {
        return Err(ChangeError::WrongArgCount {
            query: q.name.clone(),
            expected: q.params.len(),
            found: delta.args.len(),
        });
    }
    for &a in &delta.args {
        if a == 0 || a > db.size() {
            return Err(ChangeError::ArgOutOfRange { value: a, n: db.size() });
        }
    }
    q.check_schema(db.schema())?;
    let params: Assignment =
        q.params.iter().cloned().zip(delta.args.iter().copied()).collect();

    // All rules read the old database; install results only afterwards.
    let mut new_rels = Vec::with_capacity(q.rules.len());
    for rule in &q.rules {
        let rel = define_relation(&rule.formula, db, &params, &rule.out_vars)?;
        new_rels.push((rule.relation.clone(), rel));
    }
    let mut out = db.clone();
    for (name, rel) in new_rels {
        out.set_relation(&name, rel).expect("target checked against schema");
    }

    if db.schema().word_mode() {
        let violations: Vec<Violation> = validate(&out)
            .into_iter()
            .filter(|v| matches!(v, Violation::TwoLetters { .. }))
            .collect();
        if !violations.is_empty() {
            return Err(ChangeError::Rejected(Rejection::WordLetterClash(violations)));
        }
    }
    if db.schema().undirected {
        let asym: Vec<(u32, u32)> = validate(&out)
            .into_iter()
            .filter_map(|v| match v {
                Violation::NotSymmetric { from, to } => Some((from, to)),
                _ => None,
            })
            .collect();
        if !asym.is_empty() {
            return Err(ChangeError::Rejected(Rejection::AsymmetricEdges(asym)));
        }
    }
    Ok(out)
}

/// Syntactic change kind of a single rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChangeKind {
    /// `μ_R = R(x̄) ∨ φ_R` — only adds tuples.
    Insertion,
    /// `μ_R = R(x̄) ∧ φ_R` — only removes tuples.
    Deletion,
    General,
}

fn flatten(f: &Formula, op: BinOp, out: &mut Vec<Formula>) {
    match f {
        Formula::Bin(o, a, b) if *o == op => {
            flatten(a, op, out);
            flatten(b, op, out);
        }
        other => out.push(other.clone()),
    }
}

fn is_self_atom(f: &Formula, rule: &ReplacementRule) -> bool {
    match f {
        Formula::Atom(r, ts) if *r == rule.relation && ts.len() == rule.out_vars.len() => ts
            .iter()
            .zip(&rule.out_vars)
            .all(|(t, v)| matches!(t, Term::Var(tv) if tv == v)),
        _ => false,
    }
}

/// Classifies one rule by matching `R(x̄) ∨ φ` / `R(x̄) ∧ φ` after flattening
/// the top-level connective (argument order does not matter).
pub fn classify_rule(rule: &ReplacementRule) -> ChangeKind {
    let mut ors = Vec::new();
    flatten(&rule.formula, BinOp::Or, &mut ors);
    if ors.len() > 1 && ors.iter().any(|f| is_self_atom(f, rule)) {
        return ChangeKind::Insertion;
    }
    let mut ands = Vec::new();
    flatten(&rule.formula, BinOp::And, &mut ands);
    if ands.iter().any(|f| is_self_atom(f, rule)) {
        return ChangeKind::Deletion;
    }
    if ors.len() == 1 && is_self_atom(&ors[0], rule) {
        // The identity rule changes nothing; treat it as a (vacuous) insertion.
        return ChangeKind::Insertion;
    }
    ChangeKind::General
}

/// Per-rule classification of a whole query.
pub fn classify_replacement(q: &ReplacementQuery) -> Vec<(String, ChangeKind)> {
    q.rules.iter().map(|r| (r.relation.clone(), classify_rule(r))).collect()
}

/// Whether every rule of the query is an insertion.
pub fn is_insertion_query(q: &ReplacementQuery) -> bool {
    q.rules.iter().all(|r| classify_rule(r) == ChangeKind::Insertion)
}

fn out_var_names(arity: usize) -> Vec<String> {
    match arity {
        1 => vec!["x".into()],
        2 => vec!["x".into(), "y".into()],
        3 => vec!["x".into(), "y".into(), "z".into()],
        k => (1..=k).map(|i| format!("x{i}")).collect(),
    }
}

fn param_names(arity: usize) -> Vec<String> {
    (1..=arity).map(|i| format!("p{i}")).collect()
}

/// The single-tuple change library `Δ_τ`: for every relation `R`, an
/// insertion `ins_R` and a deletion `del_R` of one tuple. On undirected
/// schemas the rules for `E` act on both orientations.
pub fn single_tuple_queries(schema: &Schema) -> Vec<Arc<ReplacementQuery>> {
    let mut out = Vec::new();
    for decl in schema.relations() {
        let arity = decl.arity;
        let outs = out_var_names(arity);
        let params = param_names(arity);
        let symmetric = schema.undirected && decl.name == "E" && arity == 2;

        let atom = Formula::Atom(
            decl.name.clone(),
            outs.iter().map(|v| Term::Var(v.clone())).collect(),
        );
        let tuple_eq = |perm: &[usize]| {
            Formula::conj(
                perm.iter()
                    .zip(&outs)
                    .map(|(&pi, x)| {
                        Formula::eq(Term::Var(params[pi].clone()), Term::Var(x.clone()))
                    })
                    .collect(),
            )
        };
        let ident: Vec<usize> = (0..arity).collect();
        let swapped: Vec<usize> = vec![1, 0];

        let mut ins = atom.clone().or(tuple_eq(&ident));
        let mut del = atom.clone().and(tuple_eq(&ident).not());
        if symmetric {
            ins = ins.or(tuple_eq(&swapped));
            del = del.and(tuple_eq(&swapped).not());
        }
        let p_refs: Vec<&str> = params.iter().map(|s| s.as_str()).collect();
        out.push(Arc::new(
            ReplacementQuery::new(
                &format!("ins_{}", decl.name),
                &p_refs,
                vec![ReplacementRule {
                    relation: decl.name.clone(),
                    out_vars: outs.clone(),
                    formula: ins,
                }],
            )
            .expect("single-tuple insertion is well-formed"),
        ));
        out.push(Arc::new(
            ReplacementQuery::new(
                &format!("del_{}", decl.name),
                &p_refs,
                vec![ReplacementRule {
                    relation: decl.name.clone(),
                    out_vars: outs,
                    formula: del,
                }],
            )
            .expect("single-tuple deletion is well-formed"),
        ));
    }
    out
}

/// Convenience: a one-rule query from formula text.
pub fn query_from_text(
    name: &str,
    params: &[&str],
    relation: &str,
    out_vars: &[&str],
    formula: &str,
) -> Result<Arc<ReplacementQuery>, String> {
    let f = crate::logic::parse_formula(formula).map_err(|e| e.to_string())?;
    let rule = ReplacementRule {
        relation: relation.into(),
        out_vars: out_vars.iter().map(|s| s.to_string()).collect(),
        formula: f,
    };
    ReplacementQuery::new(name, params, vec![rule])
        .map(Arc::new)
        .map_err(|e| e.to_string())
}

/// Checks empirically that an undirected change query preserves symmetry:
/// every symmetric graph with n ≤ `max_n`, every parameter binding. Used to
/// reject unsuitable insertion queries up front.
pub fn is_symmetric_on_small_graphs(q: &Arc<ReplacementQuery>, max_n: u32) -> bool {
    let schema = Arc::new(Schema::graph_undirected());
    let mut ok = true;
    for n in 1..=max_n {
        let pairs: Vec<(u32, u32)> =
            (1..=n).flat_map(|u| (u..=n).map(move |v| (u, v))).collect();
        for mask in 0u32..(1 << pairs.len()) {
            let mut db = Database::empty(schema.clone(), n).unwrap();
            for (i, (u, v)) in pairs.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    db.insert("E", &[*u, *v]).unwrap();
                    db.insert("E", &[*v, *u]).unwrap();
                }
            }
            for_each_tuple(n, q.params.len(), |args| {
                if let Err(ChangeError::Rejected(Rejection::AsymmetricEdges(_))) =
                    apply_change(&db, &q.bind(args))
                {
                    ok = false;
                }
                ok
            });
            if !ok {
                return false;
            }
        }
    }
    true
}

/// Example 3.1(b): swap `a` and `b` on all positions before the parameter.
pub fn swap_before_query() -> Arc<ReplacementQuery> {
    let mu_a = "((x < p1) & R_b(x)) | (!(x < p1) & R_a(x))";
    let mu_b = "((x < p1) & R_a(x)) | (!(x < p1) & R_b(x))";
    Arc::new(
        ReplacementQuery::new(
            "swap_before",
            &["p1"],
            vec![
                ReplacementRule {
                    relation: "R_a".into(),
                    out_vars: vec!["x".into()],
                    formula: crate::logic::parse_formula(mu_a).unwrap(),
                },
                ReplacementRule {
                    relation: "R_b".into(),
                    out_vars: vec!["x".into()],
                    formula: crate::logic::parse_formula(mu_b).unwrap(),
                },
            ],
        )
        .unwrap(),
    )
}

/// Example 3.1(a): insert an edge from the parameter to every node.
/// `symmetric` additionally inserts the reverse edges (undirected schemas).
pub fn star_query(symmetric: bool) -> Arc<ReplacementQuery> {
    let text = if symmetric { "E(x,y) | x = p1 | y = p1" } else { "E(x,y) | (x = p1)" };
    query_from_text("star", &["p1"], "E", &["x", "y"], text).unwrap()
}
