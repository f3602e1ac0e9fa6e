//! Reduction of single-parameter existential word changes to quantifier-free
//! ones with extra parameters.
//!
//! Each rule formula is rewritten as a disjunction of *atomic types*: full
//! descriptions of the order and letters of the parameter, the bound
//! variables, and the output position. For every word and parameter value
//! there is a *canonical tuple* of witness positions (left witnesses
//! lexicographically minimal, right witnesses maximal) that makes the
//! quantifier-free disjunct agree with the existential one at every
//! position; binding the extra parameters to it yields the same change.

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use super::{ReplacementQuery, ReplacementRule};
use crate::logic::{
    classify_formula, evaluate, Assignment, BinOp, Formula, FormulaClass, Quantifier, Term,
};
use crate::structures::{letter_relation, Database};

/// A letter from `Σ_ε`: `None` is the blank ε.
pub type Letter = Option<char>;

/// Where the original parameter sits in a normalized type.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamPosition {
    /// `p = x`.
    EqualsX,
    /// `p` equals the i-th bound variable left of `x`.
    Left(usize),
    /// `p` equals the i-th bound variable right of `x`.
    Right(usize),
}

/// A normalized atomic type `θ = ∃ȳ ψ`: bound variables strictly ordered
/// around `x` (`y₁<…<y_ℓ<x<y_{ℓ+1}<…<y_k`), one of them equal to `p` unless
/// `p = x`, and every variable's letter fixed.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct AtomicType {
    pub left: Vec<Letter>,
    pub right: Vec<Letter>,
    pub x_letter: Letter,
    pub param: ParamPositionOrd,
}

/// `ParamPosition` with a derivable order so types can be deduplicated.
pub type ParamPositionOrd = (u8, usize);

pub fn param_position(t: &AtomicType) -> ParamPosition {
    match t.param {
        (0, _) => ParamPosition::EqualsX,
        (1, i) => ParamPosition::Left(i),
        (_, i) => ParamPosition::Right(i),
    }
}

impl AtomicType {
    pub fn arity(&self) -> usize {
        self.left.len() + self.right.len()
    }

    /// Quantifier-free matrix `ψ(p, c̄; x)` with the given witness-variable
    /// names (`c_names.len() == self.arity()`).
    pub fn matrix(&self, p: &str, x: &str, c_names: &[String], alphabet: &[char]) -> Formula {
        assert_eq!(c_names.len(), self.arity());
        let letter_of = |var: &str, letter: Letter| -> Formula {
            Formula::conj(
                alphabet
                    .iter()
                    .map(|&sigma| {
                        let atom = Formula::atom(&letter_relation(sigma), &[var]);
                        if letter == Some(sigma) {
                            atom
                        } else {
                            atom.not()
                        }
                    })
                    .collect(),
            )
        };
        let mut parts = Vec::new();
        let (lefts, rights) = c_names.split_at(self.left.len());
        // Strict order around x.
        let mut chain: Vec<&str> = lefts.iter().map(|s| s.as_str()).collect();
        chain.push(x);
        chain.extend(rights.iter().map(|s| s.as_str()));
        for w in chain.windows(2) {
            parts.push(Formula::less(Term::var(w[0]), Term::var(w[1])));
        }
        for (name, &letter) in lefts.iter().zip(&self.left) {
            parts.push(letter_of(name, letter));
        }
        for (name, &letter) in rights.iter().zip(&self.right) {
            parts.push(letter_of(name, letter));
        }
        parts.push(letter_of(x, self.x_letter));
        parts.push(match param_position(self) {
            ParamPosition::EqualsX => Formula::eq(Term::var(p), Term::var(x)),
            ParamPosition::Left(i) => Formula::eq(Term::var(&lefts[i]), Term::var(p)),
            ParamPosition::Right(i) => Formula::eq(Term::var(&rights[i]), Term::var(p)),
        });
        Formula::conj(parts)
    }

    /// `θ(p; x)`: the matrix with the witness variables existentially bound.
    pub fn closure(&self, p: &str, x: &str, alphabet: &[char]) -> Formula {
        let names: Vec<String> = (0..self.arity()).map(|i| format!("c{i}")).collect();
        let mut f = self.matrix(p, x, &names, alphabet);
        for name in names.iter().rev() {
            f = Formula::exists(name, f);
        }
        f
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReduceError {
    #[error("rule for `{relation}` is not existential (classified {class:?})")]
    NotExistential { relation: String, class: FormulaClass },
    #[error("the reduction handles exactly one parameter, query has {0}")]
    ParameterCount(usize),
    #[error("rule for `{relation}` mentions non-letter relation `{other}`")]
    ForeignRelation { relation: String, other: String },
    #[error("rule for `{relation}` mentions min/max; constants are not supported here")]
    UsesConstants { relation: String },
}

/// Negation normal form; implications unfolded.
fn nnf(f: &Formula, neg: bool) -> Formula {
    match f {
        Formula::True => {
            if neg {
                Formula::False
            } else {
                Formula::True
            }
        }
        Formula::False => {
            if neg {
                Formula::True
            } else {
                Formula::False
            }
        }
        Formula::Atom(..) | Formula::Cmp(..) => {
            if neg {
                f.clone().not()
            } else {
                f.clone()
            }
        }
        Formula::Not(g) => nnf(g, !neg),
        Formula::Bin(op, a, b) => {
            let (fa, fb) = match op {
                BinOp::Implies => (nnf(a, !neg), nnf(b, neg)),
                _ => (nnf(a, neg), nnf(b, neg)),
            };
            let and = match op {
                BinOp::And => !neg,
                BinOp::Or => neg,
                BinOp::Implies => neg,
            };
            if and {
                fa.and(fb)
            } else {
                fa.or(fb)
            }
        }
        Formula::Quant(q, v, body) => {
            let inner = nnf(body, neg);
            let q = match (q, neg) {
                (Quantifier::Exists, false) | (Quantifier::Forall, true) => Quantifier::Exists,
                _ => Quantifier::Forall,
            };
            Formula::Quant(q, v.clone(), Box::new(inner))
        }
    }
}

/// Pulls the (purely existential) quantifier prefix out of an NNF formula.
/// Sound because bound variables are renamed apart.
fn strip_exists(f: Formula, vars: &mut Vec<String>) -> Formula {
    match f {
        Formula::Quant(Quantifier::Exists, v, body) => {
            vars.push(v);
            strip_exists(*body, vars)
        }
        Formula::Bin(op, a, b) => {
            let fa = strip_exists(*a, vars);
            let fb = strip_exists(*b, vars);
            Formula::Bin(op, Box::new(fa), Box::new(fb))
        }
        Formula::Not(g) => strip_exists(*g, vars).not(),
        other => other,
    }
}

/// All weak orders (ordered set partitions) of `k` items, as rank vectors
/// with contiguous ranks starting at 0. Also used to enumerate parameter
/// order/equality patterns when deriving relabeling generators.
pub fn weak_orders_pub(k: usize) -> Vec<Vec<usize>> {
    weak_orders(k)
}

fn weak_orders(k: usize) -> Vec<Vec<usize>> {
    let mut seen = std::collections::BTreeSet::new();
    let mut ranks = vec![0usize; k];
    fn go(i: usize, k: usize, ranks: &mut Vec<usize>, seen: &mut std::collections::BTreeSet<Vec<usize>>) {
        if i == k {
            // Compact the used values, preserving their order.
            let mut used: Vec<usize> = ranks.clone();
            used.sort_unstable();
            used.dedup();
            let normalized: Vec<usize> =
                ranks.iter().map(|r| used.binary_search(r).unwrap()).collect();
            seen.insert(normalized);
            return;
        }
        for r in 0..k {
            ranks[i] = r;
            go(i + 1, k, ranks, seen);
        }
    }
    go(0, k, &mut ranks, &mut seen);
    seen.into_iter().collect()
}

fn eval_matrix_under_type(
    f: &Formula,
    var_index: &BTreeMap<String, usize>,
    ranks: &[usize],
    letters: &[Letter],
) -> bool {
    let rank_of = |t: &Term| -> usize {
        match t {
            Term::Var(v) => ranks[var_index[v]],
            Term::Const(_) => unreachable!("constants rejected earlier"),
        }
    };
    match f {
        Formula::True => true,
        Formula::False => false,
        Formula::Atom(rel, ts) => {
            let r = rank_of(&ts[0]);
            match letters[r] {
                Some(sigma) => *rel == letter_relation(sigma),
                None => false,
            }
        }
        Formula::Cmp(op, a, b) => {
            let (x, y) = (rank_of(a), rank_of(b));
            match op {
                crate::logic::CmpOp::Eq => x == y,
                crate::logic::CmpOp::Less => x < y,
                crate::logic::CmpOp::Leq => x <= y,
            }
        }
        Formula::Not(g) => !eval_matrix_under_type(g, var_index, ranks, letters),
        Formula::Bin(BinOp::And, a, b) => {
            eval_matrix_under_type(a, var_index, ranks, letters)
                && eval_matrix_under_type(b, var_index, ranks, letters)
        }
        Formula::Bin(BinOp::Or, a, b) => {
            eval_matrix_under_type(a, var_index, ranks, letters)
                || eval_matrix_under_type(b, var_index, ranks, letters)
        }
        Formula::Bin(BinOp::Implies, a, b) => {
            !eval_matrix_under_type(a, var_index, ranks, letters)
                || eval_matrix_under_type(b, var_index, ranks, letters)
        }
        Formula::Quant(..) => unreachable!("matrix is quantifier-free"),
    }
}

/// Decomposes an existential single-parameter rule formula into normalized
/// atomic types whose disjunction is equivalent to it on every word
/// database. Unsatisfiable combinations never appear in the output.
pub fn atomic_type_decomposition(
    mu: &Formula,
    p: &str,
    x: &str,
    alphabet: &[char],
    relation: &str,
) -> Result<Vec<AtomicType>, ReduceError> {
    match classify_formula(mu) {
        FormulaClass::QuantifierFree | FormulaClass::Existential => {}
        class => return Err(ReduceError::NotExistential { relation: relation.into(), class }),
    }
    if mu.uses_constants() {
        return Err(ReduceError::UsesConstants { relation: relation.into() });
    }
    for (rel, _) in mu.relations() {
        if !alphabet.iter().any(|&sigma| letter_relation(sigma) == rel) {
            return Err(ReduceError::ForeignRelation { relation: relation.into(), other: rel });
        }
    }
    let mut bound = Vec::new();
    let matrix = strip_exists(nnf(mu, false), &mut bound);

    // Variable universe: p, bound variables, x.
    let mut vars = vec![p.to_string()];
    vars.extend(bound.iter().cloned());
    vars.push(x.to_string());
    let var_index: BTreeMap<String, usize> =
        vars.iter().enumerate().map(|(i, v)| (v.clone(), i)).collect();
    let k = vars.len();
    let p_idx = 0usize;
    let x_idx = k - 1;

    let mut letters_pool: Vec<Letter> = vec![None];
    letters_pool.extend(alphabet.iter().map(|&c| Some(c)));

    let mut out: Vec<AtomicType> = Vec::new();
    for ranks in weak_orders(k) {
        let classes = ranks.iter().copied().max().unwrap() + 1;
        // Odometer over per-class letters.
        let mut letter_choice = vec![0usize; classes];
        loop {
            let letters: Vec<Letter> =
                letter_choice.iter().map(|&i| letters_pool[i]).collect();
            if eval_matrix_under_type(&matrix, &var_index, &ranks, &letters) {
                // Normalize: one representative per class; p aliased in.
                let x_rank = ranks[x_idx];
                let p_rank = ranks[p_idx];
                let mut left = Vec::new();
                let mut right = Vec::new();
                let mut param = None;
                let mut class_order: Vec<usize> = (0..classes).collect();
                class_order.sort();
                for r in class_order {
                    if r == x_rank {
                        if p_rank == x_rank {
                            param = Some((0u8, 0usize));
                        }
                        continue;
                    }
                    if r < x_rank {
                        left.push(letters[r]);
                        if r == p_rank {
                            param = Some((1, left.len() - 1));
                        }
                    } else {
                        right.push(letters[r]);
                        if r == p_rank {
                            param = Some((2, right.len() - 1));
                        }
                    }
                }
                let t = AtomicType {
                    left,
                    right,
                    x_letter: letters[x_rank],
                    param: param.expect("p always ranked"),
                };
                if !out.contains(&t) {
                    out.push(t);
                }
            }
            // Advance the odometer.
            let mut i = classes;
            let done = loop {
                if i == 0 {
                    break true;
                }
                i -= 1;
                if letter_choice[i] + 1 < letters_pool.len() {
                    letter_choice[i] += 1;
                    break false;
                }
                letter_choice[i] = 0;
            };
            if done {
                break;
            }
        }
    }
    out.sort();
    Ok(out)
}

/// The canonical witness tuple for `θ` with respect to word `db` and
/// parameter `a`: left witnesses lexicographically minimal, right witnesses
/// (read back to front) maximal, subject to making the quantifier-free
/// matrix agree with `θ` at *every* position. `None` when `θ` holds nowhere.
pub fn canonical_tuple(db: &Database, a: u32, theta: &AtomicType) -> Option<Vec<u32>> {
    let alphabet = db.schema().alphabet.clone().expect("word database");
    let n = db.size();
    let closure = theta.closure("p", "x", &alphabet);
    let theta_at: Vec<bool> = (1..=n)
        .map(|i| {
            let mut asg = Assignment::new();
            asg.insert("p".into(), a);
            asg.insert("x".into(), i);
            evaluate(&closure, db, &asg).unwrap()
        })
        .collect();
    if theta_at.iter().all(|&b| !b) {
        return None;
    }
    let names: Vec<String> = (0..theta.arity()).map(|i| format!("c{i}")).collect();
    let matrix = theta.matrix("p", "x", &names, &alphabet);

    let l = theta.left.len();
    let r = theta.right.len();
    let mut best: Option<Vec<u32>> = None;
    // Left candidates ascending lexicographic, right candidates ordered so
    // that (c_k ... c_{l+1}) is descending lexicographic; the first candidate
    // passing the pointwise check is the canonical tuple.
    let lefts = increasing_tuples(n, l);
    let rights = {
        let mut v = increasing_tuples(n, r);
        v.sort_by(|a, b| {
            let ra: Vec<u32> = a.iter().rev().copied().collect();
            let rb: Vec<u32> = b.iter().rev().copied().collect();
            rb.cmp(&ra)
        });
        v
    };
    'outer: for lt in &lefts {
        for rt in &rights {
            let cand: Vec<u32> = lt.iter().chain(rt.iter()).copied().collect();
            let ok = (1..=n).all(|i| {
                let mut asg = Assignment::new();
                asg.insert("p".into(), a);
                asg.insert("x".into(), i);
                for (name, &v) in names.iter().zip(&cand) {
                    asg.insert(name.clone(), v);
                }
                evaluate(&matrix, db, &asg).unwrap() == theta_at[i as usize - 1]
            });
            if ok {
                best = Some(cand);
                break 'outer;
            }
        }
    }
    best
}

fn increasing_tuples(n: u32, k: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn go(n: u32, k: usize, start: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for v in start..=n {
            cur.push(v);
            go(n, k, v + 1, cur, out);
            cur.pop();
        }
    }
    go(n, k, 1, &mut cur, &mut out);
    out
}

/// One disjunct of the reduced query: its type, target relation, and the
/// slice of extended parameters it owns.
#[derive(Debug, Clone)]
struct DisjunctPlan {
    relation: String,
    theta: AtomicType,
    param_offset: usize,
}

/// A single-parameter existential word query reduced to a quantifier-free
/// query with extended parameters, plus the selector computing canonical
/// bindings for them.
pub struct QfReduction {
    pub original: Arc<ReplacementQuery>,
    pub reduced: Arc<ReplacementQuery>,
    plans: Vec<DisjunctPlan>,
    extended_arity: usize,
}

impl QfReduction {
    /// Builds the reduction. Quantifier-free input is passed through
    /// unchanged with an empty extension.
    pub fn new(
        query: &Arc<ReplacementQuery>,
        alphabet: &[char],
    ) -> Result<QfReduction, ReduceError> {
        if query.params.len() != 1 {
            return Err(ReduceError::ParameterCount(query.params.len()));
        }
        let p = query.params[0].clone();
        if query
            .rules
            .iter()
            .all(|r| classify_formula(&r.formula) == FormulaClass::QuantifierFree)
        {
            return Ok(QfReduction {
                original: query.clone(),
                reduced: query.clone(),
                plans: Vec::new(),
                extended_arity: 0,
            });
        }

        let mut params: Vec<String> = vec![p.clone()];
        let mut plans = Vec::new();
        let mut rules = Vec::new();
        let mut next_param = 2usize;
        for rule in &query.rules {
            let x = rule.out_vars[0].clone();
            let thetas =
                atomic_type_decomposition(&rule.formula, &p, &x, alphabet, &rule.relation)?;
            let mut disjuncts = Vec::new();
            for theta in thetas {
                let names: Vec<String> = (0..theta.arity())
                    .map(|i| format!("p{}", next_param + i))
                    .collect();
                next_param += theta.arity();
                let offset = params.len();
                params.extend(names.iter().cloned());
                disjuncts.push(theta.matrix(&p, &x, &names, alphabet));
                plans.push(DisjunctPlan {
                    relation: rule.relation.clone(),
                    theta,
                    param_offset: offset,
                });
            }
            rules.push(ReplacementRule {
                relation: rule.relation.clone(),
                out_vars: rule.out_vars.clone(),
                formula: Formula::disj(disjuncts),
            });
        }
        let param_refs: Vec<&str> = params.iter().map(|s| s.as_str()).collect();
        let reduced = Arc::new(
            ReplacementQuery::new(&format!("{}_qf", query.name), &param_refs, rules)
                .expect("reduced query is well-formed"),
        );
        Ok(QfReduction {
            original: query.clone(),
            reduced,
            plans,
            extended_arity: params.len() - 1,
        })
    }

    /// Extended parameter values for word `db` and original parameter `a`:
    /// per disjunct the canonical tuple, or an arbitrary binding when the
    /// type holds nowhere (any binding keeps the disjunct false everywhere).
    pub fn select(&self, db: &Database, a: u32) -> Vec<u32> {
        let mut ext = vec![1u32; self.extended_arity];
        for plan in &self.plans {
            if let Some(cand) = canonical_tuple(db, a, &plan.theta) {
                for (i, v) in cand.into_iter().enumerate() {
                    ext[plan.param_offset - 1 + i] = v;
                }
            }
        }
        ext
    }

    /// Full argument vector for the reduced query.
    pub fn bind_args(&self, db: &Database, a: u32) -> Vec<u32> {
        let mut args = vec![a];
        args.extend(self.select(db, a));
        args
    }

    /// The reduced query's disjuncts as (target relation, atomic type)
    /// pairs; drives the structural relabeling-generator analysis.
    pub fn disjuncts(&self) -> impl Iterator<Item = (&str, &AtomicType)> {
        self.plans.iter().map(|p| (p.relation.as_str(), &p.theta))
    }

    /// Relations the reduced query rules target.
    pub fn ruled_relations(&self) -> Vec<String> {
        self.reduced.rules.iter().map(|r| r.relation.clone()).collect()
    }
}

/// Existential single-parameter change queries over `{a,b}` words used as
/// fixtures throughout the test suites. Each has a single rule, so no letter
/// clash can arise.
pub fn existential_fixtures() -> Vec<Arc<ReplacementQuery>> {
    let mk = |name: &str, rel: &str, text: &str| {
        super::query_from_text(name, &["p1"], rel, &["x"], text).unwrap()
    };
    vec![
        // Blanks up to the parameter with an `a` somewhere left become `a`.
        mk(
            "fill_a_left",
            "R_a",
            "R_a(x) | (!R_b(x) & x <= p1 & exists y. (y < x & R_a(y)))",
        ),
        // The parameter position becomes `b` when blank with a `b` left.
        mk("attract_b", "R_b", "R_b(x) | (!R_a(x) & x = p1 & exists y. (y < x & R_b(y)))"),
        // Blanks enclosed by `a`s on both sides become `a` (two witnesses).
        mk(
            "bridge_a",
            "R_a",
            "R_a(x) | (!R_b(x) & exists y. exists z. (y < x & x < z & R_a(y) & R_a(z) & y <= p1))",
        ),
    ]
}
