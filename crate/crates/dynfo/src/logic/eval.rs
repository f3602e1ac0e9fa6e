//! Formula evaluation over finite databases.
//!
//! Formulas are compiled once per call site: relation names resolve to
//! indices, variables to assignment slots. Evaluation is then allocation-free
//! recursion with short-circuiting; quantifiers range over `1..=n`.

use arrayvec::ArrayVec;
use thiserror::Error;

use super::{Assignment, BinOp, CmpOp, Formula, Quantifier, Term};
use crate::structures::{tup, Database, Relation, Tuple};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("unknown relation `{0}`")]
    UnknownRelation(String),
    #[error("relation `{relation}` has arity {expected}, atom has {found} terms")]
    ArityMismatch { relation: String, expected: usize, found: usize },
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("unknown constant `{0}`")]
    UnknownConstant(String),
    #[error("order atoms require an ordered schema")]
    OrderUnavailable,
    #[error("assignment binds `{var}` to {value}, outside 1..={n}")]
    OutOfDomain { var: String, value: u32, n: u32 },
}

/// Name-resolution environment: the relations and constants visible to a
/// formula. Built from one database or from an input/auxiliary pair sharing
/// a domain.
pub struct RelEnv<'a> {
    pub n: u32,
    pub ordered: bool,
    rels: Vec<(&'a str, &'a Relation)>,
    consts: Vec<(&'a str, u32)>,
}

impl<'a> RelEnv<'a> {
    pub fn from_db(db: &'a Database) -> RelEnv<'a> {
        let schema = db.schema();
        RelEnv {
            n: db.size(),
            ordered: schema.ordered,
            rels: schema
                .relations()
                .iter()
                .enumerate()
                .map(|(i, d)| (d.name.as_str(), db.relation_at(i)))
                .collect(),
            consts: schema
                .constants()
                .iter()
                .map(|c| (c.as_str(), db.constant(c).unwrap()))
                .collect(),
        }
    }

    /// Combined view over two databases with disjoint relation names (the
    /// engine's input + auxiliary state). Order availability comes from the
    /// first.
    pub fn from_pair(input: &'a Database, aux: &'a Database) -> RelEnv<'a> {
        let mut env = RelEnv::from_db(input);
        debug_assert_eq!(input.size(), aux.size());
        let aux_schema = aux.schema();
        for (i, d) in aux_schema.relations().iter().enumerate() {
            env.rels.push((d.name.as_str(), aux.relation_at(i)));
        }
        for c in aux_schema.constants() {
            env.consts.push((c.as_str(), aux.constant(c).unwrap()));
        }
        env
    }

    fn rel(&self, name: &str) -> Option<(usize, &'a Relation)> {
        self.rels.iter().position(|(n, _)| *n == name).map(|i| (i, self.rels[i].1))
    }

    fn constant(&self, name: &str) -> Option<u32> {
        self.consts.iter().find(|(n, _)| *n == name).map(|(_, v)| *v)
    }
}

#[derive(Clone, Copy)]
enum CTerm {
    Slot(u16),
    Lit(u32),
}

enum CNode {
    True,
    False,
    Atom { rel: u32, args: ArrayVec<CTerm, 8> },
    Cmp(CmpOp, CTerm, CTerm),
    Not(Box<CNode>),
    And(Box<CNode>, Box<CNode>),
    Or(Box<CNode>, Box<CNode>),
    Implies(Box<CNode>, Box<CNode>),
    Quant { q: Quantifier, slot: u16, innermost: bool, body: Box<CNode> },
}

impl CNode {
    fn has_quant(&self) -> bool {
        match self {
            CNode::Quant { .. } => true,
            CNode::Not(g) => g.has_quant(),
            CNode::And(a, b) | CNode::Or(a, b) | CNode::Implies(a, b) => {
                a.has_quant() || b.has_quant()
            }
            _ => false,
        }
    }
}

/// A formula compiled against an environment, with an explicit order of its
/// externally bound variables.
pub struct CompiledFormula<'a> {
    root: CNode,
    rels: Vec<&'a Relation>,
    n: u32,
    n_slots: usize,
    n_freeslots: usize,
}

impl<'a> CompiledFormula<'a> {
    /// Compiles `f` for evaluation under `env`, with `free_order` naming the
    /// slots the caller will fill (parameters and output variables).
    pub fn compile(
        f: &Formula,
        env: &RelEnv<'a>,
        free_order: &[String],
    ) -> Result<CompiledFormula<'a>, EvalError> {
        let mut rels: Vec<&'a Relation> = Vec::new();
        let mut scope: Vec<(String, u16)> =
            free_order.iter().enumerate().map(|(i, v)| (v.clone(), i as u16)).collect();
        let mut next_slot = free_order.len() as u16;
        let root = compile_node(f, env, &mut rels, &mut scope, &mut next_slot)?;
        Ok(CompiledFormula {
            root,
            rels,
            n: env.n,
            n_slots: next_slot as usize,
            n_freeslots: free_order.len(),
        })
    }

    /// Evaluates with the given values for the externally bound slots.
    pub fn eval(&self, free_values: &[u32]) -> bool {
        let mut counter = 0u64;
        self.eval_counting(free_values, &mut counter)
    }

    /// Evaluates and counts quantifier-body assignment touches in `counter`.
    pub fn eval_counting(&self, free_values: &[u32], counter: &mut u64) -> bool {
        debug_assert_eq!(free_values.len(), self.n_freeslots);
        let mut slots = vec![0u32; self.n_slots];
        slots[..free_values.len()].copy_from_slice(free_values);
        eval_node(&self.root, &self.rels, self.n, &mut slots, counter)
    }
}

fn compile_term(
    t: &Term,
    env: &RelEnv<'_>,
    scope: &mut Vec<(String, u16)>,
) -> Result<CTerm, EvalError> {
    match t {
        Term::Var(v) => match scope.iter().rev().find(|(s, _)| s == v) {
            Some((_, slot)) => Ok(CTerm::Slot(*slot)),
            None => Err(EvalError::UnboundVariable(v.clone())),
        },
        Term::Const(c) => match env.constant(c) {
            Some(v) => Ok(CTerm::Lit(v)),
            None => Err(EvalError::UnknownConstant(c.clone())),
        },
    }
}

fn compile_node<'a>(
    f: &Formula,
    env: &RelEnv<'a>,
    rels: &mut Vec<&'a Relation>,
    scope: &mut Vec<(String, u16)>,
    next_slot: &mut u16,
) -> Result<CNode, EvalError> {
    Ok(match f {
        Formula::True => CNode::True,
        Formula::False => CNode::False,
        Formula::Atom(name, terms) => {
            let (_, rel) = env
                .rel(name)
                .ok_or_else(|| EvalError::UnknownRelation(name.clone()))?;
            if rel.arity() != terms.len() {
                return Err(EvalError::ArityMismatch {
                    relation: name.clone(),
                    expected: rel.arity(),
                    found: terms.len(),
                });
            }
            let idx = match rels.iter().position(|r| std::ptr::eq(*r, rel)) {
                Some(i) => i,
                None => {
                    rels.push(rel);
                    rels.len() - 1
                }
            };
            let mut args = ArrayVec::new();
            for t in terms {
                args.push(compile_term(t, env, scope)?);
            }
            CNode::Atom { rel: idx as u32, args }
        }
        Formula::Cmp(op, a, b) => {
            if matches!(op, CmpOp::Less | CmpOp::Leq) && !env.ordered {
                return Err(EvalError::OrderUnavailable);
            }
            CNode::Cmp(*op, compile_term(a, env, scope)?, compile_term(b, env, scope)?)
        }
        Formula::Not(g) => CNode::Not(Box::new(compile_node(g, env, rels, scope, next_slot)?)),
        Formula::Bin(op, a, b) => {
            let ca = Box::new(compile_node(a, env, rels, scope, next_slot)?);
            let cb = Box::new(compile_node(b, env, rels, scope, next_slot)?);
            match op {
                BinOp::And => CNode::And(ca, cb),
                BinOp::Or => CNode::Or(ca, cb),
                BinOp::Implies => CNode::Implies(ca, cb),
            }
        }
        Formula::Quant(q, v, body) => {
            // Shadowing resolves to the innermost binding; each binder gets
            // a fresh slot.
            let slot = *next_slot;
            *next_slot += 1;
            scope.push((v.clone(), slot));
            let body = compile_node(body, env, rels, scope, next_slot)?;
            scope.pop();
            let innermost = !body.has_quant();
            CNode::Quant { q: *q, slot, innermost, body: Box::new(body) }
        }
    })
}

fn term_value(t: CTerm, slots: &[u32]) -> u32 {
    match t {
        CTerm::Slot(i) => slots[i as usize],
        CTerm::Lit(v) => v,
    }
}

fn eval_node(node: &CNode, rels: &[&Relation], n: u32, slots: &mut Vec<u32>, counter: &mut u64) -> bool {
    match node {
        CNode::True => true,
        CNode::False => false,
        CNode::Atom { rel, args } => {
            let mut t = Tuple::new();
            for &a in args {
                t.push(term_value(a, slots));
            }
            rels[*rel as usize].contains(&t)
        }
        CNode::Cmp(op, a, b) => {
            let (x, y) = (term_value(*a, slots), term_value(*b, slots));
            match op {
                CmpOp::Eq => x == y,
                CmpOp::Less => x < y,
                CmpOp::Leq => x <= y,
            }
        }
        CNode::Not(g) => !eval_node(g, rels, n, slots, counter),
        CNode::And(a, b) => {
            eval_node(a, rels, n, slots, counter) && eval_node(b, rels, n, slots, counter)
        }
        CNode::Or(a, b) => {
            eval_node(a, rels, n, slots, counter) || eval_node(b, rels, n, slots, counter)
        }
        CNode::Implies(a, b) => {
            !eval_node(a, rels, n, slots, counter) || eval_node(b, rels, n, slots, counter)
        }
        CNode::Quant { q, slot, innermost, body } => {
            let slot = *slot as usize;
            // Count complete assignments: one per iteration of an innermost
            // quantifier (outer iterations are counted via their subtrees).
            let inc = u64::from(*innermost);
            match q {
                Quantifier::Exists => (1..=n).any(|v| {
                    *counter += inc;
                    slots[slot] = v;
                    eval_node(body, rels, n, slots, counter)
                }),
                Quantifier::Forall => (1..=n).all(|v| {
                    *counter += inc;
                    slots[slot] = v;
                    eval_node(body, rels, n, slots, counter)
                }),
            }
        }
    }
}

fn check_assignment(f: &Formula, a: &Assignment, n: u32) -> Result<Vec<String>, EvalError> {
    for (v, &val) in a {
        if val == 0 || val > n {
            return Err(EvalError::OutOfDomain { var: v.clone(), value: val, n });
        }
    }
    let free = f.free_vars();
    for v in &free {
        if !a.contains_key(v) {
            return Err(EvalError::UnboundVariable(v.clone()));
        }
    }
    Ok(a.keys().cloned().collect())
}

/// Evaluates `f` on `db` under `a`; standard first-order semantics with
/// quantifiers ranging over the full domain.
pub fn evaluate(f: &Formula, db: &Database, a: &Assignment) -> Result<bool, EvalError> {
    evaluate_counting(f, db, a).map(|(b, _)| b)
}

/// As [`evaluate`], also reporting how many quantifier assignments were
/// touched (the evaluation-cost bound).
pub fn evaluate_counting(
    f: &Formula,
    db: &Database,
    a: &Assignment,
) -> Result<(bool, u64), EvalError> {
    let env = RelEnv::from_db(db);
    let order = check_assignment(f, a, env.n)?;
    let compiled = CompiledFormula::compile(f, &env, &order)?;
    let values: Vec<u32> = order.iter().map(|v| a[v]).collect();
    let mut counter = 0;
    let result = compiled.eval_counting(&values, &mut counter);
    Ok((result, counter))
}

/// The relation `{b̄ : env ⊨ f(ā, b̄)}`: all tuples over the output variables
/// making `f` true with the parameters fixed.
pub fn define_relation_env(
    f: &Formula,
    env: &RelEnv<'_>,
    params: &Assignment,
    out_vars: &[String],
) -> Result<Relation, EvalError> {
    for (v, &val) in params {
        if val == 0 || val > env.n {
            return Err(EvalError::OutOfDomain { var: v.clone(), value: val, n: env.n });
        }
    }
    let free = f.free_vars();
    for v in &free {
        if !params.contains_key(v) && !out_vars.contains(v) {
            return Err(EvalError::UnboundVariable(v.clone()));
        }
    }
    let mut order: Vec<String> = params.keys().cloned().collect();
    order.extend(out_vars.iter().cloned());
    let compiled = CompiledFormula::compile(f, env, &order)?;
    let mut values: Vec<u32> = params.values().copied().collect();
    let base = values.len();
    values.extend(std::iter::repeat(1).take(out_vars.len()));

    let mut rel = Relation::new(out_vars.len());
    let n = env.n;
    // Odometer over the output tuple space.
    loop {
        if compiled.eval(&values) {
            rel.insert(tup(&values[base..]));
        }
        let mut i = out_vars.len();
        loop {
            if i == 0 {
                return Ok(rel);
            }
            i -= 1;
            if values[base + i] < n {
                values[base + i] += 1;
                break;
            }
            values[base + i] = 1;
        }
    }
}

/// [`define_relation_env`] over a single database.
pub fn define_relation(
    f: &Formula,
    db: &Database,
    params: &Assignment,
    out_vars: &[String],
) -> Result<Relation, EvalError> {
    define_relation_env(f, &RelEnv::from_db(db), params, out_vars)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::parse_formula;
    use crate::structures::Schema;
    use std::sync::Arc;

    fn asg(pairs: &[(&str, u32)]) -> Assignment {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    /// Substitution-based reference evaluator, kept deliberately naive and
    /// structurally different from the compiled path.
    pub(crate) fn naive_eval(f: &Formula, db: &Database, a: &Assignment) -> bool {
        fn term(t: &Term, db: &Database, a: &Assignment) -> u32 {
            match t {
                Term::Var(v) => a[v],
                Term::Const(c) => db.constant(c).unwrap(),
            }
        }
        match f {
            Formula::True => true,
            Formula::False => false,
            Formula::Atom(r, ts) => {
                let vals: Vec<u32> = ts.iter().map(|t| term(t, db, a)).collect();
                db.relation(r).unwrap().contains(&vals)
            }
            Formula::Cmp(op, x, y) => {
                let (x, y) = (term(x, db, a), term(y, db, a));
                match op {
                    CmpOp::Eq => x == y,
                    CmpOp::Less => x < y,
                    CmpOp::Leq => x <= y,
                }
            }
            Formula::Not(g) => !naive_eval(g, db, a),
            Formula::Bin(BinOp::And, x, y) => naive_eval(x, db, a) && naive_eval(y, db, a),
            Formula::Bin(BinOp::Or, x, y) => naive_eval(x, db, a) || naive_eval(y, db, a),
            Formula::Bin(BinOp::Implies, x, y) => !naive_eval(x, db, a) || naive_eval(y, db, a),
            Formula::Quant(q, v, body) => {
                let mut results = (1..=db.size()).map(|val| {
                    let mut a2 = a.clone();
                    a2.insert(v.clone(), val);
                    naive_eval(body, db, &a2)
                });
                match q {
                    Quantifier::Exists => results.any(|b| b),
                    Quantifier::Forall => results.all(|b| b),
                }
            }
        }
    }

    #[test]
    fn atom_lookup() {
        let mut db = Database::empty(Arc::new(Schema::graph()), 3).unwrap();
        db.insert("E", &[1, 2]).unwrap();
        let f = parse_formula("E(x,y)").unwrap();
        assert!(evaluate(&f, &db, &asg(&[("x", 1), ("y", 2)])).unwrap());
        assert!(!evaluate(&f, &db, &asg(&[("x", 2), ("y", 1)])).unwrap());
    }

    #[test]
    fn exists_over_empty_relation() {
        let db = Database::empty(Arc::new(Schema::graph()), 4).unwrap();
        let f = parse_formula("exists z. E(x,z)").unwrap();
        for x in 1..=4 {
            assert!(!evaluate(&f, &db, &asg(&[("x", x)])).unwrap());
        }
    }

    #[test]
    fn tc_formula_on_4cycle_paths() {
        // R = paths of length <= 1 on the 4-cycle 1->2->3->4->1.
        let schema = Schema::graph().with_relation("R", 2).unwrap();
        let mut db = Database::empty(Arc::new(schema), 4).unwrap();
        for (u, v) in [(1, 2), (2, 3), (3, 4), (4, 1)] {
            db.insert("E", &[u, v]).unwrap();
            db.insert("R", &[u, v]).unwrap();
        }
        for v in 1..=4 {
            db.insert("R", &[v, v]).unwrap();
        }
        let f = parse_formula("(x = y) | E(x,y) | exists z. (R(x,z) & R(z,y))").unwrap();
        // Oracle (by enumeration of z): 1 reaches 3 via z=2.
        assert!(evaluate(&f, &db, &asg(&[("x", 1), ("y", 3)])).unwrap());
        // 1 does not reach 4 within two steps.
        assert!(!evaluate(&f, &db, &asg(&[("x", 1), ("y", 4)])).unwrap());
    }

    #[test]
    fn define_relation_star_insertion() {
        // Example: mu_E(p; x,y) = E(x,y) | (x = p) on empty E, n=3, p:=2.
        let db = Database::empty(Arc::new(Schema::graph()), 3).unwrap();
        let f = parse_formula("E(x,y) | (x = p)").unwrap();
        let rel = define_relation(
            &f,
            &db,
            &asg(&[("p", 2)]),
            &["x".to_string(), "y".to_string()],
        )
        .unwrap();
        let got = rel.sorted();
        let want: Vec<Vec<u32>> = vec![vec![2, 1], vec![2, 2], vec![2, 3]];
        assert_eq!(got.iter().map(|t| t.to_vec()).collect::<Vec<_>>(), want);
    }

    #[test]
    fn define_relation_false_and_identity() {
        let mut db = Database::empty(Arc::new(Schema::graph()), 3).unwrap();
        db.insert("E", &[3, 1]).unwrap();
        db.insert("E", &[1, 2]).unwrap();
        let empty = define_relation(
            &parse_formula("false").unwrap(),
            &db,
            &Assignment::new(),
            &["x".to_string(), "y".to_string()],
        )
        .unwrap();
        assert!(empty.is_empty());
        // define_relation with f = R(x̄) is the identity on R.
        let id = define_relation(
            &parse_formula("E(x,y)").unwrap(),
            &db,
            &Assignment::new(),
            &["x".to_string(), "y".to_string()],
        )
        .unwrap();
        assert_eq!(&id, db.relation("E").unwrap());
    }

    #[test]
    fn word_swap_rule_positionwise() {
        // Example 3.1(b)'s R_a rule applied on "baa" (n=5) with p=3:
        // positions before 3 swap letters, the rest keep theirs.
        let schema = Arc::new(Schema::word(&['a', 'b']));
        let db = Database::from_word_content(
            schema,
            &[Some('b'), Some('a'), None, Some('a'), None],
        )
        .unwrap();
        let f = parse_formula("((x < p) & R_b(x)) | (!(x < p) & R_a(x))").unwrap();
        let rel = define_relation(&f, &db, &asg(&[("p", 3)]), &["x".to_string()]).unwrap();
        let got: Vec<u32> = rel.sorted().iter().map(|t| t[0]).collect();
        assert_eq!(got, vec![1, 4]);
    }

    #[test]
    fn errors_surface() {
        let db = Database::empty(Arc::new(Schema::graph()), 3).unwrap();
        let f = parse_formula("E(x,y)").unwrap();
        assert_eq!(
            evaluate(&f, &db, &asg(&[("x", 1)])).unwrap_err(),
            EvalError::UnboundVariable("y".into())
        );
        let g = parse_formula("E(x,y,z)").unwrap();
        assert!(matches!(
            evaluate(&g, &db, &asg(&[("x", 1), ("y", 1), ("z", 1)])).unwrap_err(),
            EvalError::ArityMismatch { .. }
        ));
        // Order atoms on an unordered schema are an error.
        let h = parse_formula("x < y").unwrap();
        assert_eq!(
            evaluate(&h, &db, &asg(&[("x", 1), ("y", 2)])).unwrap_err(),
            EvalError::OrderUnavailable
        );
    }

    #[test]
    fn min_max_constants() {
        let schema = Arc::new(Schema::word(&['a']));
        let db =
            Database::from_word_content(schema, &[Some('a'), None, Some('a')]).unwrap();
        let f = parse_formula("R_a(min) & R_a(max) & !R_a(x)").unwrap();
        assert!(evaluate(&f, &db, &asg(&[("x", 2)])).unwrap());
    }

    #[test]
    fn quantifier_touch_bound() {
        // q nested quantifiers touch at most n^q assignments.
        let n = 30;
        let db = Database::empty(Arc::new(Schema::graph()), n).unwrap();
        let f = parse_formula("exists x. exists y. exists z. (E(x,y) & E(y,z))").unwrap();
        let (result, touched) = evaluate_counting(&f, &db, &Assignment::new()).unwrap();
        assert!(!result);
        assert!(touched <= (n as u64).pow(3), "touched {touched} > n^3");
    }

    #[test]
    fn agrees_with_naive_reference() {
        // Structured enumeration of formulas of quantifier rank <= 2 over a
        // fixed atom pool, crossed with every database on n <= 2 over one
        // unary and one binary relation and random databases at n = 3, 4.
        use rand::{Rng, SeedableRng};
        let schema = Arc::new(
            Schema::new(
                vec![
                    crate::structures::RelDecl { name: "U".into(), arity: 1 },
                    crate::structures::RelDecl { name: "E".into(), arity: 2 },
                ],
                vec![],
                true,
                false,
                None,
            )
            .unwrap(),
        );
        let atoms = [
            "U(x)", "U(z)", "E(x,z)", "E(z,x)", "E(z,w)", "x = z", "z < w", "x <= z",
        ];
        let mut formulas: Vec<Formula> = Vec::new();
        for a in atoms {
            for b in atoms {
                let f = format!("exists z. ({a} & forall w. ({b} -> {a}))");
                formulas.push(parse_formula(&f).unwrap());
                let g = format!("forall z. ({a} | exists w. {b})");
                formulas.push(parse_formula(&g).unwrap());
                formulas.push(parse_formula(&format!("!(exists z. exists w. ({a} & {b}))")).unwrap());
            }
        }
        let mut dbs: Vec<Database> = Vec::new();
        for n in 1..=2u32 {
            let pairs: Vec<(u32, u32)> =
                (1..=n).flat_map(|u| (1..=n).map(move |v| (u, v))).collect();
            for um in 0..(1u32 << n) {
                for em in 0..(1u32 << pairs.len()) {
                    let mut db = Database::empty(schema.clone(), n).unwrap();
                    for i in 0..n {
                        if um & (1 << i) != 0 {
                            db.insert("U", &[i + 1]).unwrap();
                        }
                    }
                    for (i, (u, v)) in pairs.iter().enumerate() {
                        if em & (1 << i) != 0 {
                            db.insert("E", &[*u, *v]).unwrap();
                        }
                    }
                    dbs.push(db);
                }
            }
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for n in 3..=4u32 {
            for _ in 0..120 {
                let mut db = Database::empty(schema.clone(), n).unwrap();
                for v in 1..=n {
                    if rng.gen_bool(0.5) {
                        db.insert("U", &[v]).unwrap();
                    }
                }
                for u in 1..=n {
                    for v in 1..=n {
                        if rng.gen_bool(0.3) {
                            db.insert("E", &[u, v]).unwrap();
                        }
                    }
                }
                dbs.push(db);
            }
        }
        for db in &dbs {
            let n = db.size();
            for f in &formulas {
                // Some instantiated templates leave `w` free outside the
                // quantifier; bind both free slots.
                for x in 1..=n {
                    for w in 1..=n {
                        let a = asg(&[("x", x), ("w", w)]);
                        assert_eq!(
                            evaluate(f, &db, &a).unwrap(),
                            naive_eval(f, &db, &a),
                            "divergence on {f} with x={x}, db={db:?}"
                        );
                    }
                }
            }
        }
    }
}
