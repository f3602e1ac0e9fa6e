//! Context-free-language maintenance under quantifier-free (and, via the
//! canonical-tuple reduction, single-parameter existential) word changes.
//!
//! The auxiliary relations record derivability of two-block sentential
//! forms: `S_f1_f2_X_Y(i₁,j₁,i₂,j₂)` holds iff
//! `X ⇒* f₁(w_{i₁..j₁}) Y f₂(w_{i₂..j₂})` with `i₁ ≤ j₁ < i₂ ≤ j₂`.
//! One-sided forms get their own families: `L_f_X_Y(i,j)` for
//! `X ⇒* f(w_{i..j}) Y` and `R_f_X_Y(i,j)` for `X ⇒* Y f(w_{i..j})`.
//! Internally the step works over an index space extended by virtual blank
//! positions `0` and `n+1`, which encode the one-sided and block-free forms
//! uniformly.
//!
//! A change splits the word into relabeled gaps and explicitly relettered
//! parameter positions. Tuples whose blocks avoid all parameter positions
//! update by pure relabeling-index substitution; tuples containing one are
//! recomputed by a split decomposition that reads old relations (through
//! composed relabelings) and the grammar's static tables only.

use std::sync::Arc;

use super::grammar::{CnfGrammar, NtId};
use super::regular::LangError;
use super::relabel::{
    check_qf_word_query, relabeling_closure, word_change_profile, Relabeling, WordProfile,
};
use super::Letter;
use crate::changes::reduce::QfReduction;
use crate::changes::{ChangeOp, ReplacementQuery};
use crate::engine::{DynamicProgram, EngineError, Maintainer, ProgramKind};
use crate::logic::{classify_formula, FormulaClass};
use crate::structures::{tup, Database, RelDecl, Relation, Schema};

pub fn s4_name(f1: &Relabeling, f2: &Relabeling, x: &str, y: &str) -> String {
    format!("S_{}_{}_{}_{}", f1.code(), f2.code(), x, y)
}

pub fn left_name(f: &Relabeling, x: &str, y: &str) -> String {
    format!("L_{}_{}_{}", f.code(), x, y)
}

pub fn right_name(f: &Relabeling, x: &str, y: &str) -> String {
    format!("R_{}_{}_{}", f.code(), x, y)
}

struct QueryEntry {
    name: String,
    effective: Arc<ReplacementQuery>,
    reduction: Option<QfReduction>,
}

/// Procedural maintainer for one grammar and a fixed change set.
pub struct CflMaintainer {
    pub grammar: CnfGrammar,
    pub alphabet: Vec<char>,
    pub closure: Vec<Relabeling>,
    entries: Vec<QueryEntry>,
    pub input_schema: Arc<Schema>,
    pub aux_schema: Arc<Schema>,
}

/// Builds the dynamic program maintaining membership in `L(grammar)`.
/// Existential queries are routed through the quantifier-free reduction
/// first; the closure is computed from the reduced forms.
pub fn compile_cfl(
    grammar: &CnfGrammar,
    queries: &[Arc<ReplacementQuery>],
    alphabet: &[char],
) -> Result<(DynamicProgram, Arc<CflMaintainer>), LangError> {
    for c in &grammar.alphabet {
        if !alphabet.contains(c) {
            return Err(LangError::Grammar(format!(
                "grammar terminal `{c}` outside the word alphabet"
            )));
        }
    }
    let mut entries = Vec::new();
    let mut generators = Vec::new();
    for q in queries {
        let all_qf = q
            .rules
            .iter()
            .all(|r| classify_formula(&r.formula) == FormulaClass::QuantifierFree);
        let entry = if all_qf {
            check_qf_word_query(q, alphabet).map_err(LangError::Profile)?;
            generators.extend(
                super::relabel::profile_generators(&[q.clone()], alphabet)
                    .map_err(LangError::Profile)?,
            );
            QueryEntry { name: q.name.clone(), effective: q.clone(), reduction: None }
        } else {
            let red = QfReduction::new(q, alphabet)
                .map_err(|e| LangError::Grammar(e.to_string()))?;
            // The reduced parameter tuple is wide; its generators come from
            // the disjunct structure instead of context enumeration.
            generators.extend(super::relabel::reduction_generators(&red, alphabet));
            QueryEntry {
                name: q.name.clone(),
                effective: red.reduced.clone(),
                reduction: Some(red),
            }
        };
        entries.push(entry);
    }
    let closure = super::relabel::close_under_composition(&generators, alphabet);

    let nts = &grammar.nonterminals;
    let mut rels = Vec::new();
    for f1 in &closure {
        for f2 in &closure {
            for x in nts {
                for y in nts {
                    rels.push(RelDecl { name: s4_name(f1, f2, x, y), arity: 4 });
                }
            }
        }
    }
    for f in &closure {
        for x in nts {
            for y in nts {
                rels.push(RelDecl { name: left_name(f, x, y), arity: 2 });
                rels.push(RelDecl { name: right_name(f, x, y), arity: 2 });
            }
        }
    }
    rels.push(RelDecl { name: "Q".into(), arity: 1 });
    let aux_schema =
        Arc::new(Schema::new(rels, vec![], false, false, None).expect("aux schema"));
    let maintainer = Arc::new(CflMaintainer {
        grammar: grammar.clone(),
        alphabet: alphabet.to_vec(),
        closure,
        entries,
        input_schema: Arc::new(Schema::word(alphabet)),
        aux_schema: aux_schema.clone(),
    });
    let program = DynamicProgram {
        name: "cfl".into(),
        input_schema: maintainer.input_schema.clone(),
        aux_schema,
        query_relation: "Q".into(),
        kind: ProgramKind::Maintainer(maintainer.clone()),
    };
    Ok((program, maintainer))
}

/// Dense view of all families over the sentinel-extended index space.
struct DenseState {
    n: usize,
    ext: usize,
    nts: usize,
    fcount: usize,
    /// bits[fpair][((x*nts+y)*ext^4) + flat4]
    bits: Vec<Vec<bool>>,
}

impl DenseState {
    fn new(n: usize, nts: usize, fcount: usize) -> DenseState {
        let ext = n + 2;
        let span = ext * ext * ext * ext;
        DenseState { n, ext, nts, fcount, bits: vec![vec![false; nts * nts * span]; fcount * fcount] }
    }

    #[inline]
    fn flat(&self, i1: u32, j1: u32, i2: u32, j2: u32) -> usize {
        (((i1 as usize * self.ext) + j1 as usize) * self.ext + i2 as usize) * self.ext
            + j2 as usize
    }

    #[inline]
    fn idx(&self, x: NtId, y: NtId, flat: usize) -> usize {
        (x * self.nts + y) * (self.ext * self.ext * self.ext * self.ext) + flat
    }

    #[inline]
    fn get(&self, f1: usize, f2: usize, x: NtId, y: NtId, flat: usize) -> bool {
        self.bits[f1 * self.fcount + f2][self.idx(x, y, flat)]
    }

    #[inline]
    fn set(&mut self, f1: usize, f2: usize, x: NtId, y: NtId, flat: usize, v: bool) {
        let i = self.idx(x, y, flat);
        self.bits[f1 * self.fcount + f2][i] = v;
    }

    fn sentinel_left(&self) -> (u32, u32) {
        (0, 0)
    }

    fn sentinel_right(&self) -> (u32, u32) {
        (self.n as u32 + 1, self.n as u32 + 1)
    }
}

/// Enumerates the valid block pairs: each block is a real range or its
/// side's sentinel.
fn for_each_blocks(n: u32, mut f: impl FnMut((u32, u32), (u32, u32))) {
    let mut lefts: Vec<(u32, u32)> = vec![(0, 0)];
    for i1 in 1..=n {
        for j1 in i1..=n {
            lefts.push((i1, j1));
        }
    }
    for &(i1, j1) in &lefts {
        f((i1, j1), (n + 1, n + 1));
        for i2 in (j1 + 1).max(1)..=n {
            for j2 in i2..=n {
                f((i1, j1), (i2, j2));
            }
        }
    }
}

impl CflMaintainer {
    fn f_index(&self, f: &Relabeling) -> usize {
        self.closure
            .binary_search(f)
            .unwrap_or_else(|_| panic!("relabeling {} escaped the closure", f.code()))
    }

    fn id_index(&self) -> usize {
        self.f_index(&Relabeling::identity(&self.alphabet))
    }

    fn load_dense(&self, aux: &Database, n: u32) -> DenseState {
        let g = &self.grammar;
        let nts = g.nt_count();
        let mut dense = DenseState::new(n as usize, nts, self.closure.len());
        let sl = dense.sentinel_left();
        let sr = dense.sentinel_right();
        // Static block-free forms: X ⇒* Y.
        let flat_static = dense.flat(sl.0, sl.1, sr.0, sr.1);
        for f1 in 0..self.closure.len() {
            for f2 in 0..self.closure.len() {
                for x in 0..nts {
                    for y in 0..nts {
                        if g.unit_reach[x][y] {
                            dense.set(f1, f2, x, y, flat_static, true);
                        }
                    }
                }
            }
        }
        for (f1i, f1) in self.closure.iter().enumerate() {
            for (f2i, f2) in self.closure.iter().enumerate() {
                for x in 0..nts {
                    for y in 0..nts {
                        let rel = aux
                            .relation(&s4_name(f1, f2, &g.nonterminals[x], &g.nonterminals[y]))
                            .expect("S family present");
                        for t in rel.iter() {
                            let flat = dense.flat(t[0], t[1], t[2], t[3]);
                            dense.set(f1i, f2i, x, y, flat, true);
                        }
                    }
                }
            }
        }
        for (fi, f) in self.closure.iter().enumerate() {
            for x in 0..nts {
                for y in 0..nts {
                    let l_rel = aux
                        .relation(&left_name(f, &g.nonterminals[x], &g.nonterminals[y]))
                        .expect("L family present");
                    for t in l_rel.iter() {
                        let flat = dense.flat(t[0], t[1], sr.0, sr.1);
                        for f2 in 0..self.closure.len() {
                            dense.set(fi, f2, x, y, flat, true);
                        }
                    }
                    let r_rel = aux
                        .relation(&right_name(f, &g.nonterminals[x], &g.nonterminals[y]))
                        .expect("R family present");
                    for t in r_rel.iter() {
                        let flat = dense.flat(sl.0, sl.1, t[0], t[1]);
                        for f1 in 0..self.closure.len() {
                            dense.set(f1, fi, x, y, flat, true);
                        }
                    }
                }
            }
        }
        dense
    }

    fn store_dense(&self, dense: &DenseState, n: u32, aux: &mut Database) {
        let g = &self.grammar;
        let nts = g.nt_count();
        let sl = dense.sentinel_left();
        let sr = dense.sentinel_right();
        for (f1i, f1) in self.closure.iter().enumerate() {
            for (f2i, f2) in self.closure.iter().enumerate() {
                for x in 0..nts {
                    for y in 0..nts {
                        let mut rel = Relation::new(4);
                        for_each_blocks(n, |(i1, j1), (i2, j2)| {
                            if (i1, j1) == sl || (i2, j2) == sr {
                                return;
                            }
                            if dense.get(f1i, f2i, x, y, dense.flat(i1, j1, i2, j2)) {
                                rel.insert(tup(&[i1, j1, i2, j2]));
                            }
                        });
                        aux.set_relation(
                            &s4_name(f1, f2, &g.nonterminals[x], &g.nonterminals[y]),
                            rel,
                        )
                        .unwrap();
                    }
                }
            }
        }
        for (fi, f) in self.closure.iter().enumerate() {
            for x in 0..nts {
                for y in 0..nts {
                    let mut l_rel = Relation::new(2);
                    let mut r_rel = Relation::new(2);
                    for i in 1..=n {
                        for j in i..=n {
                            if dense.get(fi, 0, x, y, dense.flat(i, j, sr.0, sr.1)) {
                                l_rel.insert(tup(&[i, j]));
                            }
                            if dense.get(0, fi, x, y, dense.flat(sl.0, sl.1, i, j)) {
                                r_rel.insert(tup(&[i, j]));
                            }
                        }
                    }
                    aux.set_relation(
                        &left_name(f, &g.nonterminals[x], &g.nonterminals[y]),
                        l_rel,
                    )
                    .unwrap();
                    aux.set_relation(
                        &right_name(f, &g.nonterminals[x], &g.nonterminals[y]),
                        r_rel,
                    )
                    .unwrap();
                }
            }
        }
    }

    fn query_bit(&self, dense: &DenseState, n: u32, new_content: &[Letter]) -> bool {
        let g = &self.grammar;
        if n == 1 {
            return g.derives_single(g.start, new_content[0]);
        }
        let id = self.id_index();
        (1..n).any(|u| {
            dense.get(id, id, g.start, g.epsilon_nt, dense.flat(1, u, u + 1, n))
        })
    }

    fn write_q(&self, accepted: bool, n: u32, aux: &mut Database) {
        if accepted {
            let mut q = Relation::new(1);
            for v in 1..=n {
                q.insert(tup(&[v]));
            }
            aux.set_relation("Q", q).unwrap();
        }
    }

    /// Semantic value of a (possibly sentinel-extended) tuple on arbitrary
    /// contents, by CYK over the token list `f1(block1) Y f2(block2)`.
    /// Independent of the incremental update path; used for checking.
    pub fn semantic_value(
        &self,
        content: &[Letter],
        f1: &Relabeling,
        f2: &Relabeling,
        x: NtId,
        y: NtId,
        blocks: ((u32, u32), (u32, u32)),
    ) -> bool {
        let ((i1, j1), (i2, j2)) = blocks;
        let mut tokens: Vec<Tok> = Vec::new();
        if i1 >= 1 && j1 <= content.len() as u32 && i1 <= j1 {
            for p in i1..=j1 {
                if let Some(c) = f1.apply(content[p as usize - 1]) {
                    tokens.push(Tok::Letter(c));
                }
            }
        }
        let y_pos = tokens.len();
        tokens.push(Tok::Gap);
        if i2 <= content.len() as u32 && i2 <= j2 {
            for p in i2..=j2 {
                if let Some(c) = f2.apply(content[p as usize - 1]) {
                    tokens.push(Tok::Letter(c));
                }
            }
        }
        let _ = y_pos;
        token_cyk(&self.grammar, &tokens, y)[x]
    }
}

#[derive(Clone, Copy)]
enum Tok {
    Letter(char),
    Gap,
}

/// CYK over a token list containing letters and exactly one gap symbol
/// standing for the nonterminal `y`; returns which nonterminals derive the
/// whole form.
fn token_cyk(g: &CnfGrammar, tokens: &[Tok], y: NtId) -> Vec<bool> {
    let m = tokens.len();
    let k = g.nt_count();
    let mut d = vec![vec![vec![false; k]; m]; m];
    for (i, t) in tokens.iter().enumerate() {
        for x in 0..k {
            d[i][i][x] = match t {
                Tok::Letter(c) => g.derives_single(x, Some(*c)),
                Tok::Gap => g.unit_reach[x][y],
            };
        }
    }
    for width in 2..=m {
        for i in 0..=(m - width) {
            let j = i + width - 1;
            for x in 0..k {
                d[i][j][x] = g.eff_rules[x]
                    .iter()
                    .any(|&(a, b)| (i..j).any(|s| d[i][s][a] && d[s + 1][j][b]));
            }
        }
    }
    d[0][m - 1].clone()
}

impl Maintainer for CflMaintainer {
    fn init(&self, empty_input: &Database) -> Result<Database, EngineError> {
        let n = empty_input.size();
        let g = &self.grammar;
        let nts = g.nt_count();
        let mut aux = Database::empty(self.aux_schema.clone(), n)
            .map_err(|_| EngineError::BadInitializer)?;
        // On the all-blank word a block of length d reads f(ε)^d.
        for f1 in &self.closure {
            for f2 in &self.closure {
                let s1 = f1.apply(None);
                let s2 = f2.apply(None);
                let amax = if s1.is_some() { n as usize } else { 0 };
                let bmax = if s2.is_some() { n as usize } else { 0 };
                for y in 0..nts {
                    let tbl = g.sentential_table(
                        s1.unwrap_or('a'),
                        s2.unwrap_or('a'),
                        y,
                        amax,
                        bmax,
                    );
                    for x in 0..nts {
                        let mut rel = Relation::new(4);
                        for_each_blocks(n, |(i1, j1), (i2, j2)| {
                            if i1 == 0 || i2 == n + 1 {
                                return;
                            }
                            let a = if s1.is_some() { (j1 - i1 + 1) as usize } else { 0 };
                            let b = if s2.is_some() { (j2 - i2 + 1) as usize } else { 0 };
                            if tbl[x][a][b] {
                                rel.insert(tup(&[i1, j1, i2, j2]));
                            }
                        });
                        aux.set_relation(
                            &s4_name(f1, f2, &g.nonterminals[x], &g.nonterminals[y]),
                            rel,
                        )
                        .unwrap();
                    }
                }
            }
        }
        for f in &self.closure {
            let s = f.apply(None);
            let amax = if s.is_some() { n as usize } else { 0 };
            for y in 0..nts {
                let tbl_l = g.sentential_table(s.unwrap_or('a'), 'a', y, amax, 0);
                let tbl_r = g.sentential_table('a', s.unwrap_or('a'), y, 0, amax);
                for x in 0..nts {
                    let mut l_rel = Relation::new(2);
                    let mut r_rel = Relation::new(2);
                    for i in 1..=n {
                        for j in i..=n {
                            let d = if s.is_some() { (j - i + 1) as usize } else { 0 };
                            if tbl_l[x][d][0] {
                                l_rel.insert(tup(&[i, j]));
                            }
                            if tbl_r[x][0][d] {
                                r_rel.insert(tup(&[i, j]));
                            }
                        }
                    }
                    aux.set_relation(
                        &left_name(f, &g.nonterminals[x], &g.nonterminals[y]),
                        l_rel,
                    )
                    .unwrap();
                    aux.set_relation(
                        &right_name(f, &g.nonterminals[x], &g.nonterminals[y]),
                        r_rel,
                    )
                    .unwrap();
                }
            }
        }
        self.write_q(g.nullable[g.start], n, &mut aux);
        Ok(aux)
    }

    fn step(
        &self,
        input: &Database,
        aux: &Database,
        delta: &ChangeOp,
    ) -> Result<Database, EngineError> {
        let entry = self
            .entries
            .iter()
            .find(|e| e.name == delta.query.name)
            .ok_or_else(|| EngineError::MissingRule(delta.query.name.clone()))?;
        let n = input.size();
        let g = &self.grammar;
        let nts = g.nt_count();
        let content =
            input.word_content().map_err(|e| EngineError::Maintainer(e.to_string()))?;

        // Existential changes act through their reduced quantifier-free
        // form with canonically selected extra parameters.
        let args: Vec<u32> = match &entry.reduction {
            Some(red) => red.bind_args(input, delta.args[0]),
            None => delta.args.clone(),
        };
        let profile = word_change_profile(&entry.effective, &args, &content, &self.alphabet);
        let new_content = profile.apply(&content);

        let old = self.load_dense(aux, n);
        let mut new = DenseState::new(n as usize, nts, self.closure.len());

        // Composed relabeling indices per (closure entry, gap).
        let composed: Vec<Vec<usize>> = self
            .closure
            .iter()
            .map(|f| profile.gaps.iter().map(|gp| self.f_index(&f.compose(gp))).collect())
            .collect();
        let boundaries: Vec<u32> = profile.boundaries.iter().map(|(b, _)| *b).collect();
        let has_boundary = |i: u32, j: u32| -> bool {
            i >= 1 && boundaries.iter().any(|&b| i <= b && b <= j)
        };
        // Gap of a boundary-free real block.
        let gap_of = |i: u32| profile.gap_index(i);

        // Pass 1: blocks away from every parameter position update by index
        // substitution.
        let fcount = self.closure.len();
        let sl = new.sentinel_left();
        let sr = new.sentinel_right();
        let mut expensive: Vec<((u32, u32), (u32, u32))> = Vec::new();
        for_each_blocks(n, |(i1, j1), (i2, j2)| {
            let b1 = has_boundary(i1, j1);
            let b2 = has_boundary(i2.min(n), j2.min(n)) && i2 <= n;
            if b1 || b2 {
                expensive.push(((i1, j1), (i2, j2)));
                return;
            }
            let flat = new.flat(i1, j1, i2, j2);
            for f1 in 0..fcount {
                let c1 = if i1 == 0 { f1 } else { composed[f1][gap_of(i1)] };
                for f2 in 0..fcount {
                    let c2 = if i2 > n { f2 } else { composed[f2][gap_of(i2)] };
                    for x in 0..nts {
                        for y in 0..nts {
                            if old.get(c1, c2, x, y, flat) {
                                new.set(f1, f2, x, y, flat, true);
                            }
                        }
                    }
                }
            }
        });

        // Pass 2: blocks containing a parameter position, by ascending total
        // block size. Sub-forms read the already-filled new state, old
        // relations through composed relabelings, and grammar tables.
        expensive.sort_by_key(|&((i1, j1), (i2, j2))| {
            let s1 = if i1 == 0 { 0 } else { j1 - i1 + 1 };
            let s2 = if i2 > n { 0 } else { j2 - i2 + 1 };
            s1 + s2
        });
        let ctx = StepCtx {
            grammar: g,
            closure: &self.closure,
            composed: &composed,
            boundaries: &boundaries,
            profile: &profile,
            new_content: &new_content,
            old: &old,
            n,
        };
        // new_c memo: derivability of f(new w_{l..r}) per closure entry.
        let ext = n as usize + 2;
        let mut cmemo: Vec<Option<bool>> = vec![None; fcount * nts * ext * ext];

        for ((i1, j1), (i2, j2)) in expensive {
            let flat = new.flat(i1, j1, i2, j2);
            let left_real = i1 >= 1 && i1 <= n;
            let right_real = i2 <= n;
            for f1 in 0..fcount {
                for f2 in 0..fcount {
                    for y in 0..nts {
                        for x in 0..nts {
                            let hit = g.eff_rules[x].iter().any(|&(a, b)| {
                                let left_eat = left_real
                                    && (i1..=j1).any(|s| {
                                        let rest_flat = if s + 1 <= j1 {
                                            new.flat(s + 1, j1, i2, j2)
                                        } else {
                                            new.flat(sl.0, sl.1, i2, j2)
                                        };
                                        ctx.new_c(f1, a, i1, s, &mut cmemo)
                                            && new.get(f1, f2, b, y, rest_flat)
                                    });
                                if left_eat {
                                    return true;
                                }
                                right_real
                                    && ((i2 - 1)..j2).any(|t| {
                                        let rest_flat = if t >= i2 {
                                            new.flat(i1, j1, i2, t)
                                        } else {
                                            new.flat(i1, j1, sr.0, sr.1)
                                        };
                                        new.get(f1, f2, a, y, rest_flat)
                                            && ctx.new_c(f2, b, t + 1, j2, &mut cmemo)
                                    })
                            });
                            if hit {
                                new.set(f1, f2, x, y, flat, true);
                            }
                        }
                    }
                }
            }
        }

        let mut new_aux = Database::empty(self.aux_schema.clone(), n)
            .map_err(|_| EngineError::BadInitializer)?;
        self.store_dense(&new, n, &mut new_aux);
        self.write_q(self.query_bit(&new, n, &new_content), n, &mut new_aux);
        Ok(new_aux)
    }

    fn handles(&self, query_name: &str) -> bool {
        self.entries.iter().any(|e| e.name == query_name)
    }
}

/// Borrowed context for the expensive pass of a step.
struct StepCtx<'a> {
    grammar: &'a CnfGrammar,
    closure: &'a [Relabeling],
    composed: &'a [Vec<usize>],
    boundaries: &'a [u32],
    profile: &'a WordProfile,
    new_content: &'a [Letter],
    old: &'a DenseState,
    n: u32,
}

impl<'a> StepCtx<'a> {
    fn has_boundary(&self, l: u32, r: u32) -> bool {
        self.boundaries.iter().any(|&b| l <= b && b <= r)
    }

    /// Derivability of `A ⇒* f(new w_{l..r})` for a real range `l ≤ r`.
    /// Boundary-free ranges come from old relations (a one-letter split
    /// against the ε-nonterminal); ranges containing a parameter position
    /// recurse on splits.
    fn new_c(&self, f: usize, a: NtId, l: u32, r: u32, memo: &mut Vec<Option<bool>>) -> bool {
        debug_assert!(l >= 1 && r <= self.n && l <= r);
        let ext = self.n as usize + 2;
        let nts = self.grammar.nt_count();
        let key = ((f * nts + a) * ext + l as usize) * ext + r as usize;
        if let Some(v) = memo[key] {
            return v;
        }
        let g = self.grammar;
        let value = if l == r {
            let letter = self.closure[f].apply(self.new_content[l as usize - 1]);
            g.derives_single(a, letter)
        } else if !self.has_boundary(l, r) {
            let c = self.composed[f][self.profile.gap_index(l)];
            self.old.get(c, c, a, g.epsilon_nt, self.old.flat(l, l, l + 1, r))
        } else {
            g.eff_rules[a].iter().any(|&(b, c)| {
                (l..r).any(|s| self.new_c(f, b, l, s, memo) && self.new_c(f, c, s + 1, r, memo))
            })
        };
        memo[key] = Some(value);
        value
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::changes::{single_tuple_queries, swap_before_query};
    use crate::engine::{init_state, step};
    use crate::harness::oracles::oracle_cfl;
    use crate::harness::random_change_script;
    use crate::lang::grammar::normalize_grammar;
    use crate::lang::Cfg;

    const AB: [char; 2] = ['a', 'b'];

    fn anbn_program(
        extra: Vec<Arc<ReplacementQuery>>,
    ) -> (DynamicProgram, Arc<CflMaintainer>) {
        let g = normalize_grammar(&Cfg::anbn()).unwrap();
        let schema = Arc::new(Schema::word(&AB));
        let mut queries = single_tuple_queries(&schema);
        queries.extend(extra);
        compile_cfl(&g, &queries, &AB).unwrap()
    }

    fn full_invariant(m: &CflMaintainer, input: &Database, aux: &Database) {
        let content = input.word_content().unwrap();
        let n = input.size();
        for f1 in &m.closure {
            for f2 in &m.closure {
                for x in 0..m.grammar.nt_count() {
                    for y in 0..m.grammar.nt_count() {
                        let name = s4_name(
                            f1,
                            f2,
                            &m.grammar.nonterminals[x],
                            &m.grammar.nonterminals[y],
                        );
                        let rel = aux.relation(&name).unwrap();
                        for_each_blocks(n, |(i1, j1), (i2, j2)| {
                            if i1 == 0 || i2 == n + 1 {
                                return;
                            }
                            let want = m.semantic_value(
                                &content,
                                f1,
                                f2,
                                x,
                                y,
                                ((i1, j1), (i2, j2)),
                            );
                            let got = rel.contains(&[i1, j1, i2, j2]);
                            assert_eq!(
                                got, want,
                                "{name}({i1},{j1},{i2},{j2}) on {content:?}"
                            );
                        });
                    }
                }
            }
        }
        // One-sided families.
        for f in &m.closure {
            for x in 0..m.grammar.nt_count() {
                for y in 0..m.grammar.nt_count() {
                    let lname =
                        left_name(f, &m.grammar.nonterminals[x], &m.grammar.nonterminals[y]);
                    let rname =
                        right_name(f, &m.grammar.nonterminals[x], &m.grammar.nonterminals[y]);
                    let id = Relabeling::identity(&m.alphabet);
                    for i in 1..=n {
                        for j in i..=n {
                            let want_l = m.semantic_value(
                                &content,
                                f,
                                &id,
                                x,
                                y,
                                ((i, j), (n + 1, n + 1)),
                            );
                            assert_eq!(
                                aux.relation(&lname).unwrap().contains(&[i, j]),
                                want_l,
                                "{lname}({i},{j}) on {content:?}"
                            );
                            let want_r = m.semantic_value(
                                &content,
                                &id,
                                f,
                                x,
                                y,
                                ((0, 0), (i, j)),
                            );
                            assert_eq!(
                                aux.relation(&rname).unwrap().contains(&[i, j]),
                                want_r,
                                "{rname}({i},{j}) on {content:?}"
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn init_invariant_holds() {
        let (program, m) = anbn_program(vec![]);
        for n in [1u32, 3, 5] {
            let s = init_state(n, &program).unwrap();
            full_invariant(&m, &s.input, &s.aux);
            // ε ∈ a^n b^n.
            assert!(!s.aux.relation("Q").unwrap().is_empty());
        }
    }

    #[test]
    fn single_tuple_steps_track_cyk() {
        let (program, m) = anbn_program(vec![]);
        let schema = program.input_schema.clone();
        let queries = single_tuple_queries(&schema);
        let mut s = init_state(6, &program).unwrap();
        let script = random_change_script(9, &queries, &schema, 6, 60);
        for (k, delta) in script.iter().enumerate() {
            s = step(&s, delta, &program).unwrap();
            let want = oracle_cfl(&m.grammar, &s.input);
            assert_eq!(
                !s.aux.relation("Q").unwrap().is_empty(),
                want,
                "step {k} ({delta})"
            );
            if k % 10 == 0 {
                full_invariant(&m, &s.input, &s.aux);
            }
        }
    }

    #[test]
    fn build_aabb_explicitly() {
        let (program, _m) = anbn_program(vec![]);
        let schema = program.input_schema.clone();
        let queries = single_tuple_queries(&schema);
        let ins_a = queries.iter().find(|q| q.name == "ins_R_a").unwrap();
        let ins_b = queries.iter().find(|q| q.name == "ins_R_b").unwrap();
        let mut s = init_state(4, &program).unwrap();
        for (q, pos) in [(&ins_a, 1u32), (&ins_a, 2), (&ins_b, 3), (&ins_b, 4)] {
            s = step(&s, &q.bind(&[pos]), &program).unwrap();
        }
        assert!(!s.aux.relation("Q").unwrap().is_empty()); // "aabb"
        let del_b = queries.iter().find(|q| q.name == "del_R_b").unwrap();
        s = step(&s, &del_b.bind(&[4]), &program).unwrap();
        assert!(s.aux.relation("Q").unwrap().is_empty()); // "aab"
    }

    #[test]
    fn swap_change_on_aabb() {
        let (program, m) = anbn_program(vec![swap_before_query()]);
        let schema = program.input_schema.clone();
        let queries = single_tuple_queries(&schema);
        let ins_a = queries.iter().find(|q| q.name == "ins_R_a").unwrap();
        let ins_b = queries.iter().find(|q| q.name == "ins_R_b").unwrap();
        let mut s = init_state(4, &program).unwrap();
        for (q, pos) in [(&ins_a, 1u32), (&ins_a, 2), (&ins_b, 3), (&ins_b, 4)] {
            s = step(&s, &q.bind(&[pos]), &program).unwrap();
        }
        // Swap everything before position 4 (parameter included? positions
        // strictly before): "aab" + "b" -> "bba" + "b".
        s = step(&s, &swap_before_query().bind(&[4]), &program).unwrap();
        assert_eq!(crate::structures::decode_word(&s.input).unwrap(), "bbab");
        assert!(s.aux.relation("Q").unwrap().is_empty());
        full_invariant(&m, &s.input, &s.aux);
    }

    #[test]
    fn existential_fixture_matches_oracle() {
        let fixtures = crate::changes::reduce::existential_fixtures();
        let (program, m) = anbn_program(vec![fixtures[0].clone()]);
        let schema = program.input_schema.clone();
        let mut queries = single_tuple_queries(&schema);
        queries.push(fixtures[0].clone());
        let mut s = init_state(5, &program).unwrap();
        let script = random_change_script(21, &queries, &schema, 5, 40);
        assert!(script.iter().any(|d| d.query.name == fixtures[0].name));
        for (k, delta) in script.iter().enumerate() {
            s = step(&s, delta, &program).unwrap();
            let want = oracle_cfl(&m.grammar, &s.input);
            assert_eq!(
                !s.aux.relation("Q").unwrap().is_empty(),
                want,
                "step {k} ({delta})"
            );
            if k % 7 == 0 {
                full_invariant(&m, &s.input, &s.aux);
            }
        }
    }
}
