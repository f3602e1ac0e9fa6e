//! Regular-language maintenance under quantifier-free word changes.
//!
//! Auxiliary relations `S_f_q_r(i, j)` record state transport: the DFA,
//! started in `q`, reads the relabeled infix `f(w_{i+1} ⋯ w_{j-1})` and ends
//! in `r`. A change touches the word as a profile (per-gap relabelings plus
//! explicit letters at parameter positions), so the new value of a pair is
//! assembled from old relations under composed relabelings, split at the
//! parameter positions. The query bit is re-derived from the new border
//! letters and the new transport over `(min, max)`.

use std::sync::Arc;

use thiserror::Error;

use super::dfa::Dfa;
use super::relabel::{
    check_qf_word_query, relabeling_closure, word_change_profile, ProfileError, Relabeling,
};
use super::Letter;
use crate::changes::{ChangeOp, ReplacementQuery};
use crate::engine::{DynamicProgram, EngineError, Maintainer, ProgramKind};
use crate::structures::{tup, Database, RelDecl, Relation, Schema};

#[derive(Debug, Error)]
pub enum LangError {
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error("the automaton alphabet {dfa:?} must match the word alphabet {word:?}")]
    AlphabetMismatch { dfa: Vec<char>, word: Vec<char> },
    #[error("{0}")]
    Grammar(String),
}

/// Procedural maintainer for one DFA and a fixed quantifier-free change set.
pub struct RegularMaintainer {
    pub dfa: Dfa,
    pub alphabet: Vec<char>,
    pub closure: Vec<Relabeling>,
    pub queries: Vec<Arc<ReplacementQuery>>,
    pub input_schema: Arc<Schema>,
    pub aux_schema: Arc<Schema>,
}

/// Auxiliary relation name for the transport family of `f` between two
/// states (by index).
pub fn s_name(f: &Relabeling, q: usize, r: usize) -> String {
    format!("S_{}_s{}_s{}", f.code(), q, r)
}

/// Builds the dynamic program maintaining membership in `L(dfa)` under the
/// given quantifier-free change queries.
pub fn compile_regular(
    dfa: &Dfa,
    queries: &[Arc<ReplacementQuery>],
    alphabet: &[char],
) -> Result<(DynamicProgram, Arc<RegularMaintainer>), LangError> {
    let mut dfa_alpha = dfa.alphabet.clone();
    dfa_alpha.sort_unstable();
    let mut word_alpha = alphabet.to_vec();
    word_alpha.sort_unstable();
    if dfa_alpha != word_alpha {
        return Err(LangError::AlphabetMismatch { dfa: dfa_alpha, word: word_alpha });
    }
    for q in queries {
        check_qf_word_query(q, alphabet)?;
    }
    let closure = relabeling_closure(queries, alphabet)?;
    let states = dfa.state_count();
    let mut rels = Vec::new();
    for f in &closure {
        for q in 0..states {
            for r in 0..states {
                rels.push(RelDecl { name: s_name(f, q, r), arity: 2 });
            }
        }
    }
    rels.push(RelDecl { name: "Q".into(), arity: 1 });
    let aux_schema =
        Arc::new(Schema::new(rels, vec![], false, false, None).expect("aux schema"));
    let maintainer = Arc::new(RegularMaintainer {
        dfa: dfa.clone(),
        alphabet: alphabet.to_vec(),
        closure,
        queries: queries.to_vec(),
        input_schema: Arc::new(Schema::word(alphabet)),
        aux_schema: aux_schema.clone(),
    });
    let program = DynamicProgram {
        name: "regular".into(),
        input_schema: maintainer.input_schema.clone(),
        aux_schema,
        query_relation: "Q".into(),
        kind: ProgramKind::Maintainer(maintainer.clone()),
    };
    Ok((program, maintainer))
}

impl RegularMaintainer {
    fn states(&self) -> usize {
        self.dfa.state_count()
    }

    /// Dense transport tables from the auxiliary database:
    /// `table[f][pair(i,j)][q] = r`.
    fn load_tables(&self, aux: &Database, n: u32) -> Vec<Vec<u8>> {
        let states = self.states();
        let span = (n as usize + 1) * (n as usize + 1);
        let mut tables = vec![vec![u8::MAX; span * states]; self.closure.len()];
        for (fi, f) in self.closure.iter().enumerate() {
            for q in 0..states {
                for r in 0..states {
                    let rel = aux.relation(&s_name(f, q, r)).expect("aux relation");
                    for t in rel.iter() {
                        let idx = (t[0] as usize * (n as usize + 1) + t[1] as usize) * states + q;
                        tables[fi][idx] = r as u8;
                    }
                }
            }
        }
        tables
    }

    fn f_index(&self, f: &Relabeling) -> usize {
        self.closure
            .binary_search(f)
            .unwrap_or_else(|_| panic!("relabeling {} escaped the closure", f.code()))
    }

    /// Transport state `q` over the *old* infix `(l, r)` (exclusive bounds)
    /// relabeled by closure entry `fi`.
    fn lookup(tables: &[Vec<u8>], states: usize, n: u32, fi: usize, l: u32, r: u32, q: usize) -> usize {
        debug_assert!(l < r);
        let idx = (l as usize * (n as usize + 1) + r as usize) * states + q;
        let v = tables[fi][idx];
        debug_assert_ne!(v, u8::MAX, "transport table hole at f={fi} ({l},{r}) q={q}");
        v as usize
    }

    /// After-change membership per the semantic invariant, for checking.
    pub fn word_in_language(&self, content: &[Letter]) -> bool {
        let q = self.dfa.transport(self.dfa.start, content.iter().copied());
        self.dfa.accepting[q]
    }

    /// Verifies every `S_f_q_r` against its pointwise definition and `Q`
    /// against membership of the represented word.
    pub fn check_invariant(&self, input: &Database, aux: &Database) -> Result<(), String> {
        let content = input.word_content().map_err(|e| e.to_string())?;
        let n = input.size();
        for f in &self.closure {
            for i in 1..=n {
                for j in (i + 1)..=n {
                    let relabeled: Vec<Letter> = content[i as usize..j as usize - 1]
                        .iter()
                        .map(|&l| f.apply(l))
                        .collect();
                    for q in 0..self.states() {
                        let r = self.dfa.transport(q, relabeled.iter().copied());
                        for r2 in 0..self.states() {
                            let has = aux
                                .relation(&s_name(f, q, r2))
                                .unwrap()
                                .contains(&[i, j]);
                            if has != (r2 == r) {
                                return Err(format!(
                                    "S_{}_s{q}_s{r2}({i},{j}) = {has}, transport gives {r}",
                                    f.code()
                                ));
                            }
                        }
                    }
                }
            }
        }
        let q_bit = !aux.relation("Q").unwrap().is_empty();
        let want = self.word_in_language(&content);
        if q_bit != want {
            return Err(format!("Q = {q_bit}, membership = {want}"));
        }
        Ok(())
    }
}

impl Maintainer for RegularMaintainer {
    fn init(&self, empty_input: &Database) -> Result<Database, EngineError> {
        let n = empty_input.size();
        let states = self.states();
        let mut aux = Database::empty(self.aux_schema.clone(), n)
            .map_err(|_| EngineError::BadInitializer)?;
        for f in &self.closure {
            // On the all-blank word the infix (i,j) reads f(ε)^(j-i-1).
            let sigma = f.apply(None);
            // pow[d][q]: state after reading sigma^d from q.
            let mut pow = vec![(0..states).collect::<Vec<usize>>()];
            for d in 1..=(n as usize) {
                let prev = &pow[d - 1];
                let next: Vec<usize> = (0..states)
                    .map(|q| match sigma {
                        Some(c) => self.dfa.step(prev[q], c),
                        None => prev[q],
                    })
                    .collect();
                pow.push(next);
            }
            for q in 0..states {
                let mut rels: Vec<Relation> = (0..states).map(|_| Relation::new(2)).collect();
                for i in 1..=n {
                    for j in (i + 1)..=n {
                        let d = (j - i - 1) as usize;
                        rels[pow[d][q]].insert(tup(&[i, j]));
                    }
                }
                for (r, rel) in rels.into_iter().enumerate() {
                    aux.set_relation(&s_name(f, q, r), rel).unwrap();
                }
            }
        }
        if self.dfa.accepting[self.dfa.start] {
            let mut q_rel = Relation::new(1);
            for v in 1..=n {
                q_rel.insert(tup(&[v]));
            }
            aux.set_relation("Q", q_rel).unwrap();
        }
        Ok(aux)
    }

    fn step(
        &self,
        input: &Database,
        aux: &Database,
        delta: &ChangeOp,
    ) -> Result<Database, EngineError> {
        let query = self
            .queries
            .iter()
            .find(|q| q.name == delta.query.name)
            .ok_or_else(|| EngineError::MissingRule(delta.query.name.clone()))?;
        let n = input.size();
        let states = self.states();
        let content = input.word_content().map_err(|e| EngineError::Maintainer(e.to_string()))?;
        let profile = word_change_profile(query, &delta.args, &content, &self.alphabet);
        let tables = self.load_tables(aux, n);

        // Composed relabeling indices per (closure entry, gap).
        let composed: Vec<Vec<usize>> = self
            .closure
            .iter()
            .map(|f| profile.gaps.iter().map(|g| self.f_index(&f.compose(g))).collect())
            .collect();

        let mut new_aux = Database::empty(self.aux_schema.clone(), n)
            .map_err(|_| EngineError::BadInitializer)?;
        for (fi, f) in self.closure.iter().enumerate() {
            let boundary_letters: Vec<(u32, Letter)> = profile
                .boundaries
                .iter()
                .map(|&(pos, l)| (pos, f.apply(l)))
                .collect();
            let mut rels: Vec<Vec<Relation>> =
                (0..states).map(|_| (0..states).map(|_| Relation::new(2)).collect()).collect();
            for i in 1..=n {
                for j in (i + 1)..=n {
                    for q in 0..states {
                        let mut state = q;
                        let mut lo = i + 1;
                        // Split the infix at the boundaries strictly inside
                        // (i, j); the segment before global boundary g lies
                        // in global gap g.
                        for (g, &(b, letter)) in boundary_letters.iter().enumerate() {
                            if b <= i || b >= j {
                                continue;
                            }
                            state = Self::lookup(
                                &tables,
                                states,
                                n,
                                composed[fi][g],
                                lo - 1,
                                b,
                                state,
                            );
                            if let Some(c) = letter {
                                state = self.dfa.step(state, c);
                            }
                            lo = b + 1;
                        }
                        let g_last = profile.gap_index(lo);
                        state = Self::lookup(
                            &tables,
                            states,
                            n,
                            composed[fi][g_last],
                            lo - 1,
                            j,
                            state,
                        );
                        rels[q][state].insert(tup(&[i, j]));
                    }
                }
            }
            for (q, row) in rels.into_iter().enumerate() {
                for (r, rel) in row.into_iter().enumerate() {
                    new_aux.set_relation(&s_name(f, q, r), rel).unwrap();
                }
            }
        }

        // Query bit from the new border letters and the new (1, n) transport.
        let new_content = profile.apply(&content);
        let accepted = if n == 1 {
            let q = self.dfa.transport(self.dfa.start, [new_content[0]]);
            self.dfa.accepting[q]
        } else {
            let q1 = self.dfa.transport(self.dfa.start, [new_content[0]]);
            // Transport over the *new* word's (1, n) infix via the freshly
            // written identity family.
            let id = Relabeling::identity(&self.alphabet);
            let mid = (0..states)
                .find(|&r| new_aux.relation(&s_name(&id, q1, r)).unwrap().contains(&[1, n]))
                .expect("transport is total");
            let fin = self.dfa.transport(mid, [new_content[n as usize - 1]]);
            self.dfa.accepting[fin]
        };
        if accepted {
            let mut q_rel = Relation::new(1);
            for v in 1..=n {
                q_rel.insert(tup(&[v]));
            }
            new_aux.set_relation("Q", q_rel).unwrap();
        }
        Ok(new_aux)
    }

    fn handles(&self, query_name: &str) -> bool {
        self.queries.iter().any(|q| q.name == query_name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::changes::{single_tuple_queries, swap_before_query};
    use crate::engine::{init_state, step};
    use crate::harness::oracles::oracle_regular;
    use crate::harness::random_change_script;
    use crate::structures::decode_word;

    const AB: [char; 2] = ['a', 'b'];

    fn even_a_program() -> (DynamicProgram, Arc<RegularMaintainer>) {
        let schema = Arc::new(Schema::word(&AB));
        let mut queries = single_tuple_queries(&schema);
        queries.push(swap_before_query());
        compile_regular(&Dfa::even_a(), &queries, &AB).unwrap()
    }

    #[test]
    fn relation_inventory_counts() {
        // |closure| = 2 ({id, swap}), 2 states: 2*4 transport relations + Q.
        let (program, m) = even_a_program();
        assert_eq!(m.closure.len(), 2);
        assert_eq!(program.aux_schema.relations().len(), 2 * 4 + 1);
    }

    #[test]
    fn init_identity_family_is_diagonal() {
        let (program, m) = even_a_program();
        let s = init_state(4, &program).unwrap();
        let id = Relabeling::identity(&AB);
        for q in 0..2 {
            for r in 0..2 {
                let rel = s.aux.relation(&s_name(&id, q, r)).unwrap();
                if q == r {
                    assert_eq!(rel.len(), 6); // all i<j pairs
                } else {
                    assert!(rel.is_empty());
                }
            }
        }
        m.check_invariant(&s.input, &s.aux).unwrap();
        // Empty word has zero a's: accepted.
        assert!(!s.aux.relation("Q").unwrap().is_empty());
    }

    #[test]
    fn init_with_blank_filling_relabeling() {
        // A change whose gap map sends ε to a forces a closure entry f with
        // f(ε)=a; its init rows follow letter-count parity.
        let fill = crate::changes::query_from_text(
            "fill_a_right",
            &["p1"],
            "R_a",
            &["x"],
            "R_a(x) | (p1 < x & !R_b(x))",
        )
        .unwrap();
        let schema = Arc::new(Schema::word(&AB));
        let mut queries = single_tuple_queries(&schema);
        queries.push(fill);
        let (program, m) = compile_regular(&Dfa::even_a(), &queries, &AB).unwrap();
        let s = init_state(5, &program).unwrap();
        m.check_invariant(&s.input, &s.aux).unwrap();
        let f = m
            .closure
            .iter()
            .find(|f| f.apply(None) == Some('a'))
            .expect("fill relabeling in closure");
        // (i,j) in S_f_q_r iff parity of j-i-1 matches the state flip.
        for i in 1..=5u32 {
            for j in (i + 1)..=5u32 {
                let flip = (j - i - 1) % 2 == 1;
                let rel = s.aux.relation(&s_name(f, 0, usize::from(flip))).unwrap();
                assert!(rel.contains(&[i, j]));
            }
        }
    }

    #[test]
    fn steps_track_dfa_membership() {
        let (program, m) = even_a_program();
        let mut s = init_state(6, &program).unwrap();
        let queries = m.queries.clone();
        let schema = program.input_schema.clone();
        let script = random_change_script(3, &queries, &schema, 6, 120);
        assert_eq!(script.len(), 120);
        for delta in &script {
            s = step(&s, delta, &program).unwrap();
            m.check_invariant(&s.input, &s.aux).unwrap();
            let want = oracle_regular(&m.dfa, &s.input);
            assert_eq!(!s.aux.relation("Q").unwrap().is_empty(), want);
        }
    }

    #[test]
    fn swap_step_is_index_substitution_for_parameter_free_variant() {
        // A parameter-free global swap: new S_f = old S_{f∘swap}.
        let swap_all = Arc::new(
            crate::changes::ReplacementQuery::new(
                "swap_all",
                &[],
                vec![
                    crate::changes::ReplacementRule {
                        relation: "R_a".into(),
                        out_vars: vec!["x".into()],
                        formula: crate::logic::parse_formula("R_b(x)").unwrap(),
                    },
                    crate::changes::ReplacementRule {
                        relation: "R_b".into(),
                        out_vars: vec!["x".into()],
                        formula: crate::logic::parse_formula("R_a(x)").unwrap(),
                    },
                ],
            )
            .unwrap(),
        );
        let schema = Arc::new(Schema::word(&AB));
        let mut queries = single_tuple_queries(&schema);
        queries.push(swap_all.clone());
        let (program, m) = compile_regular(&Dfa::ab_star(), &queries, &AB).unwrap();
        let mut s = init_state(5, &program).unwrap();
        // Build "ab.ab" then swap globally.
        let ins_a = queries.iter().find(|q| q.name == "ins_R_a").unwrap();
        let ins_b = queries.iter().find(|q| q.name == "ins_R_b").unwrap();
        for (q, pos) in
            [(&ins_a, 1u32), (&ins_b, 2), (&ins_a, 4), (&ins_b, 5)]
        {
            s = step(&s, &q.bind(&[pos]), &program).unwrap();
        }
        let before = s.clone();
        s = step(&s, &swap_all.bind(&[]), &program).unwrap();
        assert_eq!(decode_word(&s.input).unwrap(), "ba.ba".replace('.', ""));
        m.check_invariant(&s.input, &s.aux).unwrap();
        let swap = m.closure.iter().find(|f| !f.is_identity()).unwrap();
        let id = Relabeling::identity(&AB);
        for q in 0..3 {
            for r in 0..3 {
                assert_eq!(
                    s.aux.relation(&s_name(&id, q, r)).unwrap(),
                    before.aux.relation(&s_name(swap, q, r)).unwrap(),
                    "index substitution failed at ({q},{r})"
                );
            }
        }
    }

    #[test]
    fn alphabet_mismatch_rejected() {
        let schema = Arc::new(Schema::word(&['a', 'b', 'c']));
        let queries = single_tuple_queries(&schema);
        assert!(matches!(
            compile_regular(&Dfa::even_a(), &queries, &['a', 'b', 'c']),
            Err(LangError::AlphabetMismatch { .. })
        ));
    }
}
