//! Relabeling functions `Σ_ε → Σ_ε` and the per-change word profiles built
//! from them.
//!
//! A quantifier-free change touches a word in a rigid pattern: at each
//! distinct parameter position the letter is replaced outright, and each
//! maximal gap between parameter positions is relabeled by one function of
//! the old letter. Profiles are extracted semantically by evaluating the
//! rule formulas on small synthetic context words, so they inherit the
//! evaluator's semantics exactly.

use std::sync::Arc;

use thiserror::Error;

use super::Letter;
use crate::changes::ReplacementQuery;
use crate::logic::{classify_formula, evaluate, Assignment, FormulaClass};
use crate::structures::{letter_relation, Database, Schema};

/// A total map `Σ_ε → Σ_ε`, ε included on both sides.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Relabeling {
    alphabet: Vec<char>,
    /// Targets indexed by alphabet position; the last entry is ε's image.
    map: Vec<Letter>,
}

impl Relabeling {
    pub fn identity(alphabet: &[char]) -> Relabeling {
        let mut map: Vec<Letter> = alphabet.iter().map(|&c| Some(c)).collect();
        map.push(None);
        Relabeling { alphabet: alphabet.to_vec(), map }
    }

    pub fn from_fn(alphabet: &[char], f: impl Fn(Letter) -> Letter) -> Relabeling {
        let mut map: Vec<Letter> = alphabet.iter().map(|&c| f(Some(c))).collect();
        map.push(f(None));
        Relabeling { alphabet: alphabet.to_vec(), map }
    }

    fn slot(&self, l: Letter) -> usize {
        match l {
            Some(c) => self
                .alphabet
                .iter()
                .position(|&a| a == c)
                .expect("letter outside the alphabet"),
            None => self.alphabet.len(),
        }
    }

    pub fn apply(&self, l: Letter) -> Letter {
        self.map[self.slot(l)]
    }

    /// `self ∘ g`: apply `g` first, then `self`.
    pub fn compose(&self, g: &Relabeling) -> Relabeling {
        let map = g.map.iter().map(|&l| self.apply(l)).collect();
        Relabeling { alphabet: self.alphabet.clone(), map }
    }

    pub fn is_identity(&self) -> bool {
        *self == Relabeling::identity(&self.alphabet)
    }

    /// Compact code used in relation names: target letters in alphabet
    /// order, then ε's target; ε prints as `0`.
    pub fn code(&self) -> String {
        self.map.iter().map(|l| l.unwrap_or('0')).collect()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProfileError {
    #[error("change query `{query}` is not quantifier-free (rule `{relation}` is {class:?})")]
    NotQuantifierFree { query: String, relation: String, class: FormulaClass },
    #[error("change query `{query}` mentions min/max; profiles do not support constants")]
    UsesConstants { query: String },
    #[error("change query `{query}` targets non-letter relation `{relation}`")]
    ForeignTarget { query: String, relation: String },
    #[error("change query `{query}` mentions non-letter relation `{relation}`")]
    ForeignRelation { query: String, relation: String },
    #[error("change query `{query}` has {count} parameters; exhaustive context \
             enumeration is limited to {MAX_ENUMERATED_PARAMS}")]
    TooManyParameters { query: String, count: usize },
}

/// Checks that a query is a quantifier-free word change: every rule
/// quantifier-free, mentioning only letter relations and no constants.
pub fn check_qf_word_query(
    query: &ReplacementQuery,
    alphabet: &[char],
) -> Result<(), ProfileError> {
    let is_letter = |name: &str| alphabet.iter().any(|&c| letter_relation(c) == name);
    for rule in &query.rules {
        let class = classify_formula(&rule.formula);
        if class != FormulaClass::QuantifierFree {
            return Err(ProfileError::NotQuantifierFree {
                query: query.name.clone(),
                relation: rule.relation.clone(),
                class,
            });
        }
        if rule.formula.uses_constants() {
            return Err(ProfileError::UsesConstants { query: query.name.clone() });
        }
        if !is_letter(&rule.relation) {
            return Err(ProfileError::ForeignTarget {
                query: query.name.clone(),
                relation: rule.relation.clone(),
            });
        }
        for (rel, _) in rule.formula.relations() {
            if !is_letter(&rel) {
                return Err(ProfileError::ForeignRelation {
                    query: query.name.clone(),
                    relation: rel,
                });
            }
        }
    }
    Ok(())
}

/// The effect of one bound change on a word: new letters at the distinct
/// parameter positions, one relabeling per gap between them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordProfile {
    /// Distinct parameter positions ascending, with their new letters.
    pub boundaries: Vec<(u32, Letter)>,
    /// `boundaries.len() + 1` relabelings: gap `g` covers positions strictly
    /// between boundary `g-1` and boundary `g` (word ends at the outside).
    pub gaps: Vec<Relabeling>,
}

impl WordProfile {
    /// Which gap a non-boundary position falls into.
    pub fn gap_index(&self, pos: u32) -> usize {
        self.boundaries.iter().take_while(|(b, _)| *b < pos).count()
    }

    pub fn boundary_letter(&self, pos: u32) -> Option<Letter> {
        self.boundaries.iter().find(|(b, _)| *b == pos).map(|(_, l)| *l)
    }

    /// Applies the profile to old contents.
    pub fn apply(&self, content: &[Letter]) -> Vec<Letter> {
        content
            .iter()
            .enumerate()
            .map(|(idx, &l)| {
                let pos = idx as u32 + 1;
                match self.boundary_letter(pos) {
                    Some(new) => new,
                    None => self.gaps[self.gap_index(pos)].apply(l),
                }
            })
            .collect()
    }
}

/// Semantic probe: what letter does position `x` carry after the change,
/// given its old letter, the pattern of parameter positions/letters, and
/// which region `x` lies in? Evaluated on a synthetic context word.
struct ContextModel {
    db: Database,
    /// Parameter positions inside the synthetic word, one per original
    /// parameter (duplicates map to the same position).
    param_positions: Vec<u32>,
    /// Probe position per region: region `2g` is gap `g`, region `2g+1` is
    /// boundary `g`.
    probe_for_gap: Vec<u32>,
    boundary_pos: Vec<u32>,
}

fn build_context(
    alphabet: &[char],
    arg_ranks: &[usize],
    boundary_letters: &[Letter],
    gap_letter: Letter,
    gap: usize,
) -> ContextModel {
    // Synthetic word: g0 b1 g1 b2 ... bm gm — probes at even slots.
    let m = boundary_letters.len();
    let len = 2 * m + 1;
    let mut content: Vec<Letter> = vec![None; len];
    let mut boundary_pos = Vec::with_capacity(m);
    for (i, &l) in boundary_letters.iter().enumerate() {
        let pos = 2 * i as u32 + 2;
        boundary_pos.push(pos);
        content[pos as usize - 1] = l;
    }
    let mut probe_for_gap = Vec::with_capacity(m + 1);
    for g in 0..=m {
        probe_for_gap.push(2 * g as u32 + 1);
    }
    content[probe_for_gap[gap] as usize - 1] = gap_letter;
    let schema = Arc::new(Schema::word(alphabet));
    let db = Database::from_word_content(schema, &content).unwrap();
    let param_positions = arg_ranks.iter().map(|&r| boundary_pos[r]).collect();
    ContextModel { db, param_positions, probe_for_gap, boundary_pos }
}

fn new_letter_at(
    query: &ReplacementQuery,
    alphabet: &[char],
    model: &ContextModel,
    probe: u32,
    old_letter: Letter,
) -> Result<Letter, LetterConflict> {
    let mut asg = Assignment::new();
    for (name, &pos) in query.params.iter().zip(&model.param_positions) {
        asg.insert(name.clone(), pos);
    }
    let mut result: Option<char> = None;
    let mut conflict = false;
    for &sigma in alphabet {
        let holds = match query.rule_for(&letter_relation(sigma)) {
            Some(rule) => {
                let mut asg = asg.clone();
                asg.insert(rule.out_vars[0].clone(), probe);
                evaluate(&rule.formula, &model.db, &asg).expect("probe evaluation")
            }
            None => old_letter == Some(sigma),
        };
        if holds {
            if result.is_some() {
                conflict = true;
            }
            result = Some(sigma);
        }
    }
    if conflict {
        Err(LetterConflict)
    } else {
        Ok(result)
    }
}

/// Marker: the change would put some position into two letter relations.
/// Accepted changes never exercise conflicting entries, so conflicting gap
/// images are completed to ε.
struct LetterConflict;

/// Computes the profile of change `(query, args)` against the old word
/// `content`. The query must pass [`check_qf_word_query`].
pub fn word_change_profile(
    query: &ReplacementQuery,
    args: &[u32],
    content: &[Letter],
    alphabet: &[char],
) -> WordProfile {
    // Distinct sorted boundary positions and each arg's rank among them.
    let mut distinct: Vec<u32> = args.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let arg_ranks: Vec<usize> =
        args.iter().map(|a| distinct.binary_search(a).unwrap()).collect();
    let boundary_old: Vec<Letter> =
        distinct.iter().map(|&p| content[p as usize - 1]).collect();

    let mut boundaries = Vec::with_capacity(distinct.len());
    let mut gaps = Vec::with_capacity(distinct.len() + 1);
    for g in 0..=distinct.len() {
        let f = Relabeling::from_fn(alphabet, |old| {
            let model = build_context(alphabet, &arg_ranks, &boundary_old, old, g);
            match new_letter_at(query, alphabet, &model, model.probe_for_gap[g], old) {
                Ok(l) => l,
                Err(LetterConflict) => None,
            }
        });
        gaps.push(f);
    }
    for (i, (&pos, &old)) in distinct.iter().zip(&boundary_old).enumerate() {
        // The boundary probe reuses gap i's context; its position is exact.
        let model = build_context(alphabet, &arg_ranks, &boundary_old, None, i);
        let new = match new_letter_at(query, alphabet, &model, model.boundary_pos[i], old) {
            Ok(l) => l,
            Err(LetterConflict) => None,
        };
        boundaries.push((pos, new));
    }
    WordProfile { boundaries, gaps }
}

/// Largest parameter count for which generator contexts are enumerated
/// exhaustively; wider queries need the structured path
/// ([`crate::changes::reduce::QfReduction`] carries enough shape for its
/// own generators).
pub const MAX_ENUMERATED_PARAMS: usize = 3;

/// All gap relabelings any change from `queries` can produce, across every
/// parameter order/equality pattern and letter context.
pub fn profile_generators(
    queries: &[Arc<ReplacementQuery>],
    alphabet: &[char],
) -> Result<Vec<Relabeling>, ProfileError> {
    let mut out: Vec<Relabeling> = Vec::new();
    let mut letters_pool: Vec<Letter> = vec![None];
    letters_pool.extend(alphabet.iter().map(|&c| Some(c)));
    for query in queries {
        check_qf_word_query(query, alphabet)?;
        let k = query.params.len();
        if k > MAX_ENUMERATED_PARAMS {
            return Err(ProfileError::TooManyParameters {
                query: query.name.clone(),
                count: k,
            });
        }
        for ranks in crate::changes::reduce::weak_orders_pub(k) {
            let m = ranks.iter().copied().max().map_or(0, |r| r + 1);
            // Odometer over boundary letters.
            let mut choice = vec![0usize; m];
            loop {
                let boundary_old: Vec<Letter> =
                    choice.iter().map(|&i| letters_pool[i]).collect();
                for g in 0..=m {
                    let f = Relabeling::from_fn(alphabet, |old| {
                        let model =
                            build_context(alphabet, &ranks, &boundary_old, old, g);
                        match new_letter_at(
                            query,
                            alphabet,
                            &model,
                            model.probe_for_gap[g],
                            old,
                        ) {
                            Ok(l) => l,
                            Err(LetterConflict) => None,
                        }
                    });
                    if !out.contains(&f) {
                        out.push(f);
                    }
                }
                let mut i = m;
                let done = loop {
                    if i == 0 {
                        break true;
                    }
                    i -= 1;
                    if choice[i] + 1 < letters_pool.len() {
                        choice[i] += 1;
                        break false;
                    }
                    choice[i] = 0;
                };
                if done {
                    break;
                }
            }
        }
    }
    Ok(out)
}

/// Smallest set containing the identity and closed under `f ↦ f ∘ g` for
/// every generator `g`. Bounded by `|Σ_ε|^|Σ_ε|`.
pub fn close_under_composition(generators: &[Relabeling], alphabet: &[char]) -> Vec<Relabeling> {
    let mut closure = vec![Relabeling::identity(alphabet)];
    let mut queue = closure.clone();
    while let Some(f) = queue.pop() {
        for g in generators {
            let fg = f.compose(g);
            if !closure.contains(&fg) {
                closure.push(fg.clone());
                queue.push(fg);
            }
        }
    }
    closure.sort();
    closure
}

/// Composition closure of the gap relabelings derivable from the queries.
pub fn relabeling_closure(
    queries: &[Arc<ReplacementQuery>],
    alphabet: &[char],
) -> Result<Vec<Relabeling>, ProfileError> {
    let generators = profile_generators(queries, alphabet)?;
    Ok(close_under_composition(&generators, alphabet))
}

/// Gap-relabeling generators for a reduced existential query, from the
/// structure of its atomic-type disjuncts rather than context enumeration
/// (the reduced parameter tuple is too wide to enumerate).
///
/// Inside a gap, a disjunct fires exactly when its letter matches and its
/// context does; contexts are abstracted to the original parameter's letter
/// and side. Disjuncts whose only witness variable is the parameter alias
/// fire whenever compatible ("forced"); others depend on free witnesses and
/// contribute optionally. The result safely over-approximates the reachable
/// gap maps.
pub fn reduction_generators(
    reduction: &crate::changes::reduce::QfReduction,
    alphabet: &[char],
) -> Vec<Relabeling> {
    use crate::changes::reduce::ParamPosition;
    let ruled = reduction.ruled_relations();
    let is_ruled = |letter: char| ruled.iter().any(|r| *r == crate::structures::letter_relation(letter));
    let mut letters_pool: Vec<Letter> = vec![None];
    letters_pool.extend(alphabet.iter().map(|&c| Some(c)));

    let mut out: Vec<Relabeling> = Vec::new();
    for &tau in &letters_pool {
        for p_left in [true, false] {
            // (target letter, x letter) pairs of compatible disjuncts.
            let mut forced: Vec<(char, Letter)> = Vec::new();
            let mut optional: Vec<(char, Letter)> = Vec::new();
            for (relation, theta) in reduction.disjuncts() {
                let target = alphabet
                    .iter()
                    .copied()
                    .find(|&c| crate::structures::letter_relation(c) == relation)
                    .expect("rules target letter relations");
                let (side_ok, alias_letter) = match crate::changes::reduce::param_position(theta)
                {
                    // p = x never holds inside a gap.
                    ParamPosition::EqualsX => continue,
                    ParamPosition::Left(i) => (p_left, theta.left[i]),
                    ParamPosition::Right(i) => (!p_left, theta.right[i]),
                };
                if !side_ok || alias_letter != tau {
                    continue;
                }
                let pair = (target, theta.x_letter);
                if theta.arity() == 1 {
                    if !forced.contains(&pair) {
                        forced.push(pair);
                    }
                } else if !optional.contains(&pair) {
                    optional.push(pair);
                }
            }
            optional.retain(|p| !forced.contains(p));
            // Every subset of the optional pairs may fire together.
            for mask in 0u32..(1 << optional.len()) {
                let fires: Vec<(char, Letter)> = forced
                    .iter()
                    .copied()
                    .chain(
                        optional
                            .iter()
                            .enumerate()
                            .filter(|(i, _)| mask & (1 << i) != 0)
                            .map(|(_, &p)| p),
                    )
                    .collect();
                let f = Relabeling::from_fn(alphabet, |old| {
                    let mut hits: Vec<char> =
                        fires.iter().filter(|(_, t)| *t == old).map(|(s, _)| *s).collect();
                    if let Some(c) = old {
                        if !is_ruled(c) && !hits.contains(&c) {
                            hits.push(c);
                        }
                    }
                    hits.dedup();
                    match hits.len() {
                        1 => Some(hits[0]),
                        _ => None, // none: letter dropped; several: clash, completed to ε
                    }
                });
                if !out.contains(&f) {
                    out.push(f);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::changes::{apply_change, single_tuple_queries, swap_before_query};

    const AB: [char; 2] = ['a', 'b'];

    fn word_content(s: &str) -> Vec<Letter> {
        s.chars().map(|c| if c == '.' { None } else { Some(c) }).collect()
    }

    #[test]
    fn swap_profile_shape() {
        // Example 3.1(b): swap a/b strictly before p; p and the suffix keep
        // their letters.
        let q = swap_before_query();
        let content = word_content("ba.a.");
        let profile = word_change_profile(&q, &[3], &content, &AB);
        assert_eq!(profile.boundaries, vec![(3, None)]);
        let swap = Relabeling::from_fn(&AB, |l| match l {
            Some('a') => Some('b'),
            Some('b') => Some('a'),
            other => other,
        });
        assert_eq!(profile.gaps[0], swap);
        assert!(profile.gaps[1].is_identity());
    }

    #[test]
    fn identity_profile() {
        let q = crate::changes::query_from_text("noop", &["p1"], "R_a", &["x"], "R_a(x)")
            .unwrap();
        let profile = word_change_profile(&q, &[2], &word_content("ab"), &AB);
        assert!(profile.gaps.iter().all(Relabeling::is_identity));
        assert_eq!(profile.boundaries, vec![(2, Some('b'))]);
    }

    #[test]
    fn profiles_agree_with_direct_application() {
        // Random QF queries: profile application equals apply_change on all
        // words of length <= 5.
        let schema = Arc::new(Schema::word(&AB));
        let mut queries = single_tuple_queries(&schema);
        queries.push(swap_before_query());
        queries.push(
            crate::changes::query_from_text(
                "b_right_of_p",
                &["p1"],
                "R_b",
                &["x"],
                "R_b(x) | (p1 < x & !R_a(x))",
            )
            .unwrap(),
        );
        queries.push(
            crate::changes::query_from_text(
                "two_param_blank",
                &["p1", "p2"],
                "R_a",
                &["x"],
                "R_a(x) & !(p1 <= x & x <= p2)",
            )
            .unwrap(),
        );
        let mut pool: Vec<Letter> = vec![None, Some('a'), Some('b')];
        pool.dedup();
        let mut words: Vec<Vec<Letter>> = vec![vec![]];
        for _ in 0..5 {
            words = words
                .into_iter()
                .flat_map(|w| {
                    pool.iter().map(move |&l| {
                        let mut w2 = w.clone();
                        w2.push(l);
                        w2
                    })
                })
                .collect();
        }
        for w in words.iter().filter(|w| !w.is_empty()) {
            let db = Database::from_word_content(schema.clone(), w).unwrap();
            let n = db.size();
            for q in &queries {
                crate::changes::for_each_tuple(n, q.params.len(), |args| {
                    let delta = q.bind(args);
                    match apply_change(&db, &delta) {
                        Ok(next) => {
                            let profile = word_change_profile(q, args, w, &AB);
                            assert_eq!(
                                profile.apply(w),
                                next.word_content().unwrap(),
                                "query {} args {args:?} word {w:?}",
                                q.name
                            );
                        }
                        Err(_) => {} // rejected changes carry no profile contract
                    }
                    true
                });
            }
        }
    }

    #[test]
    fn closure_of_single_tuple_changes_is_identity() {
        let schema = Arc::new(Schema::word(&AB));
        let queries = single_tuple_queries(&schema);
        let closure = relabeling_closure(&queries, &AB).unwrap();
        assert_eq!(closure, vec![Relabeling::identity(&AB)]);
    }

    #[test]
    fn closure_with_swap() {
        let schema = Arc::new(Schema::word(&AB));
        let mut queries = single_tuple_queries(&schema);
        queries.push(swap_before_query());
        let closure = relabeling_closure(&queries, &AB).unwrap();
        assert_eq!(closure.len(), 2);
        assert!(closure.iter().any(Relabeling::is_identity));
        let swap = Relabeling::from_fn(&AB, |l| match l {
            Some('a') => Some('b'),
            Some('b') => Some('a'),
            other => other,
        });
        assert!(closure.contains(&swap));
    }

    #[test]
    fn closure_is_bounded_and_contains_const_maps() {
        // A rule filling blanks with `a` right of p yields a constant-ish
        // gap map; the closure stays within |Σ_ε|^|Σ_ε| = 27.
        let fill_a = crate::changes::query_from_text(
            "fill_a_right",
            &["p1"],
            "R_a",
            &["x"],
            "R_a(x) | (p1 < x & !R_b(x))",
        )
        .unwrap();
        let closure = relabeling_closure(&[fill_a], &AB).unwrap();
        assert!(closure.len() <= 27);
        let fill = Relabeling::from_fn(&AB, |l| match l {
            None => Some('a'),
            other => other,
        });
        assert!(closure.contains(&fill), "closure misses the fill map: {closure:?}");
    }

    #[test]
    fn non_qf_query_rejected() {
        let q = crate::changes::query_from_text(
            "exists_rule",
            &["p1"],
            "R_a",
            &["x"],
            "R_a(x) | exists y. (y < x & R_a(y))",
        )
        .unwrap();
        assert!(matches!(
            relabeling_closure(&[q], &AB),
            Err(ProfileError::NotQuantifierFree { .. })
        ));
    }
}
