//! Ground-truth oracles, each with a second independent implementation for
//! cross-validation.

use crate::lang::{CnfGrammar, Dfa};
use crate::structures::{decode_word, Database};

/// Reachability oracle: breadth-first search from every node over bitset
/// rows. `reflexive` adds all identity pairs (connectivity convention);
/// otherwise a pair needs a path of length ≥ 1.
pub fn oracle_reach(db: &Database, reflexive: bool) -> Vec<(u32, u32)> {
    let n = db.size() as usize;
    let adj = adjacency(db);
    let mut out = Vec::new();
    for s in 0..n {
        let mut seen = vec![false; n];
        let mut queue = std::collections::VecDeque::new();
        if reflexive {
            seen[s] = true;
        }
        // Seed with s's successors so irreflexive mode needs a real step.
        for t in 0..n {
            if adj[s][t] && !seen[t] {
                seen[t] = true;
                queue.push_back(t);
            }
        }
        if reflexive {
            queue.push_back(s);
        }
        while let Some(u) = queue.pop_front() {
            for t in 0..n {
                if adj[u][t] && !seen[t] {
                    seen[t] = true;
                    queue.push_back(t);
                }
            }
        }
        for (t, &hit) in seen.iter().enumerate() {
            if hit {
                out.push((s as u32 + 1, t as u32 + 1));
            }
        }
    }
    out.sort_unstable();
    out
}

/// Independent reachability computation by boolean matrix powering
/// (repeated squaring of `I ∪ A` for the reflexive closure, `A · (I ∪ A)^n`
/// style composition for the irreflexive one).
pub fn oracle_reach_matpow(db: &Database, reflexive: bool) -> Vec<(u32, u32)> {
    let n = db.size() as usize;
    let a = adjacency(db);
    let mut closure = identity_or(&a, n);
    // (I ∪ A)^(2^k) until the exponent covers any simple path.
    let mut steps = 1usize;
    while steps < n {
        closure = mat_mul(&closure, &closure, n);
        steps *= 2;
    }
    let result = if reflexive { closure } else { mat_mul(&a, &closure, n) };
    let mut out = Vec::new();
    for (i, row) in result.iter().enumerate() {
        for (j, &b) in row.iter().enumerate() {
            if b {
                out.push((i as u32 + 1, j as u32 + 1));
            }
        }
    }
    out.sort_unstable();
    out
}

fn adjacency(db: &Database) -> Vec<Vec<bool>> {
    let n = db.size() as usize;
    let mut adj = vec![vec![false; n]; n];
    for t in db.relation("E").expect("graph database").iter() {
        adj[t[0] as usize - 1][t[1] as usize - 1] = true;
    }
    adj
}

fn identity_or(a: &[Vec<bool>], n: usize) -> Vec<Vec<bool>> {
    let mut m = a.to_vec();
    for (i, row) in m.iter_mut().enumerate().take(n) {
        row[i] = true;
    }
    m
}

fn mat_mul(a: &[Vec<bool>], b: &[Vec<bool>], n: usize) -> Vec<Vec<bool>> {
    let mut c = vec![vec![false; n]; n];
    for i in 0..n {
        for k in 0..n {
            if a[i][k] {
                for j in 0..n {
                    if b[k][j] {
                        c[i][j] = true;
                    }
                }
            }
        }
    }
    c
}

/// Whether the graph has a directed cycle (self-loops count).
pub fn oracle_has_cycle(db: &Database) -> bool {
    let closure = oracle_reach(db, false);
    closure.iter().any(|&(u, v)| u == v)
        || closure.iter().any(|&(u, v)| u != v && closure.contains(&(v, u)))
}

/// Membership of the word represented by `db` in the DFA's language.
pub fn oracle_regular(dfa: &Dfa, db: &Database) -> bool {
    dfa.accepts(&decode_word(db).expect("valid word database"))
}

/// CYK membership for the decoded word.
pub fn oracle_cfl(grammar: &CnfGrammar, db: &Database) -> bool {
    cyk_accepts(grammar, &decode_word(db).expect("valid word database"))
}

/// Standard CYK on the ε-keeping normal form: unit effects are folded into
/// `eff_rules`, single letters into `derives_letter`.
pub fn cyk_accepts(g: &CnfGrammar, s: &str) -> bool {
    let chars: Vec<char> = s.chars().collect();
    let n = chars.len();
    if n == 0 {
        return g.nullable[g.start];
    }
    let k = g.nt_count();
    // d[i][j] = set of X with X ⇒* s[i..=j]
    let mut d = vec![vec![vec![false; k]; n]; n];
    for (i, &c) in chars.iter().enumerate() {
        for x in 0..k {
            d[i][i][x] = g.derives_single(x, Some(c));
        }
    }
    for width in 2..=n {
        for i in 0..=(n - width) {
            let j = i + width - 1;
            for x in 0..k {
                let hit = g.eff_rules[x]
                    .iter()
                    .any(|&(a, b)| (i..j).any(|m| d[i][m][a] && d[m + 1][j][b]));
                d[i][j][x] = hit;
            }
        }
    }
    d[0][n - 1][g.start]
}

/// Independent membership test by bounded leftmost-derivation enumeration on
/// the *raw* grammar. Sound and complete for the small strings it is used
/// on: forms are pruned by terminal-prefix mismatch and capped in length,
/// with a visited set against cycles.
pub fn derivation_enum_accepts(cfg: &crate::lang::Cfg, target: &str, max_depth: usize) -> bool {
    use crate::lang::grammar::Sym;
    let target: Vec<char> = target.chars().collect();
    let cap = target.len() + cfg.rules.len() + 4;
    let start = vec![Sym::Nt(cfg.start.clone())];
    let mut seen = std::collections::HashSet::new();
    let mut queue = std::collections::VecDeque::new();
    queue.push_back((start, 0usize));
    while let Some((form, depth)) = queue.pop_front() {
        // Split the leading terminal prefix.
        let mut prefix = Vec::new();
        let mut rest = form.iter();
        let mut head_nt: Option<&String> = None;
        for s in rest.by_ref() {
            match s {
                Sym::T(c) => prefix.push(*c),
                Sym::Nt(n) => {
                    head_nt = Some(n);
                    break;
                }
            }
        }
        if prefix.len() > target.len() || prefix[..] != target[..prefix.len()] {
            continue;
        }
        let Some(head) = head_nt else {
            if prefix.len() == target.len() {
                return true;
            }
            continue;
        };
        if depth >= max_depth || form.len() > cap {
            continue;
        }
        let terminal_count = form.iter().filter(|s| matches!(s, Sym::T(_))).count();
        if terminal_count > target.len() {
            continue;
        }
        for (lhs, rhs) in &cfg.rules {
            if lhs != head {
                continue;
            }
            let mut next: Vec<Sym> = Vec::with_capacity(form.len() + rhs.len());
            next.extend(prefix.iter().map(|&c| Sym::T(c)));
            next.extend(rhs.iter().cloned());
            next.extend(rest.clone().cloned());
            if seen.insert(next.clone()) {
                queue.push_back((next, depth + 1));
            }
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::{normalize_grammar, Cfg};
    use crate::structures::{Database, Schema};
    use std::sync::Arc;

    fn graph(n: u32, edges: &[(u32, u32)]) -> Database {
        let mut db = Database::empty(Arc::new(Schema::graph()), n).unwrap();
        for (u, v) in edges {
            db.insert("E", &[*u, *v]).unwrap();
        }
        db
    }

    #[test]
    fn empty_graph_closures() {
        let db = graph(3, &[]);
        assert!(oracle_reach(&db, false).is_empty());
        assert_eq!(oracle_reach(&db, true), vec![(1, 1), (2, 2), (3, 3)]);
    }

    #[test]
    fn three_path() {
        let db = graph(3, &[(1, 2), (2, 3)]);
        assert_eq!(oracle_reach(&db, false), vec![(1, 2), (1, 3), (2, 3)]);
    }

    #[test]
    fn bfs_matches_matrix_power_on_random_graphs() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let n = rng.gen_range(1..=20);
            let mut db = Database::empty(Arc::new(Schema::graph()), n).unwrap();
            for u in 1..=n {
                for v in 1..=n {
                    if rng.gen_bool(0.15) {
                        db.insert("E", &[u, v]).unwrap();
                    }
                }
            }
            for reflexive in [false, true] {
                assert_eq!(
                    oracle_reach(&db, reflexive),
                    oracle_reach_matpow(&db, reflexive)
                );
            }
        }
    }

    #[test]
    fn cycle_oracle() {
        assert!(!oracle_has_cycle(&graph(3, &[(1, 2), (2, 3)])));
        assert!(oracle_has_cycle(&graph(3, &[(1, 2), (2, 1)])));
        assert!(oracle_has_cycle(&graph(2, &[(2, 2)])));
    }

    #[test]
    fn cyk_small_cases() {
        let g = normalize_grammar(&Cfg::anbn()).unwrap();
        assert!(cyk_accepts(&g, ""));
        assert!(cyk_accepts(&g, "aabb"));
        assert!(!cyk_accepts(&g, "aab"));
        assert!(!cyk_accepts(&g, "ba"));
        let dyck = normalize_grammar(&Cfg::dyck()).unwrap();
        assert!(cyk_accepts(&dyck, "abab"));
        assert!(cyk_accepts(&dyck, "aabb"));
        assert!(!cyk_accepts(&dyck, "abb"));
    }

    #[test]
    fn cyk_matches_derivation_enumeration() {
        for cfg in [Cfg::anbn(), Cfg::dyck(), Cfg::sigma_star(&['a', 'b'])] {
            let g = normalize_grammar(&cfg).unwrap();
            for len in 0..=6usize {
                for mask in 0..(1u32 << len) {
                    let s: String = (0..len)
                        .map(|i| if mask & (1 << i) != 0 { 'a' } else { 'b' })
                        .collect();
                    let depth = 2 * (len + 2) * (cfg.rules.len() + 2);
                    assert_eq!(
                        cyk_accepts(&g, &s),
                        derivation_enum_accepts(&cfg, &s, depth),
                        "grammar disagreement on {s:?}"
                    );
                }
            }
        }
    }
}
