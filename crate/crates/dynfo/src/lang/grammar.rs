//! Context-free grammars: Chomsky-like normal form that keeps ε-rules, plus
//! the derivability tables the maintainer builds on.
//!
//! The normal form has rules `X → YZ`, `X → σ`, `X → ε`, and a distinguished
//! nonterminal `E` with `E → ε` and, for every `X`, the closure rules
//! `X → XE` and `X → EX`.

use std::collections::HashMap;

use thiserror::Error;

use super::Letter;

/// A raw grammar symbol.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Sym {
    Nt(String),
    T(char),
}

/// A raw context-free grammar as written in grammar documents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cfg {
    pub start: String,
    pub rules: Vec<(String, Vec<Sym>)>,
}

impl Cfg {
    /// `{aⁿbⁿ : n ≥ 0}`.
    pub fn anbn() -> Cfg {
        Cfg {
            start: "S".into(),
            rules: vec![
                ("S".into(), vec![Sym::T('a'), Sym::Nt("S".into()), Sym::T('b')]),
                ("S".into(), vec![]),
            ],
        }
    }

    /// Balanced strings of one bracket pair, written `a`=open, `b`=close.
    pub fn dyck() -> Cfg {
        Cfg {
            start: "S".into(),
            rules: vec![
                ("S".into(), vec![]),
                ("S".into(), vec![Sym::Nt("S".into()), Sym::Nt("S".into())]),
                ("S".into(), vec![Sym::T('a'), Sym::Nt("S".into()), Sym::T('b')]),
            ],
        }
    }

    /// All strings over the alphabet.
    pub fn sigma_star(alphabet: &[char]) -> Cfg {
        let mut rules = vec![("S".into(), vec![])];
        for &c in alphabet {
            rules.push(("S".into(), vec![Sym::T(c), Sym::Nt("S".into())]));
        }
        Cfg { start: "S".into(), rules }
    }
}

pub type NtId = usize;

/// Normalized grammar with derived derivability tables.
#[derive(Debug, Clone)]
pub struct CnfGrammar {
    pub nonterminals: Vec<String>,
    pub alphabet: Vec<char>,
    pub start: NtId,
    /// The ε-padding nonterminal `E`.
    pub epsilon_nt: NtId,
    pub binary: Vec<(NtId, NtId, NtId)>,
    pub leaf: Vec<(NtId, char)>,
    pub eps_rules: Vec<NtId>,
    /// `X ⇒* ε`.
    pub nullable: Vec<bool>,
    /// `X ⇒* Y` (everything else in the derivation erased); reflexive.
    pub unit_reach: Vec<Vec<bool>>,
    /// `X ⇒* σ` per alphabet index.
    pub derives_letter: Vec<Vec<bool>>,
    /// Binary rule right-hand sides reachable through `unit_reach`.
    pub eff_rules: Vec<Vec<(NtId, NtId)>>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GrammarError {
    #[error("grammar has no rules")]
    Empty,
    #[error("start symbol `{0}` has no rule")]
    UnknownStart(String),
}

/// Converts an arbitrary CFG into the normal form above, preserving the
/// language.
pub fn normalize_grammar(cfg: &Cfg) -> Result<CnfGrammar, GrammarError> {
    if cfg.rules.is_empty() {
        return Err(GrammarError::Empty);
    }
    if !cfg.rules.iter().any(|(lhs, _)| *lhs == cfg.start) {
        return Err(GrammarError::UnknownStart(cfg.start.clone()));
    }

    let mut names: Vec<String> = Vec::new();
    let mut index: HashMap<String, NtId> = HashMap::new();
    let intern = |name: &str, names: &mut Vec<String>, index: &mut HashMap<String, NtId>| {
        if let Some(&i) = index.get(name) {
            return i;
        }
        names.push(name.to_string());
        index.insert(name.to_string(), names.len() - 1);
        names.len() - 1
    };
    for (lhs, rhs) in &cfg.rules {
        intern(lhs, &mut names, &mut index);
        for s in rhs {
            if let Sym::Nt(n) = s {
                intern(n, &mut names, &mut index);
            }
        }
    }
    let fresh = |base: &str, names: &mut Vec<String>, index: &mut HashMap<String, NtId>| {
        let mut name = base.to_string();
        let mut k = 0;
        while index.contains_key(&name) {
            k += 1;
            name = format!("{base}{k}");
        }
        names.push(name.clone());
        index.insert(name, names.len() - 1);
        names.len() - 1
    };

    #[derive(Clone)]
    enum Rhs {
        Bin(NtId, NtId),
        Leaf(char),
        Eps,
        Unit(NtId),
    }
    let mut rules: Vec<(NtId, Rhs)> = Vec::new();
    let mut alphabet: Vec<char> = Vec::new();
    // Cache of terminal-wrapper nonterminals (TERM step).
    let mut wrappers: HashMap<char, NtId> = HashMap::new();

    for (lhs, rhs) in &cfg.rules {
        let lhs = index[lhs];
        match rhs.len() {
            0 => rules.push((lhs, Rhs::Eps)),
            1 => match &rhs[0] {
                Sym::T(c) => {
                    if !alphabet.contains(c) {
                        alphabet.push(*c);
                    }
                    rules.push((lhs, Rhs::Leaf(*c)));
                }
                Sym::Nt(n) => rules.push((lhs, Rhs::Unit(index[n]))),
            },
            _ => {
                // TERM then BIN.
                let mut ids: Vec<NtId> = Vec::new();
                for s in rhs {
                    match s {
                        Sym::Nt(n) => ids.push(index[n]),
                        Sym::T(c) => {
                            if !alphabet.contains(c) {
                                alphabet.push(*c);
                            }
                            let w = *wrappers.entry(*c).or_insert_with(|| {
                                let id = fresh(&format!("T_{c}"), &mut names, &mut index);
                                id
                            });
                            ids.push(w);
                        }
                    }
                }
                let mut acc = ids[ids.len() - 1];
                for i in (1..ids.len() - 1).rev() {
                    let chain = fresh("B", &mut names, &mut index);
                    rules.push((chain, Rhs::Bin(ids[i], acc)));
                    acc = chain;
                }
                rules.push((lhs, Rhs::Bin(ids[0], acc)));
            }
        }
    }
    for (&c, &w) in &wrappers {
        rules.push((w, Rhs::Leaf(c)));
    }
    alphabet.sort_unstable();

    // UNIT elimination: close X ⇒ Y over syntactic unit rules, then copy
    // every non-unit rule of Y up to X.
    let k = names.len();
    let mut unit = vec![vec![false; k]; k];
    for (i, row) in unit.iter_mut().enumerate() {
        row[i] = true;
    }
    loop {
        let mut changed = false;
        for (lhs, rhs) in &rules {
            if let Rhs::Unit(y) = rhs {
                for t in 0..k {
                    if unit[*y][t] && !unit[*lhs][t] {
                        unit[*lhs][t] = true;
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    let mut binary: Vec<(NtId, NtId, NtId)> = Vec::new();
    let mut leaf: Vec<(NtId, char)> = Vec::new();
    let mut eps_rules: Vec<NtId> = Vec::new();
    for x in 0..k {
        for (lhs, rhs) in &rules {
            if !unit[x][*lhs] {
                continue;
            }
            match rhs {
                Rhs::Bin(a, b) => {
                    if !binary.contains(&(x, *a, *b)) {
                        binary.push((x, *a, *b));
                    }
                }
                Rhs::Leaf(c) => {
                    if !leaf.contains(&(x, *c)) {
                        leaf.push((x, *c));
                    }
                }
                Rhs::Eps => {
                    if !eps_rules.contains(&x) {
                        eps_rules.push(x);
                    }
                }
                Rhs::Unit(_) => {}
            }
        }
    }

    // The ε-padding nonterminal and its closure rules.
    let eps_nt = fresh("E", &mut names, &mut index);
    eps_rules.push(eps_nt);
    let total = names.len();
    for x in 0..total {
        binary.push((x, x, eps_nt));
        binary.push((x, eps_nt, x));
    }

    let mut g = CnfGrammar {
        nonterminals: names,
        alphabet,
        start: index[&cfg.start],
        epsilon_nt: eps_nt,
        binary,
        leaf,
        eps_rules,
        nullable: Vec::new(),
        unit_reach: Vec::new(),
        derives_letter: Vec::new(),
        eff_rules: Vec::new(),
    };
    g.rebuild_tables();
    Ok(g)
}

impl CnfGrammar {
    pub fn nt_count(&self) -> usize {
        self.nonterminals.len()
    }

    fn rebuild_tables(&mut self) {
        let k = self.nt_count();
        // nullable: fixpoint over ε-rules and binary rules.
        let mut nullable = vec![false; k];
        for &x in &self.eps_rules {
            nullable[x] = true;
        }
        loop {
            let mut changed = false;
            for &(x, a, b) in &self.binary {
                if !nullable[x] && nullable[a] && nullable[b] {
                    nullable[x] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        // unit_reach: X ⇒* Y with the sibling deriving ε; reflexive closure.
        let mut unit = vec![vec![false; k]; k];
        for (i, row) in unit.iter_mut().enumerate() {
            row[i] = true;
        }
        loop {
            let mut changed = false;
            for &(x, a, b) in &self.binary {
                for t in 0..k {
                    let via_a = nullable[b] && unit[a][t];
                    let via_b = nullable[a] && unit[b][t];
                    if (via_a || via_b) && !unit[x][t] {
                        unit[x][t] = true;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        // derives_letter via unit_reach ∘ leaf.
        let letters = self.alphabet.len();
        let mut dl = vec![vec![false; letters]; k];
        for &(z, c) in &self.leaf {
            let li = self.alphabet.iter().position(|&a| a == c).unwrap();
            for x in 0..k {
                if unit[x][z] {
                    dl[x][li] = true;
                }
            }
        }
        // eff_rules: binary right-hand sides reachable through unit_reach.
        let mut eff: Vec<Vec<(NtId, NtId)>> = vec![Vec::new(); k];
        for x in 0..k {
            for &(y, a, b) in &self.binary {
                if unit[x][y] && !eff[x].contains(&(a, b)) {
                    eff[x].push((a, b));
                }
            }
        }
        self.nullable = nullable;
        self.unit_reach = unit;
        self.derives_letter = dl;
        self.eff_rules = eff;
    }

    pub fn letter_index(&self, c: char) -> Option<usize> {
        self.alphabet.iter().position(|&a| a == c)
    }

    /// `X ⇒* σ` for `σ ∈ Σ_ε`.
    pub fn derives_single(&self, x: NtId, letter: Letter) -> bool {
        match letter {
            None => self.nullable[x],
            Some(c) => self.letter_index(c).is_some_and(|i| self.derives_letter[x][i]),
        }
    }

    /// Table of `X ⇒* σ^c` for `c ≤ max_count` (σ a real letter).
    pub fn runs_table(&self, sigma: char, max_count: usize) -> Vec<Vec<bool>> {
        let k = self.nt_count();
        let mut runs = vec![vec![false; max_count + 1]; k];
        for (x, row) in runs.iter_mut().enumerate() {
            row[0] = self.nullable[x];
            if max_count >= 1 {
                row[1] = self.derives_single(x, Some(sigma));
            }
        }
        for c in 2..=max_count {
            loop {
                let mut changed = false;
                for x in 0..k {
                    if runs[x][c] {
                        continue;
                    }
                    let hit = self.eff_rules[x].iter().any(|&(a, b)| {
                        (1..c).any(|c1| runs[a][c1] && runs[b][c - c1])
                    });
                    if hit {
                        runs[x][c] = true;
                        changed = true;
                    }
                }
                if !changed {
                    break;
                }
            }
        }
        runs
    }

    /// `X ⇒* σ₁^a Y σ₂^b`, with ε letters forcing the corresponding count
    /// to zero.
    pub fn sentential_derives(
        &self,
        x: NtId,
        sigma1: Letter,
        a: usize,
        y: NtId,
        sigma2: Letter,
        b: usize,
    ) -> bool {
        let a = if sigma1.is_none() { 0 } else { a };
        let b = if sigma2.is_none() { 0 } else { b };
        let table = self.sentential_table(sigma1.unwrap_or('a'), sigma2.unwrap_or('a'), y, a, b);
        table[x][a][b]
    }

    /// Full DP table `D[X][a][b] ⇔ X ⇒* σ₁^a Y σ₂^b` for `a ≤ amax`,
    /// `b ≤ bmax`.
    pub fn sentential_table(
        &self,
        sigma1: char,
        sigma2: char,
        y: NtId,
        amax: usize,
        bmax: usize,
    ) -> Vec<Vec<Vec<bool>>> {
        let k = self.nt_count();
        let runs1 = self.runs_table(sigma1, amax);
        let runs2 = self.runs_table(sigma2, bmax);
        let mut d = vec![vec![vec![false; bmax + 1]; amax + 1]; k];
        for x in 0..k {
            d[x][0][0] = self.unit_reach[x][y];
        }
        // The non-gap side of each rule application consumes at least one
        // letter, so filling by increasing a+b terminates.
        for total in 1..=(amax + bmax) {
            for a in 0..=amax.min(total) {
                let b = total - a;
                if b > bmax {
                    continue;
                }
                for x in 0..k {
                    let hit = self.eff_rules[x].iter().any(|&(l, r)| {
                        (1..=a).any(|a1| runs1[l][a1] && d[r][a - a1][b])
                            || (1..=b).any(|b2| d[l][a][b - b2] && runs2[r][b2])
                    });
                    if hit {
                        d[x][a][b] = true;
                    }
                }
            }
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_anbn_shape() {
        let g = normalize_grammar(&Cfg::anbn()).unwrap();
        let e = g.epsilon_nt;
        assert!(g.eps_rules.contains(&e));
        // Closure rules present for every nonterminal.
        for x in 0..g.nt_count() {
            assert!(g.binary.contains(&(x, x, e)));
            assert!(g.binary.contains(&(x, e, x)));
        }
        assert!(g.nullable[g.start]);
    }

    #[test]
    fn empty_grammar_rejected() {
        assert!(matches!(
            normalize_grammar(&Cfg { start: "S".into(), rules: vec![] }),
            Err(GrammarError::Empty)
        ));
    }

    #[test]
    fn sentential_derivations_balanced() {
        // S ⇒* a^k S b^k for all k ≤ 6 in the a^n b^n grammar.
        let g = normalize_grammar(&Cfg::anbn()).unwrap();
        for k in 0..=6 {
            assert!(
                g.sentential_derives(g.start, Some('a'), k, g.start, Some('b'), k),
                "k={k}"
            );
        }
        // Asymmetric counts are not derivable around S.
        assert!(!g.sentential_derives(g.start, Some('a'), 2, g.start, Some('b'), 1));
        // X = Y with empty blocks: the empty derivation.
        assert!(g.sentential_derives(g.start, None, 0, g.start, None, 0));
    }

    #[test]
    fn sentential_respects_letters() {
        // In a^n b^n nothing derives `b` blocks left of S.
        let g = normalize_grammar(&Cfg::anbn()).unwrap();
        assert!(!g.sentential_derives(g.start, Some('b'), 1, g.start, Some('a'), 1));
        // An a-only wrapper cannot produce right-side b's around E.
        assert!(g.sentential_derives(g.start, Some('a'), 1, g.epsilon_nt, Some('b'), 1));
    }

    #[test]
    fn unit_reach_and_single_letters() {
        let g = normalize_grammar(&Cfg::anbn()).unwrap();
        // S ⇒* E (take the ε-closure rule and erase S).
        assert!(g.unit_reach[g.start][g.epsilon_nt]);
        assert!(g.derives_single(g.start, None));
        assert!(!g.derives_single(g.start, Some('a')));
        let sigma = normalize_grammar(&Cfg::sigma_star(&['a', 'b'])).unwrap();
        assert!(sigma.derives_single(sigma.start, Some('a')));
        assert!(sigma.derives_single(sigma.start, Some('b')));
    }
}
