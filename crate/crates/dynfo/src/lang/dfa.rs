//! Deterministic finite automata.

use thiserror::Error;

use super::Letter;

/// A total DFA `(Q, Σ, γ, s, F)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dfa {
    pub states: Vec<String>,
    pub alphabet: Vec<char>,
    pub start: usize,
    pub accepting: Vec<bool>,
    trans: Vec<Vec<usize>>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DfaError {
    #[error("duplicate state name `{0}`")]
    DuplicateState(String),
    #[error("unknown state `{0}`")]
    UnknownState(String),
    #[error("letter `{0}` not in the alphabet")]
    UnknownLetter(char),
    #[error("missing transition from `{state}` on `{letter}`")]
    MissingTransition { state: String, letter: char },
    #[error("duplicate transition from `{state}` on `{letter}`")]
    DuplicateTransition { state: String, letter: char },
}

impl Dfa {
    pub fn new(
        states: &[&str],
        alphabet: &[char],
        start: &str,
        accepting: &[&str],
        transitions: &[(&str, char, &str)],
    ) -> Result<Dfa, DfaError> {
        let states: Vec<String> = states.iter().map(|s| s.to_string()).collect();
        {
            let mut seen = std::collections::HashSet::new();
            for s in &states {
                if !seen.insert(s) {
                    return Err(DfaError::DuplicateState(s.clone()));
                }
            }
        }
        let state_idx = |name: &str| -> Result<usize, DfaError> {
            states
                .iter()
                .position(|s| s == name)
                .ok_or_else(|| DfaError::UnknownState(name.to_string()))
        };
        let letter_idx = |c: char| -> Result<usize, DfaError> {
            alphabet.iter().position(|&a| a == c).ok_or(DfaError::UnknownLetter(c))
        };
        let start = state_idx(start)?;
        let mut acc = vec![false; states.len()];
        for a in accepting {
            acc[state_idx(a)?] = true;
        }
        let mut trans = vec![vec![usize::MAX; alphabet.len()]; states.len()];
        for (from, c, to) in transitions {
            let (f, l, t) = (state_idx(from)?, letter_idx(*c)?, state_idx(to)?);
            if trans[f][l] != usize::MAX {
                return Err(DfaError::DuplicateTransition { state: from.to_string(), letter: *c });
            }
            trans[f][l] = t;
        }
        for (s, row) in trans.iter().enumerate() {
            for (l, &t) in row.iter().enumerate() {
                if t == usize::MAX {
                    return Err(DfaError::MissingTransition {
                        state: states[s].clone(),
                        letter: alphabet[l],
                    });
                }
            }
        }
        Ok(Dfa { states, alphabet: alphabet.to_vec(), start, accepting: acc, trans })
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn step(&self, state: usize, letter: char) -> usize {
        let l = self
            .alphabet
            .iter()
            .position(|&a| a == letter)
            .unwrap_or_else(|| panic!("letter `{letter}` not in alphabet"));
        self.trans[state][l]
    }

    /// Extended transition over a string.
    pub fn run_from(&self, state: usize, input: &str) -> usize {
        input.chars().fold(state, |q, c| self.step(q, c))
    }

    /// Extended transition over `Σ_ε` contents: blank positions contribute
    /// nothing.
    pub fn transport(&self, state: usize, letters: impl IntoIterator<Item = Letter>) -> usize {
        letters.into_iter().flatten().fold(state, |q, c| self.step(q, c))
    }

    /// Language membership of a plain string.
    pub fn accepts(&self, input: &str) -> bool {
        self.accepting[self.run_from(self.start, input)]
    }

    /// Strings with an even number of `a`s over `{a,b}`.
    pub fn even_a() -> Dfa {
        Dfa::new(
            &["q0", "q1"],
            &['a', 'b'],
            "q0",
            &["q0"],
            &[("q0", 'a', "q1"), ("q1", 'a', "q0"), ("q0", 'b', "q0"), ("q1", 'b', "q1")],
        )
        .unwrap()
    }

    /// The language `(ab)*` over `{a,b}`.
    pub fn ab_star() -> Dfa {
        Dfa::new(
            &["q0", "q1", "dead"],
            &['a', 'b'],
            "q0",
            &["q0"],
            &[
                ("q0", 'a', "q1"),
                ("q0", 'b', "dead"),
                ("q1", 'a', "dead"),
                ("q1", 'b', "q0"),
                ("dead", 'a', "dead"),
                ("dead", 'b', "dead"),
            ],
        )
        .unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn even_a_runs() {
        let dfa = Dfa::even_a();
        assert!(dfa.accepts(""));
        assert!(dfa.accepts("baa"));
        assert!(!dfa.accepts("aba"));
        assert!(dfa.accepts("bb"));
    }

    #[test]
    fn ab_star_runs() {
        let dfa = Dfa::ab_star();
        assert!(dfa.accepts(""));
        assert!(dfa.accepts("abab"));
        assert!(!dfa.accepts("ab" .repeat(2).trim_end_matches('b')));
        assert!(!dfa.accepts("ba"));
    }

    #[test]
    fn transport_skips_blanks() {
        let dfa = Dfa::even_a();
        let q = dfa.transport(0, [None, Some('a'), None, Some('a'), None]);
        assert_eq!(q, 0);
    }

    #[test]
    fn totality_enforced() {
        let err = Dfa::new(&["q0"], &['a'], "q0", &[], &[]).unwrap_err();
        assert!(matches!(err, DfaError::MissingTransition { .. }));
    }
}
