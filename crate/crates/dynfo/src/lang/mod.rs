//! Formal-language maintainers: regular languages via state-transport
//! relations indexed by relabeling functions, context-free languages via
//! two-block sentential-form relations.

pub mod cfl;
pub mod dfa;
pub mod grammar;
pub mod regular;
pub mod relabel;

pub use dfa::Dfa;
pub use grammar::{normalize_grammar, Cfg, CnfGrammar};
pub use relabel::{Relabeling, WordProfile};

/// A letter from `Σ_ε`: `None` is the blank ε.
pub type Letter = Option<char>;
