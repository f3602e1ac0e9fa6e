//! Incremental query maintenance over finite relational structures.
//!
//! A database over a fixed domain `{1..n}` is modified by *replacement
//! queries*: sets of first-order formulas that simultaneously redefine
//! relations, optionally parameterized by domain elements. Dynamic programs
//! maintain auxiliary relations under such changes so that a designated
//! relation always holds the answer to a standing query (reachability,
//! regular/context-free membership, iterated-formula queries), and an oracle
//! harness replays change scripts against ground-truth reference
//! implementations to check them.

pub mod changes;
pub mod engine;
pub mod harness;
pub mod lang;
pub mod logic;
pub mod structures;

pub use structures::{Database, Relation, Schema, Tuple};
