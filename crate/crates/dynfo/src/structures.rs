//! Finite relational structures: schemas, databases, and word encodings.
//!
//! Domains are always `{1..n}`; the built-in linear order is the natural
//! order on element numbers. Relations are stored as canonical tuple sets so
//! two databases compare structurally equal exactly when they hold the same
//! tuples.

use std::collections::HashMap;
use std::fmt;
use std::hash::{BuildHasherDefault, Hasher};
use std::sync::Arc;

use thiserror::Error;

/// One relation tuple. Components are domain elements (1-based); the word
/// maintainers additionally use 0 and n+1 as virtual sentinel positions.
pub type Tuple = arrayvec::ArrayVec<u32, 8>;

/// Largest relation arity the tuple representation supports.
pub const MAX_ARITY: usize = 8;

/// Builds a tuple from a slice of components.
pub fn tup(components: &[u32]) -> Tuple {
    let mut t = Tuple::new();
    t.try_extend_from_slice(components)
        .expect("tuple arity exceeds MAX_ARITY");
    t
}

/// Multiply-xor hasher for tuples; relation updates are lookup-bound and the
/// default SipHash dominates profiles otherwise.
#[derive(Default)]
pub struct FxHasher {
    state: u64,
}

impl Hasher for FxHasher {
    #[inline]
    fn finish(&self) -> u64 {
        self.state
    }

    #[inline]
    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.write_u8(b);
        }
    }

    #[inline]
    fn write_u8(&mut self, v: u8) {
        self.add(v as u64);
    }

    #[inline]
    fn write_u32(&mut self, v: u32) {
        self.add(v as u64);
    }

    #[inline]
    fn write_u64(&mut self, v: u64) {
        self.add(v);
    }

    #[inline]
    fn write_usize(&mut self, v: usize) {
        self.add(v as u64);
    }
}

impl FxHasher {
    #[inline]
    fn add(&mut self, v: u64) {
        self.state = (self.state.rotate_left(5) ^ v).wrapping_mul(0x51_7c_c1_b7_27_22_0a_95);
    }
}

pub type FxBuild = BuildHasherDefault<FxHasher>;
pub type TupleSet = std::collections::HashSet<Tuple, FxBuild>;

/// A named relation symbol with its arity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelDecl {
    pub name: String,
    pub arity: usize,
}

/// Relational schema: relation symbols, constant symbols, and structural
/// flags (built-in order, word mode with an alphabet, undirected convention).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    rels: Vec<RelDecl>,
    consts: Vec<String>,
    pub ordered: bool,
    pub undirected: bool,
    /// `Some(alphabet)` puts the schema in word mode: one unary relation
    /// `R_σ` per letter, constants `min`/`max`, immutable natural order.
    pub alphabet: Option<Vec<char>>,
    index: HashMap<String, usize>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SchemaError {
    #[error("duplicate relation name `{0}`")]
    DuplicateRelation(String),
    #[error("relation `{0}` has arity {1}; arities must be in 1..={MAX_ARITY}")]
    BadArity(String, usize),
    #[error("duplicate constant name `{0}`")]
    DuplicateConstant(String),
    #[error("word mode requires the ordered flag")]
    WordNeedsOrder,
    #[error("word mode requires unary relation `{0}`")]
    MissingLetterRelation(String),
    #[error("word mode requires constant `{0}`")]
    MissingWordConstant(String),
    #[error("alphabet letter `{0}` is not a lowercase ascii letter")]
    BadLetter(char),
}

impl Schema {
    pub fn new(
        rels: Vec<RelDecl>,
        consts: Vec<String>,
        ordered: bool,
        undirected: bool,
        alphabet: Option<Vec<char>>,
    ) -> Result<Schema, SchemaError> {
        let mut index = HashMap::new();
        for (i, r) in rels.iter().enumerate() {
            if r.arity == 0 || r.arity > MAX_ARITY {
                return Err(SchemaError::BadArity(r.name.clone(), r.arity));
            }
            if index.insert(r.name.clone(), i).is_some() {
                return Err(SchemaError::DuplicateRelation(r.name.clone()));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for c in &consts {
            if !seen.insert(c.clone()) {
                return Err(SchemaError::DuplicateConstant(c.clone()));
            }
        }
        let schema = Schema { rels, consts, ordered, undirected, alphabet, index };
        if let Some(alpha) = &schema.alphabet {
            if !schema.ordered {
                return Err(SchemaError::WordNeedsOrder);
            }
            for &sigma in alpha {
                if !sigma.is_ascii_lowercase() {
                    return Err(SchemaError::BadLetter(sigma));
                }
                let name = letter_relation(sigma);
                match schema.rel_index(&name) {
                    Some(i) if schema.rels[i].arity == 1 => {}
                    _ => return Err(SchemaError::MissingLetterRelation(name)),
                }
            }
            for c in ["min", "max"] {
                if !schema.consts.iter().any(|x| x == c) {
                    return Err(SchemaError::MissingWordConstant(c.to_string()));
                }
            }
        }
        Ok(schema)
    }

    /// Directed-graph schema: one binary relation `E`.
    pub fn graph() -> Schema {
        Schema::new(vec![RelDecl { name: "E".into(), arity: 2 }], vec![], false, false, None)
            .unwrap()
    }

    /// Ordered directed-graph schema (`E` plus the built-in order).
    pub fn graph_ordered() -> Schema {
        Schema::new(vec![RelDecl { name: "E".into(), arity: 2 }], vec![], true, false, None)
            .unwrap()
    }

    /// Undirected-graph schema: `E` kept symmetric, built-in order present.
    pub fn graph_undirected() -> Schema {
        Schema::new(vec![RelDecl { name: "E".into(), arity: 2 }], vec![], true, true, None)
            .unwrap()
    }

    /// Word schema over the given alphabet: `R_σ` per letter, `min`/`max`.
    pub fn word(alphabet: &[char]) -> Schema {
        let rels = alphabet
            .iter()
            .map(|&sigma| RelDecl { name: letter_relation(sigma), arity: 1 })
            .collect();
        Schema::new(
            rels,
            vec!["min".into(), "max".into()],
            true,
            false,
            Some(alphabet.to_vec()),
        )
        .unwrap()
    }

    /// Adds a relation, returning a new schema.
    pub fn with_relation(&self, name: &str, arity: usize) -> Result<Schema, SchemaError> {
        let mut rels = self.rels.clone();
        rels.push(RelDecl { name: name.into(), arity });
        Schema::new(rels, self.consts.clone(), self.ordered, self.undirected, self.alphabet.clone())
    }

    pub fn relations(&self) -> &[RelDecl] {
        &self.rels
    }

    pub fn constants(&self) -> &[String] {
        &self.consts
    }

    pub fn rel_index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn const_index(&self, name: &str) -> Option<usize> {
        self.consts.iter().position(|c| c == name)
    }

    pub fn arity_of(&self, name: &str) -> Option<usize> {
        self.rel_index(name).map(|i| self.rels[i].arity)
    }

    pub fn word_mode(&self) -> bool {
        self.alphabet.is_some()
    }
}

/// Relation name `R_σ` for an alphabet letter.
pub fn letter_relation(sigma: char) -> String {
    format!("R_{sigma}")
}

/// A set of tuples of a fixed arity.
#[derive(Clone, PartialEq, Eq, Default)]
pub struct Relation {
    arity: usize,
    tuples: TupleSet,
}

impl Relation {
    pub fn new(arity: usize) -> Relation {
        Relation { arity, tuples: TupleSet::default() }
    }

    pub fn from_tuples<I: IntoIterator<Item = Tuple>>(arity: usize, iter: I) -> Relation {
        let mut r = Relation::new(arity);
        for t in iter {
            r.insert(t);
        }
        r
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn contains(&self, t: &[u32]) -> bool {
        debug_assert_eq!(t.len(), self.arity);
        self.tuples.contains(&tup(t))
    }

    pub fn insert(&mut self, t: Tuple) -> bool {
        assert_eq!(t.len(), self.arity, "tuple arity mismatch");
        self.tuples.insert(t)
    }

    pub fn remove(&mut self, t: &[u32]) -> bool {
        self.tuples.remove(&tup(t))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Tuple> {
        self.tuples.iter()
    }

    /// Tuples in lexicographic order; the canonical form used for
    /// serialization and debugging.
    pub fn sorted(&self) -> Vec<Tuple> {
        let mut v: Vec<Tuple> = self.tuples.iter().cloned().collect();
        v.sort();
        v
    }
}

impl fmt::Debug for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut list = f.debug_list();
        for t in self.sorted() {
            list.entry(&t.as_slice());
        }
        list.finish()
    }
}

impl FromIterator<Tuple> for Relation {
    fn from_iter<I: IntoIterator<Item = Tuple>>(iter: I) -> Relation {
        let mut it = iter.into_iter().peekable();
        let arity = it.peek().map(|t| t.len()).unwrap_or(0);
        Relation::from_tuples(arity, it)
    }
}

/// A database: domain size plus one tuple set per relation symbol and one
/// element per constant symbol. Databases are immutable values; operations
/// that modify them return fresh ones.
#[derive(Clone, PartialEq, Eq)]
pub struct Database {
    schema: Arc<Schema>,
    n: u32,
    rels: Vec<Relation>,
    consts: Vec<u32>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DbError {
    #[error("unknown relation `{0}`")]
    UnknownRelation(String),
    #[error("unknown constant `{0}`")]
    UnknownConstant(String),
    #[error("domain size must be at least 1")]
    EmptyDomain,
    #[error("not a word-mode database")]
    NotWordMode,
    #[error("invalid word database: {0}")]
    InvalidWord(Violation),
}

impl Database {
    /// The empty database: all relations empty; in word mode the constants
    /// `min`/`max` are bound to `1`/`n`, all other constants to `1`.
    pub fn empty(schema: Arc<Schema>, n: u32) -> Result<Database, DbError> {
        if n == 0 {
            return Err(DbError::EmptyDomain);
        }
        let rels = schema.relations().iter().map(|r| Relation::new(r.arity)).collect();
        let consts = schema
            .constants()
            .iter()
            .map(|c| match c.as_str() {
                "max" => n,
                _ => 1,
            })
            .collect();
        Ok(Database { schema, n, rels, consts })
    }

    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    pub fn size(&self) -> u32 {
        self.n
    }

    pub fn relation(&self, name: &str) -> Option<&Relation> {
        self.schema.rel_index(name).map(|i| &self.rels[i])
    }

    pub fn relation_at(&self, idx: usize) -> &Relation {
        &self.rels[idx]
    }

    pub fn constant(&self, name: &str) -> Option<u32> {
        self.schema.const_index(name).map(|i| self.consts[i])
    }

    pub fn set_relation(&mut self, name: &str, rel: Relation) -> Result<(), DbError> {
        let i = self
            .schema
            .rel_index(name)
            .ok_or_else(|| DbError::UnknownRelation(name.into()))?;
        assert_eq!(rel.arity(), self.schema.relations()[i].arity, "relation arity mismatch");
        self.rels[i] = rel;
        Ok(())
    }

    pub fn set_constant(&mut self, name: &str, v: u32) -> Result<(), DbError> {
        let i = self
            .schema
            .const_index(name)
            .ok_or_else(|| DbError::UnknownConstant(name.into()))?;
        self.consts[i] = v;
        Ok(())
    }

    /// Inserts one tuple; convenience for building fixtures.
    pub fn insert(&mut self, rel: &str, t: &[u32]) -> Result<bool, DbError> {
        let i = self
            .schema
            .rel_index(rel)
            .ok_or_else(|| DbError::UnknownRelation(rel.into()))?;
        Ok(self.rels[i].insert(tup(t)))
    }

    /// Per-position letter contents of a word-mode database; `None` is the
    /// blank letter ε.
    pub fn word_content(&self) -> Result<Vec<Option<char>>, DbError> {
        let alpha = self.schema.alphabet.as_ref().ok_or(DbError::NotWordMode)?;
        let mut content: Vec<Option<char>> = vec![None; self.n as usize];
        for &sigma in alpha {
            let rel = self.relation(&letter_relation(sigma)).expect("letter relation");
            for t in rel.iter() {
                let pos = t[0];
                if pos == 0 || pos > self.n {
                    return Err(DbError::InvalidWord(Violation::TupleOutOfRange {
                        relation: letter_relation(sigma),
                        tuple: vec![pos],
                    }));
                }
                let slot = &mut content[pos as usize - 1];
                if let Some(prev) = *slot {
                    return Err(DbError::InvalidWord(Violation::TwoLetters {
                        position: pos,
                        first: prev,
                        second: sigma,
                    }));
                }
                *slot = Some(sigma);
            }
        }
        Ok(content)
    }

    /// Builds a word-mode database from per-position contents.
    pub fn from_word_content(
        schema: Arc<Schema>,
        content: &[Option<char>],
    ) -> Result<Database, DbError> {
        let mut db = Database::empty(schema, content.len() as u32)?;
        for (i, c) in content.iter().enumerate() {
            if let Some(sigma) = c {
                db.insert(&letter_relation(*sigma), &[i as u32 + 1])?;
            }
        }
        Ok(db)
    }
}

impl fmt::Debug for Database {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = f.debug_struct("Database");
        s.field("n", &self.n);
        for (decl, rel) in self.schema.relations().iter().zip(&self.rels) {
            s.field(&decl.name, rel);
        }
        for (name, v) in self.schema.constants().iter().zip(&self.consts) {
            s.field(name, v);
        }
        s.finish()
    }
}

/// Decodes a word-mode database to the string it represents: non-ε letters
/// in position order.
pub fn decode_word(db: &Database) -> Result<String, DbError> {
    Ok(db.word_content()?.into_iter().flatten().collect())
}

/// An invariant breach found by [`validate`]. Violations are data, not
/// failures: they name the invariant and a witness.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Violation {
    TupleOutOfRange { relation: String, tuple: Vec<u32> },
    ConstantOutOfRange { constant: String, value: u32 },
    TwoLetters { position: u32, first: char, second: char },
    NotSymmetric { from: u32, to: u32 },
    BadWordConstant { constant: String, expected: u32, actual: u32 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::TupleOutOfRange { relation, tuple } => {
                write!(f, "tuple {tuple:?} of `{relation}` outside 1..=n")
            }
            Violation::ConstantOutOfRange { constant, value } => {
                write!(f, "constant `{constant}` = {value} outside 1..=n")
            }
            Violation::TwoLetters { position, first, second } => {
                write!(f, "position {position} in two letter relations (R_{first}, R_{second})")
            }
            Violation::NotSymmetric { from, to } => {
                write!(f, "E not symmetric at ({from},{to})")
            }
            Violation::BadWordConstant { constant, expected, actual } => {
                write!(f, "word constant `{constant}` must be {expected}, found {actual}")
            }
        }
    }
}

/// Checks every database invariant against the schema and returns the sorted
/// list of violations (empty = ok). Deterministic and independent of tuple
/// enumeration order.
pub fn validate(db: &Database) -> Vec<Violation> {
    let schema = db.schema();
    let n = db.size();
    let mut out = Vec::new();
    for (decl, rel) in schema.relations().iter().zip(&db.rels) {
        for t in rel.iter() {
            if t.iter().any(|&c| c == 0 || c > n) {
                out.push(Violation::TupleOutOfRange {
                    relation: decl.name.clone(),
                    tuple: t.to_vec(),
                });
            }
        }
    }
    for (name, &v) in schema.constants().iter().zip(&db.consts) {
        if v == 0 || v > n {
            out.push(Violation::ConstantOutOfRange { constant: name.clone(), value: v });
        }
    }
    if let Some(alpha) = &schema.alphabet {
        let mut content: Vec<Option<char>> = vec![None; n as usize];
        for &sigma in alpha {
            let rel = db.relation(&letter_relation(sigma)).expect("letter relation");
            let mut positions: Vec<u32> = rel.iter().map(|t| t[0]).collect();
            positions.sort_unstable();
            for pos in positions {
                if pos == 0 || pos > n {
                    continue; // already reported as out of range
                }
                let slot = &mut content[pos as usize - 1];
                if let Some(prev) = *slot {
                    out.push(Violation::TwoLetters { position: pos, first: prev, second: sigma });
                } else {
                    *slot = Some(sigma);
                }
            }
        }
        for (name, expected) in [("min", 1), ("max", n)] {
            if let Some(actual) = db.constant(name) {
                if actual != expected {
                    out.push(Violation::BadWordConstant {
                        constant: name.into(),
                        expected,
                        actual,
                    });
                }
            }
        }
    }
    if schema.undirected {
        if let Some(e) = db.relation("E") {
            for t in e.iter() {
                if !e.contains(&[t[1], t[0]]) {
                    out.push(Violation::NotSymmetric { from: t[0], to: t[1] });
                }
            }
        }
    }
    out.sort();
    out.dedup();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn word_db(content: &[Option<char>]) -> Database {
        let schema = Arc::new(Schema::word(&['a', 'b']));
        Database::from_word_content(schema, content).unwrap()
    }

    #[test]
    fn decode_baa() {
        // domain {1..5}, R_a={2,4}, R_b={1} represents "baa"
        let db = word_db(&[Some('b'), Some('a'), None, Some('a'), None]);
        assert_eq!(decode_word(&db).unwrap(), "baa");
    }

    #[test]
    fn decode_all_blank_and_full() {
        let db = word_db(&[None, None, None]);
        assert_eq!(decode_word(&db).unwrap(), "");
        let db = word_db(&[Some('a'); 4]);
        assert_eq!(decode_word(&db).unwrap(), "aaaa");
    }

    #[test]
    fn decode_rejects_double_letter() {
        let schema = Arc::new(Schema::word(&['a', 'b']));
        let mut db = Database::empty(schema, 3).unwrap();
        db.insert("R_a", &[1]).unwrap();
        db.insert("R_b", &[1]).unwrap();
        assert!(matches!(decode_word(&db), Err(DbError::InvalidWord(_))));
        let violations = validate(&db);
        assert_eq!(
            violations,
            vec![Violation::TwoLetters { position: 1, first: 'a', second: 'b' }]
        );
    }

    #[test]
    fn validate_asymmetric_edge() {
        let schema = Arc::new(Schema::graph_undirected());
        let mut db = Database::empty(schema, 3).unwrap();
        db.insert("E", &[1, 2]).unwrap();
        assert_eq!(validate(&db), vec![Violation::NotSymmetric { from: 1, to: 2 }]);
        db.insert("E", &[2, 1]).unwrap();
        assert!(validate(&db).is_empty());
    }

    #[test]
    fn validate_out_of_range() {
        let schema = Arc::new(Schema::graph());
        let mut db = Database::empty(schema, 2).unwrap();
        db.insert("E", &[1, 5]).unwrap();
        assert_eq!(
            validate(&db),
            vec![Violation::TupleOutOfRange { relation: "E".into(), tuple: vec![1, 5] }]
        );
    }

    #[test]
    fn word_schema_shape() {
        let schema = Schema::word(&['a', 'b']);
        assert!(schema.ordered && schema.word_mode());
        assert_eq!(schema.arity_of("R_a"), Some(1));
        assert!(schema.const_index("min").is_some());
        let db = Database::empty(Arc::new(schema), 5).unwrap();
        assert_eq!(db.constant("min"), Some(1));
        assert_eq!(db.constant("max"), Some(5));
    }

    #[test]
    fn encode_decode_roundtrip() {
        for s in ["a", "ab", "bab", "aabba"] {
            let content: Vec<Option<char>> = s.chars().map(Some).collect();
            let db = word_db(&content);
            assert_eq!(decode_word(&db).unwrap(), s);
        }
        // The empty string needs blank positions; the domain cannot be empty.
        let db = word_db(&[None, None]);
        assert_eq!(decode_word(&db).unwrap(), "");
    }

    #[test]
    fn databases_compare_structurally() {
        let schema = Arc::new(Schema::graph());
        let mut a = Database::empty(schema.clone(), 3).unwrap();
        let mut b = Database::empty(schema, 3).unwrap();
        a.insert("E", &[1, 2]).unwrap();
        a.insert("E", &[2, 3]).unwrap();
        b.insert("E", &[2, 3]).unwrap();
        assert_ne!(a, b);
        b.insert("E", &[1, 2]).unwrap();
        assert_eq!(a, b);
    }
}
