//! Dynamic programs: auxiliary schemas, per-change update rules, and the
//! step semantics.
//!
//! After a change `ρ(ā)`, the input database becomes `ρ(ā)(ℐ)` and every
//! auxiliary relation is redefined from the *pre-change* state `(ℐ, 𝒜)` —
//! formula rules via `{b̄ : (ℐ,𝒜) ⊨ φ_T(ā, b̄)}`, procedural rules from
//! immutable snapshots of the same. A designated auxiliary relation `Q`
//! carries the query answer.

use std::collections::BTreeSet;
use std::sync::Arc;

use thiserror::Error;

use crate::changes::{apply_change, ChangeError, ChangeOp};
use crate::logic::{define_relation_env, Assignment, EvalError, Formula, RelEnv};
use crate::structures::{Database, Relation, Schema};

/// Procedural update rule body: old input, old auxiliary, parameter values.
pub type RelProc =
    Arc<dyn Fn(&Database, &Database, &[u32]) -> Result<Relation, EngineError> + Send + Sync>;

/// Auxiliary initializer: receives the empty input database (fixing the
/// domain size) and produces the initial auxiliary database.
pub type Initializer = Arc<dyn Fn(&Database) -> Result<Database, EngineError> + Send + Sync>;

pub enum RuleBody {
    Formula(Formula),
    Procedure(String, RelProc),
}

impl std::fmt::Debug for RuleBody {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RuleBody::Formula(fm) => write!(f, "Formula({fm})"),
            RuleBody::Procedure(name, _) => write!(f, "Procedure({name})"),
        }
    }
}

/// Update rule: on change query `on`, redefine auxiliary relation `target`.
#[derive(Debug)]
pub struct UpdateRule {
    pub on: String,
    pub target: String,
    pub out_vars: Vec<String>,
    pub body: RuleBody,
}

/// A whole-state maintainer: computes the full new auxiliary database from
/// pre-change snapshots. Used for the maintainers whose update strategies
/// are given procedurally.
pub trait Maintainer: Send + Sync {
    fn init(&self, empty_input: &Database) -> Result<Database, EngineError>;
    fn step(
        &self,
        input: &Database,
        aux: &Database,
        delta: &ChangeOp,
    ) -> Result<Database, EngineError>;
    fn handles(&self, query_name: &str) -> bool;
}

pub enum ProgramKind {
    Rules { rules: Vec<UpdateRule>, extra_handled: BTreeSet<String>, initializer: Initializer },
    Maintainer(Arc<dyn Maintainer>),
}

/// A dynamic program: schemas, update rules (or a procedural maintainer),
/// the designated query relation, and an initializer.
pub struct DynamicProgram {
    pub name: String,
    pub input_schema: Arc<Schema>,
    pub aux_schema: Arc<Schema>,
    pub query_relation: String,
    pub kind: ProgramKind,
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("program has no rule for change query `{0}`")]
    MissingRule(String),
    #[error("query relation `{0}` missing from auxiliary schema")]
    MissingQueryRelation(String),
    #[error("input and auxiliary schemas share relation name `{0}`")]
    NameClash(String),
    #[error("initializer produced auxiliary database over the wrong schema")]
    BadInitializer,
    #[error("input and auxiliary databases must share the domain size")]
    DomainMismatch,
    #[error(transparent)]
    Change(#[from] ChangeError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{0}")]
    Maintainer(String),
}

impl EngineError {
    /// Rejections leave the state unchanged and are recoverable; everything
    /// else is a hard error.
    pub fn is_rejection(&self) -> bool {
        matches!(self, EngineError::Change(ChangeError::Rejected(_)))
    }
}

/// Program state: input database plus auxiliary database over one domain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProgramState {
    pub input: Database,
    pub aux: Database,
}

impl DynamicProgram {
    /// Structural checks: query relation present, name spaces disjoint.
    pub fn check(&self) -> Result<(), EngineError> {
        if self.aux_schema.rel_index(&self.query_relation).is_none() {
            return Err(EngineError::MissingQueryRelation(self.query_relation.clone()));
        }
        for r in self.input_schema.relations() {
            if self.aux_schema.rel_index(&r.name).is_some() {
                return Err(EngineError::NameClash(r.name.clone()));
            }
        }
        Ok(())
    }

    pub fn handles(&self, query_name: &str) -> bool {
        match &self.kind {
            ProgramKind::Rules { rules, extra_handled, .. } => {
                extra_handled.contains(query_name) || rules.iter().any(|r| r.on == query_name)
            }
            ProgramKind::Maintainer(m) => m.handles(query_name),
        }
    }
}

/// Builds the initial state for domain size `n`: empty input database,
/// auxiliary database from the program's initializer.
pub fn init_state(n: u32, program: &DynamicProgram) -> Result<ProgramState, EngineError> {
    program.check()?;
    let input = Database::empty(program.input_schema.clone(), n)
        .map_err(|_| EngineError::DomainMismatch)?;
    let aux = match &program.kind {
        ProgramKind::Rules { initializer, .. } => initializer(&input)?,
        ProgramKind::Maintainer(m) => m.init(&input)?,
    };
    if aux.schema().as_ref() != program.aux_schema.as_ref() || aux.size() != n {
        return Err(EngineError::BadInitializer);
    }
    Ok(ProgramState { input, aux })
}

/// One step: apply the change to the input and update every auxiliary
/// relation from the pre-change state. Errors (including rejections) leave
/// the caller's state untouched.
pub fn step(
    state: &ProgramState,
    delta: &ChangeOp,
    program: &DynamicProgram,
) -> Result<ProgramState, EngineError> {
    if !program.handles(&delta.query.name) {
        return Err(EngineError::MissingRule(delta.query.name.clone()));
    }
    let new_input = apply_change(&state.input, delta)?;
    let new_aux = match &program.kind {
        ProgramKind::Rules { rules, .. } => {
            let env = RelEnv::from_pair(&state.input, &state.aux);
            let params: Assignment = delta
                .query
                .params
                .iter()
                .cloned()
                .zip(delta.args.iter().copied())
                .collect();
            let mut aux = state.aux.clone();
            let mut updates = Vec::new();
            for rule in rules.iter().filter(|r| r.on == delta.query.name) {
                let rel = match &rule.body {
                    RuleBody::Formula(f) => {
                        define_relation_env(f, &env, &params, &rule.out_vars)?
                    }
                    RuleBody::Procedure(_, p) => p(&state.input, &state.aux, &delta.args)?,
                };
                updates.push((rule.target.clone(), rel));
            }
            // Aux relations without a rule for this query keep their value.
            for (name, rel) in updates {
                aux.set_relation(&name, rel).map_err(|_| EngineError::BadInitializer)?;
            }
            aux
        }
        ProgramKind::Maintainer(m) => m.step(&state.input, &state.aux, delta)?,
    };
    if new_aux.schema().as_ref() != program.aux_schema.as_ref() {
        return Err(EngineError::BadInitializer);
    }
    Ok(ProgramState { input: new_input, aux: new_aux })
}

/// Error from [`run`], tagged with the index of the offending change.
#[derive(Debug, Error)]
#[error("step {index}: {source}")]
pub struct RunError {
    pub index: usize,
    #[source]
    pub source: EngineError,
}

/// Left fold of [`step`] over a change sequence, recording the query
/// relation after every step. Aborts at the first failing change.
pub fn run(
    state: &ProgramState,
    alpha: &[ChangeOp],
    program: &DynamicProgram,
) -> Result<(ProgramState, Vec<Relation>), RunError> {
    let mut cur = state.clone();
    let mut snapshots = Vec::with_capacity(alpha.len());
    for (index, delta) in alpha.iter().enumerate() {
        cur = step(&cur, delta, program).map_err(|source| RunError { index, source })?;
        snapshots.push(cur.aux.relation(&program.query_relation).unwrap().clone());
    }
    Ok((cur, snapshots))
}

/// The worked transitive-closure example: maintains `T` = pairs connected by
/// a nonempty path, under single-edge insertions.
pub fn tc_insert_example() -> DynamicProgram {
    let input_schema = Arc::new(Schema::graph());
    let aux_schema = Arc::new(
        Schema::new(
            vec![crate::structures::RelDecl { name: "T".into(), arity: 2 }],
            vec![],
            false,
            false,
            None,
        )
        .unwrap(),
    );
    let phi = crate::logic::parse_formula(
        "T(x,y) | ((T(x,p1) | x = p1) & (T(p2,y) | p2 = y))",
    )
    .unwrap();
    DynamicProgram {
        name: "tc_insert_example".into(),
        input_schema,
        aux_schema: aux_schema.clone(),
        query_relation: "T".into(),
        kind: ProgramKind::Rules {
            rules: vec![UpdateRule {
                on: "ins_E".into(),
                target: "T".into(),
                out_vars: vec!["x".into(), "y".into()],
                body: RuleBody::Formula(phi),
            }],
            extra_handled: BTreeSet::new(),
            initializer: Arc::new(move |input| {
                Database::empty(aux_schema.clone(), input.size())
                    .map_err(|_| EngineError::BadInitializer)
            }),
        },
    }
}

/// Demo program for the parity language (even number of `a`s) under
/// single-letter changes, using a single auxiliary bit. Nullary relations
/// are represented as unary full-or-empty.
pub fn parity_nullary() -> DynamicProgram {
    let input_schema = Arc::new(Schema::word(&['a', 'b']));
    let aux_schema = Arc::new(
        Schema::new(
            vec![crate::structures::RelDecl { name: "Q".into(), arity: 1 }],
            vec![],
            false,
            false,
            None,
        )
        .unwrap(),
    );
    let flip_if_fresh =
        crate::logic::parse_formula("(Q(x) & R_a(p1)) | (!Q(x) & !R_a(p1))").unwrap();
    let flip_if_present =
        crate::logic::parse_formula("(Q(x) & !R_a(p1)) | (!Q(x) & R_a(p1))").unwrap();
    let rules = vec![
        UpdateRule {
            on: "ins_R_a".into(),
            target: "Q".into(),
            out_vars: vec!["x".into()],
            body: RuleBody::Formula(flip_if_fresh),
        },
        UpdateRule {
            on: "del_R_a".into(),
            target: "Q".into(),
            out_vars: vec!["x".into()],
            body: RuleBody::Formula(flip_if_present),
        },
    ];
    let aux_for_init = aux_schema.clone();
    DynamicProgram {
        name: "parity_nullary".into(),
        input_schema,
        aux_schema,
        query_relation: "Q".into(),
        kind: ProgramKind::Rules {
            rules,
            extra_handled: ["ins_R_b", "del_R_b"].iter().map(|s| s.to_string()).collect(),
            initializer: Arc::new(move |input| {
                // The empty word has zero a's: Q starts true (full).
                let mut aux = Database::empty(aux_for_init.clone(), input.size())
                    .map_err(|_| EngineError::BadInitializer)?;
                for v in 1..=input.size() {
                    aux.insert("Q", &[v]).unwrap();
                }
                Ok(aux)
            }),
        },
    }
}
