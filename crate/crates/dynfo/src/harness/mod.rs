//! Oracle harness: ground-truth oracles, seeded change-script generators,
//! equivalence checking of dynamic programs against oracles, gadget
//! generators, and incremental-vs-recompute benchmarking.

pub mod gadgets;
pub mod oracles;

use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::changes::{apply_change, ChangeOp, ReplacementQuery};
use crate::engine::{init_state, step, DynamicProgram, ProgramState};
use crate::structures::{Database, Relation, Schema};

/// What an oracle asserts about the query relation after a step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expected {
    /// Exact tuple set.
    Tuples(Vec<Vec<u32>>),
    /// Boolean query: the relation must be nonempty iff `true` (nullary
    /// relations are represented as unary full-or-empty).
    Bool(bool),
}

pub type Oracle = Arc<dyn Fn(&Database) -> Expected + Send + Sync>;

pub fn reach_oracle(reflexive: bool) -> Oracle {
    Arc::new(move |db| {
        Expected::Tuples(
            oracles::oracle_reach(db, reflexive).into_iter().map(|(u, v)| vec![u, v]).collect(),
        )
    })
}

pub fn regular_oracle(dfa: crate::lang::Dfa) -> Oracle {
    Arc::new(move |db| Expected::Bool(oracles::oracle_regular(&dfa, db)))
}

pub fn cfl_oracle(grammar: crate::lang::CnfGrammar) -> Oracle {
    Arc::new(move |db| Expected::Bool(oracles::oracle_cfl(&grammar, db)))
}

/// Per-step outcome of an equivalence check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepRecord {
    pub verdict: bool,
    /// Change was refused (guard or validity) and skipped; state unchanged.
    pub skipped: bool,
    pub inc_ns: u64,
    pub full_ns: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Divergence {
    pub step: usize,
    pub witness: Vec<u32>,
    pub maintained: bool,
    pub oracle: bool,
}

/// Result of replaying one script against a program and an oracle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EquivalenceReport {
    pub script_id: String,
    pub steps: Vec<StepRecord>,
    pub divergence: Option<Divergence>,
}

impl EquivalenceReport {
    pub fn ok(&self) -> bool {
        self.divergence.is_none()
    }
}

fn compare(q: &Relation, expected: &Expected) -> Option<Divergence> {
    match expected {
        Expected::Bool(want) => {
            let got = !q.is_empty();
            if got == *want {
                return None;
            }
            Some(Divergence { step: 0, witness: Vec::new(), maintained: got, oracle: *want })
        }
        Expected::Tuples(want) => {
            let got: Vec<Vec<u32>> = q.sorted().iter().map(|t| t.to_vec()).collect();
            if got == *want {
                return None;
            }
            let witness = got
                .iter()
                .find(|t| !want.contains(t))
                .or_else(|| want.iter().find(|t| !got.contains(t)))
                .cloned()
                .unwrap_or_default();
            let maintained = got.contains(&witness);
            Some(Divergence { step: 0, witness, maintained, oracle: !maintained })
        }
    }
}

/// How to treat a change the program refuses mid-script.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OnReject {
    /// Skip the change, keep the state (guarded maintainers).
    Skip,
    /// Abort the script with an error.
    Abort,
}

/// Replays one script, comparing the query relation against the oracle
/// after every applied change. Also reports per-step timings of the
/// incremental step versus the oracle's from-scratch computation.
pub fn check_script(
    program: &DynamicProgram,
    oracle: &Oracle,
    n: u32,
    script: &[ChangeOp],
    script_id: &str,
    on_reject: OnReject,
) -> Result<EquivalenceReport, crate::engine::RunError> {
    let mut state = init_state(n, program)
        .map_err(|source| crate::engine::RunError { index: 0, source })?;
    let mut report =
        EquivalenceReport { script_id: script_id.into(), steps: Vec::new(), divergence: None };
    for (index, delta) in script.iter().enumerate() {
        let t0 = Instant::now();
        let next = step(&state, delta, program);
        let inc_ns = t0.elapsed().as_nanos() as u64;
        let state_new = match next {
            Ok(s) => s,
            Err(e) if e.is_rejection() && on_reject == OnReject::Skip => {
                report.steps.push(StepRecord {
                    verdict: true,
                    skipped: true,
                    inc_ns,
                    full_ns: 0,
                });
                continue;
            }
            Err(source) => return Err(crate::engine::RunError { index, source }),
        };
        let t1 = Instant::now();
        let expected = oracle(&state_new.input);
        let full_ns = t1.elapsed().as_nanos() as u64;
        let q = state_new.aux.relation(&program.query_relation).unwrap();
        let divergence = compare(q, &expected).map(|mut d| {
            d.step = index;
            d
        });
        let verdict = divergence.is_none();
        report.steps.push(StepRecord { verdict, skipped: false, inc_ns, full_ns });
        if report.divergence.is_none() {
            report.divergence = divergence;
        }
        state = state_new;
    }
    Ok(report)
}

/// Runs [`check_script`] over many scripts; reports are ordered by script.
pub fn check_equivalence(
    program: &DynamicProgram,
    oracle: &Oracle,
    n: u32,
    scripts: &[(String, Vec<ChangeOp>)],
    on_reject: OnReject,
) -> Result<Vec<EquivalenceReport>, crate::engine::RunError> {
    scripts
        .iter()
        .map(|(id, script)| check_script(program, oracle, n, script, id, on_reject))
        .collect()
}

/// Deterministic random change script: `length` changes drawn uniformly
/// from `queries` with uniform parameters, filtered so every prefix keeps
/// the database valid (candidates whose application is rejected are
/// resampled; generation tracks the evolving database from empty).
pub fn random_change_script(
    seed: u64,
    queries: &[Arc<ReplacementQuery>],
    schema: &Arc<Schema>,
    n: u32,
    length: usize,
) -> Vec<ChangeOp> {
    assert!(!queries.is_empty(), "change set must be nonempty");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut db = Database::empty(schema.clone(), n).unwrap();
    let mut script = Vec::with_capacity(length);
    'outer: for _ in 0..length {
        for _attempt in 0..200 {
            let q = &queries[rng.gen_range(0..queries.len())];
            let args: Vec<u32> = (0..q.params.len()).map(|_| rng.gen_range(1..=n)).collect();
            let delta = q.bind(&args);
            if let Ok(next) = apply_change(&db, &delta) {
                db = next;
                script.push(delta);
                continue 'outer;
            }
        }
        break; // no valid change found; shorter script
    }
    script
}

/// One row of the benchmarking table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchRow {
    pub step: usize,
    pub inc_ns: u64,
    pub full_ns: u64,
    pub jitter_ns: u64,
}

/// Replays a script measuring, per step, the incremental update against the
/// oracle's full recomputation. Each step is repeated `repeats` times;
/// reported times are medians and `jitter_ns` is the spread of the
/// incremental measurements.
pub fn bench(
    program: &DynamicProgram,
    oracle: &Oracle,
    n: u32,
    script: &[ChangeOp],
    repeats: usize,
) -> Result<Vec<BenchRow>, crate::engine::RunError> {
    let repeats = repeats.max(1);
    let mut state = init_state(n, program)
        .map_err(|source| crate::engine::RunError { index: 0, source })?;
    let mut rows = Vec::with_capacity(script.len());
    for (index, delta) in script.iter().enumerate() {
        let mut inc_samples = Vec::with_capacity(repeats);
        let mut next: Option<ProgramState> = None;
        for _ in 0..repeats {
            let t0 = Instant::now();
            let s = step(&state, delta, program)
                .map_err(|source| crate::engine::RunError { index, source })?;
            inc_samples.push(t0.elapsed().as_nanos() as u64);
            next = Some(s);
        }
        let state_new = next.unwrap();
        let mut full_samples = Vec::with_capacity(repeats);
        for _ in 0..repeats {
            let t1 = Instant::now();
            let _ = oracle(&state_new.input);
            full_samples.push(t1.elapsed().as_nanos() as u64);
        }
        inc_samples.sort_unstable();
        full_samples.sort_unstable();
        rows.push(BenchRow {
            step: index,
            inc_ns: inc_samples[repeats / 2],
            full_ns: full_samples[repeats / 2],
            jitter_ns: inc_samples[repeats - 1] - inc_samples[0],
        });
        state = state_new;
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::changes::single_tuple_queries;
    use crate::engine::tc_insert_example;

    #[test]
    fn scripts_are_deterministic_per_seed() {
        let schema = Arc::new(Schema::graph());
        let queries = single_tuple_queries(&schema);
        let a = random_change_script(42, &queries, &schema, 6, 30);
        let b = random_change_script(42, &queries, &schema, 6, 30);
        assert_eq!(a, b);
        let c = random_change_script(43, &queries, &schema, 6, 30);
        assert_ne!(a, c);
        assert!(random_change_script(1, &queries, &schema, 5, 0).is_empty());
    }

    #[test]
    fn long_script_uses_every_query() {
        let schema = Arc::new(Schema::word(&['a', 'b']));
        let queries = single_tuple_queries(&schema);
        let script = random_change_script(7, &queries, &schema, 8, 1000);
        assert_eq!(script.len(), 1000);
        for q in &queries {
            assert!(
                script.iter().any(|d| d.query.name == q.name),
                "query {} never drawn",
                q.name
            );
        }
        // Word-mode scripts keep the structure valid along the way.
        let mut db = Database::empty(schema.clone(), 8).unwrap();
        for delta in &script {
            db = apply_change(&db, delta).unwrap();
        }
    }

    #[test]
    fn tc_example_checks_against_oracle() {
        let program = tc_insert_example();
        let schema = Arc::new(Schema::graph());
        let ins: Vec<_> = single_tuple_queries(&schema)
            .into_iter()
            .filter(|q| q.name == "ins_E")
            .collect();
        let script = random_change_script(5, &ins, &schema, 8, 40);
        let oracle = reach_oracle(false);
        let report =
            check_script(&program, &oracle, 8, &script, "s5", OnReject::Abort).unwrap();
        assert!(report.ok(), "divergence: {:?}", report.divergence);
        assert_eq!(report.steps.len(), 40);
    }

    #[test]
    fn fault_injection_is_detected() {
        // Corrupt the update formula: drop the endpoint equalities. The
        // first insertion into the empty graph diverges.
        let mut program = tc_insert_example();
        if let crate::engine::ProgramKind::Rules { rules, .. } = &mut program.kind {
            rules[0].body = crate::engine::RuleBody::Formula(
                crate::logic::parse_formula("T(x,y) | (T(x,p1) & T(p2,y))").unwrap(),
            );
        }
        let schema = Arc::new(Schema::graph());
        let ins: Vec<_> = single_tuple_queries(&schema)
            .into_iter()
            .filter(|q| q.name == "ins_E")
            .collect();
        let script = random_change_script(5, &ins, &schema, 6, 10);
        let oracle = reach_oracle(false);
        let report =
            check_script(&program, &oracle, 6, &script, "s", OnReject::Abort).unwrap();
        let div = report.divergence.expect("must diverge");
        assert_eq!(div.step, 0);
        assert!(!div.maintained && div.oracle);
    }

    #[test]
    fn empty_script_list_empty_report() {
        let program = tc_insert_example();
        let oracle = reach_oracle(false);
        let reports = check_equivalence(&program, &oracle, 5, &[], OnReject::Abort).unwrap();
        assert!(reports.is_empty());
    }
}
