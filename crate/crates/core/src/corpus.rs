//! Seeded random instance corpus: generation, parallel verification
//! against the brute-force oracle, and a consistency-soundness audit.
//!
//! The generator's shape limits (atoms, variables, arity, domain size,
//! tuples per relation) are fixed constants, so a `(seed, n)` pair fully
//! determines the corpus, byte for byte.  Verification runs instances in
//! parallel (never splitting one instance across threads); the
//! `SHARPCQ_THREADS` environment variable caps the worker count.

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::counting::{self, CountReport, Mode, RunConfig};
use crate::decomp::{build_view_set, sharp_hypertree_width};
use crate::error::{Error, Result};
use crate::hypergraph::Hypergraph;
use crate::oracle;
use crate::query::{Atom, Const, Database, Query, Term, Var};

/// Largest number of atoms in a generated query.
pub const MAX_ATOMS: usize = 8;
/// Largest number of distinct variables in a generated query.
pub const MAX_VARS: usize = 10;
/// Largest relation arity in a generated query.
pub const MAX_ARITY: usize = 3;
/// Largest number of distinct constants in a generated database.
pub const MAX_DOMAIN: usize = 6;
/// Fewest tuples sampled per relation (before deduplication caps apply).
pub const MIN_TUPLES: usize = 30;
/// Most tuples sampled per relation.
pub const MAX_TUPLES: usize = 60;

/// One generated query/database pair.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CorpusInstance {
    pub name: String,
    pub query: Query,
    pub db: Database,
}

/// Deterministically generates `n` instances from `seed`.  The stream is
/// sequential, so `generate(s, a)` is a prefix of `generate(s, b)` for
/// `a <= b`.
pub fn generate(seed: u64, n: usize) -> Vec<CorpusInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|i| generate_one(&mut rng, i)).collect()
}

fn generate_one(rng: &mut ChaCha8Rng, idx: usize) -> CorpusInstance {
    let n_vars = rng.gen_range(2..=MAX_VARS);
    let n_atoms = rng.gen_range(1..=MAX_ATOMS);
    let domain_size = rng.gen_range(2..=MAX_DOMAIN);
    let domain: Vec<Const> = (0..domain_size)
        .map(|c| Const::new(format!("c{c}")))
        .collect();

    // A pool of relation symbols with fixed arities; atoms may share a
    // symbol, which yields self-joins.
    let n_syms = rng.gen_range(1..=n_atoms);
    let arities: Vec<usize> = (0..n_syms).map(|_| rng.gen_range(1..=MAX_ARITY)).collect();

    let mut atoms = Vec::with_capacity(n_atoms);
    for _ in 0..n_atoms {
        let sym = rng.gen_range(0..n_syms);
        let mut args: Vec<Term> = (0..arities[sym])
            .map(|_| {
                if rng.gen_bool(0.1) {
                    Term::Const(domain[rng.gen_range(0..domain_size)].clone())
                } else {
                    Term::Var(Var::new(format!("V{}", rng.gen_range(0..n_vars))))
                }
            })
            .collect();
        // Keep every atom anchored to at least one variable so each
        // hyperedge is non-empty.
        if args.iter().all(|t| t.as_var().is_none()) {
            args[0] = Term::Var(Var::new(format!("V{}", rng.gen_range(0..n_vars))));
        }
        atoms.push(Atom::new(format!("r{sym}"), args));
    }

    let used: BTreeSet<Var> = atoms.iter().flat_map(|a| a.vars()).collect();
    let free: Vec<Var> = used.iter().filter(|_| rng.gen_bool(0.5)).cloned().collect();

    let mut db = Database::new();
    let used_syms: BTreeSet<String> = atoms.iter().map(|a| a.rel.clone()).collect();
    for (sym, &arity) in arities.iter().enumerate() {
        let rel = format!("r{sym}");
        if !used_syms.contains(&rel) {
            continue;
        }
        let space = domain_size.checked_pow(arity as u32).unwrap_or(usize::MAX);
        let target = rng.gen_range(MIN_TUPLES..=MAX_TUPLES).min(space);
        let mut tuples: BTreeSet<Vec<Const>> = BTreeSet::new();
        while tuples.len() < target {
            let tuple: Vec<Const> = (0..arity)
                .map(|_| domain[rng.gen_range(0..domain_size)].clone())
                .collect();
            tuples.insert(tuple);
        }
        for tuple in tuples {
            db.insert(rel.clone(), tuple).expect("generated arities are consistent");
        }
    }

    let name = format!("i{idx:03}");
    let query = Query::new(name.clone(), free, atoms)
        .expect("generated free variables always occur in the body");
    CorpusInstance { name, query, db }
}

/// The worker-thread count: available parallelism, capped by the
/// `SHARPCQ_THREADS` environment variable when set to a positive number.
pub fn worker_threads() -> usize {
    let avail = thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    match std::env::var("SHARPCQ_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
    {
        Some(cap) if cap >= 1 => avail.min(cap),
        _ => avail,
    }
}

/// The two counts computed for one instance.
#[derive(Clone, Debug)]
pub struct InstanceOutcome {
    pub name: String,
    /// The configured pipeline's verdict.
    pub report: Result<CountReport>,
    /// The brute-force reference count.
    pub oracle: Result<BigUint>,
}

impl InstanceOutcome {
    /// Whether both sides succeeded and returned the same count.
    pub fn agrees(&self) -> bool {
        match (&self.report, &self.oracle) {
            (Ok(r), Ok(o)) => &r.count == o,
            _ => false,
        }
    }

    /// Whether both sides succeeded but returned different counts.
    pub fn disagrees(&self) -> bool {
        match (&self.report, &self.oracle) {
            (Ok(r), Ok(o)) => &r.count != o,
            _ => false,
        }
    }

    /// Whether a decomposition (structural or hybrid) resolved the count.
    pub fn resolved_by_decomposition(&self) -> bool {
        matches!(
            &self.report,
            Ok(r) if matches!(r.mode_used, Mode::Structural | Mode::Hybrid)
        )
    }
}

/// Runs the configured pipeline and the oracle on every instance, in
/// parallel across instances.  The output order matches the input order
/// regardless of scheduling.
pub fn verify(instances: &[CorpusInstance], cfg: &RunConfig) -> Vec<InstanceOutcome> {
    let threads = worker_threads().min(instances.len()).max(1);
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<InstanceOutcome>>> =
        instances.iter().map(|_| Mutex::new(None)).collect();
    thread::scope(|s| {
        for _ in 0..threads {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= instances.len() {
                    break;
                }
                let inst = &instances[i];
                let report = counting::count(&inst.query, &inst.db, cfg);
                let oracle =
                    oracle::brute_force_count(&inst.query, &inst.db, cfg.state_cap);
                *slots[i].lock().expect("no worker panicked holding a slot") =
                    Some(InstanceOutcome { name: inst.name.clone(), report, oracle });
            });
        }
    });
    slots
        .into_iter()
        .map(|m| {
            m.into_inner()
                .expect("no worker panicked holding a slot")
                .expect("every index was claimed by some worker")
        })
        .collect()
}

/// Aggregate verdict over a batch of outcomes.
#[derive(Clone, Debug, Default)]
pub struct CorpusSummary {
    pub total: usize,
    /// Instances where both the pipeline and the oracle succeeded.
    pub compared: usize,
    /// Compared instances with equal counts.
    pub agreed: usize,
    /// Instances the structural or hybrid pipeline resolved.
    pub resolved_by_decomposition: usize,
    /// Instances where the pipeline reported an error.
    pub pipeline_failures: usize,
    /// Human-readable descriptions of any disagreements.
    pub mismatches: Vec<String>,
}

impl CorpusSummary {
    /// 100% agreement on every compared instance.
    pub fn fully_agrees(&self) -> bool {
        self.mismatches.is_empty() && self.agreed == self.compared
    }
}

/// Folds outcomes into a summary.
pub fn summarize(outcomes: &[InstanceOutcome]) -> CorpusSummary {
    let mut s = CorpusSummary { total: outcomes.len(), ..CorpusSummary::default() };
    for out in outcomes {
        if out.report.is_err() {
            s.pipeline_failures += 1;
        }
        if out.resolved_by_decomposition() {
            s.resolved_by_decomposition += 1;
        }
        if let (Ok(r), Ok(o)) = (&out.report, &out.oracle) {
            s.compared += 1;
            if &r.count == o {
                s.agreed += 1;
            } else {
                s.mismatches.push(format!(
                    "{}: pipeline {} vs oracle {}",
                    out.name, r.count, o
                ));
            }
        }
    }
    s
}

/// Result of checking every consistency-pass deletion against the oracle.
#[derive(Clone, Debug, Default)]
pub struct ConsistencyAudit {
    /// Views from which at least one tuple was deleted.
    pub views_trimmed: usize,
    /// Total tuples deleted across all views.
    pub tuples_deleted: usize,
    /// Deleted tuples that the oracle says belong to a solution (sound
    /// deletions never produce any).
    pub counterexamples: Vec<String>,
}

/// Rebuilds the structural pipeline's view database for `q` at the first
/// admissible width and replays the consistency pass with tracing; every
/// deleted tuple is then looked up in the oracle's projection of the full
/// solution set onto the view's variables.  Returns `None` when no
/// structural decomposition exists within `kmax` (nothing to audit).
pub fn audit_consistency(
    q: &Query,
    db: &Database,
    kmax: usize,
    state_cap: u64,
) -> Result<Option<ConsistencyAudit>> {
    let sd = match sharp_hypertree_width(q, kmax) {
        Ok(Some(sd)) => sd,
        Ok(None) => return Ok(None),
        Err(Error::SearchBudgetExceeded(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    let vs = build_view_set(q, sd.k)?;
    let h_core = Hypergraph::of_query(&sd.core);
    let fh = h_core.frontier_hypergraph(&sd.core.free_set());
    let h_a_ext = sd.nf.hypergraph().union(&fh);
    let lvdb = counting::pruned_view_extension(q, db, &vs, &h_a_ext)?;
    let (_, deletions) = counting::enforce_pairwise_consistency_traced(lvdb);

    let mut audit = ConsistencyAudit::default();
    for (view_name, deleted) in deletions {
        if deleted.is_empty() {
            continue;
        }
        audit.views_trimmed += 1;
        let schema = deleted.schema_set();
        // Normalize both sides to the sorted-variable column order before
        // comparing rows positionally.
        let deleted = deleted.project(&schema)?;
        let solutions = oracle::enumerate_projections(q, db, &schema, state_cap)?.project(&schema)?;
        for row in deleted.rows() {
            audit.tuples_deleted += 1;
            if solutions.contains_row(row) {
                audit.counterexamples.push(format!(
                    "view {view_name}: deleted tuple ({}) appears in the oracle's projection",
                    row.iter().map(|c| c.as_str()).collect::<Vec<_>>().join(",")
                ));
            }
        }
    }
    Ok(Some(audit))
}
