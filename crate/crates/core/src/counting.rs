//! Counting distinct answers via decompositions.
//!
//! The pipeline turns a query, a database, and a structural decomposition
//! into an equivalent *acyclic* instance over materialized views, then runs
//! a block-based dynamic program over the decomposition tree.  Each node
//! carries a set of relation blocks annotated with multiplicities; gluing
//! children into parents multiplies and re-buckets the multiplicities so
//! that the root's total is exactly the number of distinct answers, without
//! ever enumerating them.
//!
//! The stages, in order:
//!
//! 1. materialize a legal view database ([`standard_view_extension`] or
//!    [`pruned_view_extension`]),
//! 2. run [`enforce_pairwise_consistency`] to a fixpoint,
//! 3. build the acyclic instance over the decomposition's bags
//!    ([`build_acyclic_instance`]),
//! 4. eliminate quantified components ([`reduce_quantified`]) and restrict
//!    to the selected variables ([`free_restricted_instance`]),
//! 5. count with [`count_via_hd`].
//!
//! [`count`] drives the whole thing end to end, falling back from the
//! structural decomposition search to the degree-bounded hybrid search and
//! finally to the brute-force oracle, as configured.

use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use num_bigint::BigUint;
use num_traits::One;

use crate::decomp::{
    build_view_set, sharp_hypertree_width_with, HypertreeDecomposition, View, ViewSet,
    DEFAULT_CORES_TO_TRY,
};
use crate::error::{Error, Result};
use crate::hybrid;
use crate::hypergraph::{gyo_reduce, is_acyclic, Hypergraph};
use crate::oracle;
use crate::query::{Atom, Database, Query, Term, Var};
use crate::relation::{evaluate_atom, evaluate_atoms, Relation};

/// A relation split into blocks, each annotated with the number of distinct
/// answer projections it stands for.
///
/// Invariant: all blocks share one schema, and their label sets (the answer
/// projections each block accounts for) are pairwise disjoint, so summing
/// the multiplicities never double-counts.
#[derive(Clone, Debug)]
pub struct SharpRelation {
    /// The blocks, each a relation paired with its multiplicity.
    pub blocks: Vec<(Relation, BigUint)>,
}

impl SharpRelation {
    /// Partition `r` by its values on `split` (the free variables), one
    /// block per distinct profile, every multiplicity 1.
    pub fn initial(r: &Relation, split: &BTreeSet<Var>) -> SharpRelation {
        let blocks = r
            .partition_by(split)
            .into_iter()
            .map(|(_, block)| (block, BigUint::one()))
            .collect();
        SharpRelation { blocks }
    }

    /// Glue a child node into this one: semijoin every block pair, bucket
    /// the surviving reduced blocks by their row set, and sum the products
    /// of multiplicities within each bucket.
    pub fn absorb(&self, child: &SharpRelation) -> SharpRelation {
        let mut merged: BTreeMap<Vec<Vec<crate::query::Const>>, (Relation, BigUint)> =
            BTreeMap::new();
        for (s_p, c_p) in &self.blocks {
            for (s_q, c_q) in &child.blocks {
                let joined = s_p.semijoin(s_q);
                if joined.is_empty() {
                    continue;
                }
                let weight = c_p * c_q;
                match merged.entry(joined.rows().to_vec()) {
                    Entry::Occupied(mut e) => e.get_mut().1 += &weight,
                    Entry::Vacant(e) => {
                        e.insert((joined, weight));
                    }
                }
            }
        }
        SharpRelation { blocks: merged.into_values().collect() }
    }

    /// Total multiplicity across all blocks.
    pub fn total(&self) -> BigUint {
        self.blocks.iter().map(|(_, c)| c).sum()
    }

    /// Number of rows in the largest block (0 if there are none).
    pub fn max_block_size(&self) -> usize {
        self.blocks.iter().map(|(b, _)| b.len()).max().unwrap_or(0)
    }
}

/// A view whose defining join has been evaluated on a concrete database.
#[derive(Clone, Debug)]
pub struct MaterializedView {
    /// The view's name (shared with its [`View`] in the view set).
    pub name: String,
    /// The view's variables.
    pub vars: BTreeSet<Var>,
    /// The atoms whose join defines the view.
    pub provenance: Vec<Atom>,
    /// The evaluated rows.
    pub relation: Relation,
    /// Whether this view stands for a single original atom.
    pub is_query_view: bool,
}

/// A set of materialized views, optionally reduced to pairwise consistency.
#[derive(Clone, Debug)]
pub struct LegalViewDatabase {
    /// The materialized views, in view-set order.
    pub views: Vec<MaterializedView>,
    /// Whether [`enforce_pairwise_consistency`] has run to fixpoint.
    pub pairwise_consistent: bool,
}

impl LegalViewDatabase {
    /// Find a view by name.
    pub fn view(&self, name: &str) -> Option<&MaterializedView> {
        self.views.iter().find(|v| v.name == name)
    }

    /// The canonical materialized view covering `bag`: fewest provenance
    /// atoms, then least variable set, then least name — the same order as
    /// [`ViewSet::covering_view`].
    pub fn covering_view(&self, bag: &BTreeSet<Var>) -> Option<&MaterializedView> {
        self.views
            .iter()
            .filter(|v| bag.is_subset(&v.vars))
            .min_by(|a, b| {
                (a.provenance.len(), &a.vars, &a.name)
                    .cmp(&(b.provenance.len(), &b.vars, &b.name))
            })
    }

    /// Whether any view has become empty.
    pub fn has_empty_view(&self) -> bool {
        self.views.iter().any(|v| v.relation.is_empty())
    }
}

/// Which views to materialize when building the legal view database.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ViewMaterialization {
    /// Only the query views plus one canonical covering view per edge the
    /// decomposition actually needs.
    Pruned,
    /// Every view in the view set.
    Standard,
}

fn materialize(view: &View, db: &Database) -> Result<MaterializedView> {
    let relation = evaluate_atoms(&view.provenance, db)?;
    debug_assert_eq!(relation.schema_set(), view.vars);
    Ok(MaterializedView {
        name: view.name.clone(),
        vars: view.vars.clone(),
        provenance: view.provenance.clone(),
        relation,
        is_query_view: view.is_query_view,
    })
}

/// Materialize every view of the view set on `db`.
pub fn standard_view_extension(
    q: &Query,
    db: &Database,
    vs: &ViewSet,
) -> Result<LegalViewDatabase> {
    debug_assert!(q.atoms.iter().all(|a| vs.views.iter().any(|v| v.provenance == [a.clone()])));
    let views =
        vs.views.iter().map(|v| materialize(v, db)).collect::<Result<Vec<_>>>()?;
    Ok(LegalViewDatabase { views, pairwise_consistent: false })
}

/// Materialize only the query views plus, for every edge of `needed`, the
/// canonical view covering it.
pub fn pruned_view_extension(
    q: &Query,
    db: &Database,
    vs: &ViewSet,
    needed: &Hypergraph,
) -> Result<LegalViewDatabase> {
    let mut picked: BTreeSet<String> = BTreeSet::new();
    for view in &vs.views {
        if view.is_query_view {
            picked.insert(view.name.clone());
        }
    }
    for edge in needed.edges() {
        let view = vs.covering_view(edge).ok_or_else(|| Error::UncoveredEdge {
            edge: edge.iter().map(|v| v.as_str()).collect::<Vec<_>>().join(","),
        })?;
        picked.insert(view.name.clone());
    }
    debug_assert!(q.atoms.iter().all(|a| vs.views.iter().any(|v| v.provenance == [a.clone()])));
    let views = vs
        .views
        .iter()
        .filter(|v| picked.contains(&v.name))
        .map(|v| materialize(v, db))
        .collect::<Result<Vec<_>>>()?;
    Ok(LegalViewDatabase { views, pairwise_consistent: false })
}

fn canonical_order(n: usize) -> Vec<(usize, usize)> {
    let mut order = Vec::with_capacity(n.saturating_mul(n.saturating_sub(1)));
    for i in 0..n {
        for j in 0..n {
            if i != j {
                order.push((i, j));
            }
        }
    }
    order
}

/// Like [`enforce_pairwise_consistency`], but sweeping the given ordered
/// pairs `(i, j)` (meaning: reduce view `i` against view `j`).  The fixpoint
/// is the same for every order that includes all pairs; this entry point
/// exists so that tests can verify that confluence.
pub fn enforce_pairwise_consistency_with_order(
    mut lvdb: LegalViewDatabase,
    order: &[(usize, usize)],
) -> LegalViewDatabase {
    loop {
        let mut changed = false;
        for &(i, j) in order {
            if i == j || i >= lvdb.views.len() || j >= lvdb.views.len() {
                continue;
            }
            let reduced = {
                let left = &lvdb.views[i].relation;
                if left.is_empty() {
                    continue;
                }
                left.semijoin(&lvdb.views[j].relation)
            };
            if reduced.len() != lvdb.views[i].relation.len() {
                lvdb.views[i].relation = reduced;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    lvdb.pairwise_consistent = true;
    lvdb
}

/// Semijoin-reduce every view against every other until no view loses a
/// row: afterwards each view's rows all participate in at least one row of
/// every other view (on their shared variables).
pub fn enforce_pairwise_consistency(lvdb: LegalViewDatabase) -> LegalViewDatabase {
    let order = canonical_order(lvdb.views.len());
    enforce_pairwise_consistency_with_order(lvdb, &order)
}

/// Like [`enforce_pairwise_consistency`], additionally reporting, per view
/// that shrank, the relation of deleted rows.
pub fn enforce_pairwise_consistency_traced(
    lvdb: LegalViewDatabase,
) -> (LegalViewDatabase, Vec<(String, Relation)>) {
    let before: Vec<(String, Relation)> =
        lvdb.views.iter().map(|v| (v.name.clone(), v.relation.clone())).collect();
    let after = enforce_pairwise_consistency(lvdb);
    let mut deleted = Vec::new();
    for ((name, initial), view) in before.into_iter().zip(after.views.iter()) {
        debug_assert_eq!(name, view.name);
        let removed: Vec<Vec<crate::query::Const>> = initial
            .rows()
            .iter()
            .filter(|row| !view.relation.contains_row(row))
            .cloned()
            .collect();
        if !removed.is_empty() {
            let rel = Relation::new(initial.schema().to_vec(), removed)
                .expect("deleted rows share the view schema");
            deleted.push((name, rel));
        }
    }
    (after, deleted)
}

/// Build the acyclic instance over the bags of `tp`: one fresh atom per
/// bag, whose relation is the covering view's rows projected to the bag.
/// Pairs with the original query: on a pairwise-consistent view database
/// the new instance's solution set equals the original solution set
/// projected to the bags' variables.
pub fn build_acyclic_instance(
    tp: &Hypergraph,
    vs: &ViewSet,
    lvdb: &LegalViewDatabase,
) -> Result<(Query, Database)> {
    if !is_acyclic(tp) {
        return Err(Error::IncompatibleDecomposition(
            "the bag hypergraph is not acyclic".into(),
        ));
    }
    debug_assert!(lvdb.pairwise_consistent);
    let mut atoms = Vec::new();
    let mut db = Database::new();
    let mut all_vars: BTreeSet<Var> = BTreeSet::new();
    for (j, edge) in tp.edges().iter().enumerate() {
        let covering = vs
            .covering_view(edge)
            .and_then(|v| lvdb.view(&v.name))
            .or_else(|| lvdb.covering_view(edge))
            .ok_or_else(|| Error::UncoveredEdge {
                edge: edge.iter().map(|v| v.as_str()).collect::<Vec<_>>().join(","),
            })?;
        let rel = covering.relation.project(edge)?;
        let name = format!("a{j}");
        db.ensure_relation(&name, edge.len())?;
        for row in rel.rows() {
            db.insert(&name, row.clone())?;
        }
        atoms.push(Atom::new(&name, edge.iter().cloned().map(Term::Var).collect()));
        all_vars.extend(edge.iter().cloned());
    }
    let q = Query::new("qa", all_vars.into_iter().collect(), atoms)?;
    Ok((q, db))
}

fn var_list(vars: &BTreeSet<Var>) -> String {
    vars.iter().map(|v| v.as_str()).collect::<Vec<_>>().join(",")
}

fn fresh_prefix(base: &str, taken: impl Iterator<Item = String>) -> String {
    let taken: Vec<String> = taken.collect();
    let mut prefix = String::from(base);
    let clashes = |p: &str, name: &str| {
        name.len() > p.len()
            && name.starts_with(p)
            && name[p.len()..].bytes().all(|b| b.is_ascii_digit())
    };
    while taken.iter().any(|name| clashes(&prefix, name)) {
        prefix.push('_');
    }
    prefix
}

/// Eliminate the quantified variables of `core`: keep its atoms over free
/// variables only (with their original relations from `db`), and replace
/// each connected component of quantified variables by a single fresh atom
/// over the component's frontier, whose relation is read off the acyclic
/// instance `(qa, qa_db)`.  The result is a quantifier-free query with the
/// same answer set as `core` on `db`.
pub fn reduce_quantified(
    core: &Query,
    tp: &Hypergraph,
    qa: &Query,
    qa_db: &Database,
    db: &Database,
) -> Result<(Query, Database)> {
    let free = core.free_set();
    let h_core = Hypergraph::of_query(core);

    let kept: Vec<Atom> =
        core.atoms.iter().filter(|a| a.vars().is_subset(&free)).cloned().collect();
    let mut d_f = Database::new();
    let mut inserted: BTreeSet<String> = BTreeSet::new();
    for atom in &kept {
        if inserted.insert(atom.rel.clone()) {
            d_f.ensure_relation(&atom.rel, atom.arity())?;
            for row in db.tuples(&atom.rel)? {
                d_f.insert(&atom.rel, row.clone())?;
            }
        }
    }

    let prefix = fresh_prefix("f", kept.iter().map(|a| a.rel.clone()));
    let mut atoms = kept;
    for (i, comp) in h_core.w_components(&free).iter().enumerate() {
        let witness = comp.iter().next().expect("components are nonempty");
        let frontier = h_core.frontier(witness, &free);
        if frontier.is_empty() {
            // The component shares no variables with the free part; its
            // satisfiability is already reflected in the view database.
            continue;
        }
        let edge = tp
            .edges()
            .iter()
            .find(|e| frontier.is_subset(e))
            .ok_or_else(|| Error::FrontierNotCovered { frontier: var_list(&frontier) })?;
        let qa_atom = qa
            .atoms
            .iter()
            .find(|a| a.vars() == *edge)
            .ok_or_else(|| {
                Error::IncompatibleDecomposition(format!(
                    "no instance atom covers the bag {{{}}}",
                    var_list(edge)
                ))
            })?;
        let rel = evaluate_atom(qa_atom, qa_db)?.project(&frontier)?;
        let name = format!("{prefix}{i}");
        d_f.ensure_relation(&name, frontier.len())?;
        for row in rel.rows() {
            d_f.insert(&name, row.clone())?;
        }
        atoms.push(Atom::new(&name, frontier.iter().cloned().map(Term::Var).collect()));
    }

    let q_f = Query::new(core.name.clone(), core.free().to_vec(), atoms)?;
    debug_assert_eq!(q_f.free_set(), q_f.vars());
    Ok((q_f, d_f))
}

/// Restrict the acyclic instance to the selected variables: intersect each
/// bag's rows projected to `s_bar` with every other bag sharing the same
/// projection, and arrange the distinct nonempty projections into a
/// width-1 decomposition via a join tree.  Fails only if the restricted
/// edges are not acyclic, which cannot happen for edges obtained from an
/// acyclic hypergraph.
pub fn free_restricted_instance(
    h_a_ext: &Hypergraph,
    vs: &ViewSet,
    lvdb: &LegalViewDatabase,
    s_bar: &BTreeSet<Var>,
    final_free: &BTreeSet<Var>,
) -> Result<(Query, Database, HypertreeDecomposition)> {
    let mut restricted: BTreeMap<BTreeSet<Var>, Relation> = BTreeMap::new();
    for edge in h_a_ext.edges() {
        let shared: BTreeSet<Var> = edge.intersection(s_bar).cloned().collect();
        if shared.is_empty() {
            continue;
        }
        let covering = vs
            .covering_view(edge)
            .and_then(|v| lvdb.view(&v.name))
            .or_else(|| lvdb.covering_view(edge))
            .ok_or_else(|| Error::UncoveredEdge { edge: var_list(edge) })?;
        let proj = covering.relation.project(&shared)?;
        match restricted.entry(shared) {
            Entry::Occupied(mut e) => {
                let merged = e.get().intersect(&proj)?;
                e.insert(merged);
            }
            Entry::Vacant(e) => {
                e.insert(proj);
            }
        }
    }

    let edges: Vec<BTreeSet<Var>> = restricted.keys().cloned().collect();
    let jt = gyo_reduce(&Hypergraph::new(edges.iter().cloned())).ok_or_else(|| {
        Error::IncompatibleDecomposition(
            "the selection-restricted bags do not form an acyclic hypergraph".into(),
        )
    })?;

    let mut db = Database::new();
    let mut atoms = Vec::new();
    for (t, edge) in jt.edges.iter().enumerate() {
        let rel = &restricted[edge];
        let name = format!("g{t}");
        db.ensure_relation(&name, edge.len())?;
        for row in rel.rows() {
            db.insert(&name, row.clone())?;
        }
        atoms.push(Atom::new(&name, edge.iter().cloned().map(Term::Var).collect()));
    }
    let chi = jt.edges.clone();
    let lambda: Vec<Vec<Atom>> = atoms.iter().map(|a| vec![a.clone()]).collect();
    let hd = HypertreeDecomposition::new(chi, lambda, jt.parent.clone())?;
    let q = Query::new("residual", final_free.iter().cloned().collect(), atoms)?;
    Ok((q, db, hd))
}

fn blowup_cap(m: usize, k: usize, h: usize) -> u128 {
    if h >= 127 {
        return u128::MAX;
    }
    (m as u128).saturating_pow(k as u32).saturating_mul(1u128 << h)
}

/// Count the distinct answers of `q` on `db` along the decomposition `hd`
/// by the block dynamic program.  Requires every atom of `q` to be
/// *enforced* somewhere in the tree: listed in a label whose bag contains
/// all of the atom's variables.  Runs in time polynomial in the database
/// for fixed width.
pub fn count_via_hd(q: &Query, db: &Database, hd: &HypertreeDecomposition) -> Result<BigUint> {
    for atom in &q.atoms {
        let enforced = (0..hd.vertex_count())
            .any(|p| hd.lambda[p].contains(atom) && atom.vars().is_subset(&hd.chi[p]));
        if !enforced {
            return Err(Error::IncompleteDecomposition { atom: atom.to_string() });
        }
    }
    debug_assert!(crate::decomp::validate_hd(hd, q).valid_generalized());

    let free = q.free_set();
    let n = hd.vertex_count();
    let mut sharp: Vec<Option<SharpRelation>> = vec![None; n];
    let mut h_max = 0usize;
    let mut initials = Vec::with_capacity(n);
    for p in 0..n {
        let r_p = evaluate_atoms(&hd.lambda[p], db)?.project(&hd.chi[p])?;
        let init = SharpRelation::initial(&r_p, &free);
        debug_assert_eq!(
            init.blocks.iter().map(|(b, _)| b.len()).sum::<usize>(),
            r_p.len(),
            "initial blocks partition the bag relation"
        );
        debug_assert!(init.blocks.iter().all(|(_, c)| c.is_one()));
        h_max = h_max.max(init.max_block_size());
        initials.push(init);
    }
    let cap = blowup_cap(db.max_relation_size(), hd.width().max(1), h_max);

    for p in (0..n).rev() {
        let mut acc = initials[p].clone();
        for c in hd.children(p) {
            let child = sharp[c].take().expect("children are processed before parents");
            acc = acc.absorb(&child);
            debug_assert!(
                (acc.blocks.len() as u128) <= cap,
                "block count exceeds the m^k * 2^h bound"
            );
        }
        sharp[p] = Some(acc);
    }
    Ok(sharp[0].take().expect("vertex 0 is the root").total())
}

/// Count the distinct answers of `q` on `db` given a core of the query (or
/// of its promotion to a larger selection `s_bar = free(core)`) and an
/// acyclic bag hypergraph covering the core's frontier-extended hypergraph.
/// `final_free` is the set the answers are projected onto — the original
/// free variables.
pub fn count_via_decomposition(
    q: &Query,
    db: &Database,
    core: &Query,
    tp: &Hypergraph,
    vs: &ViewSet,
    final_free: &BTreeSet<Var>,
    views: ViewMaterialization,
) -> Result<BigUint> {
    let s_bar = core.free_set();
    let h_core = Hypergraph::of_query(core);
    let fh = h_core.frontier_hypergraph(&s_bar);
    let h_a_ext = tp.union(&fh);
    if !h_a_ext.covers(&h_core) {
        return Err(Error::IncompatibleDecomposition(
            "the bags do not cover every core atom".into(),
        ));
    }

    let lvdb = match views {
        ViewMaterialization::Pruned => pruned_view_extension(q, db, vs, &h_a_ext)?,
        ViewMaterialization::Standard => standard_view_extension(q, db, vs)?,
    };
    let lvdb = enforce_pairwise_consistency(lvdb);
    if lvdb.has_empty_view() {
        return Ok(BigUint::from(0u32));
    }
    if final_free.is_empty() {
        // A consistent acyclic instance with no empty relation is
        // satisfiable, so the Boolean count is 1.
        return Ok(BigUint::one());
    }

    let (qa, qa_db) = build_acyclic_instance(&h_a_ext, vs, &lvdb)?;
    // The quantifier elimination is exercised for its validity checks (it
    // fails loudly if a frontier is not covered); counting proceeds on the
    // selection-restricted instance, which already encodes its answer set.
    let _ = reduce_quantified(core, &h_a_ext, &qa, &qa_db, db)?;

    let (q_g, d_g, hd_g) = free_restricted_instance(&h_a_ext, vs, &lvdb, &s_bar, final_free)?;
    count_via_hd(&q_g, &d_g, &hd_g)
}

/// How a count was ultimately resolved.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Try structural, then hybrid, then the oracle.
    Auto,
    /// Only the structural decomposition pipeline.
    Structural,
    /// Only the degree-bounded hybrid pipeline.
    Hybrid,
    /// Only brute-force enumeration.
    Oracle,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Mode::Auto => "auto",
            Mode::Structural => "structural",
            Mode::Hybrid => "hybrid",
            Mode::Oracle => "oracle",
        };
        f.write_str(s)
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Mode> {
        match s {
            "auto" => Ok(Mode::Auto),
            "structural" => Ok(Mode::Structural),
            "hybrid" => Ok(Mode::Hybrid),
            "oracle" => Ok(Mode::Oracle),
            other => Err(Error::InvalidQuery(format!(
                "unknown mode `{other}` (expected auto, structural, hybrid, or oracle)"
            ))),
        }
    }
}

/// Budgets and switches for [`count`].  Every cap must be at least 1;
/// degenerate values surface as errors from the stage that consumes them.
#[derive(Clone, Debug)]
pub struct RunConfig {
    /// Largest decomposition width tried.
    pub kmax: usize,
    /// Largest degree bound tried by the hybrid search.
    pub bmax: u64,
    /// How many cores of the colored query the searches consider.
    pub cores_to_try: usize,
    /// Which pipelines to run.
    pub mode: Mode,
    /// Cap on brute-force enumeration states.
    pub state_cap: u64,
    /// Seed for anything randomized downstream (corpus generation).
    pub seed: u64,
    /// Whether the caller wants machine-readable output.
    pub json: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            kmax: 3,
            bmax: 16,
            cores_to_try: DEFAULT_CORES_TO_TRY,
            mode: Mode::Auto,
            state_cap: oracle::DEFAULT_STATE_CAP,
            seed: 0,
            json: false,
        }
    }
}

/// The result of [`count`]: the number of distinct answers plus how it was
/// obtained.
#[derive(Clone, Debug)]
pub struct CountReport {
    /// The number of distinct answers.
    pub count: BigUint,
    /// Which pipeline produced the count.
    pub mode_used: Mode,
    /// The decomposition width used, when one was.
    pub width: Option<usize>,
    /// The degree bound of the hybrid decomposition, when one was used.
    pub bound: Option<u64>,
    /// The number of atoms in the core used, when one was.
    pub core_atoms: Option<usize>,
    /// Wall-clock time spent, in milliseconds.
    pub elapsed_ms: u128,
}

struct Found {
    count: BigUint,
    width: Option<usize>,
    bound: Option<u64>,
    core_atoms: Option<usize>,
}

enum Attempt {
    Found(Found),
    /// No decomposition was used; holds the error strict modes report.
    Absent(Error),
}

fn structural_attempt(q: &Query, db: &Database, cfg: &RunConfig) -> Result<Attempt> {
    match sharp_hypertree_width_with(q, cfg.kmax, cfg.cores_to_try) {
        Ok(Some(sd)) => {
            let vs = build_view_set(q, sd.k)?;
            let count = count_via_decomposition(
                q,
                db,
                &sd.core,
                &sd.nf.hypergraph(),
                &vs,
                &q.free_set(),
                ViewMaterialization::Pruned,
            )?;
            Ok(Attempt::Found(Found {
                count,
                width: Some(sd.k),
                bound: None,
                core_atoms: Some(sd.core.atoms.len()),
            }))
        }
        Ok(None) => Ok(Attempt::Absent(Error::NoDecompositionWithinBudget(format!(
            "no width-{} structural decomposition (cores tried: {})",
            cfg.kmax, cfg.cores_to_try
        )))),
        Err(e @ Error::SearchBudgetExceeded(_)) => Ok(Attempt::Absent(e)),
        Err(e) => Err(e),
    }
}

fn hybrid_attempt(q: &Query, db: &Database, cfg: &RunConfig) -> Result<Attempt> {
    let mut truncated: Option<Error> = None;
    let kcap = cfg.kmax.min(q.atoms.len());
    for k in 1..=kcap {
        match hybrid::search_sharp_b(q, db, k, cfg.bmax) {
            Ok(Some((hd, s_bar, b))) => {
                let (count, core_q) = hybrid::count_hybrid_with_core(q, db, &hd, &s_bar)?;
                return Ok(Attempt::Found(Found {
                    count,
                    width: Some(hd.width().max(1)),
                    bound: Some(b),
                    core_atoms: Some(core_q.atoms.len()),
                }));
            }
            Ok(None) => {}
            Err(e @ Error::SearchBudgetExceeded(_)) => truncated = Some(e),
            Err(e) => return Err(e),
        }
    }
    Ok(Attempt::Absent(truncated.unwrap_or_else(|| {
        Error::NoDecompositionWithinBudget(format!(
            "no hybrid decomposition of width <= {} with degree bound <= {}",
            cfg.kmax, cfg.bmax
        ))
    })))
}

/// Count the distinct answers of `q` on `db` under the configured budgets.
/// `Auto` tries the structural pipeline, then the hybrid pipeline, then
/// the oracle; the strict modes fail instead of falling through.
pub fn count(q: &Query, db: &Database, cfg: &RunConfig) -> Result<CountReport> {
    let start = Instant::now();
    let report = |found: Found, mode_used: Mode| CountReport {
        count: found.count,
        mode_used,
        width: found.width,
        bound: found.bound,
        core_atoms: found.core_atoms,
        elapsed_ms: start.elapsed().as_millis(),
    };

    match cfg.mode {
        Mode::Oracle => {
            let count = oracle::brute_force_count(q, db, cfg.state_cap)?;
            Ok(report(Found { count, width: None, bound: None, core_atoms: None }, Mode::Oracle))
        }
        Mode::Structural => match structural_attempt(q, db, cfg)? {
            Attempt::Found(f) => Ok(report(f, Mode::Structural)),
            Attempt::Absent(e) => Err(e),
        },
        Mode::Hybrid => match hybrid_attempt(q, db, cfg)? {
            Attempt::Found(f) => Ok(report(f, Mode::Hybrid)),
            Attempt::Absent(e) => Err(e),
        },
        Mode::Auto => {
            if let Attempt::Found(f) = structural_attempt(q, db, cfg)? {
                return Ok(report(f, Mode::Structural));
            }
            if let Attempt::Found(f) = hybrid_attempt(q, db, cfg)? {
                return Ok(report(f, Mode::Hybrid));
            }
            let count = oracle::brute_force_count(q, db, cfg.state_cap)?;
            Ok(report(Found { count, width: None, bound: None, core_atoms: None }, Mode::Oracle))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::{parse_facts, parse_query};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn vars(names: &str) -> BTreeSet<Var> {
        names.split(',').map(|s| Var::new(s.trim())).collect()
    }

    fn q0() -> Query {
        parse_query(
            "Q0(A,B,C) :- mw(A,B,I), wt(B,D), wi(B,E), pt(C,D), st(D,F), st(D,G), rr(G,H), rr(F,H), rr(D,H).",
        )
        .unwrap()
    }

    fn q1() -> Query {
        parse_query("Q1(A,C) :- s1(A,B), s2(B,C), s3(C,D), s4(D,A).").unwrap()
    }

    fn cycle_db() -> Database {
        // A directed 4-cycle on each relation: solutions are the four
        // rotations, so |pi_{A,C}| = 4.
        let mut text = String::new();
        for rel in ["s1", "s2", "s3", "s4"] {
            for i in 0..4 {
                text.push_str(&format!("{rel}(n{i},n{}).\n", (i + 1) % 4));
            }
        }
        parse_facts(&text).unwrap()
    }

    fn random_q0_db(seed: u64, rows: usize) -> Database {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut db = Database::new();
        let add = |db: &mut Database, rel: &str, arity: usize, rng: &mut ChaCha8Rng| {
            for _ in 0..rows {
                let tuple: Vec<crate::query::Const> =
                    (0..arity).map(|_| crate::query::Const::new(format!("c{}", rng.gen_range(0..5u8)))).collect();
                db.insert(rel, tuple).unwrap();
            }
        };
        add(&mut db, "mw", 3, &mut rng);
        add(&mut db, "wt", 2, &mut rng);
        add(&mut db, "wi", 2, &mut rng);
        add(&mut db, "pt", 2, &mut rng);
        add(&mut db, "st", 2, &mut rng);
        add(&mut db, "rr", 2, &mut rng);
        db
    }

    fn fig2_style_hd(q: &Query) -> HypertreeDecomposition {
        let a = |i: usize| q.atoms[i].clone();
        HypertreeDecomposition::new(
            vec![
                vars("B,C,D"),
                vars("A,B,I"),
                vars("B,E"),
                vars("D,F,H"),
                vars("D,H"),
                vars("D,G,H"),
            ],
            vec![
                vec![a(1), a(3)],
                vec![a(0)],
                vec![a(2)],
                vec![a(4), a(7)],
                vec![a(8)],
                vec![a(5), a(6)],
            ],
            vec![None, Some(0), Some(0), Some(0), Some(3), Some(3)],
        )
        .unwrap()
    }

    #[test]
    fn width_one_views_are_the_atom_relations() {
        let q = q1();
        let db = cycle_db();
        let vs = build_view_set(&q, 1).unwrap();
        let lvdb = standard_view_extension(&q, &db, &vs).unwrap();
        for view in lvdb.views.iter().filter(|v| v.is_query_view) {
            let atom = &view.provenance[0];
            assert_eq!(view.relation, evaluate_atom(atom, &db).unwrap());
        }
        // At width 1 the subset views duplicate the query views.
        for view in &lvdb.views {
            assert_eq!(view.provenance.len(), 1);
        }
    }

    #[test]
    fn subset_views_join_their_atoms() {
        let q = q1();
        let db = cycle_db();
        let vs = build_view_set(&q, 2).unwrap();
        let lvdb = standard_view_extension(&q, &db, &vs).unwrap();
        let view = lvdb.covering_view(&vars("A,B,C")).unwrap();
        let expected =
            evaluate_atoms(&[q.atoms[0].clone(), q.atoms[1].clone()], &db).unwrap();
        assert_eq!(view.relation, expected);
    }

    #[test]
    fn consistency_deletes_only_non_solution_rows() {
        let q = q1();
        let db = cycle_db();
        let vs = build_view_set(&q, 2).unwrap();
        let lvdb = standard_view_extension(&q, &db, &vs).unwrap();
        let (after, deleted) = enforce_pairwise_consistency_traced(lvdb);
        assert!(after.pairwise_consistent);
        // The pair views of non-adjacent atoms start as cross products, so
        // something must have been trimmed.
        assert!(!deleted.is_empty());
        // Every deleted row is absent from the solutions projected onto
        // the view's variables.
        for (name, removed) in &deleted {
            let view = after.view(name).unwrap();
            let solutions =
                oracle::enumerate_projections(&q, &db, &view.vars, 1_000_000).unwrap();
            for row in removed.rows() {
                assert!(!solutions.contains_row(row), "view {name} lost a solution row");
            }
        }
        // The fixpoint is a fixpoint: running again deletes nothing.
        let (_, deleted_again) = enforce_pairwise_consistency_traced(after);
        assert!(deleted_again.is_empty());
    }

    #[test]
    fn inconsistent_views_empty_each_other() {
        let q = parse_query("Q(X) :- r(X), s(X).").unwrap();
        let db = parse_facts("r(a). r(b). s(c).").unwrap();
        let vs = build_view_set(&q, 1).unwrap();
        let lvdb = standard_view_extension(&q, &db, &vs).unwrap();
        let after = enforce_pairwise_consistency(lvdb);
        assert!(after.has_empty_view());
        assert!(after.views.iter().all(|v| v.relation.is_empty()));
    }

    #[test]
    fn consistency_fixpoint_is_order_independent() {
        let q = parse_query("Q(X,Z) :- r(X,Y), s(Y,Z), t(Z,X).").unwrap();
        let db = parse_facts(
            "r(a,b). r(a,c). r(d,b). s(b,e). s(c,f). t(e,a). t(f,g).",
        )
        .unwrap();
        let vs = build_view_set(&q, 2).unwrap();
        let lvdb = standard_view_extension(&q, &db, &vs).unwrap();
        let n = lvdb.views.len();
        let forward = canonical_order(n);
        let mut backward = forward.clone();
        backward.reverse();
        let a = enforce_pairwise_consistency_with_order(lvdb.clone(), &forward);
        let b = enforce_pairwise_consistency_with_order(lvdb, &backward);
        for (x, y) in a.views.iter().zip(b.views.iter()) {
            assert_eq!(x.relation, y.relation, "view {}", x.name);
        }
    }

    #[test]
    fn single_bag_instance_holds_the_view_rows() {
        let q = parse_query("Q(A,B) :- r(A,B).").unwrap();
        let db = parse_facts("r(a,b). r(a,c). r(b,b).").unwrap();
        let vs = build_view_set(&q, 1).unwrap();
        let lvdb = enforce_pairwise_consistency(standard_view_extension(&q, &db, &vs).unwrap());
        let tp = Hypergraph::new([vars("A,B")]);
        let (qa, qa_db) = build_acyclic_instance(&tp, &vs, &lvdb).unwrap();
        assert_eq!(qa.atoms.len(), 1);
        assert_eq!(qa.free_set(), vars("A,B"));
        assert_eq!(qa_db.tuples("a0").unwrap().len(), 3);
    }

    #[test]
    fn acyclic_instance_solutions_match_the_oracle() {
        let q = q1();
        let db = cycle_db();
        let vs = build_view_set(&q, 2).unwrap();
        let (_, core) = crate::decomp::sharp_decomposition(&q, &vs, 8).unwrap().unwrap();
        let sd = sharp_hypertree_width_with(&q, 2, 8).unwrap().unwrap();
        let h_core = Hypergraph::of_query(&core);
        let fh = h_core.frontier_hypergraph(&core.free_set());
        let h_a_ext = sd.nf.hypergraph().union(&fh);
        let lvdb = enforce_pairwise_consistency(
            pruned_view_extension(&q, &db, &vs, &h_a_ext).unwrap(),
        );
        let (qa, qa_db) = build_acyclic_instance(&h_a_ext, &vs, &lvdb).unwrap();
        // The instance's solutions equal the core's solutions projected to
        // the instance variables.
        let qa_solutions = crate::relation::evaluate_query(&qa, &qa_db).unwrap();
        let full = core.with_free(&qa.vars()).unwrap();
        let expected =
            oracle::enumerate_projections(&full, &db, &qa.vars(), 1_000_000).unwrap();
        assert_eq!(qa_solutions, expected);
    }

    #[test]
    fn quantifier_free_core_reduces_to_itself() {
        let q = parse_query("Q(A,B) :- r(A,B), s(B).").unwrap();
        let db = parse_facts("r(a,b). r(c,b). s(b).").unwrap();
        let vs = build_view_set(&q, 1).unwrap();
        let lvdb = enforce_pairwise_consistency(standard_view_extension(&q, &db, &vs).unwrap());
        let tp = Hypergraph::new([vars("A,B"), vars("B")]);
        let (qa, qa_db) = build_acyclic_instance(&tp, &vs, &lvdb).unwrap();
        let (qf, df) = reduce_quantified(&q, &tp, &qa, &qa_db, &db).unwrap();
        assert_eq!(qf.atoms, q.atoms);
        assert_eq!(qf.free_set(), q.free_set());
        assert_eq!(df.tuples("r").unwrap(), db.tuples("r").unwrap());
    }

    #[test]
    fn quantified_components_become_frontier_atoms() {
        let q = q0();
        let db = random_q0_db(7, 6);
        let sd = sharp_hypertree_width_with(&q, 3, 8).unwrap().expect("Q0 is decomposable");
        let vs = build_view_set(&q, sd.k).unwrap();
        let h_core = Hypergraph::of_query(&sd.core);
        let fh = h_core.frontier_hypergraph(&sd.core.free_set());
        let h_a_ext = sd.nf.hypergraph().union(&fh);
        let lvdb = enforce_pairwise_consistency(
            pruned_view_extension(&q, &db, &vs, &h_a_ext).unwrap(),
        );
        let (qa, qa_db) = build_acyclic_instance(&h_a_ext, &vs, &lvdb).unwrap();
        let (qf, df) = reduce_quantified(&sd.core, &h_a_ext, &qa, &qa_db, &db).unwrap();
        // Q0 has no atom over free variables only; each quantified
        // component contributes one frontier atom.
        let frontiers: BTreeSet<BTreeSet<Var>> = qf.atoms.iter().map(|a| a.vars()).collect();
        assert_eq!(
            frontiers,
            [vars("A,B"), vars("B"), vars("B,C")].into_iter().collect::<BTreeSet<_>>()
        );
        assert_eq!(qf.free_set(), qf.vars());
        // The reduced query has the same answers as the original.
        let reduced = oracle::brute_force_count(&qf, &df, 1_000_000).unwrap();
        let original = oracle::brute_force_count(&q, &db, 1_000_000).unwrap();
        assert_eq!(reduced, original);
    }

    #[test]
    fn single_vertex_dp_counts_projections() {
        let q = parse_query("Q(A) :- r(A,B).").unwrap();
        let db = parse_facts("r(a,b). r(a,c). r(b,b).").unwrap();
        let hd = HypertreeDecomposition::new(
            vec![vars("A,B")],
            vec![vec![q.atoms[0].clone()]],
            vec![None],
        )
        .unwrap();
        let n = count_via_hd(&q, &db, &hd).unwrap();
        assert_eq!(n, BigUint::from(2u32));
    }

    #[test]
    fn all_variables_free_counts_all_solutions() {
        let q = parse_query("Q(A,B,C) :- r(A,B), s(B,C).").unwrap();
        let db = parse_facts("r(a,b). r(c,b). s(b,d). s(b,e).").unwrap();
        let hd = HypertreeDecomposition::new(
            vec![vars("A,B"), vars("B,C")],
            vec![vec![q.atoms[0].clone()], vec![q.atoms[1].clone()]],
            vec![None, Some(0)],
        )
        .unwrap();
        let n = count_via_hd(&q, &db, &hd).unwrap();
        let solutions = oracle::enumerate_answers(&q, &db, 1_000_000).unwrap();
        assert_eq!(n, BigUint::from(solutions.len()));
    }

    #[test]
    fn unenforced_atom_is_rejected() {
        let q = parse_query("Q(A) :- r(A,B), s(B).").unwrap();
        let db = parse_facts("r(a,b). s(b).").unwrap();
        // s appears in no label at all.
        let hd = HypertreeDecomposition::new(
            vec![vars("A,B")],
            vec![vec![q.atoms[0].clone()]],
            vec![None],
        )
        .unwrap();
        match count_via_hd(&q, &db, &hd) {
            Err(Error::IncompleteDecomposition { .. }) => {}
            other => panic!("expected IncompleteDecomposition, got {other:?}"),
        }
    }

    #[test]
    fn dp_matches_oracle_on_the_running_example() {
        let q = q0();
        let hd = fig2_style_hd(&q);
        for seed in [1u64, 9, 23] {
            let db = random_q0_db(seed, 7);
            let dp = count_via_hd(&q, &db, &hd).unwrap();
            let oracle_count = oracle::brute_force_count(&q, &db, 10_000_000).unwrap();
            assert_eq!(dp, oracle_count, "seed {seed}");
        }
    }

    #[test]
    fn dp_respects_boolean_queries() {
        let q = parse_query("Q() :- r(A,B), s(B,C).").unwrap();
        let sat = parse_facts("r(a,b). s(b,c).").unwrap();
        let hd = HypertreeDecomposition::new(
            vec![vars("A,B"), vars("B,C")],
            vec![vec![q.atoms[0].clone()], vec![q.atoms[1].clone()]],
            vec![None, Some(0)],
        )
        .unwrap();
        assert_eq!(count_via_hd(&q, &sat, &hd).unwrap(), BigUint::one());
        let unsat = parse_facts("r(a,b). s(c,d).").unwrap();
        assert_eq!(count_via_hd(&q, &unsat, &hd).unwrap(), BigUint::from(0u32));
    }

    #[test]
    fn pipeline_counts_the_four_cycle() {
        let q = q1();
        let db = cycle_db();
        let report = count(&q, &db, &RunConfig::default()).unwrap();
        assert_eq!(report.count, BigUint::from(4u32));
        assert_eq!(report.mode_used, Mode::Structural);
        assert_eq!(report.width, Some(2));
        let oracle_count = oracle::brute_force_count(&q, &db, 1_000_000).unwrap();
        assert_eq!(report.count, oracle_count);
    }

    #[test]
    fn pipeline_counts_boolean_queries() {
        let q = parse_query("Q() :- r(A,B), r(B,C).").unwrap();
        let sat = parse_facts("r(a,b). r(b,c).").unwrap();
        let report = count(&q, &sat, &RunConfig::default()).unwrap();
        assert_eq!(report.count, BigUint::one());
        let unsat = parse_facts("r(a,a2).").unwrap();
        let report = count(&q, &unsat, &RunConfig::default()).unwrap();
        assert_eq!(report.count, BigUint::from(0u32));
    }

    #[test]
    fn pruned_and_standard_views_agree() {
        let q = q0();
        let db = random_q0_db(3, 6);
        let sd = sharp_hypertree_width_with(&q, 3, 8).unwrap().unwrap();
        let vs = build_view_set(&q, sd.k).unwrap();
        let free = q.free_set();
        let pruned = count_via_decomposition(
            &q,
            &db,
            &sd.core,
            &sd.nf.hypergraph(),
            &vs,
            &free,
            ViewMaterialization::Pruned,
        )
        .unwrap();
        let standard = count_via_decomposition(
            &q,
            &db,
            &sd.core,
            &sd.nf.hypergraph(),
            &vs,
            &free,
            ViewMaterialization::Standard,
        )
        .unwrap();
        assert_eq!(pruned, standard);
        let oracle_count = oracle::brute_force_count(&q, &db, 10_000_000).unwrap();
        assert_eq!(pruned, oracle_count);
    }

    #[test]
    fn auto_mode_matches_oracle_on_random_instances() {
        for seed in 0..6u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // Random 2-3 atom queries over a tiny domain.
            let rels = ["r", "s", "t"];
            let var_pool = ["A", "B", "C", "D", "E"];
            let n_atoms = rng.gen_range(2..=3);
            let mut atoms = Vec::new();
            for i in 0..n_atoms {
                let arity = rng.gen_range(1..=2);
                let args: Vec<Term> = (0..arity)
                    .map(|_| Term::var(var_pool[rng.gen_range(0..var_pool.len())]))
                    .collect();
                atoms.push(Atom::new(rels[i % rels.len()], args));
            }
            let body_vars: Vec<Var> = {
                let mut s = BTreeSet::new();
                for a in &atoms {
                    s.extend(a.vars());
                }
                s.into_iter().collect()
            };
            let n_free = rng.gen_range(0..=body_vars.len());
            let q = match Query::new("Q", body_vars.into_iter().take(n_free).collect(), atoms)
            {
                Ok(q) => q,
                Err(_) => continue,
            };
            let mut db = Database::new();
            for rel in rels {
                let arity = match q.atoms.iter().find(|a| a.rel == rel) {
                    Some(a) => a.arity(),
                    None => continue,
                };
                for _ in 0..rng.gen_range(3..8) {
                    let t: Vec<crate::query::Const> = (0..arity)
                        .map(|_| crate::query::Const::new(format!("d{}", rng.gen_range(0..4u8))))
                        .collect();
                    let _ = db.insert(rel, t);
                }
            }
            let report = count(&q, &db, &RunConfig::default()).unwrap();
            let oracle_count = oracle::brute_force_count(&q, &db, 10_000_000).unwrap();
            assert_eq!(report.count, oracle_count, "seed {seed}, query {q}");
        }
    }

    #[test]
    fn strict_structural_mode_fails_on_wide_queries() {
        // A 4-clique of binary atoms has no width-1 decomposition.
        let q = parse_query(
            "Q(A) :- e1(A,B), e2(B,C), e3(C,D), e4(D,A), e5(A,C), e6(B,D).",
        )
        .unwrap();
        let db = parse_facts("e1(a,b). e2(b,c). e3(c,d). e4(d,a). e5(a,c). e6(b,d).").unwrap();
        let cfg = RunConfig { kmax: 1, mode: Mode::Structural, ..RunConfig::default() };
        match count(&q, &db, &cfg) {
            Err(Error::NoDecompositionWithinBudget(_)) => {}
            other => panic!("expected NoDecompositionWithinBudget, got {other:?}"),
        }
    }

    #[test]
    fn fresh_prefixes_avoid_clashes() {
        assert_eq!(fresh_prefix("f", ["g1".to_string()].into_iter()), "f");
        assert_eq!(fresh_prefix("f", ["f1".to_string()].into_iter()), "f_");
        assert_eq!(
            fresh_prefix("f", ["f1".to_string(), "f_2".to_string()].into_iter()),
            "f__"
        );
        assert_eq!(fresh_prefix("f", ["fx".to_string()].into_iter()), "f");
    }

    #[test]
    fn sharp_relation_conserves_rows_and_counts() {
        let r = Relation::new(
            vec![Var::new("A"), Var::new("B")],
            vec![
                vec![crate::query::Const::new("a"), crate::query::Const::new("x")],
                vec![crate::query::Const::new("a"), crate::query::Const::new("y")],
                vec![crate::query::Const::new("b"), crate::query::Const::new("x")],
            ],
        )
        .unwrap();
        let sharp = SharpRelation::initial(&r, &vars("A"));
        assert_eq!(sharp.blocks.len(), 2);
        assert_eq!(sharp.total(), BigUint::from(2u32));
        assert_eq!(sharp.max_block_size(), 2);
    }
}
