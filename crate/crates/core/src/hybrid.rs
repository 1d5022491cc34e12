//! Degree-bounded hybrid decompositions.
//!
//! Some queries admit no useful structural decomposition because a
//! quantified variable ranges freely over a large column; promoting such a
//! variable into the counted selection can shrink every bag's *degree* —
//! the number of rows sharing one profile of the free variables — down to
//! a constant, restoring polynomial counting at the price of counting over
//! a larger selection first.
//!
//! This module measures those degrees ([`bound`]), searches for a
//! selection and a decomposition whose bags all stay within a degree
//! budget ([`search_sharp_b`]), and counts through the promoted selection
//! ([`count_hybrid`]).

use std::collections::{BTreeMap, BTreeSet, HashMap};

use num_bigint::BigUint;

use crate::counting::{count_via_decomposition, ViewMaterialization};
use crate::decomp::{
    build_view_set, nf_to_hd, HypertreeDecomposition, ViewSet, DEFAULT_CORES_TO_TRY,
};
use crate::error::{Error, Result};
use crate::hom;
use crate::hypergraph::Hypergraph;
use crate::query::{Atom, Const, Database, Query, Var};
use crate::relation::{evaluate_atoms, Relation};
use crate::treeproj::{nf_tree_projection, SearchOptions};

/// Most quantified variables a selection may add, and most normal-form
/// searches one [`search_sharp_b`] call may run.  Hitting either cap
/// without finding anything reports [`Error::SearchBudgetExceeded`].
const SELECTION_VAR_CAP: usize = 12;
const PROBE_BUDGET: usize = 20_000;

/// The maximum number of rows of `r` sharing one value profile on `f`
/// (grouping implementation).  `f` is intersected with the schema; an
/// empty intersection makes the whole relation one group.
pub fn relation_degree(r: &Relation, f: &BTreeSet<Var>) -> u64 {
    r.partition_by(f).into_iter().map(|(_, block)| block.len() as u64).max().unwrap_or(0)
}

/// Same value as [`relation_degree`], computed independently by sorting
/// the `f`-columns of every row and scanning for the longest run.
pub fn relation_degree_scan(r: &Relation, f: &BTreeSet<Var>) -> u64 {
    if r.is_empty() {
        return 0;
    }
    let cols: Vec<usize> = r
        .schema()
        .iter()
        .enumerate()
        .filter(|(_, v)| f.contains(*v))
        .map(|(i, _)| i)
        .collect();
    let mut keys: Vec<Vec<Const>> = r
        .rows()
        .iter()
        .map(|row| cols.iter().map(|&i| row[i].clone()).collect())
        .collect();
    keys.sort();
    let mut best = 1u64;
    let mut run = 1u64;
    for w in keys.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            run = 1;
        }
        best = best.max(run);
    }
    best
}

/// The relation a decomposition vertex holds: its label's join projected
/// to its bag.
fn vertex_relation(hd: &HypertreeDecomposition, v: usize, db: &Database) -> Result<Relation> {
    evaluate_atoms(&hd.lambda[v], db)?.project(&hd.chi[v])
}

/// The degree of vertex `v` with respect to `f`: how many rows of the
/// vertex relation share one `f`-profile, maximized over profiles.
pub fn vertex_degree(
    hd: &HypertreeDecomposition,
    v: usize,
    db: &Database,
    f: &BTreeSet<Var>,
) -> Result<u64> {
    Ok(relation_degree(&vertex_relation(hd, v, db)?, f))
}

/// [`vertex_degree`] along the independent sort-and-scan path.
pub fn vertex_degree_scan(
    hd: &HypertreeDecomposition,
    v: usize,
    db: &Database,
    f: &BTreeSet<Var>,
) -> Result<u64> {
    Ok(relation_degree_scan(&vertex_relation(hd, v, db)?, f))
}

/// Per-vertex degrees of a decomposition on a database.
#[derive(Clone, Debug)]
pub struct DegreeProfile {
    /// Degree of each vertex, indexed like the decomposition.
    pub per_vertex: Vec<u64>,
    /// The maximum over all vertices (0 for an empty tree).
    pub overall: u64,
    /// The variable set degrees were measured against.
    pub over: BTreeSet<Var>,
}

/// Measure every vertex degree of `hd` on `db` with respect to `f`.
/// The counting dynamic program's block sizes stay within `overall` when
/// `f` is the counted selection intersected into the bags.
pub fn bound(hd: &HypertreeDecomposition, db: &Database, f: &BTreeSet<Var>) -> Result<DegreeProfile> {
    let mut per_vertex = Vec::with_capacity(hd.vertex_count());
    for v in 0..hd.vertex_count() {
        let d = vertex_degree(hd, v, db, f)?;
        debug_assert_eq!(
            d,
            vertex_degree_scan(hd, v, db, f)?,
            "the two degree implementations disagree at vertex {v}"
        );
        per_vertex.push(d);
    }
    let overall = per_vertex.iter().copied().max().unwrap_or(0);
    Ok(DegreeProfile { per_vertex, overall, over: f.clone() })
}

/// Promote a selection: same body, the free variables widened to `s_bar`.
/// Fails unless `free(q) ⊆ s_bar ⊆ vars(q)`.
pub fn promote_free(q: &Query, s_bar: &BTreeSet<Var>) -> Result<Query> {
    q.with_free(s_bar)
}

/// Restrict every bag to the selection: `χ_{S̄}(p) = χ(p) ∩ S̄`, labels and
/// tree shape unchanged.  Degrees of the restricted decomposition are the
/// degrees the hybrid search bounds.
pub fn restrict_chi(
    hd: &HypertreeDecomposition,
    s_bar: &BTreeSet<Var>,
) -> Result<HypertreeDecomposition> {
    let chi = hd
        .chi
        .iter()
        .map(|bag| bag.intersection(s_bar).cloned().collect())
        .collect();
    HypertreeDecomposition::new(chi, hd.lambda.clone(), hd.parent.clone())
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + (i - 1) {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// One admissible selection: its promoted cores (with their
/// frontier-extended hypergraphs) and the memoized degree of every bag
/// probed so far.
struct Candidate {
    s_bar: BTreeSet<Var>,
    cores: Vec<(Query, Hypergraph)>,
    memo: BTreeMap<Vec<Var>, u64>,
}

/// Shared machinery for probing selections at one width.
struct Probe<'a> {
    q: &'a Query,
    db: &'a Database,
    vs: ViewSet,
    h2: Hypergraph,
    free: BTreeSet<Var>,
    opts: SearchOptions,
    view_cache: HashMap<String, Relation>,
    probes_left: usize,
    truncated: bool,
}

fn bag_degree(
    vs: &ViewSet,
    db: &Database,
    free: &BTreeSet<Var>,
    view_cache: &mut HashMap<String, Relation>,
    bag: &BTreeSet<Var>,
    s_bar: &BTreeSet<Var>,
) -> Result<u64> {
    let (name, provenance) = match vs.covering_view(bag) {
        Some(v) => (v.name.clone(), v.provenance.clone()),
        None => return Ok(u64::MAX),
    };
    if !view_cache.contains_key(&name) {
        let r = evaluate_atoms(&provenance, db)?;
        view_cache.insert(name.clone(), r);
    }
    let r = &view_cache[&name];
    let shared: BTreeSet<Var> = bag.intersection(s_bar).cloned().collect();
    let proj = r.project(&shared)?;
    Ok(relation_degree(&proj, free))
}

impl<'a> Probe<'a> {
    fn new(q: &'a Query, db: &'a Database, k: usize) -> Result<Probe<'a>> {
        let vs = build_view_set(q, k)?;
        let h2 = vs.hypergraph();
        Ok(Probe {
            q,
            db,
            vs,
            h2,
            free: q.free_set(),
            opts: SearchOptions::default(),
            view_cache: HashMap::new(),
            probes_left: PROBE_BUDGET,
            truncated: false,
        })
    }

    /// Build the candidate for one selection, or `None` if no promoted
    /// core's frontier-extended hypergraph fits inside the views at all
    /// (then no degree budget can ever help).
    fn candidate(&mut self, s_bar: &BTreeSet<Var>) -> Result<Option<Candidate>> {
        let promoted = promote_free(self.q, s_bar)?;
        let prefix = hom::color_prefix(&promoted);
        let colored = hom::color(&promoted);
        let cores = hom::enumerate_cores(&colored, DEFAULT_CORES_TO_TRY)?;
        let mut kept: Vec<(Query, Hypergraph)> = Vec::new();
        let mut seen: BTreeSet<BTreeSet<Atom>> = BTreeSet::new();
        for colored_core in &cores {
            let real: Vec<Atom> = colored_core
                .atoms
                .iter()
                .filter(|a| !a.rel.starts_with(&prefix))
                .cloned()
                .collect();
            if !seen.insert(real.iter().cloned().collect()) {
                continue;
            }
            let core_q = promoted.with_atoms(real)?;
            debug_assert_eq!(core_q.free_set(), *s_bar);
            let h_core = Hypergraph::of_query(&core_q);
            let fh = h_core.frontier_hypergraph(&core_q.free_set());
            let h1 = h_core.union(&fh);
            if self.h2.covers(&h1) {
                kept.push((core_q, h1));
            }
        }
        if kept.is_empty() {
            Ok(None)
        } else {
            Ok(Some(Candidate { s_bar: s_bar.clone(), cores: kept, memo: BTreeMap::new() }))
        }
    }

    /// Probe one candidate at degree budget `b`: search for a normal-form
    /// tree all of whose bags have memoized degree at most `b`.
    fn try_candidate(
        &mut self,
        cand: &mut Candidate,
        b: u64,
    ) -> Result<Option<HypertreeDecomposition>> {
        let Probe { db, vs, h2, free, opts, view_cache, probes_left, truncated, .. } = self;
        let Candidate { s_bar, cores, memo } = cand;
        for (_, h1) in cores.iter() {
            if *probes_left == 0 {
                *truncated = true;
                return Ok(None);
            }
            *probes_left -= 1;
            let mut deg_err: Option<Error> = None;
            let found = nf_tree_projection(h1, h2, opts, |bag| {
                if deg_err.is_some() {
                    return false;
                }
                let key: Vec<Var> = bag.iter().cloned().collect();
                let deg = match memo.get(&key) {
                    Some(d) => *d,
                    None => match bag_degree(vs, db, free, view_cache, bag, s_bar) {
                        Ok(d) => {
                            memo.insert(key, d);
                            d
                        }
                        Err(e) => {
                            deg_err = Some(e);
                            return false;
                        }
                    },
                };
                deg <= b
            });
            if let Some(e) = deg_err {
                return Err(e);
            }
            match found {
                Ok(Some(nf)) => return Ok(Some(nf_to_hd(&nf, vs)?)),
                Ok(None) => {}
                Err(Error::SearchBudgetExceeded(_)) => *truncated = true,
                Err(e) => return Err(e),
            }
        }
        Ok(None)
    }

    fn budget_error(&self) -> Error {
        Error::SearchBudgetExceeded(
            "the degree-bounded search hit its caps before exhausting the space".into(),
        )
    }
}

/// Search for the smallest degree budget `b ≤ bmax` and, within it, the
/// smallest selection (by size, then lexicographically) admitting a
/// width-`k` decomposition of the promoted query whose bags, restricted
/// to the selection, all have degree at most `b`.  Returns the
/// decomposition, the selection, and the budget.
///
/// `Ok(None)` certifies there is none within the budgets; a truncated
/// search that found nothing reports [`Error::SearchBudgetExceeded`].
pub fn search_sharp_b(
    q: &Query,
    db: &Database,
    k: usize,
    bmax: u64,
) -> Result<Option<(HypertreeDecomposition, BTreeSet<Var>, u64)>> {
    let mut probe = Probe::new(q, db, k)?;
    let quantified: Vec<Var> = q.quantified().into_iter().collect();
    let size_cap = quantified.len().min(SELECTION_VAR_CAP);
    let selections_truncated = quantified.len() > SELECTION_VAR_CAP;

    let mut candidates: Vec<Candidate> = Vec::new();
    for size in 0..=size_cap {
        for combo in combinations(quantified.len(), size) {
            let mut s_bar = q.free_set();
            s_bar.extend(combo.into_iter().map(|i| quantified[i].clone()));
            if let Some(cand) = probe.candidate(&s_bar)? {
                candidates.push(cand);
            }
        }
    }

    for b in 1..=bmax {
        for cand in candidates.iter_mut() {
            if let Some(hd) = probe.try_candidate(cand, b)? {
                return Ok(Some((hd, cand.s_bar.clone(), b)));
            }
        }
    }
    if probe.truncated || selections_truncated {
        Err(probe.budget_error())
    } else {
        Ok(None)
    }
}

/// The smallest degree budget `b ≤ bmax` admitting a width-`k`
/// decomposition for one fixed selection, with a witnessing
/// decomposition.  `Ok(None)` certifies there is none within `bmax`.
pub fn min_bound_for_selection(
    q: &Query,
    db: &Database,
    k: usize,
    bmax: u64,
    s_bar: &BTreeSet<Var>,
) -> Result<Option<(HypertreeDecomposition, u64)>> {
    let mut probe = Probe::new(q, db, k)?;
    let Some(mut cand) = probe.candidate(s_bar)? else {
        return Ok(None);
    };
    for b in 1..=bmax {
        if let Some(hd) = probe.try_candidate(&mut cand, b)? {
            return Ok(Some((hd, b)));
        }
    }
    if probe.truncated {
        Err(probe.budget_error())
    } else {
        Ok(None)
    }
}

/// Count the distinct answers of `q` on `db` through a hybrid
/// decomposition: `hd`'s bags must cover the frontier-extended hypergraph
/// of some core of the promotion of `q` to `s_bar`.  Also returns the
/// promoted core that was used.
pub fn count_hybrid_with_core(
    q: &Query,
    db: &Database,
    hd: &HypertreeDecomposition,
    s_bar: &BTreeSet<Var>,
) -> Result<(BigUint, Query)> {
    let promoted = promote_free(q, s_bar)?;
    let k = hd.width().max(1);
    let vs = build_view_set(q, k)?;
    let bags = Hypergraph::new(hd.chi.iter().cloned());
    let prefix = hom::color_prefix(&promoted);
    let colored = hom::color(&promoted);
    let cores = hom::enumerate_cores(&colored, DEFAULT_CORES_TO_TRY)?;
    let mut seen: BTreeSet<BTreeSet<Atom>> = BTreeSet::new();
    for colored_core in &cores {
        let real: Vec<Atom> = colored_core
            .atoms
            .iter()
            .filter(|a| !a.rel.starts_with(&prefix))
            .cloned()
            .collect();
        if !seen.insert(real.iter().cloned().collect()) {
            continue;
        }
        let core_q = promoted.with_atoms(real)?;
        let h_core = Hypergraph::of_query(&core_q);
        let fh = h_core.frontier_hypergraph(&core_q.free_set());
        let h1 = h_core.union(&fh);
        if bags.covers(&h1) {
            let count = count_via_decomposition(
                q,
                db,
                &core_q,
                &bags,
                &vs,
                &q.free_set(),
                ViewMaterialization::Pruned,
            )?;
            return Ok((count, core_q));
        }
    }
    Err(Error::InvalidHybridDecomposition(
        "the bags do not cover the frontier-extended hypergraph of any core of the promoted query"
            .into(),
    ))
}

/// [`count_hybrid_with_core`] without the core.
pub fn count_hybrid(
    q: &Query,
    db: &Database,
    hd: &HypertreeDecomposition,
    s_bar: &BTreeSet<Var>,
) -> Result<BigUint> {
    count_hybrid_with_core(q, db, hd, s_bar).map(|(n, _)| n)
}
