//! View sets and hypertree-shaped decompositions.
//!
//! A *view set* for a query pairs every atom with a query view over the
//! same variables and, for width `k`, adds one view per `k`-subset of
//! atoms covering the union of their variables.  Decompositions are
//! searched as tree projections: an acyclic hypergraph squeezed between
//! the (core) query hypergraph — extended with its frontier edges — and
//! the view hypergraph.  This module also validates and completes
//! decompositions and computes data-optimal normal-form decompositions
//! that minimize a degree-based cost on a concrete database.

use std::collections::BTreeSet;

use num_bigint::BigUint;

use crate::error::{Error, Result};
use crate::hom;
use crate::hypergraph::Hypergraph;
use crate::query::{Atom, Const, Database, Query, Term, Var};
use crate::relation::evaluate_atoms;
use crate::treeproj::{self, NfTree, SearchOptions};

/// One view: a named variable set with the atoms whose join defines it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct View {
    pub name: String,
    pub vars: BTreeSet<Var>,
    pub provenance: Vec<Atom>,
    pub is_query_view: bool,
}

impl View {
    /// A view defined by the join of `provenance`; its variables are
    /// exactly the variables occurring in those atoms.
    pub fn joining(name: impl Into<String>, provenance: Vec<Atom>) -> View {
        let vars = provenance.iter().flat_map(|a| a.vars()).collect();
        View { name: name.into(), vars, provenance, is_query_view: false }
    }
}

/// The available views for a query at some width.
#[derive(Clone, Debug)]
pub struct ViewSet {
    pub views: Vec<View>,
    pub k: usize,
}

impl ViewSet {
    /// A custom view set (query views must already be included).
    pub fn custom(views: Vec<View>, k: usize) -> ViewSet {
        ViewSet { views, k }
    }

    /// The hypergraph whose edges are the views' variable sets.
    pub fn hypergraph(&self) -> Hypergraph {
        Hypergraph::new(self.views.iter().map(|v| v.vars.clone()))
    }

    /// The canonical covering view for a bag: among views whose
    /// variables contain the bag, the one with the fewest provenance
    /// atoms, then the lexicographically least variable set, then name.
    pub fn covering_view(&self, bag: &BTreeSet<Var>) -> Option<&View> {
        self.views
            .iter()
            .filter(|v| bag.is_subset(&v.vars))
            .min_by(|a, b| {
                (a.provenance.len(), &a.vars, &a.name)
                    .cmp(&(b.provenance.len(), &b.vars, &b.name))
            })
    }
}

/// Builds the width-`k` view set: one query view per atom plus one view
/// per `k`-subset of atoms over the union of their variables.
pub fn build_view_set(q: &Query, k: usize) -> Result<ViewSet> {
    let m = q.atoms.len();
    if k < 1 || k > m {
        return Err(Error::InvalidWidth { width: k, max: m });
    }
    let mut views = Vec::new();
    for (i, atom) in q.atoms.iter().enumerate() {
        views.push(View {
            name: format!("q{i}"),
            vars: atom.vars(),
            provenance: vec![atom.clone()],
            is_query_view: true,
        });
    }
    // Lexicographic k-subsets of atom indices.
    let mut idx: Vec<usize> = (0..k).collect();
    let mut counter = 0usize;
    loop {
        let provenance: Vec<Atom> = idx.iter().map(|&i| q.atoms[i].clone()).collect();
        views.push(View::joining(format!("v{counter}"), provenance));
        counter += 1;
        let mut i = k;
        while i > 0 && idx[i - 1] == i - 1 + m - k {
            i -= 1;
        }
        if i == 0 {
            break;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
    Ok(ViewSet { views, k })
}

/// A rooted decomposition tree: per-vertex variable bags χ and covering
/// atom labels λ.  Vertex 0 is the root and parents precede children.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HypertreeDecomposition {
    pub chi: Vec<BTreeSet<Var>>,
    pub lambda: Vec<Vec<Atom>>,
    pub parent: Vec<Option<usize>>,
}

impl HypertreeDecomposition {
    pub fn new(
        chi: Vec<BTreeSet<Var>>,
        lambda: Vec<Vec<Atom>>,
        parent: Vec<Option<usize>>,
    ) -> Result<HypertreeDecomposition> {
        if chi.is_empty() || chi.len() != lambda.len() || chi.len() != parent.len() {
            return Err(Error::IncompatibleDecomposition(
                "decomposition needs equal numbers of bags, labels, and parent links".into(),
            ));
        }
        if parent[0].is_some() {
            return Err(Error::IncompatibleDecomposition("vertex 0 must be the root".into()));
        }
        for (i, p) in parent.iter().enumerate().skip(1) {
            match p {
                Some(p) if *p < i => {}
                _ => {
                    return Err(Error::IncompatibleDecomposition(format!(
                        "vertex {i} must point to a parent with a smaller index"
                    )))
                }
            }
        }
        Ok(HypertreeDecomposition { chi, lambda, parent })
    }

    pub fn vertex_count(&self) -> usize {
        self.chi.len()
    }

    /// Maximum number of covering atoms over all vertices.
    pub fn width(&self) -> usize {
        self.lambda.iter().map(|l| l.len()).max().unwrap_or(0)
    }

    pub fn children(&self, p: usize) -> Vec<usize> {
        (0..self.parent.len()).filter(|&i| self.parent[i] == Some(p)).collect()
    }

    /// Union of the bags in the subtree rooted at `p` (including `p`).
    pub fn subtree_vars(&self, p: usize) -> BTreeSet<Var> {
        let mut vars = BTreeSet::new();
        let mut in_subtree = vec![false; self.chi.len()];
        in_subtree[p] = true;
        for i in p..self.chi.len() {
            if i == p || self.parent[i].map_or(false, |pp| in_subtree[pp]) {
                in_subtree[i] = true;
                vars.extend(self.chi[i].iter().cloned());
            }
        }
        vars
    }

    /// Vertices ordered so every child appears before its parent.
    pub fn bottom_up(&self) -> Vec<usize> {
        (0..self.chi.len()).rev().collect()
    }

    /// The first query atom that occurs in no label, if any.
    pub fn first_uncovered<'q>(&self, q: &'q Query) -> Option<&'q Atom> {
        q.atoms.iter().find(|a| !self.lambda.iter().any(|l| l.contains(a)))
    }
}

/// Pass/fail for one decomposition condition, with a human-readable
/// witness on failure.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConditionReport {
    pub pass: bool,
    pub witness: Option<String>,
}

impl ConditionReport {
    fn ok() -> ConditionReport {
        ConditionReport { pass: true, witness: None }
    }
    fn fail(witness: String) -> ConditionReport {
        ConditionReport { pass: false, witness: Some(witness) }
    }
}

/// Per-condition validation outcome for a decomposition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValidationReport {
    /// (1) every atom's variables fit inside some bag.
    pub atom_coverage: ConditionReport,
    /// (2) each variable's vertices induce a connected subtree.
    pub connectedness: ConditionReport,
    /// (3) every bag is contained in its label's variables.
    pub bag_within_label: ConditionReport,
    /// (4) label variables reappearing in the subtree stay in the bag.
    pub descendant: ConditionReport,
    /// Every atom occurs in some label.
    pub completeness: ConditionReport,
}

impl ValidationReport {
    /// Conditions (1)–(3): a generalized hypertree decomposition.
    pub fn valid_generalized(&self) -> bool {
        self.atom_coverage.pass && self.connectedness.pass && self.bag_within_label.pass
    }

    /// Conditions (1)–(4).
    pub fn valid(&self) -> bool {
        self.valid_generalized() && self.descendant.pass
    }
}

/// Checks the four decomposition conditions and completeness, reporting
/// each independently.
pub fn validate_hd(hd: &HypertreeDecomposition, q: &Query) -> ValidationReport {
    let atom_coverage = match q
        .atoms
        .iter()
        .find(|a| !hd.chi.iter().any(|bag| a.vars().is_subset(bag)))
    {
        None => ConditionReport::ok(),
        Some(a) => ConditionReport::fail(format!("atom {a} fits in no bag")),
    };

    let mut connectedness = ConditionReport::ok();
    'vars: for v in q.vars() {
        let holders: Vec<usize> =
            (0..hd.chi.len()).filter(|&i| hd.chi[i].contains(&v)).collect();
        let mut local_roots = 0;
        for &i in &holders {
            match hd.parent[i] {
                Some(p) if hd.chi[p].contains(&v) => {}
                _ => local_roots += 1,
            }
        }
        if local_roots > 1 {
            connectedness = ConditionReport::fail(format!(
                "variable {} appears in {} disconnected parts of the tree",
                v.as_str(),
                local_roots
            ));
            break 'vars;
        }
    }

    let mut bag_within_label = ConditionReport::ok();
    for i in 0..hd.chi.len() {
        let label_vars: BTreeSet<Var> = hd.lambda[i].iter().flat_map(|a| a.vars()).collect();
        if let Some(v) = hd.chi[i].difference(&label_vars).next() {
            bag_within_label = ConditionReport::fail(format!(
                "vertex {} has bag variable {} outside its label",
                i,
                v.as_str()
            ));
            break;
        }
    }

    let mut descendant = ConditionReport::ok();
    for i in 0..hd.chi.len() {
        let label_vars: BTreeSet<Var> = hd.lambda[i].iter().flat_map(|a| a.vars()).collect();
        let below = hd.subtree_vars(i);
        if let Some(v) = label_vars
            .intersection(&below)
            .find(|v| !hd.chi[i].contains(v))
        {
            descendant = ConditionReport::fail(format!(
                "vertex {} drops label variable {} that reappears in its subtree",
                i,
                v.as_str()
            ));
            break;
        }
    }

    let completeness = match hd.first_uncovered(q) {
        None => ConditionReport::ok(),
        Some(a) => ConditionReport::fail(format!("atom {a} occurs in no label")),
    };

    ValidationReport { atom_coverage, connectedness, bag_within_label, descendant, completeness }
}

/// The assignment a raw tuple induces at `atom`, as a row over the
/// atom's sorted variables; `None` if the tuple does not match the
/// atom's constants/repetitions.
fn atom_match(atom: &Atom, tuple: &[Const]) -> Option<Vec<Const>> {
    if tuple.len() != atom.args.len() {
        return None;
    }
    let vars: Vec<Var> = atom.vars().into_iter().collect();
    let mut bound: Vec<Option<&Const>> = vec![None; vars.len()];
    for (term, value) in atom.args.iter().zip(tuple) {
        match term {
            Term::Const(c) => {
                if c != value {
                    return None;
                }
            }
            Term::Var(v) => {
                let slot = vars.binary_search(v).expect("atom variable");
                match bound[slot] {
                    Some(prev) if prev != value => return None,
                    _ => bound[slot] = Some(value),
                }
            }
        }
    }
    Some(bound.into_iter().map(|c| c.expect("all variables bound").clone()).collect())
}

/// Extends `hd` so every atom of `q` occurs in some label: each missing
/// atom gets a fresh leaf under a vertex whose bag covers its variables,
/// and — when its relation symbol occurs in no other atom — the atom's
/// relation is filtered down to the tuples matching that parent vertex.
///
/// Filtering is skipped for relation symbols shared by several atoms: a
/// tuple useless at one occurrence may still support another, so the
/// per-atom filter would be unsound there.
pub fn complete_hd(
    hd: &HypertreeDecomposition,
    q: &Query,
    db: &Database,
) -> Result<(HypertreeDecomposition, Database)> {
    let report = validate_hd(hd, q);
    if !report.valid_generalized() {
        let why = [
            &report.atom_coverage,
            &report.connectedness,
            &report.bag_within_label,
        ]
        .iter()
        .find_map(|c| c.witness.clone())
        .unwrap_or_default();
        return Err(Error::IncompatibleDecomposition(why));
    }

    let mut out = hd.clone();
    let mut filtered = db.clone();
    for atom in &q.atoms {
        if out.lambda.iter().any(|l| l.contains(atom)) {
            continue;
        }
        let vars = atom.vars();
        let host = (0..out.chi.len())
            .find(|&i| vars.is_subset(&out.chi[i]))
            .expect("condition (1) was just validated");
        out.chi.push(vars.clone());
        out.lambda.push(vec![atom.clone()]);
        out.parent.push(Some(host));

        let occurrences = q.atoms.iter().filter(|a| a.rel == atom.rel).count();
        if occurrences == 1 {
            let host_bag = out.chi[host].clone();
            let r_host = evaluate_atoms(&out.lambda[host], db)?.project(&host_bag)?;
            let matching = crate::relation::evaluate_atom(atom, db)?;
            let keep = matching.semijoin(&r_host);
            let tuples: Vec<Vec<Const>> = filtered
                .tuples(&atom.rel)?
                .iter()
                .filter(|t| match atom_match(atom, t) {
                    Some(row) => keep.contains_row(&row),
                    None => true,
                })
                .cloned()
                .collect();
            filtered.replace_relation(&atom.rel, tuples)?;
        }
    }
    Ok((out, filtered))
}

/// Converts a normal-form bag tree into a decomposition by labelling
/// every bag with its canonical covering view's provenance atoms.  A
/// forest is joined into a single tree under the first root (sound: the
/// extra links connect variable-disjoint parts).
pub fn nf_to_hd(nf: &NfTree, vs: &ViewSet) -> Result<HypertreeDecomposition> {
    let mut chi = Vec::new();
    let mut lambda = Vec::new();
    let mut parent = Vec::new();
    for (i, bag) in nf.bags.iter().enumerate() {
        let view = vs.covering_view(bag).ok_or_else(|| Error::UncoveredEdge {
            edge: bag.iter().map(|v| v.as_str()).collect::<Vec<_>>().join(","),
        })?;
        chi.push(bag.clone());
        lambda.push(view.provenance.clone());
        parent.push(match nf.parent[i] {
            Some(p) => Some(p),
            None if i == 0 => None,
            None => Some(0),
        });
    }
    HypertreeDecomposition::new(chi, lambda, parent)
}

/// A successful width-`k` structural decomposition: the core kept from
/// the colored query (markers stripped), the acyclic bag tree, and the
/// labelled decomposition.
#[derive(Clone, Debug)]
pub struct SharpDecomposition {
    pub k: usize,
    pub core: Query,
    pub nf: NfTree,
    pub hd: HypertreeDecomposition,
}

/// Tree-projection search for one explicit core: the lower hypergraph is
/// the core's hypergraph extended with the frontier edges of its
/// quantified variables with respect to the core's own free set.
pub fn sharp_decomposition_for_core(core_q: &Query, vs: &ViewSet) -> Result<Option<NfTree>> {
    sharp_decomposition_for_core_with(core_q, vs, &SearchOptions::default())
}

fn sharp_decomposition_for_core_with(
    core_q: &Query,
    vs: &ViewSet,
    opts: &SearchOptions,
) -> Result<Option<NfTree>> {
    let h_core = Hypergraph::of_query(core_q);
    let fh = h_core.frontier_hypergraph(&core_q.free_set());
    let h1 = h_core.union(&fh);
    let found = treeproj::nf_tree_projection(&h1, &vs.hypergraph(), opts, |_| true)?;
    if let Some(nf) = &found {
        // Independent re-check of the frontier coverage the search is
        // supposed to guarantee.
        let ha = nf.hypergraph();
        if !ha.covers(&fh) || !ha.covers(&h_core) {
            return Err(Error::IncompatibleDecomposition(
                "search returned a tree that misses a required hyperedge".into(),
            ));
        }
    }
    Ok(found)
}

/// Searches the cores of the colored query (up to `cores_to_try`) for
/// one admitting a tree projection within the view set that also covers
/// its frontier hypergraph.  Returns the acyclic hypergraph and the core
/// (with the color markers stripped back out).
pub fn sharp_decomposition(
    q: &Query,
    vs: &ViewSet,
    cores_to_try: usize,
) -> Result<Option<(Hypergraph, Query)>> {
    Ok(sharp_decomposition_nf(q, vs, cores_to_try)?.map(|(nf, core)| (nf.hypergraph(), core)))
}

/// As [`sharp_decomposition`], returning the witness bag tree.
pub fn sharp_decomposition_nf(
    q: &Query,
    vs: &ViewSet,
    cores_to_try: usize,
) -> Result<Option<(NfTree, Query)>> {
    let prefix = hom::color_prefix(q);
    let colored = hom::color(q);
    let cores = hom::enumerate_cores(&colored, cores_to_try.max(1))?;
    let mut budget: Option<Error> = None;
    for colored_core in &cores {
        let real: Vec<Atom> = colored_core
            .atoms
            .iter()
            .filter(|a| !a.rel.starts_with(&prefix))
            .cloned()
            .collect();
        let core_q = q.with_atoms(real)?;
        match sharp_decomposition_for_core(&core_q, vs) {
            Ok(Some(nf)) => return Ok(Some((nf, core_q))),
            Ok(None) => {}
            Err(e @ Error::SearchBudgetExceeded(_)) => budget = Some(e),
            Err(e) => return Err(e),
        }
    }
    match budget {
        // A truncated core search means absence is not certified.
        Some(e) => Err(e),
        None => Ok(None),
    }
}

/// Finds the smallest width `k ≤ kmax` (and at most the atom count) at
/// which the query admits a width-`k` decomposition covering its
/// frontier hypergraph, together with that decomposition.
///
/// If a truncated search at some width is followed by a success at a
/// larger width, the success is returned (the reported width is then an
/// upper bound); truncation with no success at all is an error.
pub fn sharp_hypertree_width(q: &Query, kmax: usize) -> Result<Option<SharpDecomposition>> {
    sharp_hypertree_width_with(q, kmax, DEFAULT_CORES_TO_TRY)
}

/// Default number of cores of the colored query the searches try.
pub const DEFAULT_CORES_TO_TRY: usize = 8;

/// As [`sharp_hypertree_width`] with an explicit core budget.
pub fn sharp_hypertree_width_with(
    q: &Query,
    kmax: usize,
    cores_to_try: usize,
) -> Result<Option<SharpDecomposition>> {
    if kmax < 1 {
        return Err(Error::InvalidWidth { width: kmax, max: q.atoms.len() });
    }
    let mut budget: Option<Error> = None;
    for k in 1..=kmax.min(q.atoms.len()) {
        let vs = build_view_set(q, k)?;
        match sharp_decomposition_nf(q, &vs, cores_to_try) {
            Ok(Some((nf, core))) => {
                let hd = nf_to_hd(&nf, &vs)?;
                return Ok(Some(SharpDecomposition { k, core, nf, hd }));
            }
            Ok(None) => {}
            Err(e @ Error::SearchBudgetExceeded(_)) => budget = Some(e),
            Err(e) => return Err(e),
        }
    }
    match budget {
        Some(e) => Err(e),
        None => Ok(None),
    }
}

/// Computes a width-`k` normal-form decomposition of the query hypergraph
/// minimizing the summed per-vertex cost `max_θ (w+1)^{|σ_θ(r_p)|}`, where
/// `w` is the atom count, `r_p` is the bag's projection of its label
/// join on `db`, and `θ` ranges over the free-variable assignments in
/// `r_p`.  Lower cost means lower worst-case degree, so the result has
/// the least degree bound among normal-form width-`k` decompositions.
pub fn d_optimal_nf(q: &Query, db: &Database, k: usize) -> Result<Option<HypertreeDecomposition>> {
    let vs = build_view_set(q, k)?;
    let h_q = Hypergraph::of_query(q);
    let free = q.free_set();
    let w_plus_1 = BigUint::from(q.atoms.len() as u64 + 1);
    let mut cost_err: Option<Error> = None;
    let found = {
        let cost = |bag: &BTreeSet<Var>| -> BigUint {
            match bag_cost(bag, &vs, db, &free, &w_plus_1) {
                Ok(c) => c,
                Err(e) => {
                    cost_err.get_or_insert(e);
                    BigUint::from(0u32)
                }
            }
        };
        treeproj::nf_min_cost(&h_q, &vs.hypergraph(), &SearchOptions::default(), cost)?
    };
    if let Some(e) = cost_err {
        return Err(e);
    }
    match found {
        Some((nf, _total)) => Ok(Some(nf_to_hd(&nf, &vs)?)),
        None => Ok(None),
    }
}

/// `max_θ (w+1)^{|σ_θ(r_p)|}` for one candidate bag: the worst
/// free-variable block size of the bag's covering-view join, as an exact
/// integer so huge degrees still compare correctly.
fn bag_cost(
    bag: &BTreeSet<Var>,
    vs: &ViewSet,
    db: &Database,
    free: &BTreeSet<Var>,
    w_plus_1: &BigUint,
) -> Result<BigUint> {
    let view = vs.covering_view(bag).ok_or_else(|| Error::UncoveredEdge {
        edge: bag.iter().map(|v| v.as_str()).collect::<Vec<_>>().join(","),
    })?;
    let r_p = evaluate_atoms(&view.provenance, db)?.project(bag)?;
    let free_here: BTreeSet<Var> = free.intersection(bag).cloned().collect();
    let worst = r_p
        .partition_by(&free_here)
        .into_iter()
        .map(|(_, block)| block.len())
        .max()
        .unwrap_or(0);
    Ok(w_plus_1.pow(worst as u32))
}
