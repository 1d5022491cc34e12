//! Search for an acyclic hypergraph sandwiched between two hypergraphs.
//!
//! `tree_projection(h1, h2)` looks for an acyclic hypergraph whose edges
//! cover every edge of `h1` while each being contained in some edge of
//! `h2`.  The search works in normal form: it picks a bag (a subset of a
//! single `h2` edge) for the current connected component, splits the
//! remainder into `[bag]`-components, and recurses with one child subtree
//! per component.  Subproblems are memoized on (component, connector)
//! pairs, so the search is complete at the instance sizes this crate
//! targets.
//!
//! Two refinements share the same candidate generation:
//! - a filtered search that admits only bags passing a caller predicate
//!   (used to enforce per-bag degree bounds), and
//! - an exhaustive minimum-cost search that returns a normal-form tree
//!   minimizing the sum of a per-bag cost (used for data-optimal
//!   decompositions).
//!
//! Candidate enumeration is capped per `h2` edge; when a cap truncates
//! the space and no tree is found, the search reports
//! [`Error::SearchBudgetExceeded`] instead of a false "absent".

use std::collections::{BTreeSet, HashMap};
use std::rc::Rc;

use num_bigint::BigUint;

use crate::error::{Error, Result};
use crate::hypergraph::{gyo_reduce, Hypergraph};
use crate::query::Var;

/// Vertex sets are bitmasks over the (sorted) vertices of `h1`.
type Mask = u128;

/// Knobs for the normal-form search.
#[derive(Clone, Debug)]
pub struct SearchOptions {
    /// Maximum number of candidate bags enumerated from a single `h2`
    /// edge while expanding one (component, connector) subproblem.
    pub subsets_per_edge: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions { subsets_per_edge: 1 << 14 }
    }
}

/// A rooted forest of bags produced by the normal-form search.
///
/// Vertices are indexed so that every parent precedes its children; roots
/// carry `None`.  The same bag may occur at several vertices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NfTree {
    pub bags: Vec<BTreeSet<Var>>,
    pub parent: Vec<Option<usize>>,
}

impl NfTree {
    /// The bags as a hypergraph (duplicates collapse).
    pub fn hypergraph(&self) -> Hypergraph {
        Hypergraph::new(self.bags.iter().cloned())
    }
}

/// Searches for an acyclic hypergraph `ha` with `covers(h1, ha)` and
/// `covers(ha, h2)` (every `h1` edge inside some bag, every bag inside
/// some `h2` edge).  Returns `Ok(None)` only when the exhaustive search
/// certifies absence; a truncated search surfaces as an error.
pub fn tree_projection(h1: &Hypergraph, h2: &Hypergraph) -> Result<Option<Hypergraph>> {
    let found = nf_tree_projection(h1, h2, &SearchOptions::default(), |_| true)?;
    Ok(found.map(|t| {
        let ha = t.hypergraph();
        debug_assert!(ha.covers(h1), "result must cover the lower hypergraph");
        debug_assert!(h2.covers(&ha), "result must be covered by the upper hypergraph");
        debug_assert!(gyo_reduce(&ha).is_some(), "result must be acyclic");
        ha
    }))
}

/// Normal-form search returning the witness forest; `accept` filters
/// candidate bags (bags it rejects are simply not used — rejection never
/// counts as budget truncation).
pub fn nf_tree_projection(
    h1: &Hypergraph,
    h2: &Hypergraph,
    opts: &SearchOptions,
    accept: impl FnMut(&BTreeSet<Var>) -> bool,
) -> Result<Option<NfTree>> {
    let Some(mut s) = Searcher::new(h1, h2, opts, accept)? else {
        return Ok(None);
    };
    let mut roots = Vec::new();
    let mut all_found = true;
    for comp in components(&s.h1, s.full) {
        match s.solve(comp, 0) {
            Some(node) => roots.push(node),
            None => {
                all_found = false;
                break;
            }
        }
    }
    if all_found {
        return Ok(Some(forest_to_tree(&roots, &s.vars)));
    }
    if s.truncated {
        return Err(Error::SearchBudgetExceeded(
            "candidate-bag cap hit before the bag space was exhausted".into(),
        ));
    }
    Ok(None)
}

/// Exhaustive normal-form search minimizing the sum of `cost` over all
/// vertices of the tree.  Returns the minimizing tree and its total cost.
pub fn nf_min_cost(
    h1: &Hypergraph,
    h2: &Hypergraph,
    opts: &SearchOptions,
    cost: impl FnMut(&BTreeSet<Var>) -> BigUint,
) -> Result<Option<(NfTree, BigUint)>> {
    let Some(mut s) = CostSearcher::new(h1, h2, opts, cost)? else {
        return Ok(None);
    };
    let mut roots = Vec::new();
    let mut total = BigUint::from(0u32);
    let mut all_found = true;
    for comp in components(&s.inner.h1, s.inner.full) {
        match s.solve(comp, 0) {
            Some((node, c)) => {
                roots.push(node);
                total += c;
            }
            None => {
                all_found = false;
                break;
            }
        }
    }
    if all_found {
        return Ok(Some((forest_to_tree(&roots, &s.inner.vars), total)));
    }
    if s.inner.truncated {
        return Err(Error::SearchBudgetExceeded(
            "candidate-bag cap hit before the bag space was exhausted".into(),
        ));
    }
    Ok(None)
}

/// One vertex of a witness tree, shared via `Rc` so memo hits reuse
/// whole subtrees.
struct Node {
    bag: Mask,
    children: Vec<Rc<Node>>,
}

enum Memo {
    Found(Rc<Node>),
    Absent { truncated: bool },
}

/// State shared by both search variants: the bitmask encoding, candidate
/// generation, and the truncation flag.
struct Core {
    vars: Vec<Var>,
    h1: Vec<Mask>,
    h2: Vec<Mask>,
    full: Mask,
    cap: usize,
    truncated: bool,
}

impl Core {
    /// Encodes the instance; `Ok(None)` means a certified immediate
    /// absence (some `h1` edge fits inside no `h2` edge).
    fn new(h1: &Hypergraph, h2: &Hypergraph, opts: &SearchOptions) -> Result<Option<Core>> {
        let vars: Vec<Var> = h1.nodes().iter().cloned().collect();
        if vars.len() > 128 {
            return Err(Error::SearchBudgetExceeded(format!(
                "hypergraph has {} vertices; the search handles at most 128",
                vars.len()
            )));
        }
        if !h2.covers(h1) {
            return Ok(None);
        }
        let index: HashMap<&Var, u32> =
            vars.iter().enumerate().map(|(i, v)| (v, i as u32)).collect();
        let to_mask = |edge: &BTreeSet<Var>| -> Mask {
            edge.iter()
                .filter_map(|v| index.get(v))
                .fold(0, |m, &i| m | (1u128 << i))
        };
        let h1_masks: Vec<Mask> = h1.edges().iter().map(&to_mask).collect();
        // Restrict h2 edges to the h1 vertices, drop the empty and the
        // non-maximal ones (a subset edge offers no candidate bag its
        // superset does not), and order the rest canonically so the
        // first witness found is the same on every run.
        let mut restricted: Vec<(Vec<Var>, Mask)> = h2
            .edges()
            .iter()
            .map(|e| to_mask(e))
            .filter(|&m| m != 0)
            .collect::<BTreeSet<Mask>>()
            .into_iter()
            .map(|m| (mask_vars(m, &vars).into_iter().collect(), m))
            .collect();
        let masks: Vec<Mask> = restricted.iter().map(|(_, m)| *m).collect();
        restricted.retain(|(_, m)| !masks.iter().any(|&other| other != *m && other & *m == *m));
        restricted.sort();
        let h2_masks: Vec<Mask> = restricted.into_iter().map(|(_, m)| m).collect();
        let full = h1_masks.iter().fold(0, |m, e| m | e);
        Ok(Some(Core {
            vars,
            h1: h1_masks,
            h2: h2_masks,
            full,
            cap: opts.subsets_per_edge.max(1),
            truncated: false,
        }))
    }

    /// All candidate bags for `(component, connector)` drawn from one
    /// `h2` edge: `connector ∪ t` for nonempty `t ⊆ edge ∩ component`,
    /// largest `t` first, lexicographic within a size.  Capped.
    fn candidates_from_edge(&mut self, edge: Mask, comp: Mask, conn: Mask) -> Vec<Mask> {
        let mut out = Vec::new();
        if conn & !edge != 0 {
            return out;
        }
        let avail = edge & comp;
        if avail == 0 {
            return out;
        }
        let positions: Vec<u32> = (0..128).filter(|i| avail & (1u128 << i) != 0).collect();
        let n = positions.len();
        'sizes: for size in (1..=n).rev() {
            // Lexicographic combinations of `size` positions.
            let mut idx: Vec<usize> = (0..size).collect();
            loop {
                if out.len() >= self.cap {
                    self.truncated = true;
                    break 'sizes;
                }
                let t: Mask = idx.iter().fold(0, |m, &i| m | (1u128 << positions[i]));
                out.push(conn | t);
                // Advance to the lexicographically next combination:
                // bump the rightmost index that still has room.
                let mut i = size;
                while i > 0 && idx[i - 1] == i - 1 + n - size {
                    i -= 1;
                }
                if i == 0 {
                    continue 'sizes;
                }
                idx[i - 1] += 1;
                for j in i..size {
                    idx[j] = idx[j - 1] + 1;
                }
            }
        }
        out
    }

    /// Union of the `h1` edges meeting `comp`.
    fn neighborhood(&self, comp: Mask) -> Mask {
        self.h1
            .iter()
            .filter(|&&e| e & comp != 0)
            .fold(0, |m, &e| m | e)
    }

    fn varset(&self, mask: Mask) -> BTreeSet<Var> {
        mask_vars(mask, &self.vars).into_iter().collect()
    }
}

/// Splits `rest` into maximal sets connected through `h1` edges.
fn components(h1: &[Mask], mut rest: Mask) -> Vec<Mask> {
    let mut out = Vec::new();
    while rest != 0 {
        let mut comp = rest & rest.wrapping_neg();
        loop {
            let mut grown = comp;
            for &e in h1 {
                if e & comp != 0 {
                    grown |= e & rest;
                }
            }
            if grown == comp {
                break;
            }
            comp = grown;
        }
        out.push(comp);
        rest &= !comp;
    }
    out
}

fn mask_vars(mask: Mask, vars: &[Var]) -> Vec<Var> {
    (0..128)
        .filter(|i| mask & (1u128 << i) != 0)
        .map(|i| vars[i as usize].clone())
        .collect()
}

fn forest_to_tree(roots: &[Rc<Node>], vars: &[Var]) -> NfTree {
    let mut bags = Vec::new();
    let mut parent = Vec::new();
    let mut stack: Vec<(Option<usize>, &Rc<Node>)> =
        roots.iter().rev().map(|r| (None, r)).collect();
    while let Some((par, node)) = stack.pop() {
        let id = bags.len();
        bags.push(mask_vars(node.bag, vars).into_iter().collect());
        parent.push(par);
        for child in node.children.iter().rev() {
            stack.push((Some(id), child));
        }
    }
    NfTree { bags, parent }
}

/// First-witness search with an acceptance predicate on bags.
struct Searcher<F: FnMut(&BTreeSet<Var>) -> bool> {
    core: Core,
    accept: F,
    memo: HashMap<(Mask, Mask), Memo>,
}

impl<F: FnMut(&BTreeSet<Var>) -> bool> std::ops::Deref for Searcher<F> {
    type Target = Core;
    fn deref(&self) -> &Core {
        &self.core
    }
}

impl<F: FnMut(&BTreeSet<Var>) -> bool> Searcher<F> {
    fn new(
        h1: &Hypergraph,
        h2: &Hypergraph,
        opts: &SearchOptions,
        accept: F,
    ) -> Result<Option<Self>> {
        Ok(Core::new(h1, h2, opts)?.map(|core| Searcher {
            core,
            accept,
            memo: HashMap::new(),
        }))
    }

    /// Finds a tree whose root bag contains `conn`, covers component `c`,
    /// and introduces only vertices from `c`.
    fn solve(&mut self, c: Mask, conn: Mask) -> Option<Rc<Node>> {
        if let Some(hit) = self.memo.get(&(c, conn)) {
            return match hit {
                Memo::Found(node) => Some(node.clone()),
                Memo::Absent { truncated } => {
                    if *truncated {
                        self.core.truncated = true;
                    }
                    None
                }
            };
        }
        // Track truncation within this subproblem alone, so a certified
        // "absent" is distinguishable from a budget-limited one.
        let outer_truncated = std::mem::replace(&mut self.core.truncated, false);
        let mut found = None;
        'search: for ei in 0..self.core.h2.len() {
            let edge = self.core.h2[ei];
            for bag in self.core.candidates_from_edge(edge, c, conn) {
                let bag_vars = self.core.varset(bag);
                if !(self.accept)(&bag_vars) {
                    continue;
                }
                let mut children = Vec::new();
                let mut complete = true;
                for comp in components(&self.core.h1, c & !bag) {
                    let child_conn = bag & self.core.neighborhood(comp);
                    match self.solve(comp, child_conn) {
                        Some(node) => children.push(node),
                        None => {
                            complete = false;
                            break;
                        }
                    }
                }
                if complete {
                    found = Some(Rc::new(Node { bag, children }));
                    break 'search;
                }
            }
        }
        let here_truncated = self.core.truncated;
        self.core.truncated = outer_truncated || here_truncated;
        match &found {
            Some(node) => {
                self.memo.insert((c, conn), Memo::Found(node.clone()));
            }
            None => {
                self.memo
                    .insert((c, conn), Memo::Absent { truncated: here_truncated });
            }
        }
        found
    }
}

/// Exhaustive minimum-cost search; memoizes the best (tree, cost) per
/// subproblem and caches bag costs.
struct CostSearcher<F: FnMut(&BTreeSet<Var>) -> BigUint> {
    inner: Core,
    cost: F,
    memo: HashMap<(Mask, Mask), (Option<(Rc<Node>, BigUint)>, bool)>,
    bag_cost: HashMap<Mask, BigUint>,
}

impl<F: FnMut(&BTreeSet<Var>) -> BigUint> CostSearcher<F> {
    fn new(
        h1: &Hypergraph,
        h2: &Hypergraph,
        opts: &SearchOptions,
        cost: F,
    ) -> Result<Option<Self>> {
        Ok(Core::new(h1, h2, opts)?.map(|inner| CostSearcher {
            inner,
            cost,
            memo: HashMap::new(),
            bag_cost: HashMap::new(),
        }))
    }

    fn cost_of(&mut self, bag: Mask) -> BigUint {
        if let Some(c) = self.bag_cost.get(&bag) {
            return c.clone();
        }
        let c = (self.cost)(&self.inner.varset(bag));
        self.bag_cost.insert(bag, c.clone());
        c
    }

    fn solve(&mut self, c: Mask, conn: Mask) -> Option<(Rc<Node>, BigUint)> {
        if let Some((hit, truncated)) = self.memo.get(&(c, conn)) {
            if *truncated {
                self.inner.truncated = true;
            }
            return hit.clone();
        }
        let outer_truncated = std::mem::replace(&mut self.inner.truncated, false);
        let mut best: Option<(Rc<Node>, BigUint)> = None;
        for ei in 0..self.inner.h2.len() {
            let edge = self.inner.h2[ei];
            for bag in self.inner.candidates_from_edge(edge, c, conn) {
                let mut total = self.cost_of(bag);
                let mut children = Vec::new();
                let mut complete = true;
                for comp in components(&self.inner.h1, c & !bag) {
                    let child_conn = bag & self.inner.neighborhood(comp);
                    match self.solve(comp, child_conn) {
                        Some((node, child_cost)) => {
                            children.push(node);
                            total += child_cost;
                        }
                        None => {
                            complete = false;
                            break;
                        }
                    }
                }
                if complete && best.as_ref().map_or(true, |(_, b)| total < *b) {
                    best = Some((Rc::new(Node { bag, children }), total));
                }
            }
        }
        let here_truncated = self.inner.truncated;
        self.inner.truncated = outer_truncated || here_truncated;
        self.memo.insert((c, conn), (best.clone(), here_truncated));
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypergraph::is_acyclic;

    fn vs(names: &[&str]) -> BTreeSet<Var> {
        names.iter().map(|n| Var::new(*n)).collect()
    }

    fn hg(edges: &[&[&str]]) -> Hypergraph {
        Hypergraph::new(edges.iter().map(|e| vs(e)))
    }

    fn sandwich_ok(h1: &Hypergraph, ha: &Hypergraph, h2: &Hypergraph) -> bool {
        ha.covers(h1) && h2.covers(ha) && is_acyclic(ha)
    }

    #[test]
    fn acyclic_hypergraph_projects_onto_itself() {
        let h = hg(&[&["A", "B"], &["B", "C"]]);
        let ha = tree_projection(&h, &h).unwrap().expect("path is acyclic");
        assert!(sandwich_ok(&h, &ha, &h));
        assert_eq!(ha.edges(), h.edges());
    }

    #[test]
    fn triangle_has_no_projection_within_itself() {
        let h = hg(&[&["A", "B"], &["B", "C"], &["C", "A"]]);
        assert_eq!(tree_projection(&h, &h).unwrap(), None);
    }

    #[test]
    fn four_cycle_resolves_with_two_triple_views() {
        let h1 = hg(&[&["A", "B"], &["B", "C"], &["C", "D"], &["D", "A"]]);
        let h2 = hg(&[
            &["A", "B", "C"],
            &["A", "C", "D"],
            &["A", "B"],
            &["B", "C"],
            &["C", "D"],
            &["D", "A"],
        ]);
        let ha = tree_projection(&h1, &h2).unwrap().expect("sandwich exists");
        assert!(sandwich_ok(&h1, &ha, &h2));
        assert!(ha.edges().contains(&vs(&["A", "B", "C"])));
        assert!(ha.edges().contains(&vs(&["A", "C", "D"])));
    }

    #[test]
    fn uncoverable_edge_is_immediately_absent() {
        let h1 = hg(&[&["A", "B", "C"]]);
        let h2 = hg(&[&["A", "B"], &["B", "C"]]);
        assert_eq!(tree_projection(&h1, &h2).unwrap(), None);
    }

    #[test]
    fn disconnected_lower_hypergraph_yields_a_forest() {
        let h = hg(&[&["A", "B"], &["C", "D"]]);
        let t = nf_tree_projection(&h, &h, &SearchOptions::default(), |_| true)
            .unwrap()
            .expect("two independent edges");
        assert_eq!(t.bags.len(), 2);
        assert_eq!(t.parent, vec![None, None]);
        assert!(sandwich_ok(&h, &t.hypergraph(), &h));
    }

    #[test]
    fn tiny_budget_reports_truncation_not_absence() {
        let h = hg(&[&["A", "B"], &["B", "C"], &["C", "A"]]);
        // With one candidate per edge the triangle's absence can no
        // longer be certified.
        let r = nf_tree_projection(&h, &h, &SearchOptions { subsets_per_edge: 1 }, |_| true);
        assert!(matches!(r, Err(Error::SearchBudgetExceeded(_))));
    }

    #[test]
    fn filter_rejections_do_not_count_as_truncation() {
        let h1 = hg(&[&["A", "B"], &["B", "C"], &["C", "D"], &["D", "A"]]);
        let h2 = hg(&[&["A", "B", "C"], &["A", "C", "D"]]);
        // Rejecting every 3-variable bag leaves nothing that can cover
        // the cycle: certified absent, not a budget error.
        let r = nf_tree_projection(&h1, &h2, &SearchOptions::default(), |bag| bag.len() < 3)
            .unwrap();
        assert_eq!(r, None);
    }

    #[test]
    fn filtered_search_still_finds_admissible_trees() {
        let h = hg(&[&["A", "B"], &["B", "C"]]);
        let t = nf_tree_projection(&h, &h, &SearchOptions::default(), |bag| bag.len() <= 2)
            .unwrap()
            .expect("the path itself passes the filter");
        assert_eq!(t.hypergraph().edges(), h.edges());
    }

    #[test]
    fn min_cost_search_weighs_bag_count_against_bag_size() {
        let h1 = hg(&[&["A", "B"], &["B", "C"]]);
        let h2 = hg(&[&["A", "B"], &["B", "C"], &["A", "B", "C"]]);
        // Quadratic cost favours two small bags (4 + 4 < 9)...
        let (t, total) = nf_min_cost(&h1, &h2, &SearchOptions::default(), |bag| {
            BigUint::from((bag.len() * bag.len()) as u64)
        })
        .unwrap()
        .expect("projection exists");
        assert_eq!(t.bags.len(), 2);
        assert_eq!(total, BigUint::from(8u32));
        // ...while linear cost favours the single wide bag (3 < 2 + 2).
        let (t, total) = nf_min_cost(&h1, &h2, &SearchOptions::default(), |bag| {
            BigUint::from(bag.len() as u64)
        })
        .unwrap()
        .expect("projection exists");
        assert_eq!(t.bags.len(), 1);
        assert_eq!(total, BigUint::from(3u32));
    }

    #[test]
    fn min_cost_matches_existence_on_absence() {
        let h = hg(&[&["A", "B"], &["B", "C"], &["C", "A"]]);
        let r = nf_min_cost(&h, &h, &SearchOptions::default(), |_| BigUint::from(1u32)).unwrap();
        assert_eq!(r.map(|(_, c)| c), None);
    }

    #[test]
    fn parents_precede_children_in_the_returned_tree() {
        let h1 = hg(&[&["A", "B"], &["B", "C"], &["C", "D"]]);
        let t = nf_tree_projection(&h1, &h1, &SearchOptions::default(), |_| true)
            .unwrap()
            .expect("path");
        for (i, p) in t.parent.iter().enumerate() {
            if let Some(p) = p {
                assert!(*p < i);
            }
        }
        // Every non-root bag shares at least one variable with its parent
        // (connectedness of the witness).
        for (i, p) in t.parent.iter().enumerate() {
            if let Some(p) = p {
                assert!(!t.bags[i].is_disjoint(&t.bags[*p]));
            }
        }
    }
}
