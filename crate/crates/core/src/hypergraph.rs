//! Query hypergraphs: components, frontiers, acyclicity tests and join trees.
//!
//! The hypergraph of a query has the query's variables as nodes and one
//! hyperedge per atom (the atom's variable set). Everything downstream —
//! decomposition search, frontier analysis, consistency — works on this
//! structure rather than on the query directly.

use std::collections::{BTreeMap, BTreeSet};

use crate::query::{Query, Var};

/// A hypergraph over variables. Edges are kept sorted and deduplicated;
/// empty edges are discarded on construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hypergraph {
    nodes: BTreeSet<Var>,
    edges: Vec<BTreeSet<Var>>,
}

impl Hypergraph {
    pub fn new(edges: impl IntoIterator<Item = BTreeSet<Var>>) -> Self {
        let mut edges: Vec<BTreeSet<Var>> =
            edges.into_iter().filter(|e| !e.is_empty()).collect();
        edges.sort();
        edges.dedup();
        let nodes = edges.iter().flatten().cloned().collect();
        Hypergraph { nodes, edges }
    }

    /// The hypergraph of a query: one edge per atom's variable set.
    pub fn of_query(q: &Query) -> Self {
        Hypergraph::new(q.atoms.iter().map(|a| a.vars()))
    }

    pub fn nodes(&self) -> &BTreeSet<Var> {
        &self.nodes
    }

    pub fn edges(&self) -> &[BTreeSet<Var>] {
        &self.edges
    }

    pub fn has_edge(&self, e: &BTreeSet<Var>) -> bool {
        self.edges.binary_search(e).is_ok()
    }

    /// Edge-union of two hypergraphs.
    pub fn union(&self, other: &Hypergraph) -> Hypergraph {
        Hypergraph::new(self.edges.iter().chain(other.edges.iter()).cloned())
    }

    /// Every edge of `other` is contained in some edge of `self`.
    pub fn covers(&self, other: &Hypergraph) -> bool {
        other
            .edges
            .iter()
            .all(|e| self.edges.iter().any(|h| e.is_subset(h)))
    }

    /// The `[w]`-components: maximal sets of nodes outside `w` connected via
    /// edges with `w` removed. Sorted by their smallest member.
    pub fn w_components(&self, w: &BTreeSet<Var>) -> Vec<BTreeSet<Var>> {
        let mut unvisited: BTreeSet<&Var> =
            self.nodes.iter().filter(|v| !w.contains(v)).collect();
        let mut comps = Vec::new();
        while let Some(start) = unvisited.iter().next().cloned() {
            let mut comp: BTreeSet<Var> = BTreeSet::new();
            let mut queue = vec![start.clone()];
            unvisited.remove(start);
            while let Some(v) = queue.pop() {
                comp.insert(v.clone());
                for edge in &self.edges {
                    if !edge.contains(&v) {
                        continue;
                    }
                    for u in edge {
                        if !w.contains(u) && unvisited.remove(u) {
                            queue.push(u.clone());
                        }
                    }
                }
            }
            comps.push(comp);
        }
        comps
    }

    /// Edges meeting a node set.
    pub fn edges_meeting(&self, c: &BTreeSet<Var>) -> Vec<&BTreeSet<Var>> {
        self.edges.iter().filter(|e| !e.is_disjoint(c)).collect()
    }

    /// The frontier of `y` w.r.t. `w`: empty when `y` is in `w`, otherwise
    /// the part of `w` touched by the edges of the `[w]`-component of `y`.
    pub fn frontier(&self, y: &Var, w: &BTreeSet<Var>) -> BTreeSet<Var> {
        if w.contains(y) || !self.nodes.contains(y) {
            return BTreeSet::new();
        }
        let comp = self
            .w_components(w)
            .into_iter()
            .find(|c| c.contains(y))
            .expect("node outside w lies in some component");
        let mut fr = BTreeSet::new();
        for edge in self.edges_meeting(&comp) {
            for v in edge {
                if w.contains(v) {
                    fr.insert(v.clone());
                }
            }
        }
        fr
    }

    /// The frontier hypergraph w.r.t. `w`: the frontiers of all nodes plus
    /// the edges already contained in `w`.
    pub fn frontier_hypergraph(&self, w: &BTreeSet<Var>) -> Hypergraph {
        let mut edges: Vec<BTreeSet<Var>> = Vec::new();
        // All nodes of one [w]-component share a frontier, so compute one
        // frontier per component instead of one per node.
        for comp in self.w_components(w) {
            let mut fr = BTreeSet::new();
            for edge in self.edges_meeting(&comp) {
                for v in edge {
                    if w.contains(v) {
                        fr.insert(v.clone());
                    }
                }
            }
            edges.push(fr);
        }
        edges.extend(self.edges.iter().filter(|e| e.is_subset(w)).cloned());
        Hypergraph::new(edges)
    }
}

/// A rooted tree whose nodes are hyperedges, produced by GYO reduction of an
/// acyclic hypergraph. Node 0 is the root; `parent[0]` is `None`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JoinTree {
    pub edges: Vec<BTreeSet<Var>>,
    pub parent: Vec<Option<usize>>,
}

impl JoinTree {
    pub fn children(&self, p: usize) -> Vec<usize> {
        (0..self.edges.len())
            .filter(|&i| self.parent[i] == Some(p))
            .collect()
    }

    /// Node indices in an order where every parent precedes its children.
    pub fn topological(&self) -> Vec<usize> {
        let mut order = vec![0];
        let mut i = 0;
        while i < order.len() {
            order.extend(self.children(order[i]));
            i += 1;
        }
        order
    }
}

/// GYO reduction: repeatedly remove ears (edges whose private part can be
/// absorbed by a neighbour). Succeeds iff the hypergraph is acyclic,
/// returning a join tree over its distinct edges. Ears are removed
/// smallest-first so the result is deterministic. A disconnected acyclic
/// hypergraph yields one tree: the extra roots are attached under the first,
/// which is harmless since their variable sets are disjoint.
pub fn gyo_reduce(h: &Hypergraph) -> Option<JoinTree> {
    let edges: Vec<BTreeSet<Var>> = h.edges().to_vec();
    if edges.is_empty() {
        return None;
    }
    let n = edges.len();
    let mut alive: Vec<bool> = vec![true; n];
    let mut parent_of: Vec<Option<usize>> = vec![None; n];
    let mut removed = 0usize;
    loop {
        let mut progress = false;
        for i in 0..n {
            if !alive[i] {
                continue;
            }
            // Nodes of edge i that also appear in another living edge.
            let shared: BTreeSet<&Var> = edges[i]
                .iter()
                .filter(|v| {
                    (0..n).any(|j| j != i && alive[j] && edges[j].contains(v))
                })
                .collect();
            let witness = (0..n)
                .find(|&j| j != i && alive[j] && shared.iter().all(|v| edges[j].contains(*v)));
            let lone = removed == n - 1;
            if let Some(j) = witness {
                alive[i] = false;
                parent_of[i] = Some(j);
                removed += 1;
                progress = true;
            } else if shared.is_empty() && !lone {
                // Isolated edge: becomes the root of its own component.
                alive[i] = false;
                removed += 1;
                progress = true;
            }
        }
        if alive.iter().filter(|a| **a).count() <= 1 {
            break;
        }
        if !progress {
            return None;
        }
    }
    // Re-root: the surviving edge is the global root; roots of other
    // components hang beneath it.
    let root = (0..n).find(|&i| alive[i])?;
    let mut order: Vec<usize> = vec![root];
    let mut placed: BTreeMap<usize, usize> = BTreeMap::new();
    placed.insert(root, 0);
    // Emit nodes so parents precede children in the output indexing.
    loop {
        let mut moved = false;
        for i in 0..n {
            if placed.contains_key(&i) {
                continue;
            }
            match parent_of[i] {
                Some(p) => {
                    if placed.contains_key(&p) {
                        placed.insert(i, order.len());
                        order.push(i);
                        moved = true;
                    }
                }
                None => {
                    // Component root other than the global root.
                    placed.insert(i, order.len());
                    order.push(i);
                    moved = true;
                }
            }
        }
        if placed.len() == n {
            break;
        }
        if !moved {
            return None; // cycle in parent links: cannot happen
        }
    }
    let mut out_edges = Vec::with_capacity(n);
    let mut out_parent = Vec::with_capacity(n);
    for &i in &order {
        out_edges.push(edges[i].clone());
        let p = match parent_of[i] {
            Some(p) => Some(placed[&p]),
            None if i == root => None,
            None => Some(0),
        };
        out_parent.push(p);
    }
    Some(JoinTree { edges: out_edges, parent: out_parent })
}

/// Whether the hypergraph is acyclic (GYO-reducible).
pub fn is_acyclic(h: &Hypergraph) -> bool {
    h.edges().is_empty() || gyo_reduce(h).is_some()
}

/// Size of a maximum independent set within `within`, where two variables
/// are adjacent iff they share an edge of `h`.
fn max_independent_set(h: &Hypergraph, within: &BTreeSet<Var>) -> usize {
    let vars: Vec<&Var> = within.iter().collect();
    let n = vars.len();
    assert!(n <= 62, "independent set on {n} nodes not supported");
    let mut adj: Vec<u64> = vec![0; n];
    for (i, a) in vars.iter().enumerate() {
        for (j, b) in vars.iter().enumerate() {
            if i != j && h.edges().iter().any(|e| e.contains(a) && e.contains(b)) {
                adj[i] |= 1 << j;
            }
        }
    }
    fn go(adj: &[u64], free: u64, best: &mut usize, picked: usize) {
        if free == 0 {
            *best = (*best).max(picked);
            return;
        }
        if picked + (free.count_ones() as usize) <= *best {
            return;
        }
        let v = free.trailing_zeros() as usize;
        // Either take v (dropping its neighbours) or skip it.
        go(adj, free & !(1 << v) & !adj[v], best, picked + 1);
        go(adj, free & !(1 << v), best, picked);
    }
    let mut best = 0;
    go(&adj, (1u64 << n) - 1, &mut best, 0);
    best
}

/// The quantified star size of a query: the largest independent set of
/// variables inside the frontier of any quantified variable.
pub fn quantified_star_size(q: &Query) -> usize {
    let h = Hypergraph::of_query(q);
    let free = q.free_set();
    let mut best = 0;
    for comp in h.w_components(&free) {
        let y = comp.iter().next().expect("components are non-empty");
        let fr = h.frontier(y, &free);
        best = best.max(max_independent_set(&h, &fr));
    }
    best
}
