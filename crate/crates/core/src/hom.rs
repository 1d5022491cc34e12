//! Homomorphisms between queries, query coloring, and cores.
//!
//! A homomorphism maps the variables of one query to terms of another so
//! that every atom lands on an atom of the target. Constants map to
//! themselves. A core is a minimal subquery reachable by deleting atoms
//! while a homomorphism back onto the remainder exists; counting works on
//! cores of the *colored* query, where one marker atom per free variable
//! pins the free variables in place.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::collections::HashSet;

use crate::error::Result;
use crate::query::{Atom, Const, Database, Query, Term, Var};

/// A variable-to-term mapping witnessing a homomorphism.
pub type Hom = BTreeMap<Var, Term>;

/// Find a homomorphism from `from` to `to` that is the identity on
/// `pinned`, or `None` if there is none. The search assigns variables in
/// sorted order trying candidate terms in sorted order, so the witness is
/// deterministic (lexicographically least).
pub fn find_homomorphism(from: &Query, to: &Query, pinned: &BTreeSet<Var>) -> Option<Hom> {
    let vars: Vec<Var> = from.vars().into_iter().collect();
    let index: BTreeMap<&Var, usize> =
        vars.iter().enumerate().map(|(i, v)| (v, i)).collect();
    let mut by_rel: BTreeMap<&str, Vec<&Atom>> = BTreeMap::new();
    for atom in &to.atoms {
        by_rel.entry(atom.rel.as_str()).or_default().push(atom);
    }

    // Candidate terms per variable: intersection over the variable's
    // occurrence positions of the terms found there in `to`.
    let mut domains: Vec<Option<BTreeSet<Term>>> = vec![None; vars.len()];
    let mut ready_at: Vec<Vec<&Atom>> = vec![Vec::new(); vars.len()];
    for atom in &from.atoms {
        let targets = by_rel.get(atom.rel.as_str()).cloned().unwrap_or_default();
        let mut last_var: Option<usize> = None;
        for (pos, term) in atom.args.iter().enumerate() {
            if let Term::Var(v) = term {
                let i = index[v];
                last_var = Some(last_var.map_or(i, |l| l.max(i)));
                let here: BTreeSet<Term> =
                    targets.iter().map(|a| a.args[pos].clone()).collect();
                domains[i] = Some(match domains[i].take() {
                    None => here,
                    Some(d) => d.intersection(&here).cloned().collect(),
                });
            }
        }
        match last_var {
            Some(i) => ready_at[i].push(atom),
            None => {
                // Ground atom: it must literally appear in the target.
                if !targets.iter().any(|a| a.args == atom.args) {
                    return None;
                }
            }
        }
    }
    let mut domains: Vec<Vec<Term>> = domains
        .into_iter()
        .map(|d| d.expect("every variable occurs in the body").into_iter().collect())
        .collect();
    for (i, v) in vars.iter().enumerate() {
        if pinned.contains(v) {
            let keep = Term::Var(v.clone());
            if !domains[i].contains(&keep) {
                return None;
            }
            domains[i] = vec![keep];
        }
    }

    let target_tuples: BTreeMap<&str, HashSet<&[Term]>> = by_rel
        .iter()
        .map(|(r, atoms)| (*r, atoms.iter().map(|a| a.args.as_slice()).collect()))
        .collect();

    fn go(
        depth: usize,
        vars: &[Var],
        domains: &[Vec<Term>],
        ready_at: &[Vec<&Atom>],
        target_tuples: &BTreeMap<&str, HashSet<&[Term]>>,
        assignment: &mut Vec<Option<Term>>,
        index: &BTreeMap<&Var, usize>,
    ) -> bool {
        if depth == vars.len() {
            return true;
        }
        'candidates: for value in &domains[depth] {
            assignment[depth] = Some(value.clone());
            for atom in &ready_at[depth] {
                let mapped: Vec<Term> = atom
                    .args
                    .iter()
                    .map(|t| match t {
                        Term::Var(v) => assignment[index[v]].clone().expect("ready"),
                        c => c.clone(),
                    })
                    .collect();
                let ok = target_tuples
                    .get(atom.rel.as_str())
                    .is_some_and(|s| s.contains(mapped.as_slice()));
                if !ok {
                    continue 'candidates;
                }
            }
            if go(depth + 1, vars, domains, ready_at, target_tuples, assignment, index) {
                return true;
            }
        }
        assignment[depth] = None;
        false
    }

    let mut assignment: Vec<Option<Term>> = vec![None; vars.len()];
    if go(0, &vars, &domains, &ready_at, &target_tuples, &mut assignment, &index) {
        Some(
            vars.into_iter()
                .zip(assignment)
                .map(|(v, t)| (v, t.expect("complete")))
                .collect(),
        )
    } else {
        None
    }
}

/// The coloring of a query: one fresh marker atom per free variable, which
/// pins the free variables under homomorphisms.
/// The relation-symbol prefix used by [`color`] for its marker atoms on
/// `q`: chosen so that no existing relation symbol of `q` starts with it,
/// which lets callers strip the markers back out reliably.
pub fn color_prefix(q: &Query) -> String {
    let mut prefix = String::from("__color_");
    while q.atoms.iter().any(|a| a.rel.starts_with(&prefix)) {
        prefix.push('_');
    }
    prefix
}

pub fn color(q: &Query) -> Query {
    let prefix = color_prefix(q);
    let mut atoms = q.atoms.clone();
    for v in q.free_set() {
        atoms.push(Atom::new(format!("{prefix}{v}"), vec![Term::Var(v)]));
    }
    Query::new(q.name.clone(), q.free().to_vec(), atoms)
        .expect("coloring preserves validity")
}

/// Deterministic order in which atom deletions are attempted: descending by
/// (relation, arguments), so structurally "late" atoms fold first.
fn deletion_order(q: &Query) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..q.atoms.len()).collect();
    idx.sort_by(|&a, &b| q.atoms[b].cmp(&q.atoms[a]));
    idx
}

/// Whether atom `idx` can be deleted from `q`: some homomorphism from `q`
/// onto the remainder fixes the free variables.
pub fn deletable_by_hom(q: &Query, idx: usize) -> Result<bool> {
    let mut atoms = q.atoms.clone();
    atoms.remove(idx);
    let rest = q.with_atoms(atoms)?;
    Ok(find_homomorphism(q, &rest, &q.free_set()).is_some())
}

/// Compute a core by greedy atom deletion: scan candidates in deletion
/// order, delete the first one allowed by `deletable`, restart; stop at a
/// fixpoint. Deleting the last atom is never attempted.
pub fn core_with(
    q: &Query,
    deletable: &mut dyn FnMut(&Query, usize) -> Result<bool>,
) -> Result<Query> {
    let mut cur = q.clone();
    'outer: while cur.atoms.len() > 1 {
        for idx in deletion_order(&cur) {
            if deletable(&cur, idx)? {
                let mut atoms = cur.atoms.clone();
                atoms.remove(idx);
                cur = cur.with_atoms(atoms)?;
                continue 'outer;
            }
        }
        break;
    }
    Ok(cur)
}

/// A core of `q`, by homomorphism-checked greedy deletion.
pub fn core(q: &Query) -> Result<Query> {
    core_with(q, &mut deletable_by_hom)
}

/// How far core enumeration may roam.
const CORE_STATE_BUDGET: usize = 4096;

/// Enumerate distinct cores of `q` (as atom sets), up to `cap` of them.
/// Exploration is exhaustive over deletion orders up to an internal state
/// budget; the first core returned always equals [`core`]'s result.
pub fn enumerate_cores_with(
    q: &Query,
    cap: usize,
    deletable: &mut dyn FnMut(&Query, usize) -> Result<bool>,
) -> Result<Vec<Query>> {
    fn dfs(
        cur: &Query,
        cap: usize,
        deletable: &mut dyn FnMut(&Query, usize) -> Result<bool>,
        seen: &mut BTreeSet<BTreeSet<Atom>>,
        out: &mut Vec<Query>,
        budget: &mut usize,
    ) -> Result<()> {
        if out.len() >= cap || *budget == 0 {
            return Ok(());
        }
        let key: BTreeSet<Atom> = cur.atoms.iter().cloned().collect();
        if !seen.insert(key) {
            return Ok(());
        }
        *budget -= 1;
        let mut leaf = true;
        if cur.atoms.len() > 1 {
            for idx in deletion_order(cur) {
                if deletable(cur, idx)? {
                    leaf = false;
                    let mut atoms = cur.atoms.clone();
                    atoms.remove(idx);
                    let next = cur.with_atoms(atoms)?;
                    dfs(&next, cap, deletable, seen, out, budget)?;
                    if out.len() >= cap || *budget == 0 {
                        return Ok(());
                    }
                }
            }
        }
        if leaf {
            out.push(cur.clone());
        }
        Ok(())
    }

    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    let mut budget = CORE_STATE_BUDGET;
    dfs(q, cap, deletable, &mut seen, &mut out, &mut budget)?;
    if out.is_empty() {
        // Budget ran out before any leaf: fall back to the greedy core.
        out.push(core_with(q, deletable)?);
    }
    Ok(out)
}

/// Enumerate distinct cores by homomorphism-checked deletion.
pub fn enumerate_cores(q: &Query, cap: usize) -> Result<Vec<Query>> {
    enumerate_cores_with(q, cap, &mut deletable_by_hom)
}

/// The canonical database of a query: each variable becomes a fresh
/// constant (prefixed so it cannot collide with the query's own constants),
/// each atom becomes a fact. Returns the database and the variable
/// encoding. A query `P` has a homomorphism into `q` iff `P`, read as a
/// Boolean query, holds on the canonical database of `q`.
pub fn canonical_database(q: &Query) -> (Database, BTreeMap<Var, Const>) {
    let mut prefix = String::from("@");
    let consts: BTreeSet<&Const> = q
        .atoms
        .iter()
        .flat_map(|a| a.args.iter())
        .filter_map(|t| match t {
            Term::Const(c) => Some(c),
            _ => None,
        })
        .collect();
    while consts.iter().any(|c| c.as_str().starts_with(&prefix)) {
        prefix.push('@');
    }
    let encode: BTreeMap<Var, Const> = q
        .vars()
        .into_iter()
        .map(|v| {
            let c = Const::new(format!("{prefix}{v}"));
            (v, c)
        })
        .collect();
    let mut db = Database::new();
    for atom in &q.atoms {
        let tuple: Vec<Const> = atom
            .args
            .iter()
            .map(|t| match t {
                Term::Var(v) => encode[v].clone(),
                Term::Const(c) => c.clone(),
            })
            .collect();
        db.insert(atom.rel.clone(), tuple).expect("consistent arities");
    }
    (db, encode)
}
