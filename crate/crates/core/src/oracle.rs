//! Brute-force reference semantics: enumerate query answers by backtracking.
//!
//! This module is deliberately simple — plain backtracking over a fixed
//! variable order with membership checks — so it can serve as an independent
//! ground truth for the decomposition-based counters. A state cap bounds the
//! number of visited partial assignments to keep runaway inputs from
//! hanging the process.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use num_bigint::BigUint;

use crate::error::{Error, Result};
use crate::query::{Const, Database, Query, Term, Var};
use crate::relation::Relation;

/// Default bound on visited partial assignments.
pub const DEFAULT_STATE_CAP: u64 = 100_000_000;

struct Search<'a> {
    vars: Vec<Var>,
    atoms: Vec<AtomView<'a>>,
    domains: Vec<Vec<Const>>,
    cap: u64,
    visited: u64,
}

struct AtomView<'a> {
    /// Argument list with variables resolved to indices into `vars`.
    args: Vec<Slot>,
    /// Position in `vars` after which this atom is fully assigned.
    ready_at: usize,
    tuples: HashSet<&'a [Const]>,
}

enum Slot {
    Var(usize),
    Const(Const),
}

impl Search<'_> {
    fn run(
        &mut self,
        depth: usize,
        assignment: &mut Vec<Option<Const>>,
        project: &[usize],
        out: &mut BTreeSet<Vec<Const>>,
    ) -> Result<()> {
        if depth == self.vars.len() {
            let row: Vec<Const> = project
                .iter()
                .map(|&i| assignment[i].clone().expect("assigned"))
                .collect();
            out.insert(row);
            return Ok(());
        }
        let candidates = std::mem::take(&mut self.domains[depth]);
        for value in &candidates {
            self.visited += 1;
            if self.visited > self.cap {
                self.domains[depth] = candidates;
                return Err(Error::StateCapExceeded { cap: self.cap });
            }
            assignment[depth] = Some(value.clone());
            if self.consistent_at(depth, assignment) {
                let r = self.run(depth + 1, assignment, project, out);
                if r.is_err() {
                    self.domains[depth] = candidates;
                    return r;
                }
            }
        }
        assignment[depth] = None;
        self.domains[depth] = candidates;
        Ok(())
    }

    /// Check every atom that became fully assigned once variable `depth`
    /// received a value.
    fn consistent_at(&self, depth: usize, assignment: &[Option<Const>]) -> bool {
        self.atoms.iter().filter(|a| a.ready_at == depth).all(|a| {
            let tuple: Vec<Const> = a
                .args
                .iter()
                .map(|s| match s {
                    Slot::Var(i) => assignment[*i].clone().expect("ready"),
                    Slot::Const(c) => c.clone(),
                })
                .collect();
            a.tuples.contains(tuple.as_slice())
        })
    }
}

fn build_search<'a>(q: &Query, db: &'a Database, cap: u64) -> Result<Search<'a>> {
    let vars: Vec<Var> = q.vars().into_iter().collect();
    let index: BTreeMap<&Var, usize> =
        vars.iter().enumerate().map(|(i, v)| (v, i)).collect();
    let mut atoms = Vec::with_capacity(q.atoms.len());
    // Per-variable candidate domain: intersection over every column the
    // variable occurs in.
    let mut domains: Vec<Option<BTreeSet<Const>>> = vec![None; vars.len()];
    for atom in &q.atoms {
        let tuples = db.tuples(&atom.rel)?;
        if let Some(t) = tuples.first() {
            if t.len() != atom.args.len() {
                return Err(Error::ArityMismatch {
                    rel: atom.rel.clone(),
                    expected: t.len(),
                    found: atom.args.len(),
                });
            }
        }
        let mut args = Vec::with_capacity(atom.args.len());
        let mut ready_at = 0usize;
        for (pos, term) in atom.args.iter().enumerate() {
            match term {
                Term::Var(v) => {
                    let i = index[v];
                    ready_at = ready_at.max(i);
                    args.push(Slot::Var(i));
                    let col: BTreeSet<Const> =
                        tuples.iter().map(|t| t[pos].clone()).collect();
                    domains[i] = Some(match domains[i].take() {
                        None => col,
                        Some(d) => d.intersection(&col).cloned().collect(),
                    });
                }
                Term::Const(c) => args.push(Slot::Const(c.clone())),
            }
        }
        atoms.push(AtomView {
            args,
            ready_at,
            tuples: tuples.iter().map(|t| t.as_slice()).collect(),
        });
    }
    let domains: Vec<Vec<Const>> = domains
        .into_iter()
        .map(|d| d.expect("every query variable occurs in the body"))
        .map(|d| d.into_iter().collect())
        .collect();
    Ok(Search { vars, atoms, domains, cap, visited: 0 })
}

/// All distinct projections of the query's solutions onto `project`
/// (which must be a subset of the query's variables).
pub fn enumerate_projections(
    q: &Query,
    db: &Database,
    project: &BTreeSet<Var>,
    cap: u64,
) -> Result<Relation> {
    let all = q.vars();
    if let Some(bad) = project.iter().find(|v| !all.contains(v)) {
        return Err(Error::UnknownVariable {
            var: bad.to_string(),
            schema: crate::relation::join_names(&all.into_iter().collect::<Vec<_>>()),
        });
    }
    let mut search = build_search(q, db, cap)?;
    let proj_idx: Vec<usize> = search
        .vars
        .iter()
        .enumerate()
        .filter(|(_, v)| project.contains(v))
        .map(|(i, _)| i)
        .collect();
    let schema: Vec<Var> = search
        .vars
        .iter()
        .filter(|v| project.contains(v))
        .cloned()
        .collect();
    let mut out = BTreeSet::new();
    let mut assignment = vec![None; search.vars.len()];
    search.run(0, &mut assignment, &proj_idx, &mut out)?;
    Relation::new(schema, out.into_iter().collect())
}

/// All distinct answers: projections of solutions onto the free variables.
pub fn enumerate_answers(q: &Query, db: &Database, cap: u64) -> Result<Relation> {
    enumerate_projections(q, db, &q.free_set(), cap)
}

/// The number of distinct answers, by exhaustive enumeration.
pub fn brute_force_count(q: &Query, db: &Database, cap: u64) -> Result<BigUint> {
    Ok(BigUint::from(enumerate_answers(q, db, cap)?.rows().len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::{parse_facts, parse_query};

    fn four_cycle_db() -> Database {
        parse_facts(
            "s1(1,2). s1(3,4).\n s2(2,3). s2(4,1).\n s3(3,4). s3(1,2).\n s4(4,1). s4(2,3).",
        )
        .unwrap()
    }

    #[test]
    fn counts_four_cycle_answers() {
        let q = parse_query("q1(A,C) :- s1(A,B), s2(B,C), s3(C,D), s4(D,A).").unwrap();
        let db = four_cycle_db();
        let ans = enumerate_answers(&q, &db, DEFAULT_STATE_CAP).unwrap();
        assert_eq!(ans.rows().len(), 2);
        assert_eq!(
            brute_force_count(&q, &db, DEFAULT_STATE_CAP).unwrap(),
            BigUint::from(2u32)
        );
    }

    #[test]
    fn boolean_queries_count_zero_or_one() {
        let db = four_cycle_db();
        let yes = parse_query("q() :- s1(A,B), s2(B,C).").unwrap();
        assert_eq!(
            brute_force_count(&yes, &db, DEFAULT_STATE_CAP).unwrap(),
            BigUint::from(1u32)
        );
        let no = parse_query("q() :- s1(A,A).").unwrap();
        assert_eq!(
            brute_force_count(&no, &db, DEFAULT_STATE_CAP).unwrap(),
            BigUint::from(0u32)
        );
    }

    #[test]
    fn repeated_variables_and_constants() {
        let db = parse_facts("t(1,1,2). t(2,2,2). t(1,2,2).").unwrap();
        let q = parse_query("q(X) :- t(X,X,2).").unwrap();
        let ans = enumerate_answers(&q, &db, DEFAULT_STATE_CAP).unwrap();
        assert_eq!(ans.rows(), &[vec![Const::new("1")], vec![Const::new("2")]]);
    }

    #[test]
    fn projections_onto_arbitrary_sets() {
        let q = parse_query("q(A) :- s1(A,B), s2(B,C).").unwrap();
        let db = four_cycle_db();
        let full = enumerate_projections(
            &q,
            &db,
            &q.vars().into_iter().collect(),
            DEFAULT_STATE_CAP,
        )
        .unwrap();
        assert_eq!(full.rows().len(), 2); // (1,2,3) and (3,4,1)
        let onto_b: BTreeSet<Var> = [Var::new("B")].into();
        let b = enumerate_projections(&q, &db, &onto_b, DEFAULT_STATE_CAP).unwrap();
        assert_eq!(b.rows().len(), 2);
    }

    #[test]
    fn state_cap_is_enforced() {
        let q = parse_query("q(A,B) :- s1(A,B).").unwrap();
        let db = four_cycle_db();
        let err = enumerate_answers(&q, &db, 1).unwrap_err();
        assert!(matches!(err, Error::StateCapExceeded { cap: 1 }));
    }

    #[test]
    fn matches_join_semantics() {
        let q = parse_query("q1(A,C) :- s1(A,B), s2(B,C), s3(C,D), s4(D,A).").unwrap();
        let db = four_cycle_db();
        let via_join = crate::relation::evaluate_query(&q, &db).unwrap();
        let via_oracle = enumerate_answers(&q, &db, DEFAULT_STATE_CAP).unwrap();
        assert_eq!(via_join, via_oracle);
    }
}
