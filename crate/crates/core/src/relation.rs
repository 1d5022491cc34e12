//! Relations over variable schemas and the algebra on them.
//!
//! A [`Relation`] is a finite set of substitutions over a fixed set of
//! variables, stored columnar: a sorted schema plus sorted, deduplicated
//! rows. Canonical storage makes equality, hashing and printed output
//! deterministic, which the rest of the crate relies on.
//!
//! The operations are the usual ones:
//! - `project` restricts every substitution to a subset of the schema;
//! - `natural_join` combines two relations on their shared variables;
//! - `semijoin` keeps the left rows that join with at least one right row
//!   (for disjoint schemas this degenerates to "keep all iff right is
//!   nonempty", which the fixpoint machinery depends on);
//! - `evaluate_atoms` evaluates a query body bottom-up: per-atom selection
//!   for constants and repeated variables, then joins ordered greedily by
//!   smallest intermediate result.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use crate::error::{Error, Result};
use crate::query::{Atom, Const, Database, Query, Term, Var};

/// A single assignment of constants to variables.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord)]
pub struct Substitution(pub BTreeMap<Var, Const>);

impl Substitution {
    pub fn get(&self, v: &Var) -> Option<&Const> {
        self.0.get(v)
    }

    /// Restriction to the variables in `vars` that are present.
    pub fn restrict(&self, vars: &BTreeSet<Var>) -> Substitution {
        Substitution(
            self.0
                .iter()
                .filter(|(v, _)| vars.contains(*v))
                .map(|(v, c)| (v.clone(), c.clone()))
                .collect(),
        )
    }
}

/// A set of substitutions sharing one schema.
///
/// The schema is sorted by variable name and rows are sorted lexicographically
/// with duplicates removed. The empty schema is allowed: such a relation has
/// either zero rows (false) or exactly one empty row (true), and acts as the
/// identity for joins.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Relation {
    schema: Vec<Var>,
    rows: Vec<Vec<Const>>,
}

impl Relation {
    /// Build from a schema and rows aligned with it. The schema is sorted
    /// (and rows re-ordered column-wise to match); rows are sorted and
    /// deduplicated. Duplicate schema variables are rejected.
    pub fn new(schema: Vec<Var>, rows: Vec<Vec<Const>>) -> Result<Relation> {
        let mut indexed: Vec<(Var, usize)> =
            schema.iter().cloned().zip(0..).collect();
        indexed.sort();
        for w in indexed.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::InvalidQuery(format!(
                    "duplicate variable {} in relation schema",
                    w[0].0
                )));
            }
        }
        let perm: Vec<usize> = indexed.iter().map(|(_, i)| *i).collect();
        let sorted_schema: Vec<Var> = indexed.into_iter().map(|(v, _)| v).collect();
        let mut out_rows = Vec::with_capacity(rows.len());
        for row in rows {
            if row.len() != perm.len() {
                return Err(Error::InvalidQuery(format!(
                    "row width {} does not match schema width {}",
                    row.len(),
                    perm.len()
                )));
            }
            out_rows.push(perm.iter().map(|&i| row[i].clone()).collect());
        }
        out_rows.sort();
        out_rows.dedup();
        Ok(Relation { schema: sorted_schema, rows: out_rows })
    }

    /// The empty relation over a schema.
    pub fn empty(schema: Vec<Var>) -> Result<Relation> {
        Relation::new(schema, Vec::new())
    }

    /// The join identity: empty schema, one empty row.
    pub fn unit() -> Relation {
        Relation { schema: Vec::new(), rows: vec![Vec::new()] }
    }

    pub fn schema(&self) -> &[Var] {
        &self.schema
    }

    pub fn schema_set(&self) -> BTreeSet<Var> {
        self.schema.iter().cloned().collect()
    }

    pub fn rows(&self) -> &[Vec<Const>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn contains_row(&self, row: &[Const]) -> bool {
        self.rows.binary_search_by(|r| r.as_slice().cmp(row)).is_ok()
    }

    /// Positions of `vars` within the schema; errors on a missing variable.
    fn positions(&self, vars: &[Var]) -> Result<Vec<usize>> {
        vars.iter()
            .map(|v| {
                self.schema.binary_search(v).map_err(|_| Error::UnknownVariable {
                    var: v.0.clone(),
                    schema: join_names(&self.schema),
                })
            })
            .collect()
    }

    /// Projection onto `vars` (must be a subset of the schema).
    pub fn project(&self, vars: &BTreeSet<Var>) -> Result<Relation> {
        let cols: Vec<Var> = vars.iter().cloned().collect();
        let pos = self.positions(&cols)?;
        let mut rows: Vec<Vec<Const>> = self
            .rows
            .iter()
            .map(|r| pos.iter().map(|&i| r[i].clone()).collect())
            .collect();
        rows.sort();
        rows.dedup();
        Ok(Relation { schema: cols, rows })
    }

    /// Projection onto the part of `vars` that is present in the schema.
    pub fn project_present(&self, vars: &BTreeSet<Var>) -> Relation {
        let present: BTreeSet<Var> =
            self.schema.iter().filter(|v| vars.contains(*v)).cloned().collect();
        self.project(&present).expect("present vars are in schema")
    }

    /// Selection: keep rows matching `theta` on the schema variables it
    /// binds. Variables bound by `theta` but missing from the schema error.
    pub fn select(&self, theta: &Substitution) -> Result<Relation> {
        let vars: Vec<Var> = theta.0.keys().cloned().collect();
        let pos = self.positions(&vars)?;
        let want: Vec<&Const> = vars.iter().map(|v| &theta.0[v]).collect();
        let rows = self
            .rows
            .iter()
            .filter(|r| pos.iter().zip(&want).all(|(&i, c)| &r[i] == *c))
            .cloned()
            .collect();
        Ok(Relation { schema: self.schema.clone(), rows })
    }

    /// Natural join.
    pub fn natural_join(&self, other: &Relation) -> Relation {
        let shared: Vec<Var> = self
            .schema
            .iter()
            .filter(|v| other.schema.binary_search(v).is_ok())
            .cloned()
            .collect();
        let left_pos = self.positions(&shared).expect("shared vars in left");
        let right_pos = other.positions(&shared).expect("shared vars in right");
        // Index the smaller side by its shared-variable key.
        let (build, probe, build_pos, probe_pos, build_is_left) =
            if self.len() <= other.len() {
                (self, other, &left_pos, &right_pos, true)
            } else {
                (other, self, &right_pos, &left_pos, false)
            };
        let mut index: HashMap<Vec<&Const>, Vec<&Vec<Const>>> = HashMap::new();
        for row in &build.rows {
            index
                .entry(build_pos.iter().map(|&i| &row[i]).collect())
                .or_default()
                .push(row);
        }
        // Output schema: union, sorted. Each output column pulls from the
        // left row when present there, otherwise from the right row.
        let mut schema: Vec<Var> = self.schema.clone();
        for v in &other.schema {
            if self.schema.binary_search(v).is_err() {
                schema.push(v.clone());
            }
        }
        schema.sort();
        #[derive(Clone, Copy)]
        enum Src {
            Left(usize),
            Right(usize),
        }
        let srcs: Vec<Src> = schema
            .iter()
            .map(|v| match self.schema.binary_search(v) {
                Ok(i) => Src::Left(i),
                Err(_) => Src::Right(other.schema.binary_search(v).unwrap()),
            })
            .collect();
        let mut rows = Vec::new();
        for probe_row in &probe.rows {
            let key: Vec<&Const> = probe_pos.iter().map(|&i| &probe_row[i]).collect();
            if let Some(matches) = index.get(&key) {
                for build_row in matches {
                    let (lrow, rrow): (&Vec<Const>, &Vec<Const>) = if build_is_left {
                        (build_row, probe_row)
                    } else {
                        (probe_row, build_row)
                    };
                    rows.push(
                        srcs.iter()
                            .map(|s| match *s {
                                Src::Left(i) => lrow[i].clone(),
                                Src::Right(i) => rrow[i].clone(),
                            })
                            .collect(),
                    );
                }
            }
        }
        rows.sort();
        rows.dedup();
        Relation { schema, rows }
    }

    /// Semijoin: the left rows whose shared-variable part occurs in `other`.
    /// With disjoint schemas this keeps everything iff `other` is nonempty.
    pub fn semijoin(&self, other: &Relation) -> Relation {
        let shared: Vec<Var> = self
            .schema
            .iter()
            .filter(|v| other.schema.binary_search(v).is_ok())
            .cloned()
            .collect();
        let left_pos = self.positions(&shared).expect("shared vars in left");
        let right_pos = other.positions(&shared).expect("shared vars in right");
        let keys: HashSet<Vec<&Const>> = other
            .rows
            .iter()
            .map(|r| right_pos.iter().map(|&i| &r[i]).collect())
            .collect();
        let rows = self
            .rows
            .iter()
            .filter(|r| keys.contains(&left_pos.iter().map(|&i| &r[i]).collect::<Vec<_>>()))
            .cloned()
            .collect();
        Relation { schema: self.schema.clone(), rows }
    }

    /// Intersection of two relations over the same schema.
    pub fn intersect(&self, other: &Relation) -> Result<Relation> {
        if self.schema != other.schema {
            return Err(Error::InvalidQuery(format!(
                "intersect over different schemas: {} vs {}",
                join_names(&self.schema),
                join_names(&other.schema)
            )));
        }
        let rows = self
            .rows
            .iter()
            .filter(|r| other.contains_row(r))
            .cloned()
            .collect();
        Ok(Relation { schema: self.schema.clone(), rows })
    }

    /// Group rows by their values on `vars` (a subset of the schema is not
    /// required; missing variables are ignored). Deterministic: groups come
    /// back keyed in sorted order.
    pub fn partition_by(&self, vars: &BTreeSet<Var>) -> Vec<(Vec<Const>, Relation)> {
        let cols: Vec<Var> = self
            .schema
            .iter()
            .filter(|v| vars.contains(*v))
            .cloned()
            .collect();
        let pos = self.positions(&cols).expect("cols from schema");
        let mut groups: BTreeMap<Vec<Const>, Vec<Vec<Const>>> = BTreeMap::new();
        for row in &self.rows {
            let key: Vec<Const> = pos.iter().map(|&i| row[i].clone()).collect();
            groups.entry(key).or_default().push(row.clone());
        }
        groups
            .into_iter()
            .map(|(k, rows)| (k, Relation { schema: self.schema.clone(), rows }))
            .collect()
    }

    /// Iterate rows as substitutions.
    pub fn substitutions(&self) -> impl Iterator<Item = Substitution> + '_ {
        self.rows.iter().map(move |row| {
            Substitution(
                self.schema
                    .iter()
                    .cloned()
                    .zip(row.iter().cloned())
                    .collect(),
            )
        })
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}} ({} rows)", join_names(&self.schema), self.rows.len())
    }
}

pub(crate) fn join_names(vars: &[Var]) -> String {
    vars.iter().map(|v| v.as_str()).collect::<Vec<_>>().join(",")
}

/// Evaluate one atom against the database: select tuples compatible with the
/// atom's constants and repeated variables, project onto its variables.
pub fn evaluate_atom(atom: &Atom, db: &Database) -> Result<Relation> {
    let tuples = db.tuples(&atom.rel)?;
    if let Some(first) = tuples.first() {
        if first.len() != atom.arity() {
            return Err(Error::ArityMismatch {
                rel: atom.rel.clone(),
                expected: atom.arity(),
                found: first.len(),
            });
        }
    }
    // First occurrence position of each variable, plus all equality checks.
    let mut var_pos: BTreeMap<&Var, usize> = BTreeMap::new();
    for (i, t) in atom.args.iter().enumerate() {
        if let Term::Var(v) = t {
            var_pos.entry(v).or_insert(i);
        }
    }
    let schema: Vec<Var> = var_pos.keys().map(|v| (*v).clone()).collect();
    let mut rows = Vec::new();
    'next: for tuple in tuples {
        for (i, t) in atom.args.iter().enumerate() {
            match t {
                Term::Const(c) => {
                    if &tuple[i] != c {
                        continue 'next;
                    }
                }
                Term::Var(v) => {
                    if tuple[var_pos[v]] != tuple[i] {
                        continue 'next;
                    }
                }
            }
        }
        rows.push(var_pos.values().map(|&i| tuple[i].clone()).collect());
    }
    Relation::new(schema, rows)
}

/// Evaluate a conjunction of atoms: the join of their per-atom relations,
/// over all variables of the conjunction. Join order is greedy: each round
/// joins the pair with the smallest actual intermediate result.
pub fn evaluate_atoms(atoms: &[Atom], db: &Database) -> Result<Relation> {
    let mut parts: Vec<Relation> = atoms
        .iter()
        .map(|a| evaluate_atom(a, db))
        .collect::<Result<_>>()?;
    if parts.is_empty() {
        return Ok(Relation::unit());
    }
    while parts.len() > 1 {
        let mut best: Option<(usize, usize, Relation)> = None;
        for i in 0..parts.len() {
            for j in (i + 1)..parts.len() {
                let joined = parts[i].natural_join(&parts[j]);
                let better = match &best {
                    None => true,
                    Some((_, _, b)) => joined.len() < b.len(),
                };
                if better {
                    best = Some((i, j, joined));
                }
            }
        }
        let (i, j, joined) = best.expect("at least one pair");
        parts.remove(j);
        parts.remove(i);
        parts.push(joined);
    }
    Ok(parts.pop().unwrap())
}

/// Evaluate a full query body and project onto its free variables.
pub fn evaluate_query(q: &Query, db: &Database) -> Result<Relation> {
    let full = evaluate_atoms(&q.atoms, db)?;
    full.project(&q.free_set())
}
