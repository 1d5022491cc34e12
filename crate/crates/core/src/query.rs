//! Queries and databases.
//!
//! A conjunctive query is a head predicate over *free* (output) variables
//! plus a body: a nonempty conjunction of relational atoms. Body variables
//! that are not free are existentially quantified. A database maps relation
//! symbols to finite sets of constant tuples.
//!
//! Terms, atoms and queries are plain data; all algebra lives in
//! [`crate::relation`] and the analysis modules.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::{Error, Result};

/// A variable: an identifier starting with an uppercase letter.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(pub String);

impl Var {
    pub fn new(name: impl Into<String>) -> Self {
        Var(name.into())
    }
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A constant. Stored as its canonical text: integers keep their decimal
/// form, quoted strings keep their contents.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Const(pub String);

impl Const {
    pub fn new(text: impl Into<String>) -> Self {
        Const(text.into())
    }
    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// True if the text can be written without quotes: a decimal integer or
    /// an identifier starting with a lowercase letter.
    pub fn is_bare(&self) -> bool {
        let s = &self.0;
        if s.is_empty() {
            return false;
        }
        let ident = s.chars().next().unwrap().is_ascii_lowercase()
            && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
        let number = s.chars().all(|c| c.is_ascii_digit());
        ident || number
    }
}

impl fmt::Display for Const {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_bare() {
            f.write_str(&self.0)
        } else {
            write!(f, "\"{}\"", self.0.replace('\\', "\\\\").replace('"', "\\\""))
        }
    }
}

/// A term: a variable or a constant.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Var(Var),
    Const(Const),
}

impl Term {
    pub fn var(name: impl Into<String>) -> Self {
        Term::Var(Var::new(name))
    }
    pub fn constant(text: impl Into<String>) -> Self {
        Term::Const(Const::new(text))
    }
    pub fn as_var(&self) -> Option<&Var> {
        match self {
            Term::Var(v) => Some(v),
            Term::Const(_) => None,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => v.fmt(f),
            Term::Const(c) => c.fmt(f),
        }
    }
}

/// A relational atom: a symbol applied to a tuple of terms.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Atom {
    pub rel: String,
    pub args: Vec<Term>,
}

impl Atom {
    pub fn new(rel: impl Into<String>, args: Vec<Term>) -> Self {
        Atom { rel: rel.into(), args }
    }

    /// The set of variables occurring in the atom.
    pub fn vars(&self) -> BTreeSet<Var> {
        self.args.iter().filter_map(|t| t.as_var().cloned()).collect()
    }

    pub fn arity(&self) -> usize {
        self.args.len()
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.rel)?;
        for (i, t) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            t.fmt(f)?;
        }
        f.write_str(")")
    }
}

/// A conjunctive query: `name(free vars) :- atom, ..., atom.`
///
/// Invariants, enforced by [`Query::new`]:
/// - the body is nonempty;
/// - every free variable occurs in some body atom;
/// - every occurrence of a relation symbol has the same arity.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Query {
    pub name: String,
    free: Vec<Var>,
    pub atoms: Vec<Atom>,
}

impl Query {
    pub fn new(name: impl Into<String>, free: Vec<Var>, atoms: Vec<Atom>) -> Result<Self> {
        let name = name.into();
        if atoms.is_empty() {
            return Err(Error::InvalidQuery("query body is empty".into()));
        }
        let mut arities: BTreeMap<&str, usize> = BTreeMap::new();
        for atom in &atoms {
            match arities.get(atom.rel.as_str()) {
                Some(&a) if a != atom.arity() => {
                    return Err(Error::ArityMismatch {
                        rel: atom.rel.clone(),
                        expected: a,
                        found: atom.arity(),
                    })
                }
                _ => {
                    arities.insert(&atom.rel, atom.arity());
                }
            }
        }
        let body_vars: BTreeSet<Var> =
            atoms.iter().flat_map(|a| a.vars()).collect();
        let mut seen = BTreeSet::new();
        let mut dedup_free = Vec::new();
        for v in free {
            if !body_vars.contains(&v) {
                return Err(Error::FreeVarNotInBody { var: v.0 });
            }
            if seen.insert(v.clone()) {
                dedup_free.push(v);
            }
        }
        Ok(Query { name, free: dedup_free, atoms })
    }

    /// Free (output) variables, in head order.
    pub fn free(&self) -> &[Var] {
        &self.free
    }

    /// Free variables as a set.
    pub fn free_set(&self) -> BTreeSet<Var> {
        self.free.iter().cloned().collect()
    }

    /// All variables occurring in the body.
    pub fn vars(&self) -> BTreeSet<Var> {
        self.atoms.iter().flat_map(|a| a.vars()).collect()
    }

    /// Existentially quantified variables: body variables that are not free.
    pub fn quantified(&self) -> BTreeSet<Var> {
        let free = self.free_set();
        self.vars().into_iter().filter(|v| !free.contains(v)).collect()
    }

    /// True if the query has no free variables.
    pub fn is_boolean(&self) -> bool {
        self.free.is_empty()
    }

    /// A copy with the given variables as the new head (sorted), keeping the
    /// body unchanged. Used to treat a superset of the free variables as
    /// output. Errors unless `free(self) ⊆ sel ⊆ vars(self)`.
    pub fn with_free(&self, sel: &BTreeSet<Var>) -> Result<Query> {
        let vars = self.vars();
        if !self.free.iter().all(|v| sel.contains(v)) {
            return Err(Error::InvalidSelection(
                "selection must contain every free variable".into(),
            ));
        }
        if let Some(v) = sel.iter().find(|v| !vars.contains(*v)) {
            return Err(Error::InvalidSelection(format!(
                "selection variable {v} does not occur in the query"
            )));
        }
        Ok(Query {
            name: self.name.clone(),
            free: sel.iter().cloned().collect(),
            atoms: self.atoms.clone(),
        })
    }

    /// A copy with a different body (same name), revalidating invariants.
    /// The head keeps only variables still present in the new body.
    pub fn with_atoms(&self, atoms: Vec<Atom>) -> Result<Query> {
        let body_vars: BTreeSet<Var> = atoms.iter().flat_map(|a| a.vars()).collect();
        let free = self
            .free
            .iter()
            .filter(|v| body_vars.contains(*v))
            .cloned()
            .collect();
        Query::new(self.name.clone(), free, atoms)
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.name)?;
        for (i, v) in self.free.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            v.fmt(f)?;
        }
        f.write_str(") :- ")?;
        for (i, a) in self.atoms.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            a.fmt(f)?;
        }
        f.write_str(".")
    }
}

/// A database: relation symbols mapped to sets of constant tuples.
/// Tuples are kept sorted and deduplicated.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Database {
    relations: BTreeMap<String, Vec<Vec<Const>>>,
}

impl Database {
    pub fn new() -> Self {
        Database::default()
    }

    /// Add one tuple, creating the relation if needed.
    /// Errors if the relation already holds tuples of a different arity.
    pub fn insert(&mut self, rel: impl Into<String>, tuple: Vec<Const>) -> Result<()> {
        let rel = rel.into();
        let rows = self.relations.entry(rel.clone()).or_default();
        if let Some(first) = rows.first() {
            if first.len() != tuple.len() {
                return Err(Error::ArityMismatch {
                    rel,
                    expected: first.len(),
                    found: tuple.len(),
                });
            }
        }
        match rows.binary_search(&tuple) {
            Ok(_) => {}
            Err(pos) => rows.insert(pos, tuple),
        }
        Ok(())
    }

    /// Register an empty relation of the given arity (idempotent for an
    /// existing relation of matching arity).
    pub fn ensure_relation(&mut self, rel: impl Into<String>, arity: usize) -> Result<()> {
        let rel = rel.into();
        if let Some(rows) = self.relations.get(&rel) {
            if let Some(first) = rows.first() {
                if first.len() != arity {
                    return Err(Error::ArityMismatch { rel, expected: first.len(), found: arity });
                }
            }
            return Ok(());
        }
        self.relations.insert(rel, Vec::new());
        Ok(())
    }

    /// Replace a relation's tuples wholesale (sorted, deduplicated).
    /// Errors if the relation is unknown or the tuples disagree in arity.
    pub fn replace_relation(&mut self, rel: &str, mut tuples: Vec<Vec<Const>>) -> Result<()> {
        let rows = self
            .relations
            .get_mut(rel)
            .ok_or_else(|| Error::MissingRelation { rel: rel.to_string() })?;
        if let Some(first) = tuples.first() {
            let expected = first.len();
            if let Some(t) = tuples.iter().find(|t| t.len() != expected) {
                return Err(Error::ArityMismatch {
                    rel: rel.to_string(),
                    expected,
                    found: t.len(),
                });
            }
        }
        tuples.sort();
        tuples.dedup();
        *rows = tuples;
        Ok(())
    }

    pub fn tuples(&self, rel: &str) -> Result<&[Vec<Const>]> {
        self.relations
            .get(rel)
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::MissingRelation { rel: rel.to_string() })
    }

    pub fn contains_relation(&self, rel: &str) -> bool {
        self.relations.contains_key(rel)
    }

    pub fn relation_names(&self) -> impl Iterator<Item = &str> {
        self.relations.keys().map(|s| s.as_str())
    }

    /// The active domain: every constant occurring in any tuple.
    pub fn domain(&self) -> BTreeSet<Const> {
        self.relations
            .values()
            .flat_map(|rows| rows.iter().flatten().cloned())
            .collect()
    }

    /// Total number of tuples across relations.
    pub fn tuple_count(&self) -> usize {
        self.relations.values().map(|r| r.len()).sum()
    }

    /// Size of the largest relation (0 for an empty database).
    pub fn max_relation_size(&self) -> usize {
        self.relations.values().map(|r| r.len()).max().unwrap_or(0)
    }
}
