//! Crate-wide error type.
//!
//! Every fallible operation in this crate reports one of the variants below.
//! Variants are grouped by the stage that raises them: input handling,
//! relational evaluation, decomposition search, and counting.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    // ---- parsing / input shape ----
    /// Syntax error in query or facts text, with 1-based position.
    #[error("parse error at line {line}, column {col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },

    /// A head variable does not occur in any body atom.
    #[error("head variable {var} does not occur in the query body")]
    FreeVarNotInBody { var: String },

    /// The same relation symbol is used with two different arities.
    #[error("relation {rel} used with arity {found}, expected {expected}")]
    ArityMismatch { rel: String, expected: usize, found: usize },

    /// Structurally invalid query (e.g. empty body).
    #[error("invalid query: {0}")]
    InvalidQuery(String),

    // ---- relational evaluation ----
    /// A projection/selection mentions a variable missing from the schema.
    #[error("unknown variable {var} (schema: {schema})")]
    UnknownVariable { var: String, schema: String },

    /// The database has no relation for an atom's symbol.
    #[error("no relation named {rel} in the database")]
    MissingRelation { rel: String },

    // ---- decomposition machinery ----
    /// Width parameter outside the accepted range.
    #[error("invalid width {width}: must be between 1 and {max}")]
    InvalidWidth { width: usize, max: usize },

    /// A decomposition does not fit the query/database it was applied to.
    #[error("incompatible decomposition: {0}")]
    IncompatibleDecomposition(String),

    /// A decomposition is missing some atom from every lambda label.
    #[error("incomplete decomposition: atom {atom} not covered by any vertex label")]
    IncompleteDecomposition { atom: String },

    /// A hypergraph edge that must be covered has no covering view.
    #[error("edge {{{edge}}} is not contained in any view")]
    UncoveredEdge { edge: String },

    /// A quantified component's frontier is not covered by the decomposition.
    #[error("frontier {{{frontier}}} is not covered by any decomposition edge")]
    FrontierNotCovered { frontier: String },

    /// The consistency-based core test disagreed with the direct
    /// homomorphism check: the width hypothesis of the shortcut is violated.
    #[error("width assumption violated: consistency-based core test disagrees with direct homomorphism search")]
    WidthAssumptionViolated,

    /// No decomposition exists within the configured width/degree budget.
    #[error("no decomposition within budget: {0}")]
    NoDecompositionWithinBudget(String),

    /// A search cap (candidate bags, degree bound, selection size) was hit
    /// before the space was exhausted, so absence is not certified.
    #[error("search budget exceeded: {0}")]
    SearchBudgetExceeded(String),

    /// A pseudo-free selection is malformed (not a superset of the free
    /// variables, or not a subset of the query variables).
    #[error("invalid selection: {0}")]
    InvalidSelection(String),

    /// A hybrid decomposition failed validation against its query/selection.
    #[error("invalid hybrid decomposition: {0}")]
    InvalidHybridDecomposition(String),

    // ---- counting / oracle ----
    /// The brute-force enumeration state cap was exceeded.
    #[error("state cap exceeded: more than {cap} states visited")]
    StateCapExceeded { cap: u64 },

    /// I/O error, stringified to keep the type cloneable and comparable.
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
