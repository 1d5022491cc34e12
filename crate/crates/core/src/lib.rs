//! Answer counting for conjunctive queries via hypertree-shaped decompositions.

pub mod error;
pub mod hom;
pub mod hypergraph;
pub mod oracle;
pub mod parse;
pub mod query;
pub mod relation;
pub mod decomp;
pub mod treeproj;
pub mod corpus;
pub mod counting;
pub mod hybrid;

pub use error::{Error, Result};
pub use query::{Atom, Const, Database, Query, Term, Var};
