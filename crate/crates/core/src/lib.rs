//! Differentially private release of linear statistics over positive
//! relational queries, via the recursive mechanism with LP-relaxed sequences.

pub mod expr;
pub mod krelation;
pub mod lp;
pub mod mechanism;
pub mod reference;
pub mod subgraph;

pub use expr::{Expr, ExprError, ParticipantId};
pub use krelation::{AnnotatedRelation, LinearQuery, RelationError, Schema};
