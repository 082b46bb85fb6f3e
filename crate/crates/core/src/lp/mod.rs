//! Linear-programming evaluation of the relaxed sequences H and G.

mod encode;
mod sequences;
mod simplex;

pub use encode::{encode_phi, Term};
pub use sequences::{SequenceError, SequenceEvaluator};
pub use simplex::{
    Constraint, LinearProgram, LpError, LpSolution, LpStatus, Relation, FEASIBILITY_TOL,
};
