//! Small interior-point solver for the convex subproblems of the
//! movable-antenna optimizers.
//!
//! Programs have a linear objective over real scalars and complex Hermitian
//! blocks, smooth convex constraints built from affine, squared-affine,
//! exponential and negative-logarithm terms, and PSD constraints on blocks.

mod barrier;
mod expr;
mod program;

pub use expr::{ConvexExpr, LinExpr, Var};
pub use program::{
    ConvexProgram, HermitianVar, ProgramError, Sense, Solution, Status, DEFAULT_MAX_ITER,
    DEFAULT_TOLERANCE,
};
