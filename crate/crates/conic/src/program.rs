//! Program description, validation and solution reporting.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::barrier;
use crate::expr::{ConvexExpr, LinExpr, Var};

/// A complex Hermitian `dim × dim` matrix variable.
///
/// Stored as `dim²` real parameters starting at `offset`: the `dim` diagonal
/// entries first, then `(re, im)` for each `i < j` in row-major order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HermitianVar {
    pub(crate) offset: usize,
    pub(crate) dim: usize,
}

impl HermitianVar {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn param_count(&self) -> usize {
        self.dim * self.dim
    }

    pub(crate) fn pair_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j && j < self.dim);
        // pairs before row i: Σ_{r<i} (dim-1-r)
        let before = i * (2 * self.dim - i - 1) / 2;
        self.offset + self.dim + 2 * (before + (j - i - 1))
    }

    /// `Re tr(C·W)` as an affine form in the block parameters.
    ///
    /// `C` is assumed Hermitian, so the trace is real.
    pub fn trace_with(&self, c: &DMatrix<Complex64>) -> LinExpr {
        assert_eq!(c.nrows(), self.dim);
        assert_eq!(c.ncols(), self.dim);
        let mut e = LinExpr::zero();
        for k in 0..self.dim {
            e.add_raw(self.offset + k, c[(k, k)].re);
        }
        for i in 0..self.dim {
            for j in (i + 1)..self.dim {
                let p = self.pair_index(i, j);
                // C_ji·W_ij + C_ij·W_ji with W_ij = r + i·s
                let cij = c[(i, j)];
                let cji = c[(j, i)];
                e.add_raw(p, cji.re + cij.re);
                e.add_raw(p + 1, cij.im - cji.im);
            }
        }
        e
    }

    /// `tr(W)`.
    pub fn trace(&self) -> LinExpr {
        let mut e = LinExpr::zero();
        for k in 0..self.dim {
            e.add_raw(self.offset + k, 1.0);
        }
        e
    }

    /// Assembles the matrix from a full parameter vector.
    pub fn assemble(&self, z: &[f64]) -> DMatrix<Complex64> {
        let d = self.dim;
        let mut m = DMatrix::from_element(d, d, Complex64::new(0.0, 0.0));
        for k in 0..d {
            m[(k, k)] = Complex64::new(z[self.offset + k], 0.0);
        }
        for i in 0..d {
            for j in (i + 1)..d {
                let p = self.pair_index(i, j);
                m[(i, j)] = Complex64::new(z[p], z[p + 1]);
                m[(j, i)] = Complex64::new(z[p], -z[p + 1]);
            }
        }
        m
    }

    /// Writes a Hermitian matrix into the parameter vector (upper triangle read).
    pub(crate) fn scatter(&self, m: &DMatrix<Complex64>, z: &mut [f64]) {
        for k in 0..self.dim {
            z[self.offset + k] = m[(k, k)].re;
        }
        for i in 0..self.dim {
            for j in (i + 1)..self.dim {
                let p = self.pair_index(i, j);
                z[p] = m[(i, j)].re;
                z[p + 1] = m[(i, j)].im;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Maximize,
    Minimize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIter,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ProgramError {
    #[error("expression references variable {index} but only {count} are declared")]
    UnknownVariable { index: usize, count: usize },
    #[error("constraint {constraint} has a negative curvature weight {weight}")]
    NegativeWeight { constraint: usize, weight: f64 },
    #[error("non-finite coefficient in {0}")]
    NonFinite(&'static str),
    #[error("PSD constraint on a block that was not declared")]
    UnknownBlock,
    #[error("starting matrix has the wrong shape")]
    ShapeMismatch,
}

/// Linear objective, smooth convex constraints `f(z) ≤ 0`, and PSD blocks.
#[derive(Debug, Clone)]
pub struct ConvexProgram {
    pub(crate) n_vars: usize,
    pub(crate) blocks: Vec<HermitianVar>,
    pub(crate) psd: Vec<HermitianVar>,
    pub(crate) objective: LinExpr,
    pub(crate) sense: Sense,
    pub(crate) constraints: Vec<ConvexExpr>,
    pub(crate) start: Vec<f64>,
    pub(crate) tolerance: f64,
    pub(crate) max_iter: usize,
}

pub const DEFAULT_TOLERANCE: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 10_000;

impl Default for ConvexProgram {
    fn default() -> Self {
        Self::new()
    }
}

impl ConvexProgram {
    pub fn new() -> Self {
        Self {
            n_vars: 0,
            blocks: Vec::new(),
            psd: Vec::new(),
            objective: LinExpr::zero(),
            sense: Sense::Minimize,
            constraints: Vec::new(),
            start: Vec::new(),
            tolerance: DEFAULT_TOLERANCE,
            max_iter: DEFAULT_MAX_ITER,
        }
    }

    pub fn scalar(&mut self) -> Var {
        let v = Var(self.n_vars);
        self.n_vars += 1;
        self.start.push(0.0);
        v
    }

    pub fn hermitian(&mut self, dim: usize) -> HermitianVar {
        let h = HermitianVar {
            offset: self.n_vars,
            dim,
        };
        self.n_vars += dim * dim;
        self.start.extend(std::iter::repeat_n(0.0, dim * dim));
        self.blocks.push(h);
        h
    }

    pub fn var_count(&self) -> usize {
        self.n_vars
    }

    pub fn maximize(&mut self, obj: impl Into<LinExpr>) {
        self.objective = obj.into();
        self.sense = Sense::Maximize;
    }

    pub fn minimize(&mut self, obj: impl Into<LinExpr>) {
        self.objective = obj.into();
        self.sense = Sense::Minimize;
    }

    /// Multiplies the objective by `k > 0`; the argmax is unchanged.
    pub fn scale_objective(&mut self, k: f64) {
        assert!(k > 0.0);
        self.objective = self.objective.clone() * k;
    }

    /// Adds `f(z) ≤ 0`.
    pub fn add(&mut self, f: impl Into<ConvexExpr>) {
        self.constraints.push(f.into());
    }

    /// Adds `lhs ≤ rhs` for affine sides.
    pub fn add_le(&mut self, lhs: impl Into<LinExpr>, rhs: impl Into<LinExpr>) {
        self.add(ConvexExpr::affine(lhs.into() - rhs.into()));
    }

    /// Adds `lhs ≥ rhs` for affine sides.
    pub fn add_ge(&mut self, lhs: impl Into<LinExpr>, rhs: impl Into<LinExpr>) {
        self.add(ConvexExpr::affine(rhs.into() - lhs.into()));
    }

    /// Requires the block to be positive semidefinite.
    pub fn add_psd(&mut self, w: HermitianVar) {
        self.psd.push(w);
    }

    pub fn constraint_count(&self) -> usize {
        self.constraints.len()
    }

    pub fn set_tolerance(&mut self, tol: f64) {
        self.tolerance = tol;
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn set_max_iter(&mut self, cap: usize) {
        self.max_iter = cap;
    }

    /// Starting value for a scalar; a strictly feasible start skips phase I.
    pub fn set_start(&mut self, v: Var, value: f64) {
        self.start[v.0] = value;
    }

    pub fn set_start_matrix(
        &mut self,
        w: HermitianVar,
        m: &DMatrix<Complex64>,
    ) -> Result<(), ProgramError> {
        if m.nrows() != w.dim || m.ncols() != w.dim {
            return Err(ProgramError::ShapeMismatch);
        }
        w.scatter(m, &mut self.start);
        Ok(())
    }

    pub(crate) fn validate(&self) -> Result<(), ProgramError> {
        let check = |e: &LinExpr, what: &'static str| -> Result<(), ProgramError> {
            if let Some(i) = e.max_index() {
                if i >= self.n_vars {
                    return Err(ProgramError::UnknownVariable {
                        index: i,
                        count: self.n_vars,
                    });
                }
            }
            if !e.is_finite() {
                return Err(ProgramError::NonFinite(what));
            }
            Ok(())
        };
        check(&self.objective, "objective")?;
        for (ci, c) in self.constraints.iter().enumerate() {
            for form in c.forms() {
                check(form, "constraint")?;
            }
            for w in c.weights() {
                if !w.is_finite() {
                    return Err(ProgramError::NonFinite("constraint weight"));
                }
                if w < 0.0 {
                    return Err(ProgramError::NegativeWeight {
                        constraint: ci,
                        weight: w,
                    });
                }
            }
        }
        for b in &self.psd {
            if !self.blocks.contains(b) {
                return Err(ProgramError::UnknownBlock);
            }
        }
        if self.start.iter().any(|v| !v.is_finite()) {
            return Err(ProgramError::NonFinite("start"));
        }
        Ok(())
    }

    /// Objective value at `z` in the declared sense.
    pub fn objective_at(&self, z: &[f64]) -> f64 {
        self.objective.eval(z)
    }

    /// Largest violation of any constraint at `z`, floored at zero.
    ///
    /// PSD violation is the negated smallest eigenvalue. A non-positive
    /// logarithm argument counts as an infinite violation.
    pub fn max_residual(&self, z: &[f64]) -> f64 {
        let mut r: f64 = 0.0;
        for c in &self.constraints {
            match c.eval(z) {
                Some(v) => r = r.max(v),
                None => return f64::INFINITY,
            }
        }
        for b in &self.psd {
            let m = b.assemble(z);
            let eig = nalgebra::SymmetricEigen::new(m);
            let lo = eig
                .eigenvalues
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            r = r.max(-lo);
        }
        r
    }

    pub fn solve(&self) -> Result<Solution, ProgramError> {
        self.validate()?;
        Ok(barrier::solve(self))
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub values: Vec<f64>,
    pub status: Status,
    /// Objective in the declared sense.
    pub objective: f64,
    pub max_residual: f64,
    /// Final barrier duality-gap bound `m/t`.
    pub gap: f64,
    pub iterations: usize,
}

impl Solution {
    pub fn value(&self, v: Var) -> f64 {
        self.values[v.0]
    }

    pub fn matrix(&self, w: HermitianVar) -> DMatrix<Complex64> {
        w.assemble(&self.values)
    }

    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }
}
