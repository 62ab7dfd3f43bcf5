//! Affine and smooth convex expressions over the program's real variables.

use std::ops::{Add, Mul, Neg, Sub};

/// Handle to a scalar decision variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Sparse affine form `constant + Σ coef·z[idx]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinExpr {
    pub(crate) terms: Vec<(usize, f64)>,
    pub(crate) constant: f64,
}

impl LinExpr {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn term(v: Var, coef: f64) -> Self {
        Self {
            terms: vec![(v.0, coef)],
            constant: 0.0,
        }
    }

    pub fn add_term(&mut self, v: Var, coef: f64) -> &mut Self {
        self.terms.push((v.0, coef));
        self
    }

    pub(crate) fn add_raw(&mut self, idx: usize, coef: f64) {
        self.terms.push((idx, coef));
    }

    pub fn add_constant(&mut self, c: f64) -> &mut Self {
        self.constant += c;
        self
    }

    pub fn constant_part(&self) -> f64 {
        self.constant
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        self.terms
            .iter()
            .fold(self.constant, |acc, &(i, c)| acc + c * z[i])
    }

    /// Coefficient of `v` after merging duplicate entries.
    pub fn coefficient(&self, v: Var) -> f64 {
        self.terms
            .iter()
            .filter(|(i, _)| *i == v.0)
            .map(|(_, c)| c)
            .sum()
    }

    pub(crate) fn max_index(&self) -> Option<usize> {
        self.terms.iter().map(|(i, _)| *i).max()
    }

    pub(crate) fn is_finite(&self) -> bool {
        self.constant.is_finite() && self.terms.iter().all(|(_, c)| c.is_finite())
    }

    fn scaled(mut self, k: f64) -> Self {
        for t in &mut self.terms {
            t.1 *= k;
        }
        self.constant *= k;
        self
    }
}

impl From<Var> for LinExpr {
    fn from(v: Var) -> Self {
        LinExpr::term(v, 1.0)
    }
}

impl From<f64> for LinExpr {
    fn from(c: f64) -> Self {
        LinExpr::constant(c)
    }
}

impl<T: Into<LinExpr>> Add<T> for LinExpr {
    type Output = LinExpr;
    fn add(mut self, rhs: T) -> LinExpr {
        let rhs = rhs.into();
        self.terms.extend(rhs.terms);
        self.constant += rhs.constant;
        self
    }
}

impl<T: Into<LinExpr>> Sub<T> for LinExpr {
    type Output = LinExpr;
    fn sub(self, rhs: T) -> LinExpr {
        self + rhs.into().scaled(-1.0)
    }
}

impl Neg for LinExpr {
    type Output = LinExpr;
    fn neg(self) -> LinExpr {
        self.scaled(-1.0)
    }
}

impl Mul<f64> for LinExpr {
    type Output = LinExpr;
    fn mul(self, k: f64) -> LinExpr {
        self.scaled(k)
    }
}

impl Mul<f64> for Var {
    type Output = LinExpr;
    fn mul(self, k: f64) -> LinExpr {
        LinExpr::term(self, k)
    }
}

impl<T: Into<LinExpr>> Add<T> for Var {
    type Output = LinExpr;
    fn add(self, rhs: T) -> LinExpr {
        LinExpr::from(self) + rhs
    }
}

impl<T: Into<LinExpr>> Sub<T> for Var {
    type Output = LinExpr;
    fn sub(self, rhs: T) -> LinExpr {
        LinExpr::from(self) - rhs
    }
}

/// A smooth convex function
///
/// `f(z) = a(z) + Σ cᵢ·bᵢ(z)² + Σ dᵢ·exp(eᵢ(z)) − Σ gᵢ·ln(lᵢ(z))`
///
/// with all weights `cᵢ, dᵢ, gᵢ ≥ 0`. Constraints are stated as `f(z) ≤ 0`,
/// which covers the affine, convex-quadratic, exponential-type
/// (`affine ≥ c·e^z`) and logarithmic-type (`affine ≤ c·ln z + d`) kinds.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConvexExpr {
    pub(crate) affine: LinExpr,
    pub(crate) squares: Vec<(f64, LinExpr)>,
    pub(crate) exps: Vec<(f64, LinExpr)>,
    pub(crate) neg_logs: Vec<(f64, LinExpr)>,
}

impl ConvexExpr {
    pub fn affine(a: impl Into<LinExpr>) -> Self {
        Self {
            affine: a.into(),
            ..Self::default()
        }
    }

    /// Adds `weight·(b(z))²`.
    pub fn plus_square(mut self, weight: f64, b: impl Into<LinExpr>) -> Self {
        self.squares.push((weight, b.into()));
        self
    }

    /// Adds `weight·exp(e(z))`.
    pub fn plus_exp(mut self, weight: f64, e: impl Into<LinExpr>) -> Self {
        self.exps.push((weight, e.into()));
        self
    }

    /// Adds `−weight·ln(l(z))`; the argument must stay positive.
    pub fn minus_log(mut self, weight: f64, l: impl Into<LinExpr>) -> Self {
        self.neg_logs.push((weight, l.into()));
        self
    }

    pub fn plus_affine(mut self, a: impl Into<LinExpr>) -> Self {
        self.affine = self.affine + a.into();
        self
    }

    /// Evaluates `f(z)`; `None` when a logarithm argument is not positive.
    pub fn eval(&self, z: &[f64]) -> Option<f64> {
        let mut v = self.affine.eval(z);
        for (w, b) in &self.squares {
            let s = b.eval(z);
            v += w * s * s;
        }
        for (w, e) in &self.exps {
            v += w * e.eval(z).exp();
        }
        for (w, l) in &self.neg_logs {
            let arg = l.eval(z);
            if arg <= 0.0 {
                return None;
            }
            v -= w * arg.ln();
        }
        Some(v)
    }

    pub(crate) fn log_arguments(&self) -> impl Iterator<Item = &LinExpr> {
        self.neg_logs.iter().map(|(_, l)| l)
    }

    pub(crate) fn forms(&self) -> impl Iterator<Item = &LinExpr> {
        std::iter::once(&self.affine)
            .chain(self.squares.iter().map(|(_, e)| e))
            .chain(self.exps.iter().map(|(_, e)| e))
            .chain(self.neg_logs.iter().map(|(_, e)| e))
    }

    pub(crate) fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.squares
            .iter()
            .chain(self.exps.iter())
            .chain(self.neg_logs.iter())
            .map(|(w, _)| *w)
    }

    /// Accumulates `∇f` into `grad` and `scale·∇²f` into `hess`.
    ///
    /// Only the nonlinear terms contribute curvature; each is a rank-one
    /// update along its inner affine form.
    pub(crate) fn accumulate(
        &self,
        z: &[f64],
        grad: &mut [f64],
        hess: &mut nalgebra::DMatrix<f64>,
        hess_scale: f64,
    ) {
        for &(i, c) in &self.affine.terms {
            grad[i] += c;
        }
        let mut rank_one = |form: &LinExpr, slope: f64, curv: f64| {
            for &(i, c) in &form.terms {
                grad[i] += slope * c;
            }
            let k = hess_scale * curv;
            if k != 0.0 {
                for &(i, ci) in &form.terms {
                    for &(j, cj) in &form.terms {
                        hess[(i, j)] += k * ci * cj;
                    }
                }
            }
        };
        for (w, b) in &self.squares {
            let s = b.eval(z);
            rank_one(b, 2.0 * w * s, 2.0 * w);
        }
        for (w, e) in &self.exps {
            let ex = w * e.eval(z).exp();
            rank_one(e, ex, ex);
        }
        for (w, l) in &self.neg_logs {
            let arg = l.eval(z);
            rank_one(l, -w / arg, w / (arg * arg));
        }
    }
}

impl From<LinExpr> for ConvexExpr {
    fn from(a: LinExpr) -> Self {
        ConvexExpr::affine(a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_arithmetic() {
        let x = Var(0);
        let y = Var(1);
        let e = x * 2.0 + y - 3.0;
        assert_eq!(e.eval(&[1.0, 4.0]), 3.0);
        assert_eq!(e.coefficient(x), 2.0);
        let n = -(e.clone()) + 1.0;
        assert_eq!(n.eval(&[1.0, 4.0]), -2.0);
    }

    #[test]
    fn convex_eval_and_log_domain() {
        let x = Var(0);
        let f = ConvexExpr::affine(LinExpr::constant(1.0))
            .plus_square(0.5, x)
            .plus_exp(2.0, x * 1.0)
            .minus_log(1.0, x);
        let v = f.eval(&[1.0]).unwrap();
        assert!((v - (1.0 + 0.5 + 2.0 * 1f64.exp())).abs() < 1e-14);
        assert!(f.eval(&[0.0]).is_none());
    }

    #[test]
    fn gradient_matches_central_differences() {
        let x = Var(0);
        let y = Var(1);
        let f = ConvexExpr::affine(x * 0.3 - y)
            .plus_square(1.5, x - y * 2.0)
            .plus_exp(0.7, y * 0.5 + 0.1)
            .minus_log(2.0, x + y);
        let z = [0.8, 0.4];
        let mut g = vec![0.0; 2];
        let mut h = nalgebra::DMatrix::zeros(2, 2);
        f.accumulate(&z, &mut g, &mut h, 1.0);
        let step = 1e-6;
        for i in 0..2 {
            let mut zp = z;
            let mut zm = z;
            zp[i] += step;
            zm[i] -= step;
            let fd = (f.eval(&zp).unwrap() - f.eval(&zm).unwrap()) / (2.0 * step);
            assert!((fd - g[i]).abs() < 1e-7, "grad {i}: {fd} vs {}", g[i]);
        }
        // Hessian via differences of the analytic gradient
        for i in 0..2 {
            let mut zp = z;
            let mut zm = z;
            zp[i] += step;
            zm[i] -= step;
            let mut gp = vec![0.0; 2];
            let mut gm = vec![0.0; 2];
            let mut scratch = nalgebra::DMatrix::zeros(2, 2);
            f.accumulate(&zp, &mut gp, &mut scratch, 0.0);
            f.accumulate(&zm, &mut gm, &mut scratch, 0.0);
            for j in 0..2 {
                let fd = (gp[j] - gm[j]) / (2.0 * step);
                assert!((fd - h[(j, i)]).abs() < 1e-6);
            }
        }
    }
}
