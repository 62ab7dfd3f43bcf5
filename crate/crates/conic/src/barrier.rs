//! Primal log-barrier path following with a phase-I feasibility search.
//!
//! Internally every program is a minimization of `cᵀz` subject to
//! `fᵢ(z) < 0` and `M_b(z) ≻ 0`. The barrier is
//! `φ(z) = −Σ ln(−fᵢ) − Σ ln det M_b`, and each centering step minimizes
//! `t·cᵀz + φ(z)` by damped Newton.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_complex::Complex64;

use crate::expr::{ConvexExpr, LinExpr};
use crate::program::{ConvexProgram, HermitianVar, Sense, Solution, Status};

const MU: f64 = 20.0;
const ARMIJO_C1: f64 = 0.01;
const BACKTRACK: f64 = 0.5;
const CENTERING_TOL: f64 = 1e-10;
const CENTERING_CAP: usize = 300;
const DIVERGENCE: f64 = 1e14;
/// Radius, relative to the start, of the ball that keeps phase-I centering bounded.
const PHASE_ONE_RADIUS: f64 = 1e6;

type Entry = (usize, usize, Complex64);

struct Block {
    dim: usize,
    params: Vec<(usize, Vec<Entry>)>,
    hv: HermitianVar,
    shift: Option<usize>,
}

impl Block {
    fn new(hv: HermitianVar, shift: Option<usize>) -> Self {
        let one = Complex64::new(1.0, 0.0);
        let im = Complex64::new(0.0, 1.0);
        let d = hv.dim;
        let mut params = Vec::with_capacity(d * d + 1);
        for k in 0..d {
            params.push((hv.offset + k, vec![(k, k, one)]));
        }
        for i in 0..d {
            for j in (i + 1)..d {
                let p = hv.pair_index(i, j);
                params.push((p, vec![(i, j, one), (j, i, one)]));
                params.push((p + 1, vec![(i, j, im), (j, i, -im)]));
            }
        }
        if let Some(s) = shift {
            params.push((s, (0..d).map(|k| (k, k, one)).collect()));
        }
        Self {
            dim: d,
            params,
            hv,
            shift,
        }
    }

    fn matrix(&self, z: &[f64]) -> DMatrix<Complex64> {
        let mut m = self.hv.assemble(z);
        if let Some(s) = self.shift {
            for k in 0..self.dim {
                m[(k, k)].re += z[s];
            }
        }
        m
    }
}

struct Problem {
    n: usize,
    c: Vec<f64>,
    cons: Vec<ConvexExpr>,
    support: Vec<Vec<usize>>,
    blocks: Vec<Block>,
}

impl Problem {
    fn new(n: usize, c: Vec<f64>, cons: Vec<ConvexExpr>, blocks: Vec<Block>) -> Self {
        let support = cons
            .iter()
            .map(|f| {
                let mut idx: Vec<usize> = f
                    .forms()
                    .flat_map(|e| e.terms.iter().map(|(i, _)| *i))
                    .collect();
                idx.sort_unstable();
                idx.dedup();
                idx
            })
            .collect();
        Self {
            n,
            c,
            cons,
            support,
            blocks,
        }
    }

    fn degree(&self) -> f64 {
        (self.cons.len() + self.blocks.iter().map(|b| b.dim).sum::<usize>()) as f64
    }

    fn linear(&self, z: &[f64]) -> f64 {
        self.c.iter().zip(z).map(|(c, z)| c * z).sum()
    }

    /// Constraint values and block factors, if `z` is strictly interior.
    fn interior(&self, z: &[f64]) -> Option<State> {
        let mut f = Vec::with_capacity(self.cons.len());
        for con in &self.cons {
            let v = con.eval(z)?;
            if v.is_nan() || v >= 0.0 {
                return None;
            }
            f.push(v);
        }
        let mut chol = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let ch = Cholesky::new(b.matrix(z))?;
            chol.push(ch);
        }
        Some(State { f, chol })
    }

    /// Barrier value at `new` minus that at `old`, formed from ratios.
    fn barrier_change(&self, old: &State, new: &State) -> f64 {
        let mut d = 0.0;
        for (a, b) in old.f.iter().zip(&new.f) {
            d -= (b / a).ln();
        }
        for (co, cn) in old.chol.iter().zip(&new.chol) {
            let lo = co.l_dirty();
            let ln = cn.l_dirty();
            for k in 0..lo.nrows() {
                d -= 2.0 * (ln[(k, k)].re / lo[(k, k)].re).ln();
            }
        }
        d
    }

    fn newton_system(&self, z: &[f64], st: &State, t: f64) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.n;
        let mut g = DVector::from_iterator(n, self.c.iter().map(|c| t * c));
        let mut h = DMatrix::<f64>::zeros(n, n);
        let mut scratch = vec![0.0; n];
        for ((con, sup), &fv) in self.cons.iter().zip(&self.support).zip(&st.f) {
            let inv = -1.0 / fv;
            con.accumulate(z, &mut scratch, &mut h, inv);
            for &i in sup {
                g[i] += scratch[i] * inv;
                let gi = scratch[i] * inv;
                for &j in sup {
                    h[(i, j)] += gi * scratch[j] * inv;
                }
            }
            for &i in sup {
                scratch[i] = 0.0;
            }
        }
        for (b, ch) in self.blocks.iter().zip(&st.chol) {
            let v = ch.inverse();
            for (p, ep) in &b.params {
                let mut gp = 0.0;
                for &(a, bb, c) in ep {
                    gp += (c * v[(bb, a)]).re;
                }
                g[*p] -= gp;
                for (q, eq) in &b.params {
                    let mut hpq = 0.0;
                    for &(a, bb, c1) in ep {
                        for &(d, e, c2) in eq {
                            hpq += (c1 * c2 * v[(e, a)] * v[(bb, d)]).re;
                        }
                    }
                    h[(*p, *q)] += hpq;
                }
            }
        }
        (g, h)
    }
}

struct State {
    f: Vec<f64>,
    chol: Vec<Cholesky<Complex64, Dyn>>,
}

fn newton_direction(g: &DVector<f64>, h: DMatrix<f64>) -> DVector<f64> {
    if let Some(ch) = Cholesky::new(h.clone()) {
        let d = ch.solve(&(-g));
        if d.iter().all(|v| v.is_finite()) {
            return d;
        }
    }
    let scale = h
        .diagonal()
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1e-300);
    let mut ridge = 1e-12 * scale;
    loop {
        let mut hr = h.clone();
        for k in 0..hr.nrows() {
            hr[(k, k)] += ridge;
        }
        if let Some(ch) = Cholesky::new(hr) {
            let d = ch.solve(&(-g));
            if d.iter().all(|v| v.is_finite()) {
                return d;
            }
        }
        ridge *= 10.0;
    }
}

enum Centering {
    Done,
    Early,
    Diverged,
    Budget,
}

struct Path<'a> {
    p: &'a Problem,
    z: Vec<f64>,
    state: State,
    iterations: usize,
    budget: usize,
}

impl Path<'_> {
    /// Minimizes `t·cᵀz + φ(z)` from the current point.
    fn center(&mut self, t: f64, early: Option<usize>) -> Centering {
        for _ in 0..CENTERING_CAP {
            if self.iterations >= self.budget {
                return Centering::Budget;
            }
            self.iterations += 1;
            let (g, h) = self.p.newton_system(&self.z, &self.state, t);
            let dz = newton_direction(&g, h);
            let slope = g.dot(&dz);
            if -slope / 2.0 <= CENTERING_TOL {
                return Centering::Done;
            }
            let lin_step = t * self.p.linear(dz.as_slice());
            let mut step = 1.0;
            let mut accepted = None;
            while step > 1e-20 {
                let trial: Vec<f64> = self
                    .z
                    .iter()
                    .zip(dz.iter())
                    .map(|(z, d)| z + step * d)
                    .collect();
                if let Some(st) = self.p.interior(&trial) {
                    let change = step * lin_step + self.p.barrier_change(&self.state, &st);
                    if change <= ARMIJO_C1 * step * slope {
                        accepted = Some((trial, st));
                        break;
                    }
                }
                step *= BACKTRACK;
            }
            let Some((z, st)) = accepted else {
                // no further decrease resolvable in floating point
                return Centering::Done;
            };
            self.z = z;
            self.state = st;
            if self.z.iter().any(|v| v.abs() > DIVERGENCE) {
                return Centering::Diverged;
            }
            if let Some(s) = early {
                if self.z[s] < 0.0 {
                    return Centering::Early;
                }
            }
        }
        Centering::Done
    }
}

/// `t₀` minimizing `‖t·c + ∇φ(z)‖` in the inverse barrier-Hessian norm,
/// which puts the start near the central path.
fn initial_t(p: &Problem, z: &[f64], st: &State) -> f64 {
    let cmax = p.c.iter().fold(0.0f64, |a, c| a.max(c.abs()));
    let fallback = 1.0 / cmax;
    let (g, h) = p.newton_system(z, st, 0.0);
    let c = DVector::from_column_slice(&p.c);
    let hc = newton_direction(&c, h.clone());
    let hg = newton_direction(&g, h);
    // both directions carry a minus sign, which cancels in the ratio
    let t = -c.dot(&hg) / c.dot(&hc);
    if t.is_finite() && t > 0.0 {
        t.clamp(1e-10 * fallback, 1e10 * fallback)
    } else {
        fallback
    }
}

enum Outcome {
    Converged { z: Vec<f64>, gap: f64 },
    Feasible(Vec<f64>),
    Infeasible,
    Unbounded(Vec<f64>),
    Budget(Vec<f64>),
}

/// Runs the barrier method from the strictly interior point `z`.
///
/// With `phase_one = Some(s)`, stops as soon as `z[s] < 0` and reports
/// infeasibility once the dual bound `s − m/t` is positive.
fn path_follow(
    p: &Problem,
    z: Vec<f64>,
    tol: f64,
    used: &mut usize,
    budget: usize,
    phase_one: Option<usize>,
) -> Outcome {
    let state = p.interior(&z).expect("path start must be interior");
    let m = p.degree();
    let mut t = initial_t(p, &z, &state);
    let mut path = Path {
        p,
        z,
        state,
        iterations: *used,
        budget,
    };
    let outcome = loop {
        let r = path.center(t, phase_one);
        match r {
            Centering::Early => break Outcome::Feasible(path.z.clone()),
            Centering::Diverged => break Outcome::Unbounded(path.z.clone()),
            Centering::Budget => break Outcome::Budget(path.z.clone()),
            Centering::Done => {}
        }
        let obj = p.linear(&path.z);
        let gap = m / t;
        if let Some(s) = phase_one {
            if path.z[s] - gap > 0.0 || gap <= tol * obj.abs().max(1.0) {
                break Outcome::Infeasible;
            }
        } else if gap <= tol * obj.abs().max(1.0) {
            break Outcome::Converged {
                z: path.z.clone(),
                gap,
            };
        }
        t *= MU;
    };
    *used = path.iterations;
    outcome
}

fn main_problem(prog: &ConvexProgram) -> Problem {
    let sign = match prog.sense {
        Sense::Maximize => -1.0,
        Sense::Minimize => 1.0,
    };
    let mut c = vec![0.0; prog.n_vars];
    for &(i, v) in &prog.objective.terms {
        c[i] += sign * v;
    }
    let blocks = prog.psd.iter().map(|&b| Block::new(b, None)).collect();
    Problem::new(prog.n_vars, c, prog.constraints.clone(), blocks)
}

fn min_eigenvalue(m: DMatrix<Complex64>) -> f64 {
    nalgebra::SymmetricEigen::new(m)
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// `‖z − z₀‖² ≤ R²` over the original variables.
fn trust_ball(z0: &[f64]) -> ConvexExpr {
    let r = PHASE_ONE_RADIUS * (1.0 + z0.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    z0.iter().enumerate().fold(
        ConvexExpr::affine(LinExpr::constant(-r * r)),
        |e, (i, v)| {
            e.plus_square(
                1.0,
                LinExpr {
                    terms: vec![(i, 1.0)],
                    constant: -v,
                },
            )
        },
    )
}

/// Finds a point where every logarithm argument is positive.
fn log_domain(prog: &ConvexProgram, z: Vec<f64>, used: &mut usize) -> Result<Vec<f64>, Status> {
    let args: Vec<&LinExpr> = prog
        .constraints
        .iter()
        .flat_map(|c| c.log_arguments())
        .collect();
    let worst = args
        .iter()
        .map(|l| -l.eval(&z))
        .fold(f64::NEG_INFINITY, f64::max);
    if args.is_empty() || worst < 0.0 {
        return Ok(z);
    }
    let n = prog.n_vars;
    let mut cons: Vec<ConvexExpr> = args
        .iter()
        .map(|l| {
            let mut e = -(*l).clone();
            e.add_raw(n, -1.0);
            ConvexExpr::affine(e)
        })
        .collect();
    cons.push(trust_ball(&z));
    let mut c = vec![0.0; n + 1];
    c[n] = 1.0;
    let aux = Problem::new(n + 1, c, cons, Vec::new());
    let mut z1 = z;
    z1.push(worst + 1.0);
    match path_follow(&aux, z1, prog.tolerance, used, prog.max_iter, Some(n)) {
        Outcome::Feasible(mut z) => {
            z.pop();
            Ok(z)
        }
        Outcome::Budget(_) => Err(Status::MaxIter),
        _ => Err(Status::Infeasible),
    }
}

/// Phase I: minimize `s` subject to `fᵢ(z) ≤ s` and `M_b(z) + s·I ⪰ 0`.
fn phase_one(
    prog: &ConvexProgram,
    main: &Problem,
    z: Vec<f64>,
    used: &mut usize,
) -> Result<Vec<f64>, Status> {
    if main.interior(&z).is_some() {
        return Ok(z);
    }
    let n = prog.n_vars;
    let mut worst = f64::NEG_INFINITY;
    for con in &main.cons {
        worst = worst.max(con.eval(&z).ok_or(Status::Infeasible)?);
    }
    for b in &main.blocks {
        worst = worst.max(-min_eigenvalue(b.matrix(&z)));
    }
    let mut cons: Vec<ConvexExpr> = main
        .cons
        .iter()
        .map(|f| {
            f.clone().plus_affine(LinExpr {
                terms: vec![(n, -1.0)],
                constant: 0.0,
            })
        })
        .collect();
    cons.push(trust_ball(&z));
    let blocks = prog.psd.iter().map(|&b| Block::new(b, Some(n))).collect();
    let mut c = vec![0.0; n + 1];
    c[n] = 1.0;
    let aux = Problem::new(n + 1, c, cons, blocks);
    let mut z1 = z;
    z1.push(worst + 1.0);
    match path_follow(&aux, z1, prog.tolerance, used, prog.max_iter, Some(n)) {
        Outcome::Feasible(mut z) => {
            z.pop();
            Ok(z)
        }
        Outcome::Budget(_) => Err(Status::MaxIter),
        _ => Err(Status::Infeasible),
    }
}

pub(crate) fn solve(prog: &ConvexProgram) -> Solution {
    let main = main_problem(prog);
    let mut used = 0usize;
    let finish = |z: Vec<f64>, status: Status, gap: f64, used: usize| {
        let objective = prog.objective_at(&z);
        let max_residual = prog.max_residual(&z);
        Solution {
            values: z,
            status,
            objective,
            max_residual,
            gap,
            iterations: used,
        }
    };
    let start = prog.start.clone();
    let z = match log_domain(prog, start.clone(), &mut used)
        .and_then(|z| phase_one(prog, &main, z, &mut used))
    {
        Ok(z) => z,
        Err(status) => return finish(start, status, f64::INFINITY, used),
    };
    if main.c.iter().all(|&c| c == 0.0) {
        return finish(z, Status::Optimal, 0.0, used);
    }
    if main.degree() == 0.0 {
        return finish(z, Status::Unbounded, f64::INFINITY, used);
    }
    match path_follow(&main, z, prog.tolerance, &mut used, prog.max_iter, None) {
        Outcome::Converged { z, gap } => finish(z, Status::Optimal, gap, used),
        Outcome::Unbounded(z) => finish(z, Status::Unbounded, f64::INFINITY, used),
        Outcome::Budget(z) => finish(z, Status::MaxIter, f64::INFINITY, used),
        Outcome::Feasible(_) | Outcome::Infeasible => {
            unreachable!("main phase has no phase-I exit")
        }
    }
}
