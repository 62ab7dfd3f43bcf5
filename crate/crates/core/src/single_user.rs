//! Single-user position design: SCA on the delay-discounted throughput, MRT
//! beamforming, the max-SNR baseline and a brute-force grid oracle.
//!
//! Subproblems work with powers normalized by `σ²`, so `ũ = u/σ²` and
//! `ỹ₃(x) = (P_m/σ²)‖h(x)‖²`; this keeps every variable near unit scale.

use std::f64::consts::LN_2;

use ma_conic::{ConvexExpr, ConvexProgram, LinExpr, Var};
use nalgebra::DVector;
use num_complex::Complex64;

use crate::channel::{gain_formula, gain_trig, ChannelVector};
use crate::error::{DomainError, OptError};
use crate::movement::quantized_channel;
use crate::scenario::{ScenarioConfig, UserChannel};
use crate::surrogate::{product_upper, TrigSum};

pub const MAX_SCA_ITER: usize = 500;

/// Per-user outcome of a position/beamforming design evaluated on the true
/// channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ThroughputReport {
    pub positions: Vec<f64>,
    pub sinr: Vec<f64>,
    pub throughput: Vec<f64>,
    pub min_throughput: f64,
    /// Antenna-moving delay `t₁`.
    pub delay_t1: f64,
    /// Information-transmission time `t₂ = max(0, T − t₁)`.
    pub duration_t2: f64,
    /// Objective value after each outer iteration, starting point first.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub status: RunStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Converged,
    MaxIter,
    /// A subproblem failed twice; the report holds the best point so far.
    SubproblemFailed,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Converged => "converged",
            RunStatus::MaxIter => "max_iter",
            RunStatus::SubproblemFailed => "subproblem_failed",
        }
    }
}

/// `max{0, T − |x − x⁰|/v}`.
pub fn transmission_time(x: f64, cfg: &ScenarioConfig) -> f64 {
    (cfg.block_t - (x - cfg.x0()).abs() / cfg.move_speed_v).max(0.0)
}

/// Throughput with MRT at `x`.
pub fn throughput_su(ch: &UserChannel, x: f64, cfg: &ScenarioConfig) -> f64 {
    transmission_time(x, cfg) * (1.0 + cfg.snr_scale() * gain_formula(ch, x)).log2()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Y3 {
    pub value: f64,
    pub first: f64,
    pub delta_lb: f64,
    pub delta_ub: f64,
}

/// Received power `y₃(x) = P_m‖h(x)‖²` (watts), its slope and curvature bounds.
pub fn y3_and_derivatives(ch: &UserChannel, x: f64, cfg: &ScenarioConfig) -> Y3 {
    let y = gain_trig(ch).scaled(cfg.p_max);
    let delta = y.curvature_bound();
    Y3 {
        value: y.value(x),
        first: y.first(x),
        delta_lb: delta,
        delta_ub: delta,
    }
}

/// Local points of one SCA iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaStateSU {
    pub x: f64,
    pub q: f64,
    /// Normalized received power `u/σ²`.
    pub u: f64,
    pub w: f64,
    pub delta_lb: f64,
    pub delta_ub: f64,
}

pub struct P24Vars {
    pub x: Var,
    pub q: Var,
    pub u: Var,
    pub r: Var,
    pub w: Var,
    pub s: Var,
}

fn q_floor(cfg: &ScenarioConfig) -> f64 {
    1e-6 * cfg.wavelength
}

fn normalized_power(ch: &UserChannel, cfg: &ScenarioConfig) -> TrigSum {
    gain_trig(ch).scaled(cfg.snr_scale())
}

impl ScaStateSU {
    /// Tight local points at `x`; `q` is floored so the product bound stays
    /// defined at `x = x⁰`.
    pub fn at(ch: &UserChannel, cfg: &ScenarioConfig, x: f64, q_min: f64) -> Self {
        let y = normalized_power(ch, cfg);
        let u = y.value(x);
        let delta = y.curvature_bound();
        Self {
            x,
            q: (x - cfg.x0()).abs().max(q_min),
            u,
            w: (1.0 + u).log2(),
            delta_lb: delta,
            delta_ub: delta,
        }
    }

    /// Value of the surrogate objective at these local points, which is
    /// feasible for the next subproblem.
    pub fn surrogate_value(&self, cfg: &ScenarioConfig) -> f64 {
        cfg.block_t * self.w - self.q * self.w / cfg.move_speed_v
    }
}

/// Convex subproblem around `state`: maximize `T·r − s` where `r` lower-bounds
/// the rate and `s` upper-bounds the delay penalty `q·w/v`.
pub fn build_subproblem_p24(
    state: &ScaStateSU,
    ch: &UserChannel,
    cfg: &ScenarioConfig,
) -> (ConvexProgram, P24Vars) {
    let y = normalized_power(ch, cfg).expand(state.x);
    let (t, v, a, x0) = (cfg.block_t, cfg.move_speed_v, cfg.region_len_a, cfg.x0());
    let mut p = ConvexProgram::new();
    let vars = P24Vars {
        x: p.scalar(),
        q: p.scalar(),
        u: p.scalar(),
        r: p.scalar(),
        w: p.scalar(),
        s: p.scalar(),
    };
    let P24Vars { x, q, u, r, w, s } = vars;
    let dx = LinExpr::from(x) - state.x;

    // r·ln2 ≤ ln(1 + ũ)
    p.add(ConvexExpr::affine(r * LN_2).minus_log(1.0, LinExpr::from(u) + 1.0));
    // (wⁱ/qⁱ·q² + qⁱ/wⁱ·w²)/(2v) ≤ s
    p.add(
        ConvexExpr::affine(-LinExpr::from(s))
            .plus_square(state.w / state.q / (2.0 * v), q)
            .plus_square(state.q / state.w / (2.0 * v), w),
    );
    // ũ ≤ ỹ₃ˡᵇ(x)
    p.add(
        ConvexExpr::affine(LinExpr::from(u) - y.value - dx.clone() * y.slope)
            .plus_square(0.5 * y.delta, dx.clone()),
    );
    // ỹ₃ᵘᵇ(x) ≤ 2^w − 1 linearized at wⁱ
    let pw = state.w.exp2();
    let tangent = LinExpr::from(w) * (pw * LN_2) + (pw - 1.0 - pw * state.w * LN_2);
    p.add(
        ConvexExpr::affine(dx.clone() * y.slope + y.value - tangent).plus_square(0.5 * y.delta, dx),
    );
    p.add_ge(q, LinExpr::from(x) - x0);
    p.add_ge(q, -LinExpr::from(x) + x0);
    p.add_le(q, v * t);
    p.add_ge(q, q_floor(cfg));
    p.add_ge(x, 0.0);
    p.add_le(x, a);
    p.maximize(r * t - s);

    // strictly feasible start at the local point
    let xs = state.x.clamp(1e-9 * a, a * (1.0 - 1e-9));
    let q_lo = (xs - x0).abs().max(q_floor(cfg));
    let qs = q_lo + 0.01 * (v * t - q_lo);
    let us = y.lower(xs) - 1e-6 * (1.0 + y.lower(xs).abs());
    let pw_gap = (y.upper(xs) - (pw - 1.0)) / (pw * LN_2);
    let ws = state.w + pw_gap.max(0.0) + 1e-6;
    p.set_start(x, xs);
    p.set_start(q, qs);
    p.set_start(u, us);
    p.set_start(r, (1.0 + us).log2() - 1e-6);
    p.set_start(w, ws);
    p.set_start(s, product_upper(qs, ws, state.q, state.w) / v + 1e-6);
    (p, vars)
}

fn solve_with_retry(
    p: &mut ConvexProgram,
    iteration: usize,
) -> Result<ma_conic::Solution, OptError> {
    let sol = p.solve()?;
    if sol.is_optimal() {
        return Ok(sol);
    }
    p.set_tolerance(p.tolerance() * 10.0);
    let sol = p.solve()?;
    if sol.is_optimal() {
        Ok(sol)
    } else {
        Err(OptError::Subproblem {
            iteration,
            status: sol.status,
        })
    }
}

/// Feasible interval of positions: inside the region and reachable in `T`.
fn reachable(cfg: &ScenarioConfig) -> (f64, f64) {
    let x0 = cfg.x0();
    let reach = cfg.move_speed_v * cfg.block_t;
    ((x0 - reach).max(0.0), (x0 + reach).min(cfg.region_len_a))
}

fn single_report(
    ch: &UserChannel,
    cfg: &ScenarioConfig,
    x: f64,
    trace: Vec<f64>,
    iterations: usize,
    status: RunStatus,
) -> ThroughputReport {
    let t1 = (x - cfg.x0()).abs() / cfg.move_speed_v;
    let snr = cfg.snr_scale() * gain_formula(ch, x);
    let c = throughput_su(ch, x, cfg);
    ThroughputReport {
        positions: vec![x],
        sinr: vec![snr],
        throughput: vec![c],
        min_throughput: c,
        delay_t1: t1,
        duration_t2: (cfg.block_t - t1).max(0.0),
        trace,
        iterations,
        status,
    }
}

/// Runs the SCA from `x_init`; the returned position is the iterate with the
/// largest true throughput, `x_init` included.
pub fn optimize_position(
    ch: &UserChannel,
    cfg: &ScenarioConfig,
    x_init: f64,
) -> Result<(f64, ThroughputReport), OptError> {
    if !(0.0..=cfg.region_len_a).contains(&x_init) {
        return Err(DomainError::OutsideRegion {
            x: x_init,
            a: cfg.region_len_a,
        }
        .into());
    }
    let (lo, hi) = reachable(cfg);
    let x_init = x_init.clamp(lo, hi);
    let mut state = ScaStateSU::at(ch, cfg, x_init, (0.01 * cfg.region_len_a).max(q_floor(cfg)));
    let mut best = (throughput_su(ch, x_init, cfg), x_init);
    let mut trace = vec![state.surrogate_value(cfg)];
    let mut status = RunStatus::MaxIter;
    let mut iterations = 0;
    if state.u <= 0.0 {
        return Ok((
            x_init,
            single_report(ch, cfg, x_init, trace, 0, RunStatus::Converged),
        ));
    }
    for it in 1..=MAX_SCA_ITER {
        iterations = it;
        let (mut p, vars) = build_subproblem_p24(&state, ch, cfg);
        let sol = match solve_with_retry(&mut p, it) {
            Ok(s) => s,
            Err(OptError::Subproblem { .. }) => {
                status = RunStatus::SubproblemFailed;
                break;
            }
            Err(e) => return Err(e),
        };
        let prev = *trace.last().expect("trace starts non-empty");
        // the previous local point is feasible here, so a lower value is
        // solver inaccuracy; keep the previous point
        if sol.objective < prev {
            status = RunStatus::Converged;
            break;
        }
        let x = sol.value(vars.x).clamp(lo, hi);
        let c = throughput_su(ch, x, cfg);
        if c > best.0 {
            best = (c, x);
        }
        trace.push(sol.objective);
        let u = normalized_power(ch, cfg).value(x);
        state = ScaStateSU {
            x,
            q: sol
                .value(vars.q)
                .max((x - cfg.x0()).abs())
                .max(q_floor(cfg)),
            u,
            w: sol.value(vars.w).max((1.0 + u).log2()),
            delta_lb: state.delta_lb,
            delta_ub: state.delta_ub,
        };
        if sol.objective - prev <= cfg.sca_eps * prev.abs() {
            status = RunStatus::Converged;
            break;
        }
    }
    let x = best.1;
    Ok((x, single_report(ch, cfg, x, trace, iterations, status)))
}

/// Start points: `x⁰` first, then midpoints of `count − 1` equal cells.
pub fn start_points(cfg: &ScenarioConfig, count: usize) -> Vec<f64> {
    let a = cfg.region_len_a;
    let m = count.saturating_sub(1);
    std::iter::once(cfg.x0())
        .chain((0..m).map(|s| a * (s as f64 + 0.5) / m as f64))
        .collect()
}

/// Best of `cfg.starts` SCA runs by true throughput; the report carries the
/// winning run's trace and the total iteration count.
pub fn optimize_multistart(
    ch: &UserChannel,
    cfg: &ScenarioConfig,
) -> Result<(f64, ThroughputReport), OptError> {
    let mut best: Option<(f64, ThroughputReport)> = None;
    let mut total = 0;
    for x_init in start_points(cfg, cfg.starts) {
        let (x, rep) = optimize_position(ch, cfg, x_init)?;
        total += rep.iterations;
        if best
            .as_ref()
            .is_none_or(|b| rep.min_throughput > b.1.min_throughput)
        {
            best = Some((x, rep));
        }
    }
    let (x, mut rep) = best.expect("at least one start");
    rep.iterations = total;
    Ok((x, rep))
}

/// `√P_m·h/‖h‖`.
pub fn mrt_beamformer(h: &ChannelVector, p_max: f64) -> Result<DVector<Complex64>, DomainError> {
    let norm = h.entries.norm();
    if norm == 0.0 || !norm.is_finite() {
        return Err(DomainError::ZeroChannel);
    }
    Ok(h.entries.map(|e| e * (p_max.sqrt() / norm)))
}

/// Minorize–maximize on the gain alone: each step maximizes the quadratic
/// minorant over `[0, A]`, which has the closed form
/// `clamp(xⁱ + y₃′(xⁱ)/δ, 0, A)`.
pub fn max_snr_position(ch: &UserChannel, cfg: &ScenarioConfig, x_init: f64) -> f64 {
    let y = gain_trig(ch);
    let delta = y.curvature_bound();
    if delta == 0.0 {
        return x_init;
    }
    let a = cfg.region_len_a;
    let mut x = x_init;
    let mut g = y.value(x);
    for _ in 0..MAX_SCA_ITER {
        let next = (x + y.first(x) / delta).clamp(0.0, a);
        let gn = y.value(next);
        let rise = gn - g;
        x = next;
        g = gn;
        if rise <= cfg.sca_eps * 1e-2 * g.abs() {
            break;
        }
    }
    x
}

pub fn max_snr_multistart(ch: &UserChannel, cfg: &ScenarioConfig) -> f64 {
    start_points(cfg, cfg.starts)
        .into_iter()
        .map(|s| max_snr_position(ch, cfg, s))
        .fold((f64::NEG_INFINITY, cfg.x0()), |best, x| {
            let g = gain_formula(ch, x);
            if g > best.0 {
                (g, x)
            } else {
                best
            }
        })
        .1
}

/// Maximizer of `f` over `{0, step, 2·step, …} ∪ {A, x⁰}`; ties go to the
/// point closest to `x⁰`.
pub fn grid_argmax(f: impl Fn(f64) -> f64, a: f64, x0: f64, step: f64) -> (f64, f64) {
    assert!(step > 0.0);
    let n = (a / step).floor() as usize;
    let points = (0..=n)
        .map(|i| i as f64 * step)
        .filter(|&x| x <= a)
        .chain([a, x0]);
    let mut best = (x0, f(x0));
    for x in points {
        let v = f(x);
        if v > best.1 || (v == best.1 && (x - x0).abs() < (best.0 - x0).abs()) {
            best = (x, v);
        }
    }
    best
}

pub fn grid_oracle(ch: &UserChannel, cfg: &ScenarioConfig, step: f64) -> (f64, f64) {
    grid_argmax(
        |x| throughput_su(ch, x, cfg),
        cfg.region_len_a,
        cfg.x0(),
        step,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SingleUserScheme {
    Sca,
    Quantized(u32),
    MaxSnr,
    Fpa,
}

impl SingleUserScheme {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sca" => Some(Self::Sca),
            "max-snr" => Some(Self::MaxSnr),
            "fpa" => Some(Self::Fpa),
            _ => s
                .strip_prefix("quantized:")
                .or_else(|| s.strip_prefix("quantized"))
                .and_then(|k| {
                    if k.is_empty() {
                        Some(10)
                    } else {
                        k.parse().ok()
                    }
                })
                .filter(|&k| k > 0)
                .map(Self::Quantized),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Self::Sca => "sca".into(),
            Self::Quantized(k) => format!("quantized:{k}"),
            Self::MaxSnr => "max-snr".into(),
            Self::Fpa => "fpa".into(),
        }
    }
}

/// Runs a scheme and evaluates it on the true channel.
pub fn run_single_user(
    ch: &UserChannel,
    cfg: &ScenarioConfig,
    scheme: SingleUserScheme,
) -> Result<ThroughputReport, OptError> {
    match scheme {
        SingleUserScheme::Sca => Ok(optimize_multistart(ch, cfg)?.1),
        SingleUserScheme::Quantized(k0) => {
            let q = quantized_channel(ch, k0);
            let (x, rep) = optimize_multistart(&q, cfg)?;
            Ok(single_report(
                ch,
                cfg,
                x,
                rep.trace,
                rep.iterations,
                rep.status,
            ))
        }
        SingleUserScheme::MaxSnr => {
            let x = max_snr_multistart(ch, cfg);
            Ok(single_report(
                ch,
                cfg,
                x,
                Vec::new(),
                0,
                RunStatus::Converged,
            ))
        }
        SingleUserScheme::Fpa => {
            let x = cfg.x0();
            Ok(single_report(
                ch,
                cfg,
                x,
                Vec::new(),
                0,
                RunStatus::Converged,
            ))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::channel_vector;
    use crate::scenario::{sample_trial, ScenarioConfig};

    fn cfg(l: usize) -> ScenarioConfig {
        ScenarioConfig {
            l_paths: l,
            ..Default::default()
        }
    }

    #[test]
    fn throughput_examples() {
        let c = cfg(3);
        let ch = &sample_trial(&c, 0)[0];
        let x0 = c.x0();
        let at_x0 = c.block_t * (1.0 + c.snr_scale() * gain_formula(ch, x0)).log2();
        assert!((throughput_su(ch, x0, &c) - at_x0).abs() < 1e-12);
        let far = ScenarioConfig {
            block_t: 0.5,
            ..c.clone()
        };
        assert_eq!(
            throughput_su(ch, x0 + far.move_speed_v * far.block_t, &far),
            0.0
        );
        // direct composition: delay, MRT SNR, rate
        let x = 0.031;
        let h = channel_vector(ch, x).unwrap();
        let w = mrt_beamformer(&h, c.p_max).unwrap();
        let sig = h.entries.dotc(&w).norm_sqr();
        let direct =
            (c.block_t - (x - x0).abs() / c.move_speed_v) * (1.0 + sig / c.noise_power).log2();
        assert!((throughput_su(ch, x, &c) - direct).abs() < 1e-9 * direct);
    }

    #[test]
    fn y3_single_path_is_flat() {
        let c = cfg(1);
        let ch = &sample_trial(&c, 2)[0];
        let y = y3_and_derivatives(ch, 0.05, &c);
        assert!((y.value - c.p_max * ch.g_const).abs() < 1e-12 * y.value);
        assert_eq!(y.first, 0.0);
        assert_eq!(y.delta_lb, 0.0);
    }

    #[test]
    fn y3_derivative_matches_differences() {
        let c = cfg(5);
        let ch = &sample_trial(&c, 3)[0];
        let h = 1e-6 * c.wavelength;
        for i in 0..100 {
            let x = 0.2 * (i as f64 + 0.5) / 100.0;
            let y = y3_and_derivatives(ch, x, &c);
            let fd = (y3_and_derivatives(ch, x + h, &c).value
                - y3_and_derivatives(ch, x - h, &c).value)
                / (2.0 * h);
            let scale = y.first.abs().max(1e-3 * y.delta_lb * c.wavelength);
            assert!((fd - y.first).abs() < 1e-6 * scale, "{fd} {}", y.first);
        }
    }

    #[test]
    fn mrt_examples() {
        let c = Complex64::new(0.3, -0.4);
        let h = ChannelVector {
            entries: DVector::from_vec(vec![c, Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)]),
            position_x: 0.0,
        };
        let w = mrt_beamformer(&h, 4.0).unwrap();
        assert!((w[0] - c / c.norm() * 2.0).norm() < 1e-15);
        assert!((w.norm_squared() - 4.0).abs() < 1e-12);
        let zero = ChannelVector {
            entries: DVector::from_element(2, Complex64::new(0.0, 0.0)),
            position_x: 0.0,
        };
        assert_eq!(mrt_beamformer(&zero, 1.0), Err(DomainError::ZeroChannel));
    }

    #[test]
    fn single_path_stays_put() {
        let c = cfg(1);
        let ch = &sample_trial(&c, 0)[0];
        let (x, rep) = optimize_position(ch, &c, c.x0()).unwrap();
        assert_eq!(x, c.x0());
        assert_eq!(rep.min_throughput, throughput_su(ch, c.x0(), &c));
        assert_eq!(grid_oracle(ch, &c, c.wavelength / 1000.0).0, c.x0());
        assert_eq!(max_snr_position(ch, &c, 0.03), 0.03);
    }

    #[test]
    fn sca_trace_is_monotone_and_near_oracle() {
        let c = ScenarioConfig {
            starts: 16,
            ..cfg(4)
        };
        for trial in 0..5 {
            let ch = &sample_trial(&c, trial)[0];
            let (x, rep) = optimize_multistart(ch, &c).unwrap();
            for w in rep.trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-9, "{:?}", rep.trace);
            }
            let (_, best) = grid_oracle(ch, &c, c.wavelength / 1000.0);
            assert!(
                rep.min_throughput >= 0.99 * best,
                "trial {trial}: {} vs {best}",
                rep.min_throughput
            );
            assert!(best >= throughput_su(ch, x, &c) - 1e-9 - 1e-3 * best);
        }
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in ["sca", "max-snr", "fpa", "quantized:20"] {
            assert_eq!(SingleUserScheme::parse(s).unwrap().name(), s);
        }
        assert!(SingleUserScheme::parse("quantized:0").is_none());
        assert!(SingleUserScheme::parse("bogus").is_none());
    }
}
