//! Multiuser design: alternating optimization of relaxed beamforming
//! covariances and antenna positions for the max-min throughput, followed by
//! rank-one recovery.
//!
//! Covariances are normalized by the power budget (`Σ tr W̃_k ≤ 1`) and
//! channel outer products by the noise (`H̃_k = (P_m/σ²)·h_k h_kᴴ`), so
//! `tr(H̃_k W̃_j)` is the received power of beam `j` at user `k` over `σ²`.
//! Rates are written as `(α_k − β_k)·log₂e` with `e^{α_k}` below the total
//! received power plus one and `e^{β_k}` above the interference plus one.

use std::f64::consts::{LN_2, LOG2_E};

use ma_conic::{ConvexExpr, ConvexProgram, HermitianVar, LinExpr, Solution, Var};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::channel::{channel_vector_unchecked, field_matrix, quadratic_trig};
use crate::error::OptError;
use crate::movement::quantized_channel;
use crate::scenario::{ScenarioConfig, UserChannel};
use crate::single_user::{RunStatus, ThroughputReport};
use crate::surrogate::{Taylor, TrigSum};

pub const MAX_AO_ITER: usize = 100;
/// Lower bound on `β_k`, keeping `ln β_k` defined.
pub const BETA_MIN: f64 = 1e-8;
/// Eigenvalue-share threshold for treating a covariance as rank one.
pub const RANK_ONE_TOL: f64 = 1e-6;

type CMatrix = DMatrix<Complex64>;
type CVector = DVector<Complex64>;

/// Largest delay over users, `max_k |x_k − x⁰|/v`.
pub fn movement_delay(x: &[f64], cfg: &ScenarioConfig) -> f64 {
    x.iter()
        .map(|xk| (xk - cfg.x0()).abs() / cfg.move_speed_v)
        .fold(0.0, f64::max)
}

/// SINR and throughput of transmit vectors `w` (watts) at positions `x`.
pub fn sinr_and_throughput(
    channels: &[UserChannel],
    x: &[f64],
    w: &[CVector],
    cfg: &ScenarioConfig,
) -> ThroughputReport {
    let t1 = movement_delay(x, cfg);
    let t2 = (cfg.block_t - t1).max(0.0);
    let sinr: Vec<f64> = channels
        .iter()
        .zip(x)
        .enumerate()
        .map(|(k, (ch, &xk))| {
            let h = channel_vector_unchecked(ch, xk);
            let power = |j: usize| h.dotc(&w[j]).norm_sqr();
            let interference: f64 = (0..w.len()).filter(|&j| j != k).map(power).sum();
            power(k) / (interference + cfg.noise_power)
        })
        .collect();
    let throughput: Vec<f64> = sinr.iter().map(|g| t2 * (1.0 + g).log2()).collect();
    ThroughputReport {
        positions: x.to_vec(),
        min_throughput: throughput.iter().cloned().fold(f64::INFINITY, f64::min),
        sinr,
        throughput,
        delay_t1: t1,
        duration_t2: t2,
        trace: Vec::new(),
        iterations: 0,
        status: RunStatus::Converged,
    }
}

/// `H̃_k = (P_m/σ²)·h hᴴ` at `x`.
pub fn normalized_outer(ch: &UserChannel, x: f64, cfg: &ScenarioConfig) -> CMatrix {
    let h = channel_vector_unchecked(ch, x);
    (&h * h.adjoint()) * Complex64::from(cfg.snr_scale())
}

pub struct BeamformingVars {
    pub eta: Var,
    pub w: Vec<HermitianVar>,
    pub alpha: Vec<Var>,
    /// Empty for a single user, whose interference is identically zero.
    pub beta: Vec<Var>,
}

/// Relaxed beamforming subproblem at fixed positions.
///
/// `t_eff` is the transmission time credited to the rate constraints and
/// `beta_local` the expansion points of `e^{β_k}`.
pub fn build_beamforming_subproblem(
    channels: &[UserChannel],
    x: &[f64],
    beta_local: &[f64],
    t_eff: f64,
    cfg: &ScenarioConfig,
    warm: Option<&[CMatrix]>,
) -> (ConvexProgram, BeamformingVars) {
    let k_users = channels.len();
    let n = channels[0].antennas();
    let h: Vec<CMatrix> = channels
        .iter()
        .zip(x)
        .map(|(ch, &xk)| normalized_outer(ch, xk, cfg))
        .collect();
    let mut p = ConvexProgram::new();
    let eta = p.scalar();
    let w: Vec<HermitianVar> = (0..k_users).map(|_| p.hermitian(n)).collect();
    let alpha: Vec<Var> = (0..k_users).map(|_| p.scalar()).collect();
    let beta: Vec<Var> = if k_users > 1 {
        (0..k_users).map(|_| p.scalar()).collect()
    } else {
        Vec::new()
    };
    for &b in &w {
        p.add_psd(b);
    }
    p.add_le(
        w.iter().fold(LinExpr::zero(), |acc, b| acc + b.trace()),
        1.0,
    );

    // start: shrink the warm start (or a scaled identity) into the interior
    let eye = CMatrix::identity(n, n);
    let starts: Vec<CMatrix> = (0..k_users)
        .map(|k| {
            let base =
                warm.map_or_else(|| eye.scale(1.0 / (k_users * n) as f64), |ws| ws[k].clone());
            base.scale(0.97) + eye.scale(0.02 / (k_users * n) as f64)
        })
        .collect();
    let mut eta_start = f64::INFINITY;
    for k in 0..k_users {
        let received: Vec<LinExpr> = w.iter().map(|b| b.trace_with(&h[k])).collect();
        let powers: Vec<f64> = starts.iter().map(|s| (&h[k] * s).trace().re).collect();
        let total = received
            .iter()
            .fold(LinExpr::zero(), |acc, e| acc + e.clone());
        // e^{α_k} ≤ 1 + Σ_j tr(H̃_k W̃_j)
        p.add(ConvexExpr::affine(-total - 1.0).plus_exp(1.0, alpha[k]));
        let a0 = (1.0 + powers.iter().sum::<f64>()).ln() - 1e-3;
        p.set_start(alpha[k], a0);
        let mut rate = LinExpr::from(alpha[k]) * (t_eff * LOG2_E);
        let mut b0 = 0.0;
        if k_users > 1 {
            let interference = received
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != k)
                .fold(LinExpr::zero(), |acc, (_, e)| acc + e.clone());
            let bi = beta_local[k];
            let e = bi.exp();
            // 1 + Σ_{j≠k} tr(H̃_k W̃_j) ≤ e^{βⁱ}(β − βⁱ + 1)
            p.add_le(
                interference + 1.0,
                LinExpr::from(beta[k]) * e + (1.0 - bi) * e,
            );
            p.add_ge(beta[k], BETA_MIN);
            let i0: f64 = powers
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != k)
                .map(|(_, v)| v)
                .sum();
            b0 = (bi + (1.0 + i0 - e) / e + 1e-3).max(2.0 * BETA_MIN);
            p.set_start(beta[k], b0);
            rate = rate - LinExpr::from(beta[k]) * (t_eff * LOG2_E);
        }
        p.add_le(eta, rate);
        eta_start = eta_start.min(t_eff * LOG2_E * (a0 - b0));
    }
    p.set_start(eta, eta_start - 1e-3 * (1.0 + eta_start.abs()));
    for (b, s) in w.iter().zip(&starts) {
        p.set_start_matrix(*b, s).expect("matching shape");
    }
    p.maximize(eta);
    (
        p,
        BeamformingVars {
            eta,
            w,
            alpha,
            beta,
        },
    )
}

/// Expansion points for the position subproblem.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalPoints {
    pub x: Vec<f64>,
    pub zeta: f64,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

pub struct PositionVars {
    pub eta: Var,
    pub x: Vec<Var>,
    /// Delay slack; absent when positions are chosen for SINR only.
    pub zeta: Option<Var>,
    pub alpha: Vec<Var>,
    pub beta: Vec<Var>,
}

/// `y_kj(x) = tr(H̃_k(x) W̃_j)` as a trigonometric sum for every pair.
pub fn received_power_trig(
    channels: &[UserChannel],
    fields: &[CMatrix],
    w_blocks: &[CMatrix],
    cfg: &ScenarioConfig,
) -> Vec<Vec<TrigSum>> {
    channels
        .iter()
        .zip(fields)
        .map(|(ch, m)| {
            w_blocks
                .iter()
                .map(|wj| quadratic_trig(ch, m, wj).scaled(cfg.snr_scale()))
                .collect()
        })
        .collect()
}

fn zeta_min(cfg: &ScenarioConfig) -> f64 {
    1e-6 * cfg.region_len_a / cfg.move_speed_v
}

/// Position subproblem at fixed covariances. With `delay_aware = false` the
/// delay slack is dropped and the full block duration is credited.
pub fn build_position_subproblem(
    channels: &[UserChannel],
    fields: &[CMatrix],
    w_blocks: &[CMatrix],
    local: &LocalPoints,
    cfg: &ScenarioConfig,
    delay_aware: bool,
) -> (ConvexProgram, PositionVars) {
    let k_users = channels.len();
    let (t, v, a, x0) = (cfg.block_t, cfg.move_speed_v, cfg.region_len_a, cfg.x0());
    let y = received_power_trig(channels, fields, w_blocks, cfg);
    let mut p = ConvexProgram::new();
    let eta = p.scalar();
    let x: Vec<Var> = (0..k_users).map(|_| p.scalar()).collect();
    let zeta = delay_aware.then(|| p.scalar());
    let alpha: Vec<Var> = (0..k_users).map(|_| p.scalar()).collect();
    let beta: Vec<Var> = if k_users > 1 {
        (0..k_users).map(|_| p.scalar()).collect()
    } else {
        Vec::new()
    };

    let xs: Vec<f64> = local
        .x
        .iter()
        .map(|&xi| xi.clamp(1e-9 * a, a * (1.0 - 1e-9)))
        .collect();
    let zs = zeta.map(|_| {
        let need = movement_delay(&xs, cfg).max(zeta_min(cfg));
        let z = local.zeta.max(need * (1.0 + 1e-6) + 1e-12);
        z.min(0.5 * (need + t))
    });
    if let (Some(z), Some(z0)) = (zeta, zs) {
        p.add_le(z, t);
        p.add_ge(z, zeta_min(cfg));
        p.set_start(z, z0);
    }
    let mut eta_start = f64::INFINITY;
    for k in 0..k_users {
        let xi = local.x[k];
        let dx = LinExpr::from(x[k]) - xi;
        p.add_ge(x[k], 0.0);
        p.add_le(x[k], a);
        p.set_start(x[k], xs[k]);
        if let Some(z) = zeta {
            p.add_ge(LinExpr::from(z) * v, LinExpr::from(x[k]) - x0);
            p.add_ge(LinExpr::from(z) * v, -LinExpr::from(x[k]) + x0);
        }
        let models: Vec<Taylor> = y[k].iter().map(|s| s.expand(xi)).collect();
        let signal = Taylor::sum(xi, &models);
        // e^{α_k} ≤ 1 + Σ_j y_kjˡᵇ(x_k)
        p.add(
            ConvexExpr::affine(-(dx.clone() * signal.slope) - signal.value - 1.0)
                .plus_square(0.5 * signal.delta, dx.clone())
                .plus_exp(1.0, alpha[k]),
        );
        let a0 = (1.0 + signal.lower(xs[k])).ln() - 1e-6;
        p.set_start(alpha[k], a0);
        let mut b0 = 0.0;
        if k_users > 1 {
            let interference = Taylor::sum(
                xi,
                models
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != k)
                    .map(|(_, m)| m),
            );
            let bi = local.beta[k];
            let e = bi.exp();
            // 1 + Σ_{j≠k} y_kjᵘᵇ(x_k) ≤ e^{βⁱ}(β − βⁱ + 1)
            p.add(
                ConvexExpr::affine(
                    dx.clone() * interference.slope + interference.value + 1.0
                        - LinExpr::from(beta[k]) * e
                        - (1.0 - bi) * e,
                )
                .plus_square(0.5 * interference.delta, dx.clone()),
            );
            p.add_ge(beta[k], BETA_MIN);
            b0 = (bi + (1.0 + interference.upper(xs[k]) - e) / e + 1e-6).max(2.0 * BETA_MIN);
            p.set_start(beta[k], b0);
        }
        match (zeta, zs) {
            (Some(z), Some(z0)) => {
                let (zi, ai) = (local.zeta, local.alpha[k]);
                // ζα_k ≤ ½(αⁱ/ζⁱ·ζ² + ζⁱ/αⁱ·α_k²)
                let mut f =
                    ConvexExpr::affine(LinExpr::from(eta) * LN_2 - LinExpr::from(alpha[k]) * t)
                        .plus_square(ai / (2.0 * zi), z)
                        .plus_square(zi / (2.0 * ai), alpha[k]);
                let mut slack = t * a0 - 0.5 * (ai / zi * z0 * z0 + zi / ai * a0 * a0);
                if k_users > 1 {
                    // ζβ_k ≥ ζⁱβⁱ(1 + ln ζ + ln β_k − ln ζⁱ − ln βⁱ)
                    let bi = local.beta[k];
                    let c = zi * bi;
                    f = f
                        .plus_affine(LinExpr::from(beta[k]) * t + (-c * (1.0 - zi.ln() - bi.ln())))
                        .minus_log(c, z)
                        .minus_log(c, beta[k]);
                    slack += -t * b0 + c * (1.0 + z0.ln() + b0.ln() - zi.ln() - bi.ln());
                }
                p.add(f);
                eta_start = eta_start.min(slack / LN_2);
            }
            _ => {
                let mut rate = LinExpr::from(alpha[k]) * (t * LOG2_E);
                if k_users > 1 {
                    rate = rate - LinExpr::from(beta[k]) * (t * LOG2_E);
                }
                p.add_le(eta, rate);
                eta_start = eta_start.min(t * LOG2_E * (a0 - b0));
            }
        }
    }
    p.set_start(eta, eta_start - 1e-3 * (1.0 + eta_start.abs()));
    p.maximize(eta);
    (
        p,
        PositionVars {
            eta,
            x,
            zeta,
            alpha,
            beta,
        },
    )
}

fn solve_with_retry(p: &mut ConvexProgram, iteration: usize) -> Result<Solution, OptError> {
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

/// Iterate state of the alternating optimization.
#[derive(Debug, Clone, PartialEq)]
pub struct AoState {
    pub positions: Vec<f64>,
    pub zeta: f64,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    /// Normalized covariances, `Σ tr W̃_k ≤ 1`.
    pub w_blocks: Vec<CMatrix>,
    pub trace: Vec<f64>,
}

/// Interference exponents `ln(1 + Σ_{j≠k} tr(H̃_k W̃_j))` under equal-power
/// per-user MRT at `x`, floored at `1e−6`.
pub fn initial_beta(channels: &[UserChannel], x: &[f64], cfg: &ScenarioConfig) -> Vec<f64> {
    let k_users = channels.len();
    let h: Vec<CVector> = channels
        .iter()
        .zip(x)
        .map(|(ch, &xk)| channel_vector_unchecked(ch, xk))
        .collect();
    let beams: Vec<CVector> = h
        .iter()
        .map(|hk| hk.scale(1.0 / (hk.norm() * (k_users as f64).sqrt()).max(f64::MIN_POSITIVE)))
        .collect();
    (0..k_users)
        .map(|k| {
            let i: f64 = (0..k_users)
                .filter(|&j| j != k)
                .map(|j| cfg.snr_scale() * h[k].dotc(&beams[j]).norm_sqr())
                .sum();
            i.ln_1p().max(1e-6)
        })
        .collect()
}

struct BeamformingStep {
    w: Vec<CMatrix>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    eta: f64,
}

fn beamforming_step(
    channels: &[UserChannel],
    x: &[f64],
    beta_local: &[f64],
    t_eff: f64,
    cfg: &ScenarioConfig,
    warm: Option<&[CMatrix]>,
    iteration: usize,
) -> Result<BeamformingStep, OptError> {
    let (mut p, vars) = build_beamforming_subproblem(channels, x, beta_local, t_eff, cfg, warm);
    let sol = solve_with_retry(&mut p, iteration)?;
    Ok(BeamformingStep {
        w: vars.w.iter().map(|&b| sol.matrix(b)).collect(),
        alpha: vars.alpha.iter().map(|&a| sol.value(a)).collect(),
        beta: if vars.beta.is_empty() {
            vec![0.0; channels.len()]
        } else {
            vars.beta.iter().map(|&b| sol.value(b)).collect()
        },
        eta: sol.value(vars.eta),
    })
}

/// Outcome of a multiuser design after rank-one recovery.
#[derive(Debug, Clone)]
pub struct MultiUserOutcome {
    pub report: ThroughputReport,
    pub rank_one: RankOneReport,
    pub state: AoState,
}

/// Relaxed beamforming SCA at fixed positions; the rate credit is `T − t₁(x)`.
pub fn beamforming_sca(
    channels: &[UserChannel],
    x: &[f64],
    cfg: &ScenarioConfig,
) -> Result<AoState, OptError> {
    let t_eff = (cfg.block_t - movement_delay(x, cfg)).max(0.0);
    let mut beta = initial_beta(channels, x, cfg);
    let mut trace = Vec::new();
    let mut last: Option<BeamformingStep> = None;
    for it in 1..=MAX_AO_ITER {
        let step = beamforming_step(
            channels,
            x,
            &beta,
            t_eff,
            cfg,
            last.as_ref().map(|s| s.w.as_slice()),
            it,
        )?;
        let prev = trace.last().copied();
        if prev.is_some_and(|p| step.eta < p) {
            break;
        }
        trace.push(step.eta);
        beta = step.beta.iter().map(|b| b.max(BETA_MIN)).collect();
        last = Some(step);
        if prev.is_some_and(|p| trace[trace.len() - 1] - p <= cfg.sca_eps * p.abs()) {
            break;
        }
    }
    let step = last.expect("at least one beamforming step");
    Ok(AoState {
        positions: x.to_vec(),
        zeta: movement_delay(x, cfg),
        alpha: step.alpha,
        beta: step.beta,
        w_blocks: step.w,
        trace,
    })
}

/// Alternates the beamforming and position subproblems from `x⁰`.
///
/// The beamforming step credits `T − t₁(x)`. The position step expands the
/// delay bounds about `ζⁱ = max(t₁(xⁱ), 0.01·A/v)`; the floor keeps the
/// surrogate curvature finite at `x⁰`, where the bound is then not tight, so a
/// position step that scores below its beamforming step is discarded. The
/// recorded objective is therefore non-decreasing.
pub fn alternating_optimize(
    channels: &[UserChannel],
    cfg: &ScenarioConfig,
    delay_aware: bool,
) -> Result<(AoState, RunStatus, usize), OptError> {
    let k_users = channels.len();
    let fields: Vec<CMatrix> = channels.iter().map(field_matrix).collect();
    let zeta_floor = 0.01 * cfg.region_len_a / cfg.move_speed_v;
    let mut x = vec![cfg.x0(); k_users];
    let mut beta = initial_beta(channels, &x, cfg);
    let mut trace: Vec<f64> = Vec::new();
    let mut w: Option<Vec<CMatrix>> = None;
    let mut alpha = vec![0.0; k_users];
    let mut status = RunStatus::MaxIter;
    let mut iterations = 0;
    for it in 1..=MAX_AO_ITER {
        iterations = it;
        let t_eff = if delay_aware {
            cfg.block_t - movement_delay(&x, cfg)
        } else {
            cfg.block_t
        };
        if t_eff <= 0.0 {
            status = RunStatus::Converged;
            break;
        }
        let bf = match beamforming_step(channels, &x, &beta, t_eff, cfg, w.as_deref(), it) {
            Ok(s) => s,
            Err(OptError::Subproblem { .. }) if w.is_some() => {
                status = RunStatus::SubproblemFailed;
                break;
            }
            Err(e) => return Err(e),
        };
        let prev = trace.last().copied();
        if prev.is_some_and(|p| bf.eta < p) {
            status = RunStatus::Converged;
            break;
        }
        let local = LocalPoints {
            x: x.clone(),
            zeta: movement_delay(&x, cfg).max(zeta_floor),
            alpha: bf.alpha.iter().map(|a| a.max(1e-8)).collect(),
            beta: bf.beta.iter().map(|b| b.max(BETA_MIN)).collect(),
        };
        let (mut p, vars) =
            build_position_subproblem(channels, &fields, &bf.w, &local, cfg, delay_aware);
        let value = match solve_with_retry(&mut p, it) {
            Ok(sol) if sol.value(vars.eta) >= bf.eta => {
                x = vars
                    .x
                    .iter()
                    .map(|&v| sol.value(v).clamp(0.0, cfg.region_len_a))
                    .collect();
                alpha = vars.alpha.iter().map(|&v| sol.value(v)).collect();
                if !vars.beta.is_empty() {
                    beta = vars
                        .beta
                        .iter()
                        .map(|&v| sol.value(v).max(BETA_MIN))
                        .collect();
                }
                sol.value(vars.eta)
            }
            Ok(_) | Err(OptError::Subproblem { .. }) => {
                alpha = bf.alpha.clone();
                beta = local.beta.clone();
                bf.eta
            }
            Err(e) => return Err(e),
        };
        trace.push(value);
        w = Some(bf.w);
        if prev.is_some_and(|p| value - p <= cfg.sca_eps * p.abs()) {
            status = RunStatus::Converged;
            break;
        }
    }
    let w_blocks = match w {
        Some(w) => w,
        None => vec![CMatrix::zeros(channels[0].antennas(), channels[0].antennas()); k_users],
    };
    Ok((
        AoState {
            zeta: movement_delay(&x, cfg),
            positions: x,
            alpha,
            beta,
            w_blocks,
            trace,
        },
        status,
        iterations,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankOneReport {
    /// `λ₁/Σλ` of each covariance.
    pub ratios: Vec<f64>,
    /// Recovered transmit vectors in watts-scale.
    pub vectors: Vec<CVector>,
    pub min_throughput: f64,
    /// Max-min throughput of the relaxation at the same positions.
    pub eta_relaxed: Option<f64>,
}

fn dominant(w: &CMatrix) -> (f64, f64, CVector) {
    let eig = SymmetricEigen::new(w.clone());
    let (imax, lmax) =
        eig.eigenvalues
            .iter()
            .enumerate()
            .fold(
                (0, f64::NEG_INFINITY),
                |b, (i, &l)| if l > b.1 { (i, l) } else { b },
            );
    let total: f64 = eig.eigenvalues.iter().map(|l| l.max(0.0)).sum();
    let ratio = if total > 0.0 {
        lmax.max(0.0) / total
    } else {
        1.0
    };
    (
        ratio,
        lmax.max(0.0),
        eig.eigenvectors.column(imax).into_owned(),
    )
}

fn min_sinr(h: &[CVector], w: &[CVector], cfg: &ScenarioConfig) -> f64 {
    (0..h.len())
        .map(|k| {
            let p = |j: usize| cfg.snr_scale() * h[k].dotc(&w[j]).norm_sqr();
            let i: f64 = (0..w.len()).filter(|&j| j != k).map(p).sum();
            p(k) / (1.0 + i)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Recovers transmit vectors from normalized covariances. Returned vectors
/// are scaled to watts (`Σ‖w_k‖² ≤ P_m`).
pub fn gaussian_randomization(
    w_set: &[CMatrix],
    channels: &[UserChannel],
    x: &[f64],
    cfg: &ScenarioConfig,
    n_rand: usize,
    rng: &mut ChaCha20Rng,
) -> RankOneReport {
    let k_users = w_set.len();
    let h: Vec<CVector> = channels
        .iter()
        .zip(x)
        .map(|(ch, &xk)| channel_vector_unchecked(ch, xk))
        .collect();
    let dom: Vec<(f64, f64, CVector)> = w_set.iter().map(dominant).collect();
    let ratios: Vec<f64> = dom.iter().map(|d| d.0).collect();
    let principal: Vec<CVector> = w_set
        .iter()
        .zip(&dom)
        .map(|(w, (_, _, u))| u.scale(w.trace().re.max(0.0).sqrt()))
        .collect();
    let mut best = principal;
    if ratios.iter().any(|&r| r <= 1.0 - RANK_ONE_TOL) {
        let mut best_sinr = min_sinr(&h, &best, cfg);
        let roots: Vec<CMatrix> = w_set
            .iter()
            .map(|w| {
                let eig = SymmetricEigen::new(w.clone());
                let d = eig.eigenvalues.map(|l| Complex64::from(l.max(0.0).sqrt()));
                &eig.eigenvectors * CMatrix::from_diagonal(&d)
            })
            .collect();
        let n = w_set[0].nrows();
        let half = std::f64::consts::FRAC_1_SQRT_2;
        for _ in 0..n_rand {
            let mut cand: Vec<CVector> = roots
                .iter()
                .map(|r| {
                    let g = CVector::from_fn(n, |_, _| {
                        let re: f64 = StandardNormal.sample(rng);
                        let im: f64 = StandardNormal.sample(rng);
                        Complex64::new(re * half, im * half)
                    });
                    r * g
                })
                .collect();
            let power: f64 = cand.iter().map(|c| c.norm_squared()).sum();
            if power <= 0.0 {
                continue;
            }
            let s = 1.0 / power.sqrt();
            for c in cand.iter_mut() {
                *c *= Complex64::from(s);
            }
            let g = min_sinr(&h, &cand, cfg);
            if g > best_sinr {
                best_sinr = g;
                best = cand;
            }
        }
        // keep the rng position independent of whether candidates were used
        let _ = rng.random::<u64>();
    }
    let scale = Complex64::from(cfg.p_max.sqrt());
    let vectors: Vec<CVector> = best.into_iter().map(|v| v * scale).collect();
    let report = sinr_and_throughput(channels, x, &vectors, cfg);
    debug_assert_eq!(vectors.len(), k_users);
    RankOneReport {
        ratios,
        vectors,
        min_throughput: report.min_throughput,
        eta_relaxed: None,
    }
}

/// Whether some covariances `Σ tr W̃ ≤ 1` give every user SINR at least
/// `gamma`, decided by the sign of the best common margin.
fn sinr_feasible(h: &[CMatrix], gamma: f64) -> Result<bool, OptError> {
    let k_users = h.len();
    let n = h[0].nrows();
    let mut p = ConvexProgram::new();
    let t = p.scalar();
    let w: Vec<HermitianVar> = (0..k_users).map(|_| p.hermitian(n)).collect();
    for &b in &w {
        p.add_psd(b);
        p.set_start_matrix(
            b,
            &CMatrix::identity(n, n).scale(0.5 / (k_users * n) as f64),
        )
        .expect("matching shape");
    }
    p.add_le(
        w.iter().fold(LinExpr::zero(), |acc, b| acc + b.trace()),
        1.0,
    );
    let mut t0 = f64::INFINITY;
    for k in 0..k_users {
        let mut margin = w[k].trace_with(&h[k]) - gamma;
        let mut m0 = 0.5 / (k_users * n) as f64 * h[k].trace().re - gamma;
        for j in (0..k_users).filter(|&j| j != k) {
            margin = margin - w[j].trace_with(&h[k]) * gamma;
            m0 -= gamma * 0.5 / (k_users * n) as f64 * h[k].trace().re;
        }
        let scale = 1.0 / (1.0 + gamma);
        p.add_le(t, margin * scale);
        t0 = t0.min(m0 * scale);
    }
    p.set_start(t, t0 - 1.0);
    p.maximize(t);
    p.set_tolerance(1e-9);
    let sol = solve_with_retry(&mut p, 0)?;
    Ok(sol.objective > 0.0)
}

/// Max-min throughput of the relaxation at fixed positions, by bisection on
/// the common SINR target. An upper bound for any recovered beam set.
pub fn relaxed_max_min(
    channels: &[UserChannel],
    x: &[f64],
    cfg: &ScenarioConfig,
) -> Result<f64, OptError> {
    let h: Vec<CMatrix> = channels
        .iter()
        .zip(x)
        .map(|(ch, &xk)| normalized_outer(ch, xk, cfg))
        .collect();
    let mut lo = 0.0;
    let mut hi = h.iter().map(|m| m.trace().re).fold(f64::INFINITY, f64::min);
    while hi - lo > 1e-7 * hi {
        let mid = 0.5 * (lo + hi);
        if sinr_feasible(&h, mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t2 = (cfg.block_t - movement_delay(x, cfg)).max(0.0);
    Ok(t2 * (1.0 + hi).log2())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MultiUserScheme {
    Ao,
    Quantized(u32),
    MaxMinSinr,
    Fpa,
}

impl MultiUserScheme {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ao" => Some(Self::Ao),
            "max-min-sinr" => Some(Self::MaxMinSinr),
            "fpa" => Some(Self::Fpa),
            _ => s
                .strip_prefix("quantized:")
                .and_then(|k| k.parse().ok())
                .filter(|&k| k > 0)
                .map(Self::Quantized),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Self::Ao => "ao".into(),
            Self::Quantized(k) => format!("quantized:{k}"),
            Self::MaxMinSinr => "max-min-sinr".into(),
            Self::Fpa => "fpa".into(),
        }
    }
}

/// Runs a scheme, recovers rank-one beams and evaluates the true throughput.
pub fn run_multi_user(
    channels: &[UserChannel],
    cfg: &ScenarioConfig,
    scheme: MultiUserScheme,
    rng: &mut ChaCha20Rng,
    with_bound: bool,
) -> Result<MultiUserOutcome, OptError> {
    let (state, status, iterations) = match scheme {
        MultiUserScheme::Ao => alternating_optimize(channels, cfg, true)?,
        MultiUserScheme::MaxMinSinr => alternating_optimize(channels, cfg, false)?,
        MultiUserScheme::Quantized(k0) => {
            let q: Vec<UserChannel> = channels.iter().map(|c| quantized_channel(c, k0)).collect();
            let (s, status, it) = alternating_optimize(&q, cfg, true)?;
            let mut fixed = beamforming_sca(channels, &s.positions, cfg)?;
            fixed.trace = s.trace;
            (fixed, status, it)
        }
        MultiUserScheme::Fpa => {
            let s = beamforming_sca(channels, &vec![cfg.x0(); channels.len()], cfg)?;
            let it = s.trace.len();
            (s, RunStatus::Converged, it)
        }
    };
    let mut rank_one = gaussian_randomization(
        &state.w_blocks,
        channels,
        &state.positions,
        cfg,
        cfg.n_rand,
        rng,
    );
    if with_bound {
        rank_one.eta_relaxed = Some(relaxed_max_min(channels, &state.positions, cfg)?);
    }
    let mut report = sinr_and_throughput(channels, &state.positions, &rank_one.vectors, cfg);
    report.trace = state.trace.clone();
    report.iterations = iterations;
    report.status = status;
    Ok(MultiUserOutcome {
        report,
        rank_one,
        state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{sample_trial, stream_rng};
    use crate::single_user::throughput_su;

    fn cfg(k: usize, l: usize) -> ScenarioConfig {
        ScenarioConfig {
            k_users: k,
            l_paths: l,
            n_rand: 200,
            ..Default::default()
        }
    }

    #[test]
    fn single_user_sinr_has_no_interference() {
        let c = cfg(1, 3);
        let chs = sample_trial(&c, 0);
        let x = [0.05];
        let h = channel_vector_unchecked(&chs[0], x[0]);
        let w = vec![h.scale(0.01 / h.norm())];
        let r = sinr_and_throughput(&chs, &x, &w, &c);
        let expect = h.dotc(&w[0]).norm_sqr() / c.noise_power;
        assert!((r.sinr[0] - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn fixed_position_relaxation_recovers_mrt() {
        let c = cfg(1, 4);
        let chs = sample_trial(&c, 1);
        let x = [c.x0()];
        let (p, vars) = build_beamforming_subproblem(&chs, &x, &[0.0], c.block_t, &c, None);
        let sol = p.solve().unwrap();
        assert!(sol.is_optimal());
        let w = sol.matrix(vars.w[0]);
        let h = normalized_outer(&chs[0], x[0], &c);
        let got = (&h * &w).trace().re;
        let mrt = h.trace().re;
        assert!((got / mrt - 1.0).abs() < 1e-3, "{got} vs {mrt}");
    }

    #[test]
    fn rank_one_recovery_is_exact() {
        let c = cfg(1, 2);
        let chs = sample_trial(&c, 0);
        let v = CVector::from_vec(vec![
            Complex64::new(0.3, 0.1),
            Complex64::new(-0.2, 0.4),
            Complex64::new(0.0, -0.5),
            Complex64::new(0.1, 0.1),
        ]);
        let w = &v * v.adjoint();
        let mut rng = stream_rng(1, 0);
        let rep = gaussian_randomization(std::slice::from_ref(&w), &chs, &[0.1], &c, 10, &mut rng);
        assert!(rep.ratios[0] > 1.0 - 1e-12);
        let u = rep.vectors[0].scale(1.0 / c.p_max.sqrt());
        assert!((&u * u.adjoint() - w).norm() < 1e-8);
    }

    #[test]
    fn single_user_ao_tracks_single_user_sca() {
        let c = cfg(1, 4);
        for trial in 0..3 {
            let chs = sample_trial(&c, trial);
            let mut rng = stream_rng(1, trial);
            let out = run_multi_user(&chs, &c, MultiUserScheme::Ao, &mut rng, false).unwrap();
            for w in out.report.trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-7, "{:?}", out.report.trace);
            }
            let (_, su) = crate::single_user::optimize_position(&chs[0], &c, c.x0()).unwrap();
            let ao = out.report.min_throughput;
            assert!(
                ao >= 0.99 * su.min_throughput,
                "{ao} vs {}",
                su.min_throughput
            );
            assert!(ao <= throughput_su(&chs[0], out.report.positions[0], &c) * (1.0 + 1e-6));
        }
    }

    #[test]
    fn multiuser_trace_monotone_and_bounded_by_relaxation() {
        let c = cfg(2, 3);
        let chs = sample_trial(&c, 4);
        let mut rng = stream_rng(1, 4);
        let out = run_multi_user(&chs, &c, MultiUserScheme::Ao, &mut rng, true).unwrap();
        for w in out.report.trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-7, "{:?}", out.report.trace);
        }
        let power: f64 = out.state.w_blocks.iter().map(|w| w.trace().re).sum();
        assert!(power <= 1.0 + 1e-8);
        let bound = out.rank_one.eta_relaxed.unwrap();
        assert!(
            out.report.min_throughput <= bound + 1e-6,
            "{} > {bound}",
            out.report.min_throughput
        );
    }
}
