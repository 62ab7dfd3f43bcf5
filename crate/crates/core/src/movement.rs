//! When is moving the antenna worthwhile?
//!
//! Closed-form rules for the single-user case: path-count verdicts, the gain
//! period under quantized virtual AoAs, the interval that must contain the
//! optimum, and design rules for `x⁰` and the quantization resolution.

use crate::channel::{self, pairs};
use crate::error::DomainError;
use crate::scenario::{ScenarioConfig, UserChannel};

/// Slack on the integer-existence test; constructed instances put `x⁰`
/// exactly on a gain peak, where the interval bounds coincide with an integer.
const INTEGER_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedAoAs {
    pub kappa0: u32,
    /// Grid indices, sorted.
    pub indices: Vec<u32>,
    /// `−1 + (2κ−1)/κ₀` for each sorted index.
    pub values: Vec<f64>,
    /// Quantized value of each path in the original path order.
    pub path_values: Vec<f64>,
    pub mu: Vec<u32>,
    /// gcd of the nonzero gaps, 0 when every gap is zero.
    pub mu_star: u32,
}

pub fn grid_value(kappa: u32, kappa0: u32) -> f64 {
    -1.0 + (2.0 * kappa as f64 - 1.0) / kappa0 as f64
}

/// Nearest grid index; midpoints go to the smaller index.
pub fn grid_index(value: f64, kappa0: u32) -> u32 {
    let c = (kappa0 as f64 * (value + 1.0) + 1.0) / 2.0;
    ((c - 0.5).ceil() as i64).clamp(1, kappa0 as i64) as u32
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

pub fn quantize(values: &[f64], kappa0: u32) -> QuantizedAoAs {
    assert!(kappa0 >= 1);
    let per_path: Vec<u32> = values.iter().map(|&v| grid_index(v, kappa0)).collect();
    let mut indices = per_path.clone();
    indices.sort_unstable();
    let mu: Vec<u32> = indices.windows(2).map(|w| w[1] - w[0]).collect();
    let mu_star = mu.iter().fold(0, |g, &m| gcd(g, m));
    QuantizedAoAs {
        kappa0,
        values: indices.iter().map(|&k| grid_value(k, kappa0)).collect(),
        path_values: per_path.iter().map(|&k| grid_value(k, kappa0)).collect(),
        indices,
        mu,
        mu_star,
    }
}

/// Copy of `ch` whose virtual AoAs are snapped to the `κ₀` grid.
pub fn quantized_channel(ch: &UserChannel, kappa0: u32) -> UserChannel {
    ch.with_virtual_aoas(&quantize(&ch.virtual_aoas, kappa0).path_values)
}

/// Minimum gain period `κ₀λ/(2μ*)`; infinite when the gain is flat.
pub fn gain_period(q: &QuantizedAoAs, wavelength: f64) -> f64 {
    if q.mu_star == 0 {
        f64::INFINITY
    } else {
        q.kappa0 as f64 * wavelength / (2.0 * q.mu_star as f64)
    }
}

/// Interval that holds the optimum when the gain has period `period`.
pub fn period_interval(period: f64, x0: f64, a: f64) -> (f64, f64) {
    let lo = 0f64.max((x0 - period / 2.0).min(a - period));
    let hi = a.min((x0 + period / 2.0).max(period));
    (lo, hi)
}

pub fn candidate_interval(q: &QuantizedAoAs, x0: f64, a: f64, wavelength: f64) -> (f64, f64) {
    period_interval(gain_period(q, wavelength), x0, a)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignRules {
    /// Favorable range for `x⁰`; `None` when the resolution rule fails.
    pub x0_interval: Option<(f64, f64)>,
    pub resolution_ok: bool,
}

pub fn design_rules(q: &QuantizedAoAs, a: f64, wavelength: f64) -> DesignRules {
    if q.mu_star == 0 {
        return DesignRules {
            x0_interval: Some((0.0, a)),
            resolution_ok: true,
        };
    }
    let k0 = q.kappa0 as f64;
    let m = q.mu_star as f64;
    // κ₀/A ≤ 2μ*/λ, compared in product form with a relative ulp allowance
    let resolution_ok = k0 * wavelength <= 2.0 * m * a * (1.0 + 4.0 * f64::EPSILON);
    let margin = (k0 * wavelength / (4.0 * m)).min(a / 2.0);
    DesignRules {
        x0_interval: resolution_ok.then_some((margin, a - margin)),
        resolution_ok,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    /// `x⁰` is provably optimal.
    MustStay,
    /// The gain completes more than one period inside the region.
    MovementConsidered,
    /// Neither sufficient condition applies.
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MovementVerdict {
    pub decision: Decision,
    pub must_stay: bool,
    /// `(d₁, d₂)` when the two-path staying condition holds.
    pub witness: Option<(i64, i64)>,
    pub candidate_interval: (f64, f64),
    /// `A·|ϑ₂ − ϑ₁| > λ`.
    pub exceeds_wavelength: bool,
}

impl MovementVerdict {
    fn stay(x0: f64, witness: Option<(i64, i64)>) -> Self {
        Self {
            decision: Decision::MustStay,
            must_stay: true,
            witness,
            candidate_interval: (x0, x0),
            exceeds_wavelength: false,
        }
    }
}

/// A single path gives a position-independent gain.
pub fn one_path_verdict(ch: &UserChannel, x0: f64) -> Result<MovementVerdict, DomainError> {
    if ch.paths() != 1 {
        return Err(DomainError::PathCount {
            expected: 1,
            found: ch.paths(),
        });
    }
    Ok(MovementVerdict::stay(x0, None))
}

/// Smallest integer in `[lo, hi]`, if any.
fn integer_in(lo: f64, hi: f64) -> Option<i64> {
    let d = (lo - INTEGER_SLACK).ceil();
    (d <= hi + INTEGER_SLACK).then_some(d as i64)
}

/// Integers `(d₁, d₂)` certifying that the two-path gain is unimodal on
/// `[0, A]` with its peak at `x⁰`.
///
/// With `s(x) = θ̃x/λ + ∠F₁₂/2π` the gain is `G + 2|F₁₂|cos(2πs)`. For
/// `θ̃ > 0` it decreases on `[x⁰, A]` iff `[s(x⁰), s(A)] ⊆ [d₁, d₁ + ½]` and
/// increases on `[0, x⁰]` iff `[s(0), s(x⁰)] ⊆ [d₂ − ½, d₂]`; `θ̃ < 0` mirrors.
pub fn staying_witness(
    theta: f64,
    phase: f64,
    x0: f64,
    a: f64,
    wavelength: f64,
) -> Option<(i64, i64)> {
    let p = phase / (2.0 * std::f64::consts::PI);
    let s0 = x0 * theta / wavelength + p;
    let sa = a * theta / wavelength + p;
    let (d1, d2) = if theta > 0.0 {
        (integer_in(sa - 0.5, s0)?, integer_in(s0, p + 0.5)?)
    } else {
        (integer_in(s0, sa + 0.5)?, integer_in(p - 0.5, s0)?)
    };
    Some((d1, d2))
}

pub fn two_path_verdict(
    ch: &UserChannel,
    cfg: &ScenarioConfig,
) -> Result<MovementVerdict, DomainError> {
    if ch.paths() != 2 {
        return Err(DomainError::PathCount {
            expected: 2,
            found: ch.paths(),
        });
    }
    let x0 = cfg.x0();
    let a = ch.region_len;
    let theta = ch.virtual_aoas[1] - ch.virtual_aoas[0];
    if theta == 0.0 || ch.f_coeffs[0].norm() == 0.0 {
        return Ok(MovementVerdict::stay(x0, None));
    }
    let exceeds = a * theta.abs() > ch.wavelength;
    if let Some(w) = staying_witness(theta, ch.f_coeffs[0].arg(), x0, a, ch.wavelength) {
        return Ok(MovementVerdict::stay(x0, Some(w)));
    }
    Ok(MovementVerdict {
        decision: if exceeds {
            Decision::MovementConsidered
        } else {
            Decision::Inconclusive
        },
        must_stay: false,
        witness: None,
        candidate_interval: period_interval(ch.wavelength / theta.abs(), x0, a),
        exceeds_wavelength: exceeds,
    })
}

/// Verdict for any path count: exact rules for `L ≤ 2`, otherwise the
/// candidate interval of the quantized gain when a resolution is configured.
pub fn verdict(ch: &UserChannel, cfg: &ScenarioConfig) -> MovementVerdict {
    let x0 = cfg.x0();
    match ch.paths() {
        0 | 1 => MovementVerdict::stay(x0, None),
        2 => two_path_verdict(ch, cfg).expect("two paths"),
        _ => {
            let spread = pairs(ch.paths())
                .map(|(a, b)| (ch.virtual_aoas[b] - ch.virtual_aoas[a]).abs())
                .fold(0.0, f64::max);
            let interval = match cfg.quant_res_kappa0 {
                Some(k0) => candidate_interval(
                    &quantize(&ch.virtual_aoas, k0),
                    x0,
                    ch.region_len,
                    ch.wavelength,
                ),
                None => (0.0, ch.region_len),
            };
            MovementVerdict {
                decision: Decision::Inconclusive,
                must_stay: false,
                witness: None,
                candidate_interval: interval,
                exceeds_wavelength: ch.region_len * spread > ch.wavelength,
            }
        }
    }
}

/// Largest value of the gain formula, bounded by `G + 2Σ|F_ab|`.
pub fn gain_upper_bound(ch: &UserChannel) -> f64 {
    channel::gain_trig(ch)
        .terms
        .iter()
        .fold(ch.g_const, |acc, t| acc + t.amp)
}
