//! Field-response channel and its closed-form power gain.
//!
//! With `M[n,l] = τ_l*·e^{−jκ t_nᵀp_l}` (`κ = 2π/λ`) and `f_l(x) = e^{jκϑ_l x}`,
//! the channel is `h(x) = M·f(x)` and, for any Hermitian `W`,
//! `h(x)ᴴ W h(x) = Σ_{a,b} A(a,b)·e^{jκ(ϑ_b−ϑ_a)x}` with `A = Mᴴ W M`.
//! The plain gain `‖h‖²` is the `W = I` case, whose off-diagonal entries are
//! `F_ab = τ_a·conj(τ_b)·Σ_n e^{jκ t_nᵀ(p_a−p_b)}`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::DomainError;
use crate::scenario::UserChannel;
use crate::surrogate::{TrigSum, TrigTerm};

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelVector {
    pub entries: DVector<Complex64>,
    pub position_x: f64,
}

/// Pairs `(a, b)` with `a < b` in the order used by `f_coeffs`.
pub fn pairs(l: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..l).flat_map(move |a| ((a + 1)..l).map(move |b| (a, b)))
}

fn wavenumber(ch: &UserChannel) -> f64 {
    2.0 * PI / ch.wavelength
}

fn check_region(ch: &UserChannel, x: f64) -> Result<(), DomainError> {
    if (0.0..=ch.region_len).contains(&x) {
        Ok(())
    } else {
        Err(DomainError::OutsideRegion {
            x,
            a: ch.region_len,
        })
    }
}

/// `F_ab` for `a < b` and `G = N·Σ|τ_l|²`.
pub fn f_coefficients(ch: &UserChannel) -> (Vec<Complex64>, f64) {
    let k = wavenumber(ch);
    let l = ch.paths();
    let p: Vec<[f64; 2]> = (0..l).map(|i| ch.p_vector(i)).collect();
    let f = pairs(l)
        .map(|(a, b)| {
            let dp = [p[a][0] - p[b][0], p[a][1] - p[b][1]];
            let s: Complex64 = ch
                .tx_positions
                .iter()
                .map(|t| Complex64::from_polar(1.0, k * (t[0] * dp[0] + t[1] * dp[1])))
                .sum();
            ch.path_responses[a] * ch.path_responses[b].conj() * s
        })
        .collect();
    let g = ch.antennas() as f64 * ch.path_responses.iter().map(|t| t.norm_sqr()).sum::<f64>();
    (f, g)
}

/// `M[n,l] = τ_l*·e^{−jκ t_nᵀp_l}`, so that `h(x) = M·f(x)`.
pub fn field_matrix(ch: &UserChannel) -> DMatrix<Complex64> {
    let k = wavenumber(ch);
    let (n, l) = (ch.antennas(), ch.paths());
    DMatrix::from_fn(n, l, |i, j| {
        let p = ch.p_vector(j);
        let t = ch.tx_positions[i];
        ch.path_responses[j].conj() * Complex64::from_polar(1.0, -k * (t[0] * p[0] + t[1] * p[1]))
    })
}

/// Direct evaluation of the channel, entry by entry.
pub fn channel_vector(ch: &UserChannel, x: f64) -> Result<ChannelVector, DomainError> {
    check_region(ch, x)?;
    Ok(ChannelVector {
        entries: channel_vector_unchecked(ch, x),
        position_x: x,
    })
}

pub fn channel_vector_unchecked(ch: &UserChannel, x: f64) -> DVector<Complex64> {
    let k = wavenumber(ch);
    DVector::from_iterator(
        ch.antennas(),
        ch.tx_positions.iter().map(|t| {
            (0..ch.paths())
                .map(|l| {
                    let p = ch.p_vector(l);
                    let phase = k * (x * ch.virtual_aoas[l] - (t[0] * p[0] + t[1] * p[1]));
                    ch.path_responses[l].conj() * Complex64::from_polar(1.0, phase)
                })
                .sum()
        }),
    )
}

/// `‖h(x)‖²` as a trigonometric sum in `x`.
pub fn gain_trig(ch: &UserChannel) -> TrigSum {
    let k = wavenumber(ch);
    TrigSum {
        constant: ch.g_const,
        terms: pairs(ch.paths())
            .zip(&ch.f_coeffs)
            .map(|((a, b), f)| TrigTerm {
                amp: 2.0 * f.norm(),
                freq: k * (ch.virtual_aoas[b] - ch.virtual_aoas[a]),
                phase: f.arg(),
            })
            .collect(),
    }
}

/// `hᴴ W h` as a trigonometric sum for a Hermitian `W`.
pub fn quadratic_trig(ch: &UserChannel, m: &DMatrix<Complex64>, w: &DMatrix<Complex64>) -> TrigSum {
    let k = wavenumber(ch);
    let a = m.adjoint() * w * m;
    let l = ch.paths();
    TrigSum {
        constant: (0..l).map(|i| a[(i, i)].re).sum(),
        terms: pairs(l)
            .map(|(i, j)| TrigTerm {
                amp: 2.0 * a[(i, j)].norm(),
                freq: k * (ch.virtual_aoas[j] - ch.virtual_aoas[i]),
                phase: a[(i, j)].arg(),
            })
            .collect(),
    }
}

/// Closed-form gain; defined for every real `x`.
pub fn gain_formula(ch: &UserChannel, x: f64) -> f64 {
    let k = wavenumber(ch);
    pairs(ch.paths())
        .zip(&ch.f_coeffs)
        .fold(ch.g_const, |acc, ((a, b), f)| {
            acc + 2.0
                * f.norm()
                * (k * (ch.virtual_aoas[b] - ch.virtual_aoas[a]) * x + f.arg()).cos()
        })
}

pub fn gain_closed_form(ch: &UserChannel, x: f64) -> Result<f64, DomainError> {
    check_region(ch, x)?;
    Ok(gain_formula(ch, x))
}
