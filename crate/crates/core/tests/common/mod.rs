//! Independent reference evaluations shared by the integration tests.
//!
//! The channel is built here as the matrix product `Gᴴ·Σ*·f(x)` with
//! `G[l,n] = e^{jκ t_nᵀp_l}`, `Σ = diag(τ)` and `f_l(x) = e^{jκϑ_l x}`;
//! derivatives come from differentiating `f` alone.

#![allow(dead_code)]

use std::f64::consts::PI;

use ma_core::scenario::{upa_positions, UserChannel};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha20Rng;

pub type CVec = DVector<Complex64>;
pub type CMat = DMatrix<Complex64>;

fn kappa(ch: &UserChannel) -> f64 {
    2.0 * PI / ch.wavelength
}

fn steering(ch: &UserChannel) -> CMat {
    let k = kappa(ch);
    DMatrix::from_fn(ch.path_responses.len(), ch.tx_positions.len(), |l, n| {
        let (e, a) = (ch.elev_aods[l], ch.azim_aods[l]);
        let t = ch.tx_positions[n];
        Complex64::from_polar(1.0, k * (t[0] * e.sin() * a.cos() + t[1] * e.cos()))
    })
}

/// `h^{(order)}(x)`, the `order`-th derivative of the channel in `x`.
pub fn channel_derivative(ch: &UserChannel, x: f64, order: i32) -> CVec {
    let k = kappa(ch);
    let g = steering(ch);
    let sigma = DMatrix::from_diagonal(&DVector::from_iterator(
        ch.path_responses.len(),
        ch.path_responses.iter().map(|t| t.conj()),
    ));
    let f = DVector::from_iterator(
        ch.virtual_aoas.len(),
        ch.virtual_aoas.iter().map(|&v| {
            Complex64::new(0.0, k * v).powi(order) * Complex64::from_polar(1.0, k * v * x)
        }),
    );
    g.adjoint() * sigma * f
}

pub fn channel(ch: &UserChannel, x: f64) -> CVec {
    channel_derivative(ch, x, 0)
}

pub fn gain(ch: &UserChannel, x: f64) -> f64 {
    channel(ch, x).norm_squared()
}

/// `hᴴWh` and its first two derivatives in `x`.
pub fn quadratic_with_derivatives(ch: &UserChannel, w: &CMat, x: f64) -> (f64, f64, f64) {
    let h0 = channel_derivative(ch, x, 0);
    let h1 = channel_derivative(ch, x, 1);
    let h2 = channel_derivative(ch, x, 2);
    let q = |a: &CVec, b: &CVec| a.dotc(&(w * b));
    let v = q(&h0, &h0).re;
    let d1 = 2.0 * q(&h1, &h0).re;
    let d2 = 2.0 * q(&h2, &h0).re + 2.0 * q(&h1, &h1).re;
    (v, d1, d2)
}

/// Random geometry with the given antenna grid and path count.
pub fn random_channel(
    rng: &mut ChaCha20Rng,
    rows: usize,
    cols: usize,
    paths: usize,
    wavelength: f64,
    region: f64,
) -> UserChannel {
    let mut angles = || -> Vec<f64> { (0..paths).map(|_| rng.random_range(0.0..=PI)).collect() };
    let (ea, aa, er, ar) = (angles(), angles(), angles(), angles());
    let tau = (0..paths)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    UserChannel::new(
        ea,
        aa,
        er,
        ar,
        tau,
        upa_positions(rows, cols, wavelength),
        wavelength,
        region,
    )
}

/// Random Hermitian PSD matrix `B Bᴴ` with entries of `B` in the unit square.
pub fn random_psd(rng: &mut ChaCha20Rng, n: usize, rank: usize) -> CMat {
    let b = DMatrix::from_fn(n, rank, |_, _| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    });
    &b * b.adjoint()
}
