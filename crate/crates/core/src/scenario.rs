//! Configuration and random instance generation.
//!
//! Random streams come from ChaCha20 keyed by `rng_seed`. The stream id of
//! user `k` in Monte-Carlo trial `t` is `(t << 20) | k`; other consumers
//! (Gaussian randomization, multi-start jitter) set bit 63 and use their own
//! low bits, so no two purposes share a stream.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::channel;
use crate::error::ConfigError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub n_tx: usize,
    pub k_users: usize,
    pub l_paths: usize,
    /// Moving-region length `A` in meters.
    pub region_len_a: f64,
    pub move_speed_v: f64,
    /// Block duration `T` in seconds.
    pub block_t: f64,
    /// Total transmit power in watts.
    pub p_max: f64,
    /// Per-user noise power in watts.
    pub noise_power: f64,
    pub wavelength: f64,
    pub quant_res_kappa0: Option<u32>,
    /// Initial antenna coordinate shared by all users; `None` means `A/2`.
    pub init_pos_x0: Option<f64>,
    pub pathloss_rho0: f64,
    pub pathloss_exp_xi0: f64,
    pub user_radius_r: f64,
    pub sca_eps: f64,
    pub rng_seed: u64,
    /// Number of single-user SCA starts (x⁰ plus uniform midpoints).
    pub starts: usize,
    /// Gaussian-randomization candidate count.
    pub n_rand: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let wavelength = 0.1;
        Self {
            n_tx: 4,
            k_users: 1,
            l_paths: 6,
            region_len_a: 2.0 * wavelength,
            move_speed_v: 0.1,
            block_t: 1.5,
            p_max: db_to_linear(10.0 - 30.0),
            noise_power: db_to_linear(-80.0 - 30.0),
            wavelength,
            quant_res_kappa0: None,
            init_pos_x0: None,
            pathloss_rho0: db_to_linear(-42.0),
            pathloss_exp_xi0: 2.8,
            user_radius_r: 100.0,
            sca_eps: 1e-4,
            rng_seed: 1,
            starts: 1,
            n_rand: 1000,
        }
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

impl ScenarioConfig {
    /// `Γ² = ρ₀·r^(−ξ₀)`.
    pub fn mean_channel_gain(&self) -> f64 {
        self.pathloss_rho0 * self.user_radius_r.powf(-self.pathloss_exp_xi0)
    }

    pub fn x0(&self) -> f64 {
        self.init_pos_x0.unwrap_or(self.region_len_a / 2.0)
    }

    /// `P_m/σ²`, the scale used to normalize received powers.
    pub fn snr_scale(&self) -> f64 {
        self.p_max / self.noise_power
    }

    /// UPA shape: rows is the largest divisor of `n_tx` not above `√n_tx`.
    pub fn upa_shape(&self) -> (usize, usize) {
        let n = self.n_tx;
        let mut rows = (n as f64).sqrt().floor() as usize;
        while rows > 1 && !n.is_multiple_of(rows) {
            rows -= 1;
        }
        let rows = rows.max(1);
        (rows, n / rows)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("region_len_A", self.region_len_a),
            ("move_speed_v", self.move_speed_v),
            ("block_T", self.block_t),
            ("p_max", self.p_max),
            ("noise_power", self.noise_power),
            ("wavelength", self.wavelength),
            ("pathloss_rho0", self.pathloss_rho0),
            ("pathloss_exp_xi0", self.pathloss_exp_xi0),
            ("user_radius_r", self.user_radius_r),
            ("sca_eps", self.sca_eps),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(ConfigError::Invalid(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        for (name, v) in [
            ("n_tx", self.n_tx),
            ("k_users", self.k_users),
            ("l_paths", self.l_paths),
            ("starts", self.starts),
        ] {
            if v == 0 {
                return Err(ConfigError::Invalid(format!("{name} must be at least 1")));
            }
        }
        if self.quant_res_kappa0 == Some(0) {
            return Err(ConfigError::Invalid(
                "quant_res_kappa0 must be positive".into(),
            ));
        }
        let x0 = self.x0();
        if !(0.0..=self.region_len_a).contains(&x0) {
            return Err(ConfigError::Invalid(format!(
                "init_pos_x0 = {x0} outside [0, {}]",
                self.region_len_a
            )));
        }
        Ok(())
    }

    /// Parses the flat `key=value` dialect; `#` starts a comment.
    ///
    /// Keys not present keep their defaults. Lengths may also be given in
    /// wavelengths via `region_len_A_lambda` and `init_pos_x0_lambda`; these
    /// are resolved after `wavelength` regardless of line order.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let mut region_lambda = None;
        let mut x0_lambda = None;
        for (key, value) in key_values(text)? {
            let num = || -> Result<f64, ConfigError> {
                value.parse::<f64>().map_err(|_| ConfigError::Value {
                    key: key.clone(),
                    value: value.clone(),
                })
            };
            let int = || -> Result<u64, ConfigError> {
                value.parse::<u64>().map_err(|_| ConfigError::Value {
                    key: key.clone(),
                    value: value.clone(),
                })
            };
            match key.as_str() {
                "n_tx" => cfg.n_tx = int()? as usize,
                "k_users" => cfg.k_users = int()? as usize,
                "l_paths" => cfg.l_paths = int()? as usize,
                "region_len_A" | "region_len_a" => cfg.region_len_a = num()?,
                "region_len_A_lambda" | "region_len_a_lambda" => region_lambda = Some(num()?),
                "move_speed_v" => cfg.move_speed_v = num()?,
                "block_T" | "block_t" => cfg.block_t = num()?,
                "p_max" => cfg.p_max = num()?,
                "p_max_dbm" => cfg.p_max = db_to_linear(num()? - 30.0),
                "noise_power" => cfg.noise_power = num()?,
                "noise_dbm" => cfg.noise_power = db_to_linear(num()? - 30.0),
                "wavelength" => cfg.wavelength = num()?,
                "quant_res_kappa0" => {
                    cfg.quant_res_kappa0 = match value.as_str() {
                        "none" | "" => None,
                        _ => Some(int()? as u32),
                    }
                }
                "init_pos_x0" => cfg.init_pos_x0 = Some(num()?),
                "init_pos_x0_lambda" => x0_lambda = Some(num()?),
                "pathloss_rho0" => cfg.pathloss_rho0 = num()?,
                "rho0_db" => cfg.pathloss_rho0 = db_to_linear(num()?),
                "pathloss_exp_xi0" => cfg.pathloss_exp_xi0 = num()?,
                "user_radius_r" => cfg.user_radius_r = num()?,
                "sca_eps" => cfg.sca_eps = num()?,
                "rng_seed" => cfg.rng_seed = int()?,
                "starts" => cfg.starts = int()? as usize,
                "n_rand" => cfg.n_rand = int()? as usize,
                _ => return Err(ConfigError::UnknownKey(key)),
            }
        }
        if let Some(r) = region_lambda {
            cfg.region_len_a = r * cfg.wavelength;
        }
        if let Some(r) = x0_lambda {
            cfg.init_pos_x0 = Some(r * cfg.wavelength);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

/// Splits a `key=value` document into trimmed pairs.
pub fn key_values(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(ConfigError::Syntax {
                line: i + 1,
                text: raw.to_string(),
            });
        };
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Multipath description of one user's link.
///
/// `f_coeffs` and `g_const` are caches of the closed-form gain expansion and
/// are rebuilt whenever the geometry changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserChannel {
    pub elev_aods: Vec<f64>,
    pub azim_aods: Vec<f64>,
    pub elev_aoas: Vec<f64>,
    pub azim_aoas: Vec<f64>,
    pub path_responses: Vec<Complex64>,
    pub tx_positions: Vec<[f64; 2]>,
    pub virtual_aoas: Vec<f64>,
    /// `F_ab` for `a < b`, in row-major pair order.
    pub f_coeffs: Vec<Complex64>,
    pub g_const: f64,
    pub wavelength: f64,
    pub region_len: f64,
}

pub fn virtual_aoa(elev: f64, azim: f64) -> f64 {
    elev.sin() * azim.cos()
}

/// `t_n` for a rows × cols half-wavelength grid centered on the origin.
pub fn upa_positions(rows: usize, cols: usize, wavelength: f64) -> Vec<[f64; 2]> {
    let d = wavelength / 2.0;
    let (r0, c0) = ((rows as f64 - 1.0) / 2.0, (cols as f64 - 1.0) / 2.0);
    let mut t = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            t.push([(i as f64 - r0) * d, (j as f64 - c0) * d]);
        }
    }
    t
}

impl UserChannel {
    /// Builds a channel from raw geometry and fills the caches.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        elev_aods: Vec<f64>,
        azim_aods: Vec<f64>,
        elev_aoas: Vec<f64>,
        azim_aoas: Vec<f64>,
        path_responses: Vec<Complex64>,
        tx_positions: Vec<[f64; 2]>,
        wavelength: f64,
        region_len: f64,
    ) -> Self {
        let virtual_aoas = elev_aoas
            .iter()
            .zip(&azim_aoas)
            .map(|(&e, &a)| virtual_aoa(e, a))
            .collect();
        let mut ch = Self {
            elev_aods,
            azim_aods,
            elev_aoas,
            azim_aoas,
            path_responses,
            tx_positions,
            virtual_aoas,
            f_coeffs: Vec::new(),
            g_const: 0.0,
            wavelength,
            region_len,
        };
        ch.refresh();
        ch
    }

    pub fn paths(&self) -> usize {
        self.path_responses.len()
    }

    pub fn antennas(&self) -> usize {
        self.tx_positions.len()
    }

    /// Transmit-side steering direction `p_l = [sinθcosφ, cosθ]`.
    pub fn p_vector(&self, l: usize) -> [f64; 2] {
        let (e, a) = (self.elev_aods[l], self.azim_aods[l]);
        [e.sin() * a.cos(), e.cos()]
    }

    /// Copy whose virtual AoAs are replaced (e.g. by quantized values).
    ///
    /// `F` and `G` do not depend on the receive angles, so the caches stay.
    pub fn with_virtual_aoas(&self, values: &[f64]) -> Self {
        assert_eq!(values.len(), self.paths());
        let mut c = self.clone();
        c.virtual_aoas = values.to_vec();
        c
    }

    fn refresh(&mut self) {
        let (f, g) = channel::f_coefficients(self);
        self.f_coeffs = f;
        self.g_const = g;
    }
}

/// ChaCha20 generator for `stream` under `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn user_stream(trial: u64, user: u64) -> u64 {
    (trial << 20) | user
}

/// Streams reserved for auxiliary randomness (bit 63 set).
pub fn aux_stream(tag: u64, trial: u64) -> u64 {
    (1 << 63) | (tag << 48) | trial
}

fn sample_user(cfg: &ScenarioConfig, rng: &mut ChaCha20Rng) -> UserChannel {
    let l = cfg.l_paths;
    let mut angles = || -> Vec<f64> { (0..l).map(|_| rng.random_range(0.0..=PI)).collect() };
    let elev_aods = angles();
    let azim_aods = angles();
    let elev_aoas = angles();
    let azim_aoas = angles();
    let sd = (cfg.mean_channel_gain() / (2.0 * l as f64)).sqrt();
    let normal = Normal::new(0.0, sd).expect("finite deviation");
    let tau = (0..l)
        .map(|_| Complex64::new(normal.sample(rng), normal.sample(rng)))
        .collect();
    let (rows, cols) = cfg.upa_shape();
    UserChannel::new(
        elev_aods,
        azim_aods,
        elev_aoas,
        azim_aoas,
        tau,
        upa_positions(rows, cols, cfg.wavelength),
        cfg.wavelength,
        cfg.region_len_a,
    )
}

/// Channels of all users for Monte-Carlo trial `trial`.
pub fn sample_trial(cfg: &ScenarioConfig, trial: u64) -> Vec<UserChannel> {
    (0..cfg.k_users as u64)
        .map(|k| {
            let mut rng = stream_rng(cfg.rng_seed, user_stream(trial, k));
            sample_user(cfg, &mut rng)
        })
        .collect()
}

pub fn sample_scenario(cfg: &ScenarioConfig) -> Vec<UserChannel> {
    sample_trial(cfg, 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn virtual_aoa_examples() {
        assert!((virtual_aoa(PI / 2.0, 0.0) - 1.0).abs() < 1e-15);
        assert_eq!(virtual_aoa(0.0, 1.234), 0.0);
        assert!((virtual_aoa(PI / 6.0, PI / 3.0) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn mean_gain_from_defaults() {
        let cfg = ScenarioConfig::default();
        let g = cfg.mean_channel_gain();
        assert!((g / 10f64.powf(-9.8) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn db_keys_convert_once() {
        let cfg = ScenarioConfig::parse("p_max_dbm = 20\nnoise_dbm=-80\nrho0_db=-42\n").unwrap();
        assert!((cfg.p_max - 0.1).abs() < 1e-15);
        assert!((cfg.noise_power / 1e-11 - 1.0).abs() < 1e-12);
        assert!((cfg.pathloss_rho0 / 10f64.powf(-4.2) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lambda_relative_lengths_resolve_after_wavelength() {
        let cfg = ScenarioConfig::parse("region_len_A_lambda = 1.5\nwavelength = 0.05\n").unwrap();
        assert!((cfg.region_len_a - 0.075).abs() < 1e-15);
    }

    #[test]
    fn parse_rejects_bad_input() {
        assert!(matches!(
            ScenarioConfig::parse("bogus = 1"),
            Err(ConfigError::UnknownKey(_))
        ));
        assert!(matches!(
            ScenarioConfig::parse("n_tx"),
            Err(ConfigError::Syntax { line: 1, .. })
        ));
        assert!(matches!(
            ScenarioConfig::parse("block_T = -1"),
            Err(ConfigError::Invalid(_))
        ));
        assert!(matches!(
            ScenarioConfig::parse("init_pos_x0 = 5"),
            Err(ConfigError::Invalid(_))
        ));
    }

    #[test]
    fn upa_is_centered_half_wavelength() {
        let t = upa_positions(4, 4, 0.1);
        let (sx, sy) = t.iter().fold((0.0, 0.0), |(a, b), p| (a + p[0], b + p[1]));
        assert!(sx.abs() < 1e-15 && sy.abs() < 1e-15);
        assert!((t[1][1] - t[0][1] - 0.05).abs() < 1e-15);
        let cfg = ScenarioConfig {
            n_tx: 6,
            ..Default::default()
        };
        assert_eq!(cfg.upa_shape(), (2, 3));
    }

    #[test]
    fn sampling_is_deterministic_and_users_differ() {
        let cfg = ScenarioConfig {
            k_users: 3,
            ..Default::default()
        };
        let a = sample_scenario(&cfg);
        let b = sample_scenario(&cfg);
        assert_eq!(a, b);
        assert_ne!(a[0].path_responses, a[1].path_responses);
        assert!(a
            .iter()
            .all(|c| c.virtual_aoas.iter().all(|v| v.abs() <= 1.0)));
        let other = sample_trial(&cfg, 1);
        assert_ne!(a[0], other[0]);
    }
}
