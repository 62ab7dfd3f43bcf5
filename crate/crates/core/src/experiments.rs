//! Monte-Carlo sweeps over one scenario parameter, scheme comparison and the
//! named trend checks.
//!
//! Every `(scheme, value, trial)` task is independent: channels come from the
//! trial's own random streams, so a row does not depend on which other tasks
//! ran. Rows are sorted into canonical order before anything is written.

use std::fmt::Write as _;
use std::io;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::ConfigError;
use crate::multiuser::{run_multi_user, MultiUserScheme};
use crate::scenario::{
    aux_stream, db_to_linear, key_values, sample_trial, stream_rng, ScenarioConfig,
};
use crate::single_user::{run_single_user, SingleUserScheme};

/// Environment variable holding the worker-thread count.
pub const WORKERS_ENV: &str = "MA_SIM_WORKERS";

const RESULT_HEADER: &str =
    "scheme,param,value,trial,seed,min_throughput,iterations,rank_one_ratio,delay_t1,status";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    SingleUser,
    MultiUser,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Single(SingleUserScheme),
    Multi(MultiUserScheme),
}

impl Scheme {
    pub fn parse(mode: Mode, s: &str) -> Option<Self> {
        match mode {
            Mode::SingleUser => SingleUserScheme::parse(s).map(Self::Single),
            Mode::MultiUser => MultiUserScheme::parse(s).map(Self::Multi),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Self::Single(s) => s.name(),
            Self::Multi(s) => s.name(),
        }
    }

    fn is_fpa(&self) -> bool {
        matches!(
            self,
            Self::Single(SingleUserScheme::Fpa) | Self::Multi(MultiUserScheme::Fpa)
        )
    }
}

/// Scenario parameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Param {
    Paths,
    RegionLambda,
    BlockT,
    Speed,
    Users,
    PowerDbm,
    Antennas,
}

impl Param {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "L" | "l_paths" => Self::Paths,
            "A_lambda" | "region_len_A_lambda" => Self::RegionLambda,
            "T" | "block_T" => Self::BlockT,
            "v" | "move_speed_v" => Self::Speed,
            "K" | "k_users" => Self::Users,
            "P_dbm" | "p_max_dbm" => Self::PowerDbm,
            "N" | "n_tx" => Self::Antennas,
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Paths => "L",
            Self::RegionLambda => "A_lambda",
            Self::BlockT => "T",
            Self::Speed => "v",
            Self::Users => "K",
            Self::PowerDbm => "P_dbm",
            Self::Antennas => "N",
        }
    }

    /// `cfg` with this parameter set to `value`; `x⁰` follows `A` when it is
    /// left at its default of `A/2`.
    pub fn apply(&self, cfg: &ScenarioConfig, value: f64) -> ScenarioConfig {
        let mut c = cfg.clone();
        match self {
            Self::Paths => c.l_paths = value as usize,
            Self::RegionLambda => c.region_len_a = value * c.wavelength,
            Self::BlockT => c.block_t = value,
            Self::Speed => c.move_speed_v = value,
            Self::Users => c.k_users = value as usize,
            Self::PowerDbm => c.p_max = db_to_linear(value - 30.0),
            Self::Antennas => c.n_tx = value as usize,
        }
        c
    }

    fn integral(&self) -> bool {
        matches!(self, Self::Paths | Self::Users | Self::Antennas)
    }
}

/// Trend assertions a sweep can carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Check {
    /// At the first value the primary scheme's mean is within 0.5% of FPA.
    MatchesFpaAtFirst,
    /// Mean gain of the primary scheme over FPA is non-decreasing.
    GainNonDecreasing,
    /// Max-SNR mean is below FPA at the first value.
    MaxSnrBelowFpaAtFirst,
    /// Every scheme's mean rises with the value (Spearman correlation > 0.9).
    MeansIncrease,
    /// Primary scheme's means stay within 3% of each other from some value on.
    Saturates,
    /// Max-SNR mean is non-monotone in the value or below FPA somewhere.
    MaxSnrUnstable,
    /// Primary scheme is at least FPA in ≥ 90% of trials at every value.
    WinsOverFpa,
}

impl Check {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "matches-fpa-at-first" => Self::MatchesFpaAtFirst,
            "gain-nondecreasing" => Self::GainNonDecreasing,
            "max-snr-below-fpa-at-first" => Self::MaxSnrBelowFpaAtFirst,
            "means-increase" => Self::MeansIncrease,
            "saturates" => Self::Saturates,
            "max-snr-unstable" => Self::MaxSnrUnstable,
            "wins-over-fpa" => Self::WinsOverFpa,
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::MatchesFpaAtFirst => "matches-fpa-at-first",
            Self::GainNonDecreasing => "gain-nondecreasing",
            Self::MaxSnrBelowFpaAtFirst => "max-snr-below-fpa-at-first",
            Self::MeansIncrease => "means-increase",
            Self::Saturates => "saturates",
            Self::MaxSnrUnstable => "max-snr-unstable",
            Self::WinsOverFpa => "wins-over-fpa",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub mode: Mode,
    pub param: Param,
    pub values: Vec<f64>,
    pub trials: u64,
    /// The first non-FPA scheme is the primary one for checks.
    pub schemes: Vec<Scheme>,
    pub checks: Vec<Check>,
    /// Also compute the relaxation bound in multiuser runs.
    pub relaxed_bound: bool,
}

impl SweepSpec {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut mode = Mode::SingleUser;
        let mut param = None;
        let mut values = Vec::new();
        let mut trials = 50;
        let mut schemes_raw = Vec::new();
        let mut checks = Vec::new();
        let mut relaxed_bound = false;
        let bad = |key: &str, value: &str| ConfigError::Value {
            key: key.to_string(),
            value: value.to_string(),
        };
        let list = |v: &str| -> Vec<String> {
            v.split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect()
        };
        for (key, value) in key_values(text)? {
            match key.as_str() {
                "mode" => {
                    mode = match value.as_str() {
                        "single-user" => Mode::SingleUser,
                        "multi-user" => Mode::MultiUser,
                        _ => return Err(bad(&key, &value)),
                    }
                }
                "param" => param = Some(Param::parse(&value).ok_or_else(|| bad(&key, &value))?),
                "values" => {
                    values = list(&value)
                        .iter()
                        .map(|v| v.parse::<f64>().map_err(|_| bad(&key, v)))
                        .collect::<Result<_, _>>()?
                }
                "trials" => trials = value.parse().map_err(|_| bad(&key, &value))?,
                "schemes" => schemes_raw = list(&value),
                "check" | "checks" => {
                    for c in list(&value) {
                        checks.push(Check::parse(&c).ok_or_else(|| bad(&key, &c))?);
                    }
                }
                "relaxed_bound" => relaxed_bound = value.parse().map_err(|_| bad(&key, &value))?,
                _ => return Err(ConfigError::UnknownKey(key)),
            }
        }
        let param = param.ok_or_else(|| ConfigError::Invalid("missing param".into()))?;
        let schemes = schemes_raw
            .iter()
            .map(|s| Scheme::parse(mode, s).ok_or_else(|| bad("schemes", s)))
            .collect::<Result<Vec<_>, _>>()?;
        let spec = Self {
            mode,
            param,
            values,
            trials,
            schemes,
            checks,
            relaxed_bound,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.values.is_empty() {
            return Err(ConfigError::Invalid("values must be non-empty".into()));
        }
        if self.trials == 0 {
            return Err(ConfigError::Invalid("trials must be at least 1".into()));
        }
        if self.schemes.is_empty() {
            return Err(ConfigError::Invalid("schemes must be non-empty".into()));
        }
        if self.param.integral() && self.values.iter().any(|v| v.fract() != 0.0 || *v < 1.0) {
            return Err(ConfigError::Invalid(format!(
                "{} takes positive integers",
                self.param.name()
            )));
        }
        Ok(())
    }

    fn primary(&self) -> Option<Scheme> {
        self.schemes.iter().copied().find(|s| !s.is_fpa())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub scheme: String,
    pub param: &'static str,
    pub value: f64,
    pub trial: u64,
    pub seed: u64,
    pub min_throughput: f64,
    pub iterations: usize,
    /// Smallest `λ₁/Σλ` over users; 1 for single-user schemes.
    pub rank_one_ratio: f64,
    pub delay_t1: f64,
    pub status: String,
    pub wall_seconds: f64,
}

impl ResultRow {
    fn ok(&self) -> bool {
        !self.status.starts_with("error")
    }
}

fn run_task(
    spec: &SweepSpec,
    cfg: &ScenarioConfig,
    scheme: Scheme,
    value: f64,
    trial: u64,
) -> ResultRow {
    let c = spec.param.apply(cfg, value);
    let start = Instant::now();
    let mut row = ResultRow {
        scheme: scheme.name(),
        param: spec.param.name(),
        value,
        trial,
        seed: cfg.rng_seed,
        min_throughput: 0.0,
        iterations: 0,
        rank_one_ratio: 1.0,
        delay_t1: 0.0,
        status: String::new(),
        wall_seconds: 0.0,
    };
    let outcome = match scheme {
        Scheme::Single(s) => {
            let c = ScenarioConfig { k_users: 1, ..c };
            let ch = &sample_trial(&c, trial)[0];
            run_single_user(ch, &c, s).map(|r| (r, 1.0))
        }
        Scheme::Multi(s) => {
            let chs = sample_trial(&c, trial);
            let mut rng = stream_rng(c.rng_seed, aux_stream(1, trial));
            run_multi_user(&chs, &c, s, &mut rng, spec.relaxed_bound).map(|o| {
                let ratio = o.rank_one.ratios.iter().cloned().fold(1.0, f64::min);
                (o.report, ratio)
            })
        }
    };
    match outcome {
        Ok((r, ratio)) => {
            row.min_throughput = r.min_throughput;
            row.iterations = r.iterations;
            row.rank_one_ratio = ratio;
            row.delay_t1 = r.delay_t1;
            row.status = r.status.as_str().to_string();
        }
        Err(e) => row.status = format!("error: {e}").replace(',', ";"),
    }
    row.wall_seconds = start.elapsed().as_secs_f64();
    row
}

/// Worker count from `MA_SIM_WORKERS`, defaulting to the available cores.
pub fn worker_count() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs every `(scheme, value, trial)` task and returns the rows in
/// canonical order: value, then scheme as listed, then trial.
pub fn run_sweep(spec: &SweepSpec, cfg: &ScenarioConfig) -> Vec<ResultRow> {
    let mut tasks = Vec::new();
    for (vi, &value) in spec.values.iter().enumerate() {
        for (si, &scheme) in spec.schemes.iter().enumerate() {
            for trial in 0..spec.trials {
                tasks.push((vi, si, scheme, value, trial));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count())
        .build()
        .expect("thread pool");
    let mut rows: Vec<((usize, usize, u64), ResultRow)> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(vi, si, scheme, value, trial)| {
                ((vi, si, trial), run_task(spec, cfg, scheme, value, trial))
            })
            .collect()
    });
    rows.sort_by_key(|(k, _)| *k);
    rows.into_iter().map(|(_, r)| r).collect()
}

pub fn results_csv(rows: &[ResultRow]) -> String {
    let mut s = String::from(RESULT_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            r.scheme,
            r.param,
            r.value,
            r.trial,
            r.seed,
            r.min_throughput,
            r.iterations,
            r.rank_one_ratio,
            r.delay_t1,
            r.status
        );
    }
    s
}

pub fn timing_csv(rows: &[ResultRow]) -> String {
    let mut s = String::from("scheme,param,value,trial,wall_seconds\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.scheme, r.param, r.value, r.trial, r.wall_seconds
        );
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub value: f64,
    pub scheme: String,
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    /// `mean/mean_FPA − 1`; `None` without an FPA column.
    pub gain_vs_fpa: Option<f64>,
    /// Share of trials with throughput at least FPA's.
    pub win_rate_vs_fpa: Option<f64>,
    /// 1 for the best mean at this value.
    pub rank: usize,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Values in first-seen order.
fn distinct_values(rows: &[ResultRow]) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for r in rows {
        if !out.contains(&r.value) {
            out.push(r.value);
        }
    }
    out
}

fn distinct_schemes(rows: &[ResultRow]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for r in rows {
        if !out.contains(&r.scheme) {
            out.push(r.scheme.clone());
        }
    }
    out
}

/// Per-value statistics, FPA-relative gains and win rates, and rankings.
pub fn compare_schemes(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let schemes = distinct_schemes(rows);
    let mut out = Vec::new();
    for value in distinct_values(rows) {
        let of = |scheme: &str| -> Vec<&ResultRow> {
            rows.iter()
                .filter(|r| r.value == value && r.scheme == scheme && r.ok())
                .collect()
        };
        let fpa = of("fpa");
        let (fpa_mean, _) = mean_std(&fpa.iter().map(|r| r.min_throughput).collect::<Vec<_>>());
        let mut block: Vec<SummaryRow> = schemes
            .iter()
            .map(|s| {
                let these = of(s);
                let vals: Vec<f64> = these.iter().map(|r| r.min_throughput).collect();
                let (mean, std) = mean_std(&vals);
                let (gain, win) = if fpa.is_empty() {
                    (None, None)
                } else {
                    let paired: Vec<bool> = these
                        .iter()
                        .filter_map(|r| {
                            fpa.iter()
                                .find(|f| f.trial == r.trial)
                                .map(|f| r.min_throughput >= f.min_throughput)
                        })
                        .collect();
                    let win =
                        paired.iter().filter(|&&b| b).count() as f64 / paired.len().max(1) as f64;
                    (Some(mean / fpa_mean - 1.0), Some(win))
                };
                SummaryRow {
                    value,
                    scheme: s.clone(),
                    n: vals.len(),
                    mean,
                    std,
                    gain_vs_fpa: gain,
                    win_rate_vs_fpa: win,
                    rank: 0,
                }
            })
            .collect();
        let mut order: Vec<usize> = (0..block.len()).collect();
        order.sort_by(|&a, &b| block[b].mean.total_cmp(&block[a].mean).then(a.cmp(&b)));
        for (rank, i) in order.into_iter().enumerate() {
            block[i].rank = rank + 1;
        }
        out.extend(block);
    }
    out
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

pub fn summary_csv(param: &str, summary: &[SummaryRow]) -> String {
    let mut s = String::from("param,value,scheme,n,mean,std,gain_vs_fpa,win_rate_vs_fpa,rank\n");
    for r in summary {
        let _ = writeln!(
            s,
            "{param},{},{},{},{},{},{},{},{}",
            r.value,
            r.scheme,
            r.n,
            r.mean,
            r.std,
            opt(r.gain_vs_fpa),
            opt(r.win_rate_vs_fpa),
            r.rank
        );
    }
    s
}

/// gnuplot data: one line per value with mean and std for each scheme.
pub fn plot_dat(param: &str, summary: &[SummaryRow]) -> String {
    let mut schemes: Vec<&str> = Vec::new();
    for r in summary {
        if !schemes.contains(&r.scheme.as_str()) {
            schemes.push(&r.scheme);
        }
    }
    let mut s = format!("# {param}");
    for sc in &schemes {
        let _ = write!(s, " {sc}_mean {sc}_std");
    }
    s.push('\n');
    let mut values: Vec<f64> = Vec::new();
    for r in summary {
        if !values.contains(&r.value) {
            values.push(r.value);
        }
    }
    for v in values {
        let _ = write!(s, "{v}");
        for sc in &schemes {
            match summary.iter().find(|r| r.value == v && r.scheme == *sc) {
                Some(r) => {
                    let _ = write!(s, " {} {}", r.mean, r.std);
                }
                None => s.push_str(" NaN NaN"),
            }
        }
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub check: Check,
    pub passed: bool,
    pub detail: String,
}

fn means_of(summary: &[SummaryRow], scheme: &str) -> Vec<f64> {
    summary
        .iter()
        .filter(|r| r.scheme == scheme)
        .map(|r| r.mean)
        .collect()
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let (ma, _) = mean_std(&ra);
    let (mb, _) = mean_std(&rb);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma) * (x - ma)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb) * (y - mb)).sum();
    cov / (va * vb).sqrt()
}

/// First index from which all later means lie within `band` of their max.
pub fn saturation_index(means: &[f64], band: f64) -> Option<usize> {
    (0..means.len().saturating_sub(1)).find(|&i| {
        let tail = &means[i..];
        let hi = tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = tail.iter().cloned().fold(f64::INFINITY, f64::min);
        (hi - lo) < band * hi
    })
}

pub fn evaluate_checks(spec: &SweepSpec, summary: &[SummaryRow]) -> Vec<CheckOutcome> {
    let primary = spec.primary().map(|s| s.name()).unwrap_or_default();
    let fpa = means_of(summary, "fpa");
    let main = means_of(summary, &primary);
    let max_snr = means_of(summary, "max-snr");
    spec.checks
        .iter()
        .map(|&check| {
            let (passed, detail) = match check {
                Check::MatchesFpaAtFirst => match (main.first(), fpa.first()) {
                    (Some(m), Some(f)) => {
                        let rel = (m / f - 1.0).abs();
                        (rel <= 0.005, format!("{primary}/fpa - 1 = {rel:.5}"))
                    }
                    _ => (false, "missing schemes".into()),
                },
                Check::GainNonDecreasing => {
                    let gains: Vec<f64> = main.iter().zip(&fpa).map(|(m, f)| m - f).collect();
                    let ok = gains.len() == main.len()
                        && !gains.is_empty()
                        && gains.windows(2).all(|w| w[1] >= w[0]);
                    (ok, format!("gains {gains:?}"))
                }
                Check::MaxSnrBelowFpaAtFirst => match (max_snr.first(), fpa.first()) {
                    (Some(m), Some(f)) => (m < f, format!("max-snr {m} fpa {f}")),
                    _ => (false, "missing schemes".into()),
                },
                Check::MeansIncrease => {
                    let mut worst = f64::INFINITY;
                    for s in distinct_schemes_summary(summary) {
                        let m = means_of(summary, &s);
                        worst = worst.min(spearman(&spec.values[..m.len()], &m));
                    }
                    (worst > 0.9, format!("min spearman {worst:.3}"))
                }
                Check::Saturates => {
                    let idx = saturation_index(&main, 0.03);
                    (
                        idx.is_some(),
                        format!("{primary} means {main:?}, flat from index {idx:?}"),
                    )
                }
                Check::MaxSnrUnstable => {
                    let non_monotone = !(max_snr.windows(2).all(|w| w[1] >= w[0])
                        || max_snr.windows(2).all(|w| w[1] <= w[0]));
                    let below = max_snr.iter().zip(&fpa).any(|(m, f)| m < f);
                    (
                        !max_snr.is_empty() && (non_monotone || below),
                        format!("non-monotone {non_monotone}, below fpa {below}"),
                    )
                }
                Check::WinsOverFpa => {
                    let rates: Vec<f64> = summary
                        .iter()
                        .filter(|r| r.scheme == primary)
                        .filter_map(|r| r.win_rate_vs_fpa)
                        .collect();
                    let ok = !rates.is_empty() && rates.iter().all(|&w| w >= 0.9);
                    (ok, format!("win rates {rates:?}"))
                }
            };
            CheckOutcome {
                check,
                passed,
                detail,
            }
        })
        .collect()
}

fn distinct_schemes_summary(summary: &[SummaryRow]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for r in summary {
        if !out.contains(&r.scheme) {
            out.push(r.scheme.clone());
        }
    }
    out
}

/// Runs a sweep and writes `results.csv`, `timing.csv`, `summary.csv` and
/// `plot.dat` into `dir`.
pub fn run_and_write(
    spec: &SweepSpec,
    cfg: &ScenarioConfig,
    dir: &Path,
) -> io::Result<Vec<CheckOutcome>> {
    let rows = run_sweep(spec, cfg);
    let summary = compare_schemes(&rows);
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("results.csv"), results_csv(&rows))?;
    std::fs::write(dir.join("timing.csv"), timing_csv(&rows))?;
    std::fs::write(
        dir.join("summary.csv"),
        summary_csv(spec.param.name(), &summary),
    )?;
    std::fs::write(dir.join("plot.dat"), plot_dat(spec.param.name(), &summary))?;
    Ok(evaluate_checks(spec, &summary))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(scheme: &str, value: f64, trial: u64, c: f64) -> ResultRow {
        ResultRow {
            scheme: scheme.into(),
            param: "T",
            value,
            trial,
            seed: 1,
            min_throughput: c,
            iterations: 0,
            rank_one_ratio: 1.0,
            delay_t1: 0.0,
            status: "converged".into(),
            wall_seconds: 0.0,
        }
    }

    #[test]
    fn spec_parses_and_validates() {
        let s = SweepSpec::parse(
            "mode = single-user\nparam = T\nvalues = 0.2, 0.5\ntrials = 3\nschemes = sca, fpa, max-snr\ncheck = matches-fpa-at-first, gain-nondecreasing\n",
        )
        .unwrap();
        assert_eq!(s.values, vec![0.2, 0.5]);
        assert_eq!(s.schemes.len(), 3);
        assert_eq!(s.primary().unwrap().name(), "sca");
        assert!(SweepSpec::parse("param = T\nvalues =\nschemes = sca").is_err());
        assert!(SweepSpec::parse("param = L\nvalues = 2.5\nschemes = sca").is_err());
        assert!(SweepSpec::parse("param = T\nvalues = 1\nschemes = ao").is_err());
        assert!(SweepSpec::parse("param = Q\nvalues = 1\nschemes = sca").is_err());
    }

    #[test]
    fn identical_columns_have_zero_gain() {
        let rows: Vec<ResultRow> = (0..4)
            .flat_map(|t| {
                [
                    row("sca", 1.0, t, 0.5 + t as f64),
                    row("fpa", 1.0, t, 0.5 + t as f64),
                ]
            })
            .collect();
        let s = compare_schemes(&rows);
        let sca = s.iter().find(|r| r.scheme == "sca").unwrap();
        assert_eq!(sca.gain_vs_fpa, Some(0.0));
        assert_eq!(sca.win_rate_vs_fpa, Some(1.0));
        assert_eq!(sca.n, 4);
    }

    #[test]
    fn summary_recomputes_from_rows() {
        let rows: Vec<ResultRow> = (0..5).map(|t| row("fpa", 2.0, t, t as f64)).collect();
        let s = compare_schemes(&rows);
        assert_eq!(s[0].mean, 2.0);
        assert!((s[0].std - 2.5f64.sqrt()).abs() < 1e-15);
        let csv = summary_csv("T", &s);
        assert!(csv.lines().nth(1).unwrap().starts_with("T,2,fpa,5,2,"));
    }

    #[test]
    fn spearman_and_saturation() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[0.1, 0.5, 0.9]) - 1.0).abs() < 1e-15);
        assert!((spearman(&[1.0, 2.0, 3.0], &[0.9, 0.5, 0.1]) + 1.0).abs() < 1e-15);
        assert_eq!(saturation_index(&[1.0, 1.5, 1.51, 1.5], 0.03), Some(1));
        assert_eq!(saturation_index(&[1.0, 2.0, 3.0], 0.03), None);
    }

    #[test]
    fn sweep_is_deterministic_and_canonical() {
        let spec = SweepSpec::parse("param = T\nvalues = 0.5, 1\ntrials = 2\nschemes = fpa, sca\n")
            .unwrap();
        let cfg = ScenarioConfig {
            l_paths: 3,
            ..Default::default()
        };
        let a = run_sweep(&spec, &cfg);
        let b = run_sweep(&spec, &cfg);
        assert_eq!(results_csv(&a), results_csv(&b));
        let keys: Vec<(f64, String, u64)> = a
            .iter()
            .map(|r| (r.value, r.scheme.clone(), r.trial))
            .collect();
        assert_eq!(keys[0], (0.5, "fpa".to_string(), 0));
        assert_eq!(keys[3], (0.5, "sca".to_string(), 1));
        assert_eq!(keys.len(), 8);
        assert!(a.iter().all(|r| r.min_throughput >= 0.0));
    }
}
