use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ma_core::experiments::{run_and_write, SweepSpec};
use ma_core::movement::{
    candidate_interval, design_rules, gain_period, quantize, verdict, Decision,
};
use ma_core::multiuser::{run_multi_user, MultiUserScheme};
use ma_core::scenario::{aux_stream, sample_trial, stream_rng, ScenarioConfig};
use ma_core::single_user::{grid_oracle, run_single_user, SingleUserScheme, ThroughputReport};

#[derive(Parser)]
#[command(name = "ma-sim", about = "Delay-aware movable-antenna simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Per-user movement verdicts and quantization design rules.
    Analyze {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 0)]
        trial: u64,
    },
    /// Single-user position optimization on one or more trials.
    SingleUser {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        starts: Option<usize>,
        /// Also report the grid-search optimum with this step.
        #[arg(long)]
        oracle_step: Option<f64>,
        /// sca, quantized:<k>, max-snr or fpa.
        #[arg(long, default_value = "sca")]
        scheme: String,
        #[arg(long, default_value_t = 1)]
        trials: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Multiuser joint positions and beamforming on one or more trials.
    MultiUser {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// ao, quantized:<k>, max-min-sinr or fpa.
        #[arg(long, default_value = "ao")]
        scheme: String,
        #[arg(long)]
        n_rand: Option<usize>,
        #[arg(long, default_value_t = 1)]
        trials: u64,
        /// Also solve the relaxed max-min problem for an upper bound.
        #[arg(long)]
        bound: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte-Carlo sweep writing results.csv, timing.csv, summary.csv, plot.dat.
    Sweep {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: Option<&PathBuf>, seed: Option<u64>) -> Result<ScenarioConfig, String> {
    let mut cfg = match path {
        Some(p) => ScenarioConfig::load(p).map_err(|e| format!("{}: {e}", p.display()))?,
        None => ScenarioConfig::default(),
    };
    if let Some(s) = seed {
        cfg.rng_seed = s;
    }
    Ok(cfg)
}

fn fmt_list(v: &[f64]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(";")
}

fn analyze(cfg: &ScenarioConfig, trial: u64) -> String {
    let mut s = String::new();
    let x0 = cfg.x0();
    for (k, ch) in sample_trial(cfg, trial).iter().enumerate() {
        let v = verdict(ch, cfg);
        let decision = match v.decision {
            Decision::MustStay => "must-stay",
            Decision::MovementConsidered => "movement-considered",
            Decision::Inconclusive => "inconclusive",
        };
        let _ = writeln!(s, "user={k} paths={}", ch.paths());
        let _ = writeln!(s, "user={k} virtual_aoas={}", fmt_list(&ch.virtual_aoas));
        let _ = writeln!(s, "user={k} decision={decision}");
        if let Some((d1, d2)) = v.witness {
            let _ = writeln!(s, "user={k} witness={d1};{d2}");
        }
        let _ = writeln!(
            s,
            "user={k} candidate_interval={};{}",
            v.candidate_interval.0, v.candidate_interval.1
        );
        let _ = writeln!(s, "user={k} exceeds_wavelength={}", v.exceeds_wavelength);
        if let Some(k0) = cfg.quant_res_kappa0 {
            let q = quantize(&ch.virtual_aoas, k0);
            let (lo, hi) = candidate_interval(&q, x0, cfg.region_len_a, cfg.wavelength);
            let rules = design_rules(&q, cfg.region_len_a, cfg.wavelength);
            let _ = writeln!(
                s,
                "user={k} quantized_period={}",
                gain_period(&q, cfg.wavelength)
            );
            let _ = writeln!(s, "user={k} quantized_interval={lo};{hi}");
            match rules.x0_interval {
                Some((a, b)) => {
                    let _ = writeln!(s, "user={k} x0_rule_interval={a};{b}");
                }
                None => {
                    let _ = writeln!(s, "user={k} x0_rule_interval=none");
                }
            }
            let _ = writeln!(s, "user={k} resolution_ok={}", rules.resolution_ok);
        }
    }
    s
}

const RUN_HEADER: &str =
    "trial,seed,scheme,positions,min_throughput,delay_t1,duration_t2,iterations,status";

fn run_row(trial: u64, cfg: &ScenarioConfig, scheme: &str, r: &ThroughputReport) -> String {
    format!(
        "{trial},{},{scheme},{},{},{},{},{},{}",
        cfg.rng_seed,
        fmt_list(&r.positions),
        r.min_throughput,
        r.delay_t1,
        r.duration_t2,
        r.iterations,
        r.status.as_str()
    )
}

fn emit(out: Option<&PathBuf>, text: &str) -> Result<(), String> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| format!("{}: {e}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<bool, String> {
    match cli.command {
        Command::Analyze {
            config,
            seed,
            trial,
        } => {
            let cfg = load_config(config.as_ref(), seed)?;
            print!("{}", analyze(&cfg, trial));
            Ok(true)
        }
        Command::SingleUser {
            config,
            seed,
            starts,
            oracle_step,
            scheme,
            trials,
            out,
        } => {
            let mut cfg = load_config(config.as_ref(), seed)?;
            cfg.k_users = 1;
            if let Some(n) = starts {
                cfg.starts = n.max(1);
            }
            let sch = SingleUserScheme::parse(&scheme).ok_or(format!("unknown scheme {scheme}"))?;
            let mut header = RUN_HEADER.to_string();
            if oracle_step.is_some() {
                header.push_str(",oracle_position,oracle_throughput");
            }
            let mut text = header + "\n";
            for trial in 0..trials {
                let ch = &sample_trial(&cfg, trial)[0];
                let r =
                    run_single_user(ch, &cfg, sch).map_err(|e| format!("trial {trial}: {e}"))?;
                text.push_str(&run_row(trial, &cfg, &sch.name(), &r));
                if let Some(step) = oracle_step {
                    let (x, c) = grid_oracle(ch, &cfg, step);
                    let _ = write!(text, ",{x},{c}");
                }
                text.push('\n');
            }
            emit(out.as_ref(), &text)?;
            Ok(true)
        }
        Command::MultiUser {
            config,
            seed,
            scheme,
            n_rand,
            trials,
            bound,
            out,
        } => {
            let mut cfg = load_config(config.as_ref(), seed)?;
            if let Some(n) = n_rand {
                cfg.n_rand = n;
            }
            let sch = MultiUserScheme::parse(&scheme).ok_or(format!("unknown scheme {scheme}"))?;
            let mut text = format!("{RUN_HEADER},rank_one_ratio,eta_relaxed\n");
            for trial in 0..trials {
                let chs = sample_trial(&cfg, trial);
                let mut rng = stream_rng(cfg.rng_seed, aux_stream(1, trial));
                let o = run_multi_user(&chs, &cfg, sch, &mut rng, bound)
                    .map_err(|e| format!("trial {trial}: {e}"))?;
                let ratio = o.rank_one.ratios.iter().cloned().fold(1.0, f64::min);
                let eta = o
                    .rank_one
                    .eta_relaxed
                    .map_or_else(String::new, |e| e.to_string());
                let _ = writeln!(
                    text,
                    "{},{ratio},{eta}",
                    run_row(trial, &cfg, &sch.name(), &o.report)
                );
            }
            emit(out.as_ref(), &text)?;
            Ok(true)
        }
        Command::Sweep { spec, config, out } => {
            let cfg = load_config(config.as_ref(), None)?;
            let spec = SweepSpec::load(&spec).map_err(|e| format!("{}: {e}", spec.display()))?;
            let outcomes = run_and_write(&spec, &cfg, &out).map_err(|e| e.to_string())?;
            let mut all = true;
            for o in &outcomes {
                println!(
                    "{} {} ({})",
                    if o.passed { "PASS" } else { "FAIL" },
                    o.check.name(),
                    o.detail
                );
                all &= o.passed;
            }
            Ok(all)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
