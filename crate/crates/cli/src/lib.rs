//! `cheshire` command-line front end.
//!
//! Every command prints `key=value` lines or CSV to stdout. Exit codes:
//! 0 success, 2 configuration error, 3 numerical error.

pub mod config;

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use cheshire_core::complex_text::format_complex;
use cheshire_core::dynamics::{mixed_moment, BranchWeights, MeterPair};
use cheshire_core::entanglement::{embed, negativity};
use cheshire_core::indicator::{
    c_max, cheshire_analytic, optimize_couplings, optimize_states, StateSearch,
};
use cheshire_core::meter::{MeterShape, Weight};
use cheshire_core::qsystem::{weak_values, PhotonKet};
use cheshire_core::sampler::{estimate_cheshire, noise_robustness, write_trials_csv, NoiseModel, TrialEngine};
use cheshire_core::sweep::{diagonal_sweep, locate_maximum, PhotonSystem};
use cheshire_core::Error;

use config::{format_real, Experiment, ExperimentConfig};

/// Fewest trials `montecarlo` accepts.
pub const MIN_TRIALS: usize = 100;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical error: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Validation { .. } | Error::Parse { .. } => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(format!("i/o: {e}"))
    }
}

#[derive(Debug, Parser)]
#[command(name = "cheshire", version, about = "Postselected two-meter experiment: indicator, sweeps and Monte Carlo trials")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment configuration (key = value)
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Override the configured seed
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Override the configured trial count
    #[arg(long, global = true)]
    pub trials: Option<usize>,
    /// Override the configured number of grid points
    #[arg(long, global = true)]
    pub grid_points: Option<usize>,
    /// Write CSV output here instead of stdout (trial records for montecarlo)
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Print the effective configuration and exit
    #[arg(long, global = true)]
    pub dump_config: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exact indicator, success probability, weak values, local averages and negativity
    Analytic,
    /// Diagonal sweep g_A = g_B = g as CSV
    Sweep {
        #[arg(long, default_value_t = 0.0)]
        g_min: f64,
        #[arg(long, default_value_t = 8.0)]
        g_max: f64,
        #[arg(long, default_value_t = 161)]
        steps: usize,
    },
    /// Simulated trials and the signed cross-moment estimate
    Montecarlo {
        /// Comma-separated noise levels nu (nu_A = nu_B); prints a robustness table
        #[arg(long, value_delimiter = ',', value_name = "NU,...")]
        noise_scan: Vec<f64>,
    },
    /// Optimal couplings for the configured states and optimal states for the configured couplings
    Optimize {
        /// Random starts for the state search
        #[arg(long, default_value_t = 8)]
        starts: usize,
    },
}

/// Configuration after command-line overrides.
pub fn effective_config(common: &Common) -> Result<ExperimentConfig, CliError> {
    let path = common
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config PATH is required".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(n) = common.trials {
        cfg.n_trials = n;
    }
    if let Some(points) = common.grid_points {
        cfg.grid_points = points;
    }
    // relative meter files resolve against the config's directory
    if let (Some(file), Some(dir)) = (&cfg.psi0_file, path.parent()) {
        if file.is_relative() {
            cfg.psi0_file = Some(dir.join(file));
        }
    }
    Ok(cfg)
}

/// Runs the command and returns its stdout text.
pub fn run(cli: &Cli) -> Result<String, CliError> {
    let cfg = effective_config(&cli.common)?;
    if cli.common.dump_config {
        return Ok(cfg.dump());
    }
    let exp = cfg.resolve()?;
    match &cli.command {
        Command::Analytic => analytic(&exp),
        Command::Sweep { g_min, g_max, steps } => {
            let csv = sweep(&exp, *g_min, *g_max, *steps)?;
            emit(&cli.common.out, csv)
        }
        Command::Montecarlo { noise_scan } => montecarlo(&exp, cli.common.out.as_ref(), noise_scan),
        Command::Optimize { starts } => optimize(&exp, *starts),
    }
}

fn emit(out: &Option<PathBuf>, text: String) -> Result<String, CliError> {
    match out {
        Some(path) => {
            std::fs::write(path, text)?;
            Ok(String::new())
        }
        None => Ok(text),
    }
}

/// 17 significant digits, no negative zero.
fn sci(v: f64) -> String {
    format!("{:.16e}", v + 0.0)
}

fn line(s: &mut String, key: &str, value: impl std::fmt::Display) {
    writeln!(s, "{key}={value}").unwrap();
}

fn amplitudes_or_error(system: &PhotonSystem, command: &str) -> Result<(PhotonKet, cheshire_core::qsystem::TransitionAmplitudes), CliError> {
    match system {
        PhotonSystem::Pure { prep, .. } => Ok((*prep, system.amplitudes().unwrap())),
        PhotonSystem::Mixed { .. } => Err(CliError::Config(format!(
            "invalid post_effect: {command} needs a pure postselection (post)"
        ))),
    }
}

pub fn analytic(exp: &Experiment) -> Result<String, CliError> {
    let (effect, rho) = (exp.system.effect(), exp.system.rho());
    let result = cheshire_analytic(&effect, &rho, exp.g_a, exp.g_b)?;
    let mut s = String::new();
    line(&mut s, "g_a", format_real(exp.g_a));
    line(&mut s, "g_b", format_real(exp.g_b));
    line(&mut s, "c_analytic", format_real(result.c_value));
    line(&mut s, "c_max", format_real(c_max(exp.g_a, exp.g_b)));
    line(&mut s, "p_success", format_real(result.p_success));
    line(&mut s, "trace_term", format_complex(result.trace_term));

    let meters = MeterPair::new(exp.meter.clone(), exp.g_a, exp.meter.clone(), exp.g_b)?;
    if !matches!(exp.meter, MeterShape::Gaussian) {
        let c_meter = 2.0 * mixed_moment(&effect, &rho, &meters, Weight::Position, Weight::Position)?;
        line(&mut s, "c_meter", format_real(c_meter));
    }
    let p = mixed_moment(&effect, &rho, &meters, Weight::One, Weight::One)?;
    if p > cheshire_core::indicator::PROBABILITY_EPSILON {
        let x = mixed_moment(&effect, &rho, &meters, Weight::Position, Weight::One)? / p;
        let y = mixed_moment(&effect, &rho, &meters, Weight::One, Weight::Position)? / p;
        line(&mut s, "x_mean", format_real(x));
        line(&mut s, "y_mean", format_real(y));
    } else {
        line(&mut s, "x_mean", "undefined");
        line(&mut s, "y_mean", "undefined");
    }

    if let Some(amps) = exp.system.amplitudes() {
        line(&mut s, "l", format_complex(amps.l));
        line(&mut s, "r_plus", format_complex(amps.r_plus));
        line(&mut s, "r_minus", format_complex(amps.r_minus));
        match weak_values(&amps) {
            Ok(wv) => {
                line(&mut s, "weak_value_l", format_complex(wv.l_w));
                line(&mut s, "weak_value_sigma", format_complex(wv.sigma_w));
            }
            Err(_) => {
                line(&mut s, "weak_value_l", "undefined");
                line(&mut s, "weak_value_sigma", "undefined");
            }
        }
        let n = match embed(&amps, &meters) {
            Ok(state) => format_real(negativity(&state).negativity),
            Err(Error::OrthogonalPostselection { .. }) => "undefined".into(),
            Err(e) => return Err(e.into()),
        };
        line(&mut s, "negativity", n);
    }
    Ok(s)
}

pub fn sweep(exp: &Experiment, g_min: f64, g_max: f64, steps: usize) -> Result<String, CliError> {
    let rows = diagonal_sweep(&exp.system, &exp.meter, exp.grid, g_min, g_max, steps)?;
    let mut s = String::from("g_a,g_b,c_analytic,c_grid,p_success,negativity\n");
    for r in &rows {
        writeln!(
            s,
            "{},{},{},{},{},{}",
            sci(r.g_a),
            sci(r.g_b),
            sci(r.c_analytic),
            sci(r.c_grid),
            sci(r.p_success),
            sci(r.negativity)
        )
        .unwrap();
    }
    if let Some(k) = locate_maximum(&rows) {
        let r = &rows[k];
        writeln!(
            s,
            "# maximum |c_grid| at row {k}: g_a={},g_b={},c_grid={}",
            format_real(r.g_a),
            format_real(r.g_b),
            format_real(r.c_grid)
        )
        .unwrap();
    }
    Ok(s)
}

pub fn montecarlo(exp: &Experiment, out: Option<&PathBuf>, noise_scan: &[f64]) -> Result<String, CliError> {
    if exp.n_trials < MIN_TRIALS {
        return Err(CliError::Config(format!(
            "invalid n_trials: {} is below the minimum of {MIN_TRIALS}",
            exp.n_trials
        )));
    }
    let (prep, amps) = amplitudes_or_error(&exp.system, "montecarlo")?;
    let meter = exp.meter.to_grid(exp.grid)?;
    let weights = BranchWeights::from_prep(&prep);
    let engine = TrialEngine::new(&amps, &weights, &meter, exp.g_a, &meter, exp.g_b, exp.noise)?;

    let trials = engine.sample(exp.n_trials, exp.seed);
    if let Some(path) = out {
        let file = File::create(path)
            .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))?;
        let mut w = BufWriter::new(file);
        write_trials_csv(&mut w, &trials)?;
        w.flush()?;
    }
    let est = estimate_cheshire(&trials)?;
    let (reference, source) = match exp.meter {
        MeterShape::Gaussian => (
            cheshire_analytic(&exp.system.effect(), &exp.system.rho(), exp.g_a, exp.g_b)?.c_value,
            "analytic",
        ),
        MeterShape::Grid(_) => (engine.expected_indicator(), "grid"),
    };

    let mut s = String::new();
    line(&mut s, "n_trials", est.n_trials);
    line(&mut s, "seed", exp.seed);
    line(&mut s, "noise_a", format_real(exp.noise.nu_a));
    line(&mut s, "noise_b", format_real(exp.noise.nu_b));
    line(&mut s, "c_hat", format_real(est.c_hat));
    line(&mut s, "std_error", format_real(est.std_error));
    line(&mut s, "p_hat", format_real(est.p_hat));
    line(&mut s, "c_reference", format_real(reference));
    line(&mut s, "reference", source);
    line(&mut s, "z_score", format_real(est.z_score(reference)));

    if !noise_scan.is_empty() {
        let levels = noise_scan
            .iter()
            .map(|&nu| NoiseModel::new(nu, nu))
            .collect::<Result<Vec<_>, _>>()?;
        let rows = noise_robustness(&engine, &levels, exp.n_trials, exp.seed)?;
        s.push_str("nu_a,nu_b,c_hat,std_error,n_required,noise_to_signal\n");
        for r in rows {
            writeln!(
                s,
                "{},{},{},{},{},{}",
                sci(r.nu_a),
                sci(r.nu_b),
                sci(r.c_hat),
                sci(r.std_error),
                r.n_required,
                sci(r.noise_to_signal)
            )
            .unwrap();
        }
    }
    Ok(s)
}

pub fn optimize(exp: &Experiment, starts: usize) -> Result<String, CliError> {
    let mut s = String::new();
    match optimize_couplings(&exp.system.effect(), &exp.system.rho()) {
        Ok(opt) => {
            line(&mut s, "g_a_opt", format_real(opt.g_a));
            line(&mut s, "g_b_opt", format_real(opt.g_b));
            line(&mut s, "c_opt", format_real(opt.c_value));
        }
        Err(Error::FlatObjective { .. }) => line(&mut s, "g_opt", "none (trace term vanishes)"),
        Err(e) => return Err(e.into()),
    }
    let search = StateSearch {
        starts,
        seed: exp.seed,
        ..StateSearch::default()
    };
    let best = optimize_states(exp.g_a, exp.g_b, &search)?;
    line(&mut s, "best_prep", best.prep.amplitudes().map(format_complex).join(", "));
    line(&mut s, "best_post", best.post.amplitudes().map(format_complex).join(", "));
    line(&mut s, "best_trace_term", format_real(best.trace_term));
    line(&mut s, "best_c", format_real(best.c_value));
    Ok(s)
}
