//! Command-line interface: persisted streaming state and the simulation
//! study.
//!
//! Exit codes: 0 success, 1 usage error, 2 malformed input (including
//! unreadable files), 3 degenerate state (nothing identified yet, or too
//! little data for the requested noise estimate).

pub mod input;
pub mod state;

use std::fs;
use std::io::{self, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::Error;
use crate::estimators::{estimate, EstimatorSpec, Tuning};
use crate::simlab::svg::{line_plot, Series};
use crate::simlab::{run_experiment, ExperimentConfig, Method, SignalSpec};
use crate::spectral::SpectralBasis;

use self::input::{read_binary, read_ndjson, InputError};
use self::state::{State, StateLock};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_MALFORMED: i32 = 2;
pub const EXIT_DEGENERATE: i32 = 3;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn malformed(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_MALFORMED,
            message: message.into(),
        }
    }

    fn degenerate(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_DEGENERATE,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidParameter(_) | Error::ResourceLimit(_) => EXIT_USAGE,
            Error::NoIdentifiedComponents | Error::Unidentified(_) => EXIT_DEGENERATE,
            _ => EXIT_MALFORMED,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        Error::from(e).into()
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "seqdecon",
    version,
    about = "Streaming estimation from blurred, noisy observations"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create an empty state file.
    Init {
        /// Length of a 1D signal.
        #[arg(long, conflicts_with = "shape", required_unless_present = "shape")]
        p: Option<usize>,
        /// Image shape HxW for 2D signals.
        #[arg(long)]
        shape: Option<String>,
        /// State file to create
        #[arg(long)]
        state: PathBuf,
        /// Overwrite an existing state file.
        #[arg(long)]
        force: bool,
    },
    /// Fold observations into a state file (all or nothing).
    Ingest {
        /// State file to update
        #[arg(long)]
        state: PathBuf,
        /// NDJSON (or binary with --binary) observations; '-' for stdin.
        #[arg(long, default_value = "-")]
        input: String,
        /// Read length-prefixed binary frames instead of NDJSON
        #[arg(long)]
        binary: bool,
    },
    /// Compute an estimate from a state file.
    Estimate {
        /// State file to read
        #[arg(long)]
        state: PathBuf,
        #[arg(long, default_value = "main")]
        estimator: EstimatorName,
        /// Known noise level ε.
        #[arg(long)]
        epsilon: Option<f64>,
        /// Estimate ε from the stream when --epsilon is absent.
        #[arg(long)]
        epsilon_mode: Option<EpsilonMode>,
        /// Tikhonov-Phillips γ, or the Landweber iteration count.
        #[arg(long)]
        gamma: Option<f64>,
        /// Landweber relaxation, or the ridge penalty for ridge-avg.
        #[arg(long)]
        tau: Option<f64>,
        /// Output file (stdout if absent)
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "json")]
        format: Format,
    },
    /// Run the simulation study and write the RR table as CSV.
    Simulate {
        /// Which test signal to simulate
        #[arg(long, default_value = "both")]
        signal: SignalChoice,
        /// Sample sizes, comma-separated
        #[arg(long, value_delimiter = ',', default_value = "50,100,200,300")]
        n: Vec<usize>,
        /// Replications per cell
        #[arg(long, default_value_t = 100)]
        reps: usize,
        /// Master seed
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Signal length
        #[arg(long, default_value_t = 256)]
        p: usize,
        /// Signal-to-noise ratio ‖θ‖₁/(p·ε)
        #[arg(long, default_value_t = 1.0)]
        snr: f64,
        /// Comma-separated: main, soft, tp, li, mono, ridge, oracle.
        #[arg(long, value_delimiter = ',', default_value = "main,ridge")]
        estimators: Vec<String>,
        /// CSV output file (stdout if absent)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write one SVG per (signal, n, estimator) into this directory.
        #[arg(long)]
        svg: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimatorName {
    Main,
    Soft,
    Tp,
    Li,
    Mono,
    RidgeAvg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsilonMode {
    Consistent,
    Tail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SignalChoice {
    Smooth,
    Peaked,
    Both,
}

/// Parse arguments and run; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Init {
            p,
            shape,
            state,
            force,
        } => cmd_init(p, shape.as_deref(), &state, force),
        Command::Ingest {
            state,
            input,
            binary,
        } => cmd_ingest(&state, &input, binary),
        Command::Estimate {
            state,
            estimator,
            epsilon,
            epsilon_mode,
            gamma,
            tau,
            out,
            format,
        } => cmd_estimate(&EstimateArgs {
            state,
            estimator,
            epsilon,
            epsilon_mode,
            gamma,
            tau,
            out,
            format,
        }),
        Command::Simulate {
            signal,
            n,
            reps,
            seed,
            p,
            snr,
            estimators,
            out,
            svg,
        } => cmd_simulate(
            signal,
            n,
            reps,
            seed,
            p,
            snr,
            &estimators,
            out.as_deref(),
            svg.as_deref(),
        ),
    }
}

fn parse_shape(shape: &str) -> CliResult<(usize, usize)> {
    let parse = |s: &str| s.trim().parse::<usize>().ok().filter(|&v| v > 0);
    shape
        .split_once(['x', 'X'])
        .and_then(|(h, w)| Some((parse(h)?, parse(w)?)))
        .ok_or_else(|| CliError::usage(format!("--shape must look like HxW, got {shape:?}")))
}

fn cmd_init(p: Option<usize>, shape: Option<&str>, path: &Path, force: bool) -> CliResult<()> {
    let basis = match (p, shape) {
        (Some(p), None) => SpectralBasis::one_d(p)?,
        (None, Some(s)) => {
            let (h, w) = parse_shape(s)?;
            SpectralBasis::two_d(h, w)?
        }
        _ => return Err(CliError::usage("give exactly one of --p and --shape")),
    };
    let _lock = StateLock::acquire(path)?;
    if path.exists() && !force {
        return Err(CliError::usage(format!(
            "{} already exists; pass --force to overwrite",
            path.display()
        )));
    }
    State::new(basis).save(path)?;
    println!(
        "initialized {} ({}, p = {})",
        path.display(),
        basis.layout(),
        basis.len()
    );
    Ok(())
}

fn input_error(e: InputError, unit: &str) -> CliError {
    CliError::malformed(format!("{unit} {}: {}", e.record, e.source))
}

fn cmd_ingest(path: &Path, input: &str, binary: bool) -> CliResult<()> {
    let _lock = StateLock::acquire(path)?;
    let mut state = State::load(path)?;
    let basis = state.basis();
    let reader: Box<dyn Read> = if input == "-" {
        Box::new(io::stdin().lock())
    } else {
        Box::new(fs::File::open(input)?)
    };
    let observations = if binary {
        read_binary(BufReader::new(reader), &basis).map_err(|e| input_error(e, "frame"))?
    } else {
        read_ndjson(BufReader::new(reader), &basis).map_err(|e| input_error(e, "line"))?
    };
    for (i, obs) in observations.iter().enumerate() {
        state
            .observe(&obs.d, &obs.y, obs.calibration)
            .map_err(|e| CliError::malformed(format!("record {}: {e}", i + 1)))?;
    }
    state.save(path)?;
    println!(
        "ingested {} records; n = {}",
        observations.len(),
        state.sufstat.n()
    );
    Ok(())
}

struct EstimateArgs {
    state: PathBuf,
    estimator: EstimatorName,
    epsilon: Option<f64>,
    epsilon_mode: Option<EpsilonMode>,
    gamma: Option<f64>,
    tau: Option<f64>,
    out: Option<PathBuf>,
    format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsilonSource {
    Given,
    Consistent,
    Tail,
}

#[derive(Debug, Serialize)]
pub struct EstimateReport {
    pub n: u64,
    pub estimator: String,
    pub epsilon: f64,
    pub epsilon_source: EpsilonSource,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub epsilon_notes: Vec<String>,
    pub tuning: Tuning,
    pub diagnostics: ReportDiagnostics,
    pub theta_hat: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct ReportDiagnostics {
    pub gamma_n: Option<f64>,
    pub omega_sq: Option<f64>,
    pub zeroed: usize,
    pub imag_residual: f64,
    pub warnings: Vec<String>,
}

fn resolve_epsilon(
    args: &EstimateArgs,
    state: &State,
) -> CliResult<(f64, EpsilonSource, Vec<String>)> {
    let mut notes = Vec::new();
    if let Some(eps) = args.epsilon {
        if !(eps.is_finite() && eps >= 0.0) {
            return Err(CliError::usage(format!(
                "--epsilon must be finite and >= 0, got {eps}"
            )));
        }
        if args.epsilon_mode.is_some() {
            notes.push("--epsilon given; --epsilon-mode ignored".into());
        }
        return Ok((eps, EpsilonSource::Given, notes));
    }
    let mode = args
        .epsilon_mode
        .ok_or_else(|| CliError::usage("need --epsilon or --epsilon-mode"))?;
    let degenerate = |e: Error| CliError::degenerate(e.to_string());
    match mode {
        EpsilonMode::Consistent => {
            let est = state.spread.estimate().map_err(degenerate)?;
            if state.operator_varies {
                notes.push(
                    "calibration records used different operators; the spread estimate is an upper bound".into(),
                );
            }
            if est.clamped {
                notes.push("negative raw spread estimate clamped to 0".into());
            }
            Ok((est.variance.sqrt(), EpsilonSource::Consistent, notes))
        }
        EpsilonMode::Tail => {
            let est = state.tail.estimate().map_err(degenerate)?;
            notes.push("tail estimate is biased upward by residual signal power".into());
            Ok((est.variance.sqrt(), EpsilonSource::Tail, notes))
        }
    }
}

fn spectral_spec(
    name: EstimatorName,
    gamma: Option<f64>,
    tau: Option<f64>,
) -> CliResult<EstimatorSpec> {
    let reject_tau = |name: &str| match tau {
        Some(_) => Err(CliError::usage(format!("--tau does not apply to {name}"))),
        None => Ok(()),
    };
    let reject_gamma = |name: &str| match gamma {
        Some(_) => Err(CliError::usage(format!("--gamma does not apply to {name}"))),
        None => Ok(()),
    };
    let spec = match name {
        EstimatorName::Main | EstimatorName::Soft | EstimatorName::Mono => {
            let s = match name {
                EstimatorName::Main => EstimatorSpec::Main,
                EstimatorName::Soft => EstimatorSpec::Soft,
                _ => EstimatorSpec::Monotone,
            };
            reject_gamma(s.short_name())?;
            reject_tau(s.short_name())?;
            s
        }
        EstimatorName::Tp => {
            reject_tau("tp")?;
            EstimatorSpec::TikhonovPhillips { gamma }
        }
        EstimatorName::Li => {
            let iterations = match gamma {
                Some(g) if g.fract() == 0.0 && (1.0..=u32::MAX as f64).contains(&g) => {
                    Some(g as u32)
                }
                Some(g) => {
                    return Err(CliError::usage(format!(
                        "--gamma for li is an iteration count >= 1, got {g}"
                    )))
                }
                None => None,
            };
            EstimatorSpec::Landweber {
                iterations,
                relaxation: tau,
            }
        }
        EstimatorName::RidgeAvg => unreachable!("handled separately"),
    };
    spec.validate()?;
    Ok(spec)
}

fn build_report(args: &EstimateArgs, state: &State) -> CliResult<EstimateReport> {
    if state.sufstat.n() == 0 || state.sufstat.identified_count() == 0 {
        return Err(CliError::degenerate(format!(
            "state has n = {} and no identified component; nothing to estimate",
            state.sufstat.n()
        )));
    }
    let (epsilon, epsilon_source, epsilon_notes) = resolve_epsilon(args, state)?;

    if args.estimator == EstimatorName::RidgeAvg {
        if args.gamma.is_some() {
            return Err(CliError::usage("--gamma does not apply to ridge-avg"));
        }
        let averaged = &state.averaged;
        let (tau, auto) = match args.tau {
            Some(t) => (t, false),
            None => (
                averaged
                    .gcv_select_tau()
                    .map_err(|e| CliError::degenerate(e.to_string()))?,
                true,
            ),
        };
        let weights = averaged.ridge_weights(tau)?;
        let (theta_hat, imag_residual) = averaged.ridge_estimate(tau)?;
        return Ok(EstimateReport {
            n: state.sufstat.n(),
            estimator: "ridge-avg".into(),
            epsilon,
            epsilon_source,
            epsilon_notes,
            tuning: Tuning {
                gamma: None,
                iterations: None,
                tau: Some(tau),
                auto,
            },
            diagnostics: ReportDiagnostics {
                gamma_n: state.sufstat.gamma_n(epsilon).ok(),
                omega_sq: state.sufstat.omega_sq().ok(),
                zeroed: weights.as_slice().iter().filter(|&&w| w == 0.0).count(),
                imag_residual,
                warnings: Vec::new(),
            },
            theta_hat,
        });
    }

    let spec = spectral_spec(args.estimator, args.gamma, args.tau)?;
    let est = estimate(&state.sufstat, &spec, epsilon)?;
    Ok(EstimateReport {
        n: state.sufstat.n(),
        estimator: spec.short_name().into(),
        epsilon,
        epsilon_source,
        epsilon_notes,
        tuning: est.diagnostics.tuning,
        diagnostics: ReportDiagnostics {
            gamma_n: est.diagnostics.gamma_n,
            omega_sq: est.diagnostics.omega_sq,
            zeroed: est.diagnostics.zeroed,
            imag_residual: est.diagnostics.imag_residual,
            warnings: est.diagnostics.warnings,
        },
        theta_hat: est.theta_hat,
    })
}

fn write_output(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(path) => fs::write(path, text)?,
        None => io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn cmd_estimate(args: &EstimateArgs) -> CliResult<()> {
    let state = State::load(&args.state)?;
    let report = build_report(args, &state)?;
    let text = match args.format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&report).map_err(Error::from)?;
            s.push('\n');
            s
        }
        Format::Csv => {
            let mut s = String::from("index,theta_hat\n");
            for (i, v) in report.theta_hat.iter().enumerate() {
                s.push_str(&format!("{i},{v}\n"));
            }
            s
        }
    };
    write_output(args.out.as_deref(), &text)
}

fn parse_method(name: &str) -> CliResult<Method> {
    match name.trim() {
        "ridge" | "ridge-avg" => Ok(Method::RidgeGcv),
        "oracle" => Ok(Method::Oracle),
        other => other
            .parse::<EstimatorSpec>()
            .map(Method::Spectral)
            .map_err(|e| CliError::usage(e.to_string())),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    signal: SignalChoice,
    n_grid: Vec<usize>,
    reps: usize,
    seed: u64,
    p: usize,
    snr: f64,
    estimators: &[String],
    out: Option<&Path>,
    svg: Option<&Path>,
) -> CliResult<()> {
    let signals = match signal {
        SignalChoice::Smooth => vec![SignalSpec::Smooth],
        SignalChoice::Peaked => vec![SignalSpec::Peaked],
        SignalChoice::Both => vec![SignalSpec::Smooth, SignalSpec::Peaked],
    };
    let methods = estimators
        .iter()
        .map(|s| parse_method(s))
        .collect::<CliResult<Vec<_>>>()?;
    let config = ExperimentConfig {
        p,
        snr,
        n_grid,
        reps,
        seed,
        signals,
        methods,
    };
    let table = run_experiment(&config)?;
    write_output(out, &table.to_csv())?;
    if let Some(dir) = svg {
        fs::create_dir_all(dir)?;
        for s in &table.snapshots {
            let title = format!("{} signal, {} estimate, n = {}", s.signal, s.estimator, s.n);
            let doc = line_plot(
                &title,
                &[
                    Series {
                        label: "signal",
                        color: "black",
                        values: &s.theta,
                    },
                    Series {
                        label: &s.estimator,
                        color: "crimson",
                        values: &s.theta_hat,
                    },
                ],
            );
            fs::write(
                dir.join(format!("{}_{}_n{}.svg", s.signal, s.estimator, s.n)),
                doc,
            )?;
        }
    }
    Ok(())
}
