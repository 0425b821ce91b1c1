//! Command-line front end: runs the scenario sweeps and writes CSV or
//! JSON series.
//!
//! Exit codes: 0 on success, 2 for configuration errors (bad file, bad
//! key, bad grid), 3 when a sweep completes but every grid point is
//! infeasible (the output is still written).

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use hapsim_core::experiments::{
    correlation_sweep, dbm_grid, favprop_sweep, linear_grid, run_qos_sweep, run_sum_rate_sweep,
    ConfigError, ExperimentError, MetricSeries, ScenarioConfig,
};

#[derive(Parser)]
#[command(
    name = "hapsim",
    version,
    about = "Link-level sweeps for an elevated-platform MIMO-NOMA downlink",
    after_help = "Scenarios load from --config TOML (flat key = value; unknown keys are \
                  errors); every omitted key takes its documented default. Exit codes: \
                  0 success, 2 config error, 3 all sweep points infeasible."
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Favorable-propagation variance vs. the second user's azimuth.
    Favprop(FavpropArgs),
    /// LoS correlation vs. azimuth for both platform presets.
    CorrSweep(CorrArgs),
    /// Sum rate (and energy efficiency) vs. transmit power.
    SumrateVsPower(PowerArgs),
    /// Sum rate vs. the per-user QoS floor at fixed transmit power.
    SumrateVsQos(QosArgs),
    /// Energy efficiency vs. transmit power (same series as
    /// sumrate-vs-power; kept as its own verb for discoverability).
    EeVsPower(PowerArgs),
    /// The default end-to-end sweep: sum rate, energy efficiency, and
    /// feasibility vs. transmit power.
    Run(PowerArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML, flat key = value). Omitted keys default.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the scenario's RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the scenario's trial count (Monte Carlo sweeps) or the
    /// sample count (favprop).
    #[arg(long)]
    trials: Option<usize>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format.
    #[arg(long, value_enum, default_value_t)]
    format: Format,
}

#[derive(Args)]
struct PowerArgs {
    #[command(flatten)]
    common: Common,
    /// Lowest transmit power, dBm.
    #[arg(long, default_value_t = 20.0, allow_negative_numbers = true)]
    min_dbm: f64,
    /// Highest transmit power, dBm.
    #[arg(long, default_value_t = 50.0, allow_negative_numbers = true)]
    max_dbm: f64,
    /// Grid step, dB.
    #[arg(long, default_value_t = 2.0)]
    step_db: f64,
}

#[derive(Args)]
struct QosArgs {
    #[command(flatten)]
    common: Common,
    /// Lowest QoS floor, bps/Hz.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    qos_min: f64,
    /// Highest QoS floor, bps/Hz.
    #[arg(long, default_value_t = 6.0, allow_negative_numbers = true)]
    qos_max: f64,
    /// Grid step, bps/Hz.
    #[arg(long, default_value_t = 0.5)]
    qos_step: f64,
    /// Override the scenario's fixed transmit power, dBm.
    #[arg(long, allow_negative_numbers = true)]
    power_dbm: Option<f64>,
}

#[derive(Args)]
struct FavpropArgs {
    #[command(flatten)]
    common: Common,
    /// Panel size for the statistics experiment.
    #[arg(long, default_value_t = 64)]
    antennas: usize,
    /// Azimuth grid start, degrees.
    #[arg(long, default_value_t = -90.0, allow_negative_numbers = true)]
    az_min: f64,
    /// Azimuth grid end, degrees.
    #[arg(long, default_value_t = 90.0, allow_negative_numbers = true)]
    az_max: f64,
    /// Azimuth grid step, degrees.
    #[arg(long, default_value_t = 5.0)]
    az_step: f64,
}

#[derive(Args)]
struct CorrArgs {
    #[command(flatten)]
    common: Common,
    /// Panel size for the statistics experiment.
    #[arg(long, default_value_t = 100)]
    antennas: usize,
    /// Azimuth of the fixed user, degrees.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    fixed_az: f64,
    /// Azimuth grid start, degrees.
    #[arg(long, default_value_t = -90.0, allow_negative_numbers = true)]
    az_min: f64,
    /// Azimuth grid end, degrees.
    #[arg(long, default_value_t = 90.0, allow_negative_numbers = true)]
    az_max: f64,
    /// Azimuth grid step, degrees.
    #[arg(long, default_value_t = 1.0)]
    az_step: f64,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(err) => {
            // `eprintln!` would abort with a panic if stderr is a pipe whose
            // reader already hung up; a failed diagnostic is not worth that.
            let _ = writeln!(std::io::stderr(), "error: {err}");
            match err {
                AppError::Config(_) | AppError::Experiment(ExperimentError::Config(_))
                | AppError::Experiment(ExperimentError::Domain(_)) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}

#[derive(Debug, thiserror::Error)]
enum AppError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error("cannot write {path}: {source}")]
    Write {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn load_scenario(common: &Common) -> Result<ScenarioConfig, AppError> {
    let mut cfg = match &common.config {
        Some(path) => ScenarioConfig::from_toml_path(path)?,
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = common.trials {
        cfg.n_trials = trials;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn emit(series: &MetricSeries, common: &Common) -> Result<ExitCode, AppError> {
    let text = match common.format {
        Format::Csv => series.to_csv(),
        Format::Json => series.to_json(),
    };
    match &common.out {
        Some(path) => std::fs::write(path, &text).map_err(|source| AppError::Write {
            path: path.display().to_string(),
            source,
        })?,
        None => {
            let mut stdout = std::io::stdout().lock();
            match stdout.write_all(text.as_bytes()).and_then(|()| stdout.flush()) {
                Ok(()) => {}
                // A consumer that stops reading early (`hapsim ... | head`)
                // closes the pipe mid-write; treat that as a normal shutdown
                // rather than panicking the way `print!` would.
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => {}
                Err(source) => {
                    return Err(AppError::Write {
                        path: "<stdout>".into(),
                        source,
                    });
                }
            }
        }
    }
    // A sweep whose every point came out infeasible still writes its
    // data, but signals the situation through the exit code.
    let all_infeasible = series
        .column("feasibility_fraction")
        .is_some_and(|f| f.iter().all(|&v| v == 0.0));
    Ok(if all_infeasible {
        ExitCode::from(3)
    } else {
        ExitCode::SUCCESS
    })
}

fn run(cli: Cli) -> Result<ExitCode, AppError> {
    match cli.cmd {
        Cmd::Favprop(args) => {
            let cfg = load_scenario(&args.common)?;
            let grid = linear_grid(args.az_min, args.az_max, args.az_step)?;
            let mc_trials = args.common.trials.unwrap_or(10_000);
            let series = favprop_sweep(&cfg, args.antennas, &grid, mc_trials)?;
            emit(&series, &args.common)
        }
        Cmd::CorrSweep(args) => {
            let cfg = load_scenario(&args.common)?;
            let grid = linear_grid(args.az_min, args.az_max, args.az_step)?;
            let series = correlation_sweep(&cfg, args.antennas, args.fixed_az, &grid)?;
            emit(&series, &args.common)
        }
        Cmd::SumrateVsPower(args) | Cmd::EeVsPower(args) | Cmd::Run(args) => {
            let cfg = load_scenario(&args.common)?;
            let grid = dbm_grid(args.min_dbm, args.max_dbm, args.step_db)?;
            let series = run_sum_rate_sweep(&cfg, &grid)?;
            emit(&series, &args.common)
        }
        Cmd::SumrateVsQos(args) => {
            let mut cfg = load_scenario(&args.common)?;
            if let Some(p) = args.power_dbm {
                cfg.p_transmit_dbm = p;
                cfg.validate()?;
            }
            let grid = linear_grid(args.qos_min, args.qos_max, args.qos_step)?;
            let series = run_qos_sweep(&cfg, &grid)?;
            emit(&series, &args.common)
        }
    }
}
