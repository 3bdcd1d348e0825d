//! Command-line front end: one subcommand per experiment family plus a
//! quantum-vs-classical compare mode.

mod config;
mod output;
mod runs;

use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use config::{CommonOverrides, Family, Format, RunConfig, SignName};
use output::RunOutcome;

const UNITS_NOTE: &str = "All quantities are dimensionless. Fix a time unit T: times and coherence \
times are in T, (angular) frequencies and bandwidths in 1/T, group-delay dispersion beta*length \
in T^2. Seeded runs are bit-identical across reruns and thread counts.";

/// Copy each given flag over the parameter field of the same name.
macro_rules! override_fields {
    ($args:ident, $p:ident: $($field:ident),+ $(,)?) => {
        $( if let Some(v) = $args.$field { $p.$field = v; } )+
    };
}
/// Same, for parameters that are optional themselves.
macro_rules! override_options {
    ($args:ident, $p:ident: $($field:ident),+ $(,)?) => {
        $( if let Some(v) = $args.$field { $p.$field = Some(v); } )+
    };
}

#[derive(Parser)]
#[command(name = "etesim", version, about = "Energy-time correlation experiments: quantum pairs vs classical fields", long_about = None, after_help = UNITS_NOTE)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct CommonArgs {
    /// Base seed for all random streams.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Trial count: pulses (pulse-train), records (chaotic), Monte Carlo
    /// trials (modulation), trials per phase point (franson).
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Worker threads for trial parallelism; never changes the results.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output data file (default: <experiment>.<format>).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Output format of the main data file.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Also write a minimal SVG line plot next to the data file.
    #[arg(long, global = true)]
    plot: bool,
    /// Start from an emitted config block (JSON); flags still override.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Entangled-pair timing-difference width through two media.
    Dispersion(DispersionArgs),
    /// Classical anti-correlated pulse train through the same media.
    PulseTrain(PulseTrainArgs),
    /// Chaotic-light intensity correlations under identical dispersion.
    Chaotic(ChaoticArgs),
    /// Remote phase modulation: classical vs quantum summed-frequency variance.
    Modulation(ModulationArgs),
    /// Franson interferometry: fringes, CHSH, and the classical visibility bound.
    Franson(FransonArgs),
    /// Run two same-family configs and report metric-by-metric agreement.
    Compare(CompareArgs),
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct DispersionArgs {
    /// Group-delay dispersion of medium 1.
    #[arg(long)]
    beta1: Option<f64>,
    /// Group-delay dispersion of medium 2.
    #[arg(long)]
    beta2: Option<f64>,
    /// Group delay of medium 1.
    #[arg(long)]
    alpha1: Option<f64>,
    /// Group delay of medium 2.
    #[arg(long)]
    alpha2: Option<f64>,
    /// Common length of both media.
    #[arg(long)]
    length: Option<f64>,
    /// Single-photon bandwidth (1/e half-width of the spectral amplitude).
    #[arg(long)]
    sigma_f: Option<f64>,
    /// Pump bandwidth (0 = ideal CW pump).
    #[arg(long)]
    sigma_pump: Option<f64>,
    /// Center frequency offset.
    #[arg(long)]
    omega0: Option<f64>,
    /// Frequency-grid points (power of two; default: sized automatically).
    #[arg(long)]
    grid_points: Option<usize>,
    /// Frequency-grid span (default: sized automatically).
    #[arg(long)]
    grid_span: Option<f64>,
}

impl DispersionArgs {
    fn apply(&self, p: &mut config::DispersionParams) {
        override_fields!(self, p: beta1, beta2, alpha1, alpha2, length, sigma_f, sigma_pump, omega0);
        override_options!(self, p: grid_points, grid_span);
    }
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct PulseTrainArgs {
    /// Group-delay dispersion of medium 1.
    #[arg(long)]
    beta1: Option<f64>,
    /// Group-delay dispersion of medium 2.
    #[arg(long)]
    beta2: Option<f64>,
    /// Group delay of medium 1.
    #[arg(long)]
    alpha1: Option<f64>,
    /// Group delay of medium 2.
    #[arg(long)]
    alpha2: Option<f64>,
    /// Common length of both media.
    #[arg(long)]
    length: Option<f64>,
    /// Pulse bandwidth.
    #[arg(long)]
    sigma_p: Option<f64>,
    /// Center-frequency jitter std between pulses.
    #[arg(long)]
    sigma_d: Option<f64>,
    /// Mean center frequency.
    #[arg(long)]
    omega0: Option<f64>,
    /// Detection times drawn per pulse and arm.
    #[arg(long)]
    detections_per_pulse: Option<usize>,
    /// Frequency-grid points (power of two; default: sized automatically).
    #[arg(long)]
    grid_points: Option<usize>,
    /// Frequency-grid span (default: sized automatically).
    #[arg(long)]
    grid_span: Option<f64>,
}

impl PulseTrainArgs {
    fn apply(&self, p: &mut config::PulseTrainParams) {
        override_fields!(self, p: beta1, beta2, alpha1, alpha2, length, sigma_p, sigma_d, omega0, detections_per_pulse);
        override_options!(self, p: grid_points, grid_span);
    }
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct ChaoticArgs {
    /// Inverse correlation time of the chaotic field.
    #[arg(long)]
    gamma: Option<f64>,
    /// Mean intensity.
    #[arg(long)]
    power: Option<f64>,
    /// Record duration (must hold >= 100 coherence times).
    #[arg(long)]
    duration: Option<f64>,
    /// Samples per record (power of two).
    #[arg(long)]
    points: Option<usize>,
    /// Group delay of the shared medium.
    #[arg(long)]
    alpha: Option<f64>,
    /// Group-delay dispersion of the shared medium.
    #[arg(long)]
    beta: Option<f64>,
    /// Length of the shared medium.
    #[arg(long)]
    length: Option<f64>,
}

impl ChaoticArgs {
    fn apply(&self, p: &mut config::ChaoticParams) {
        override_fields!(self, p: gamma, power, duration, points, alpha, beta, length);
    }
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct ModulationArgs {
    /// Modulation depth at detector 1.
    #[arg(long)]
    depth1: Option<f64>,
    /// Modulation depth at detector 2.
    #[arg(long)]
    depth2: Option<f64>,
    /// Shared modulation frequency.
    #[arg(long)]
    omega: Option<f64>,
    /// Phase offset of modulator 1.
    #[arg(long)]
    theta1: Option<f64>,
    /// Phase offset of modulator 2.
    #[arg(long)]
    theta2: Option<f64>,
    /// Sign of modulator 2 for the compare-mode quantum metric.
    #[arg(long, value_enum)]
    sign2: Option<SignName>,
    /// Gaussian linewidth of the classical source's lines.
    #[arg(long)]
    linewidth: Option<f64>,
    /// Single-photon bandwidth of the quantum pair.
    #[arg(long)]
    sigma_f: Option<f64>,
    /// Pump bandwidth of the quantum pair.
    #[arg(long)]
    sigma_pump: Option<f64>,
    /// Mean frequency of both sources.
    #[arg(long)]
    omega0: Option<f64>,
}

impl ModulationArgs {
    fn apply(&self, p: &mut config::ModulationParams) {
        override_fields!(self, p: depth1, depth2, omega, theta1, theta2, sign2, linewidth, sigma_f, sigma_pump, omega0);
    }
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct FransonArgs {
    /// Long/short arm imbalance of both interferometers.
    #[arg(long)]
    delta_t: Option<f64>,
    /// Source coherence time.
    #[arg(long)]
    tau_c: Option<f64>,
    /// Phase of interferometer 1.
    #[arg(long)]
    phi1: Option<f64>,
    /// Phase of interferometer 2.
    #[arg(long)]
    phi2: Option<f64>,
    /// Coincidence window (default: delta_t/4).
    #[arg(long)]
    window: Option<f64>,
    /// Number of phase-sum points in the fringe scan.
    #[arg(long)]
    scan_phases: Option<usize>,
}

impl FransonArgs {
    fn apply(&self, p: &mut config::FransonParams) {
        override_fields!(self, p: delta_t, tau_c, phi1, phi2, scan_phases);
        override_options!(self, p: window);
    }
}

#[derive(Args)]
struct CompareArgs {
    /// Config file (JSON) for the left side; seeding and trials come from
    /// the side configs, not the global flags.
    left: PathBuf,
    /// Config file (JSON) for the right side.
    right: PathBuf,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Core(etesim_core::Error),
    Io(std::io::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "invalid config: {msg}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "io: {e}"),
        }
    }
}

impl From<etesim_core::Error> for CliError {
    fn from(e: etesim_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl CliError {
    /// 2 = invalid configuration, 3 = a numerical guard tripped, 1 = io.
    fn exit_code(&self) -> i32 {
        use etesim_core::Error;
        match self {
            CliError::Config(_) => 2,
            CliError::Core(
                Error::AliasingGuard(_)
                | Error::GridTooSmall(_)
                | Error::DegenerateWeights(_)
                | Error::Truncation(_),
            ) => 3,
            CliError::Core(_) => 2,
            CliError::Io(_) => 1,
        }
    }
}

fn with_threads<T: Send>(
    threads: Option<usize>,
    f: impl FnOnce() -> Result<T, CliError> + Send,
) -> Result<T, CliError> {
    match threads {
        Some(0) => Err(CliError::Config("--threads must be >= 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?
            .install(f),
        None => f(),
    }
}

/// Print the one-screen summary and write the data files.
fn report(
    outcome: &RunOutcome,
    configs: &[(&str, &RunConfig)],
    format: Format,
    out: &std::path::Path,
    plot: bool,
) -> Result<(), CliError> {
    for line in &outcome.summary {
        println!("{line}");
    }
    let written = output::write_outputs(outcome, configs, format, out, plot)?;
    for path in &written {
        println!("wrote {}", path.display());
    }
    if plot && outcome.plot.is_none() {
        println!("plot: this run has no curve data");
    }
    Ok(())
}

fn overrides(common: &CommonArgs) -> CommonOverrides {
    CommonOverrides {
        config: common.config.clone(),
        seed: common.seed,
        trials: common.trials,
        format: common.format,
        out: common.out.clone(),
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let common = &cli.common;
    match &cli.command {
        Command::Dispersion(args) => {
            let (mut cfg, mut params) =
                config::resolve::<config::DispersionParams>(Family::Dispersion, &overrides(common))?;
            args.apply(&mut params);
            config::embed_parameters(&mut cfg, &params);
            let outcome = with_threads(common.threads, || runs::run_dispersion(&params))?;
            report(&outcome, &[("config", &cfg)], cfg.format, &cfg.out, common.plot)
        }
        Command::PulseTrain(args) => {
            let (mut cfg, mut params) =
                config::resolve::<config::PulseTrainParams>(Family::PulseTrain, &overrides(common))?;
            args.apply(&mut params);
            config::embed_parameters(&mut cfg, &params);
            let outcome =
                with_threads(common.threads, || runs::run_pulse_train(&params, cfg.seed, cfg.trials))?;
            report(&outcome, &[("config", &cfg)], cfg.format, &cfg.out, common.plot)
        }
        Command::Chaotic(args) => {
            let (mut cfg, mut params) =
                config::resolve::<config::ChaoticParams>(Family::Chaotic, &overrides(common))?;
            args.apply(&mut params);
            config::embed_parameters(&mut cfg, &params);
            let outcome =
                with_threads(common.threads, || runs::run_chaotic(&params, cfg.seed, cfg.trials))?;
            report(&outcome, &[("config", &cfg)], cfg.format, &cfg.out, common.plot)
        }
        Command::Modulation(args) => {
            let (mut cfg, mut params) =
                config::resolve::<config::ModulationParams>(Family::Modulation, &overrides(common))?;
            args.apply(&mut params);
            config::embed_parameters(&mut cfg, &params);
            let outcome =
                with_threads(common.threads, || runs::run_modulation(&params, cfg.seed, cfg.trials))?;
            report(&outcome, &[("config", &cfg)], cfg.format, &cfg.out, common.plot)
        }
        Command::Franson(args) => {
            let (mut cfg, mut params) =
                config::resolve::<config::FransonParams>(Family::Franson, &overrides(common))?;
            args.apply(&mut params);
            config::embed_parameters(&mut cfg, &params);
            let outcome =
                with_threads(common.threads, || runs::run_franson(&params, cfg.seed, cfg.trials))?;
            report(&outcome, &[("config", &cfg)], cfg.format, &cfg.out, common.plot)
        }
        Command::Compare(args) => {
            let left = config::load_side(&args.left)?;
            let right = config::load_side(&args.right)?;
            let outcome = with_threads(common.threads, || runs::run_compare(&left, &right))?;
            let format = common.format.unwrap_or(Format::Csv);
            let out = common
                .out
                .clone()
                .unwrap_or_else(|| PathBuf::from(format!("compare.{}", format.extension())));
            report(
                &outcome,
                &[("config_left", &left), ("config_right", &right)],
                format,
                &out,
                common.plot,
            )
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = dispatch(cli) {
        eprintln!("error: {e}");
        let code = e.exit_code();
        if code == 3 {
            eprintln!("hint: enlarge the grid (more points, wider span, or longer duration)");
        }
        std::process::exit(code);
    }
}
