mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicU8, Ordering};

use clap::{Args, Parser, Subcommand, ValueEnum};
use dixon_core::fitting::FitConfig;
use serde::{Deserialize, Serialize};

use config::Usage;

#[derive(Parser, Debug)]
#[command(name = "dixon", version, about = "Magnitude-based water-fat separation, swap synthesis and detection")]
struct Cli {
    /// Worker threads for voxelwise work (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// JSON file whose keys mirror the subcommand's long flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    log_level: Option<LogLevel>,
    #[command(subcommand)]
    command: Command,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum LogLevel {
    Quiet,
    Info,
    Debug,
}

static LOG_LEVEL: AtomicU8 = AtomicU8::new(1);

pub fn log_enabled(debug: bool) -> bool {
    LOG_LEVEL.load(Ordering::Relaxed) >= if debug { 2 } else { 1 }
}

#[macro_export]
macro_rules! info {
    ($($t:tt)*) => { if $crate::log_enabled(false) { eprintln!($($t)*) } };
}

#[macro_export]
macro_rules! debug {
    ($($t:tt)*) => { if $crate::log_enabled(true) { eprintln!($($t)*) } };
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate multi-echo magnitudes, truth maps and an oracle prior from a phantom layout.
    Simulate(SimulateArgs),
    /// Fit water, fat and R2* maps from multi-echo magnitudes.
    Fit(FitArgs),
    /// Two-point separation from opposed/in-phase images, disambiguated by a prior.
    Select2pt(Select2ptArgs),
    /// Inject Perlin-shaped water-fat swaps into a reconstruction.
    SynthSwap(SynthSwapArgs),
    /// Classify swapped voxels and apply the volume flagging rule.
    Detect(DetectArgs),
    /// Compare a reconstruction against a reference.
    Metrics(MetricsArgs),
    /// Detect, refit with the prior if flagged, then detect again.
    Pipeline(PipelineArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Mago,
    MagoSmoothed,
    Magorino,
    MagoSp,
    MagorinoSp,
}

impl Method {
    pub fn needs_prior(self) -> bool {
        matches!(self, Method::MagoSp | Method::MagorinoSp)
    }
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct SimulateArgs {
    /// Phantom layout JSON; defaults to the built-in abdomen.
    #[arg(long)]
    pub layout: Option<PathBuf>,
    /// Abdomen phantom size, e.g. 64,64,64 (ignored with --layout).
    #[arg(long, value_delimiter = ',')]
    pub dims: Option<Vec<usize>>,
    /// Number of echoes at 1.23*(x+1) ms.
    #[arg(long)]
    pub echoes: Option<usize>,
    /// Explicit echo times in ms; overrides --echoes.
    #[arg(long, value_delimiter = ',')]
    pub echo_times: Option<Vec<f64>>,
    /// Per-component noise standard deviation.
    #[arg(long, allow_negative_numbers = true)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Preset name (6peak-3t, 6peak-1.5t, 1peak-3t) or peak-list JSON.
    #[arg(long)]
    pub spectrum: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct FitArgs {
    #[arg(long)]
    pub echoes: Option<PathBuf>,
    /// Fit mask; defaults to a first-echo intensity threshold.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    /// Predicted water image, required by the -sp methods.
    #[arg(long)]
    pub prior: Option<PathBuf>,
    /// Rician sigma; estimated from background when omitted.
    #[arg(long, allow_negative_numbers = true)]
    pub sigma: Option<f64>,
    /// Residual smoothing radius for mago-smoothed.
    #[arg(long)]
    pub radius: Option<usize>,
    #[arg(long)]
    pub spectrum: Option<String>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long)]
    pub r2star_max: Option<f64>,
    /// Full optimizer settings (config file only).
    #[arg(skip)]
    pub fit: Option<FitConfig>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct Select2ptArgs {
    /// Opposed-phase magnitude.
    #[arg(long)]
    pub s0: Option<PathBuf>,
    /// In-phase magnitude.
    #[arg(long)]
    pub s1: Option<PathBuf>,
    #[arg(long)]
    pub prior: Option<PathBuf>,
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Noise sigma; sets the feasibility tolerance to 3 sigma.
    #[arg(long, allow_negative_numbers = true)]
    pub sigma: Option<f64>,
    /// Explicit feasibility tolerance.
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct SynthSwapArgs {
    #[arg(long)]
    pub water: Option<PathBuf>,
    #[arg(long)]
    pub fat: Option<PathBuf>,
    /// Perlin lattice spacing in voxels.
    #[arg(long)]
    pub spacing: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub threshold_min: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub threshold_max: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct DetectArgs {
    #[arg(long)]
    pub water: Option<PathBuf>,
    #[arg(long)]
    pub fat: Option<PathBuf>,
    /// Predicted water image for the prior-consistency classifier.
    #[arg(long)]
    pub prior: Option<PathBuf>,
    #[arg(long)]
    pub margin: Option<f64>,
    /// External mask: fat asserted on the water reconstruction.
    #[arg(long)]
    pub water_label: Option<PathBuf>,
    /// External mask: water asserted on the fat reconstruction.
    #[arg(long)]
    pub fat_label: Option<PathBuf>,
    /// Body mask; defaults to voxels with water + fat > 0.
    #[arg(long)]
    pub body: Option<PathBuf>,
    /// Voxels removed from the body (e.g. arms).
    #[arg(long)]
    pub exclude: Option<PathBuf>,
    /// Organ mask as NAME=PATH; repeatable.
    #[arg(long)]
    pub organ: Vec<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct MetricsArgs {
    /// Directory holding water, fat and r2star containers.
    #[arg(long)]
    pub recon: Option<PathBuf>,
    /// Reference directory with the same layout.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Defaults to reference water + fat > 0.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// PDFF region as NAME=PATH; repeatable.
    #[arg(long)]
    pub region: Vec<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct PipelineArgs {
    #[arg(long)]
    pub echoes: Option<PathBuf>,
    #[arg(long)]
    pub prior: Option<PathBuf>,
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Initial water reconstruction; fitted with mago when omitted.
    #[arg(long)]
    pub water: Option<PathBuf>,
    #[arg(long)]
    pub fat: Option<PathBuf>,
    /// Correction method, mago-sp or magorino-sp.
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    #[arg(long, allow_negative_numbers = true)]
    pub sigma: Option<f64>,
    /// Classifier margin; defaults to the background noise estimate.
    #[arg(long)]
    pub margin: Option<f64>,
    #[arg(long)]
    pub spectrum: Option<String>,
    #[arg(skip)]
    pub fit: Option<FitConfig>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut file = match &cli.config {
        Some(p) => config::load(p)?,
        None => Default::default(),
    };
    let threads = match (cli.threads, file.remove("threads")) {
        (Some(n), _) => Some(n),
        (None, Some(v)) => Some(serde_json::from_value(v).map_err(|e| config::usage(format!("invalid threads: {e}")))?),
        (None, None) => None,
    };
    let level = match (cli.log_level, file.remove("log-level")) {
        (Some(l), _) => l,
        (None, Some(v)) => serde_json::from_value(v).map_err(|e| config::usage(format!("invalid log-level: {e}")))?,
        (None, None) => LogLevel::Info,
    };
    LOG_LEVEL.store(level as u8, Ordering::Relaxed);

    let command = cli.command;
    let work = move || -> anyhow::Result<()> {
        match command {
            Command::Simulate(a) => commands::simulate(config::merge(&a, file)?),
            Command::Fit(a) => commands::fit(config::merge(&a, file)?),
            Command::Select2pt(a) => commands::select2pt(config::merge(&a, file)?),
            Command::SynthSwap(a) => commands::synth_swap(config::merge(&a, file)?),
            Command::Detect(a) => commands::detect(config::merge(&a, file)?),
            Command::Metrics(a) => commands::metrics(config::merge(&a, file)?),
            Command::Pipeline(a) => commands::pipeline(config::merge(&a, file)?),
        }
    };
    match threads {
        Some(0) => Err(config::usage("--threads must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build()?.install(work),
        None => work(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
