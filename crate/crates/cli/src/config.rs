//! Argument definitions and config-file overlay. Precedence: command-line
//! flags beat the JSON config file, which beats built-in defaults.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use helios_core::data::PipelineConfig;
use helios_core::distributions::Family;
use helios_core::forecaster::{Architecture, ModelConfig};
use helios_core::synth::{FleetSpec, WeatherParams};
use serde::Deserialize;

use crate::AppError;

#[derive(Parser)]
#[command(
    name = "helios",
    about = "Probabilistic intraday PV power forecasting on synthetic fleets",
    version
)]
pub struct Cli {
    /// JSON config file with {model, fleet, weather, pipeline} blocks;
    /// explicit flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Worker threads (1 = fully serial reference mode). Falls back to the
    /// HELIOS_THREADS environment variable, then to all cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Print per-epoch progress.
    #[arg(short, long, global = true)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate a synthetic PV fleet: data CSV, descriptor CSV, effects log.
    Synth(SynthArgs),
    /// Build the leakage-safe day-grouped train/val/test split.
    Split(SplitArgs),
    /// Train one model and write the artifact plus training history.
    Train(TrainArgs),
    /// Produce sample-path forecasts as newline-delimited JSON.
    Forecast(ForecastArgs),
    /// Score an artifact against observations and the physical baseline.
    Evaluate(EvaluateArgs),
    /// Train and evaluate the model-variant table with replicate seeds.
    Ablate(AblateArgs),
    /// Verify analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
pub struct SynthArgs {
    /// Number of PV systems in the fleet.
    #[arg(long)]
    pub systems: Option<usize>,
    /// Days of hourly data to generate.
    #[arg(long)]
    pub days: Option<usize>,
    /// First day of the range (YYYY-MM-DD).
    #[arg(long, default_value = "2021-01-01")]
    pub start_date: String,
    /// Master seed for the fleet substreams.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for data.csv, descriptors.csv, effects.json.
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Args)]
pub struct SplitArgs {
    /// Data CSV (timestamp_utc,system_id,power_w,phys24_w,phys48_w,phys72_w).
    #[arg(long)]
    pub data: PathBuf,
    /// Descriptor CSV.
    #[arg(long)]
    pub descriptors: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output split JSON path.
    #[arg(long, default_value = "out/split.json")]
    pub out: PathBuf,
}

#[derive(Args, Clone, Default)]
pub struct ModelFlags {
    /// Output family: gaussian | student | pos_gaussian.
    #[arg(long)]
    pub family: Option<FamilyArg>,
    /// Mixture components (K).
    #[arg(long)]
    pub mixture_k: Option<usize>,
    /// LSTM hidden size.
    #[arg(long)]
    pub hidden: Option<usize>,
    /// LSTM layer count.
    #[arg(long)]
    pub layers: Option<usize>,
    /// Use physical-forecast covariates.
    #[arg(long)]
    pub physical: Option<bool>,
    /// Use the system-ID embedding covariate.
    #[arg(long)]
    pub system_id: Option<bool>,
    /// Use standardized system-description covariates.
    #[arg(long)]
    pub system_description: Option<bool>,
    #[arg(long)]
    pub embedding_dim: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Sample paths per window at evaluation time.
    #[arg(long)]
    pub paths: Option<usize>,
    /// Sample paths per window for the per-epoch validation metric.
    #[arg(long)]
    pub val_paths: Option<usize>,
    /// Include the context interval in the training loss.
    #[arg(long)]
    pub loss_on_context: Option<bool>,
    /// Architecture: lstm | ffn.
    #[arg(long)]
    pub arch: Option<ArchArg>,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum FamilyArg {
    Gaussian,
    Student,
    PosGaussian,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum ArchArg {
    Lstm,
    Ffn,
}

impl ModelFlags {
    pub fn apply(&self, mut config: ModelConfig) -> ModelConfig {
        if let Some(f) = self.family {
            config.family = match f {
                FamilyArg::Gaussian => Family::Gaussian,
                FamilyArg::Student => Family::Student,
                FamilyArg::PosGaussian => Family::PosGaussian,
            };
        }
        if let Some(a) = self.arch {
            config.arch = match a {
                ArchArg::Lstm => Architecture::Lstm,
                ArchArg::Ffn => Architecture::Ffn,
            };
        }
        macro_rules! over {
            ($($flag:ident => $field:ident),*) => {
                $(if let Some(v) = self.$flag { config.$field = v; })*
            };
        }
        over!(
            mixture_k => mixture_k,
            hidden => hidden,
            layers => layers,
            physical => use_physical,
            system_id => use_system_id,
            system_description => use_system_description,
            embedding_dim => embedding_dim,
            learning_rate => learning_rate,
            batch_size => batch_size,
            epochs => epochs,
            paths => num_paths,
            val_paths => val_paths,
            loss_on_context => loss_on_context
        );
        config
    }
}

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub descriptors: PathBuf,
    #[arg(long)]
    pub split: PathBuf,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub model: ModelFlags,
}

#[derive(Args)]
pub struct ForecastArgs {
    #[arg(long)]
    pub artifact: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub descriptors: PathBuf,
    /// Split JSON; omit to forecast every window.
    #[arg(long)]
    pub split: Option<PathBuf>,
    /// Which partition to forecast when a split is given.
    #[arg(long, value_enum, default_value_t = PartitionArg::Test)]
    pub partition: PartitionArg,
    /// Sample paths per window.
    #[arg(long, default_value_t = 100)]
    pub paths: usize,
    /// Comma-separated quantile levels.
    #[arg(long, default_value = "0.05,0.5,0.95", value_delimiter = ',')]
    pub levels: Vec<f64>,
    #[arg(long, default_value = "out/forecasts.ndjson")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub artifact: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub descriptors: PathBuf,
    #[arg(long)]
    pub split: PathBuf,
    #[arg(long, value_enum, default_value_t = PartitionArg::Test)]
    pub partition: PartitionArg,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub descriptors: PathBuf,
    #[arg(long)]
    pub split: PathBuf,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
    /// Independent replicate seeds per variant (seed + 0..replicates).
    #[arg(long, default_value_t = 6)]
    pub replicates: usize,
    /// Comma-separated variant ids to run (default: all eight).
    #[arg(long, value_delimiter = ',')]
    pub models: Option<Vec<u32>>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub model: ModelFlags,
}

#[derive(Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PartitionArg {
    Train,
    Val,
    Test,
    All,
}

/// Optional JSON config file contents.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub model: Option<ModelConfig>,
    pub fleet: Option<FleetSpec>,
    pub weather: Option<WeatherParams>,
    pub pipeline: Option<PipelineConfig>,
}

pub fn load_file_config(path: &Option<PathBuf>) -> Result<FileConfig, AppError> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let bytes = std::fs::read_to_string(p)
                .map_err(|e| AppError::validation(format!("config file {}: {e}", p.display())))?;
            serde_json::from_str(&bytes)
                .map_err(|e| AppError::validation(format!("config file {}: {e}", p.display())))
        }
    }
}
