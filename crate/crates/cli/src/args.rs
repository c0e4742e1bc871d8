use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use fao::pipeline::PipelineConfig;

use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "fao", version, about = "Feature-area optimization image registration")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Register MOVING onto FIXED and write the fixed-to-moving affine transform.
    Register(RegisterArgs),
    /// Build a speckled pair with known ground truth.
    Synth(SynthArgs),
    /// Control-grid RMSE of a transform.
    Eval(EvalArgs),
    /// Dump features from dual-resolution or plain detection.
    Features(FeaturesArgs),
    /// Compare registration methods on a pair with reference points.
    Compare(CompareArgs),
    /// Sweep one parameter on a pair with reference points.
    Sweep(SweepArgs),
}

/// Pipeline settings; each flag overrides the config file, which overrides
/// the defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// Flat JSON file with any subset of the pipeline settings.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Downsampling rate N of the low-resolution space.
    #[arg(long, value_name = "N")]
    pub rate: Option<usize>,
    /// Target slice-set proportion of the fixed image.
    #[arg(long, value_name = "P")]
    pub proportion: Option<f64>,
    /// Weight-decay coefficient.
    #[arg(long, value_name = "L")]
    pub lambda: Option<f64>,
    #[arg(long, value_name = "G")]
    pub max_gen: Option<usize>,
    #[arg(long, value_name = "S")]
    pub seed: Option<u64>,
    /// Nearest-neighbour ratio threshold for matching.
    #[arg(long, value_name = "R")]
    pub ratio: Option<f64>,
    #[arg(long, value_name = "PX")]
    pub slice_size: Option<usize>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> CliResult<PipelineConfig> {
        let base = match &self.config {
            Some(path) => PipelineConfig::from_json(&read_text(path)?)?,
            None => PipelineConfig::default(),
        };
        let cfg = self.apply(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&self, mut cfg: PipelineConfig) -> PipelineConfig {
        macro_rules! set {
            ($($f:ident),*) => {$( if let Some(v) = self.$f { cfg.$f = v; } )*};
        }
        set!(rate, proportion, lambda, max_gen, seed, ratio, slice_size);
        cfg
    }
}

pub fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

#[derive(Debug, Args)]
pub struct RegisterArgs {
    pub fixed: PathBuf,
    pub moving: PathBuf,
    /// Transform JSON output.
    #[arg(short, long, value_name = "FILE")]
    pub out: PathBuf,
    /// Per-generation objective trace, CSV.
    #[arg(long, value_name = "FILE")]
    pub trace: Option<PathBuf>,
    /// Superimposed rendering of the registered pair.
    #[arg(long, value_name = "FILE")]
    pub overlay: Option<PathBuf>,
    /// Selected slice pairs, JSON.
    #[arg(long, value_name = "FILE")]
    pub slices: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ImageFormat {
    F32,
    Png,
    Pgm,
}

impl ImageFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ImageFormat::F32 => "f32",
            ImageFormat::Png => "png",
            ImageFormat::Pgm => "pgm",
        }
    }
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("input").required(true).args(["source", "scene"]))]
pub struct SynthArgs {
    /// Clean source scene.
    pub source: Option<PathBuf>,
    /// Generate a SIZE x SIZE textured scene instead of reading one.
    #[arg(long, value_name = "SIZE")]
    pub scene: Option<usize>,
    /// Ground-truth transform JSON, fixed to moving.
    #[arg(long, value_name = "FILE")]
    pub transform: PathBuf,
    /// Equivalent number of looks of the speckle.
    #[arg(long, default_value_t = 4)]
    pub looks: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = ImageFormat::F32)]
    pub format: ImageFormat,
    /// Control lattice is GRID x GRID points.
    #[arg(long, default_value_t = fao::evaluation::DEFAULT_GRID)]
    pub grid: usize,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    pub transform: PathBuf,
    /// Tie points, one `x1,y1,x2,y2` line each.
    pub grid: PathBuf,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("mode").required(true).args(["drs", "sift"]))]
pub struct FeaturesArgs {
    pub image: PathBuf,
    /// Second image of the pair; defaults to IMAGE itself.
    #[arg(long, value_name = "FILE")]
    pub moving: Option<PathBuf>,
    #[arg(long)]
    pub drs: bool,
    #[arg(long)]
    pub sift: bool,
    /// Feature dump of IMAGE.
    #[arg(short, long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Feature dump of the moving image (DRS only).
    #[arg(long, value_name = "FILE")]
    pub moving_out: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    pub fixed: PathBuf,
    pub moving: PathBuf,
    /// Tie points for the RMSE column.
    #[arg(long, value_name = "FILE")]
    pub grid: PathBuf,
    /// Comma-separated list from: fao, ncc.
    #[arg(long, default_value = "fao,ncc")]
    pub methods: String,
    /// Cross-correlation search half-width.
    #[arg(long, default_value_t = fao::evaluation::DEFAULT_WINDOW)]
    pub window: usize,
    #[command(flatten)]
    pub report: ReportArgs,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Result table, CSV; stdout when omitted.
    #[arg(short, long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Per-run JSON summaries.
    #[arg(long, value_name = "FILE")]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("sweep").required(true).args(["generations", "proportions", "rates"]))]
pub struct SweepArgs {
    pub fixed: PathBuf,
    pub moving: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub grid: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', value_name = "G,...")]
    pub generations: Vec<usize>,
    #[arg(long, value_delimiter = ',', value_name = "P,...")]
    pub proportions: Vec<f64>,
    /// DRS rates to compare against plain detection; the rate bound is not
    /// enforced.
    #[arg(long, value_delimiter = ',', value_name = "N,...")]
    pub rates: Vec<usize>,
    /// Pairing radius of the feature-position error.
    #[arg(long, default_value_t = fao::evaluation::DEFAULT_MATCH_RADIUS)]
    pub radius: f64,
    #[command(flatten)]
    pub report: ReportArgs,
    #[command(flatten)]
    pub config: ConfigArgs,
}
