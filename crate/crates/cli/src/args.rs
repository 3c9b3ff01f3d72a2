use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use fdnorm_core::io::TableFormat;
use fdnorm_core::matrix::Anchor;
use fdnorm_core::simulate::Method;

#[derive(Debug, Parser)]
#[command(
    name = "fdnorm",
    version,
    about = "Depth-based normalization and outlier detection for expression matrices"
)]
pub struct Cli {
    /// Directory for all written artifacts (created if missing) [default: .]
    #[arg(long, global = true, value_name = "DIR")]
    pub output_dir: Option<PathBuf>,

    /// TOML file with defaults; explicit flags take precedence
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Worker threads for parallel stages [default: all cores]
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Quantile-normalize the columns of a matrix to a reference curve
    Normalize(NormalizeArgs),
    /// Border sequence and depth of every sample
    Depth(DepthArgs),
    /// Flag outlying samples, globally and optionally within classes
    Outliers(OutliersArgs),
    /// Monte Carlo estimate of the Tukey factor
    Calibrate(CalibrateArgs),
    /// Run the RMA-versus-depth-normalization simulation study
    Simulate(SimulateArgs),
    /// Re-render a study CSV or an outlier JSON as text tables
    Report(ReportArgs),
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Features x samples table
    #[arg(long, value_name = "PATH")]
    pub input: PathBuf,

    /// Table format [default: from the file extension]
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,

    /// The first line holds data, not sample ids
    #[arg(long)]
    pub no_header: bool,

    /// The first column holds feature names
    #[arg(long)]
    pub row_names: bool,

    /// Drop features with more than this many zero entries
    #[arg(long, value_name = "K")]
    pub max_zeros: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Tsv,
}

impl From<FormatArg> for TableFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => TableFormat::Csv,
            FormatArg::Tsv => TableFormat::Tsv,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceArg {
    Deepest,
    ComponentMedian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    Full,
    Subset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PrenormArg {
    None,
    Median,
    Q75,
    Mean,
    Sum,
}

impl PrenormArg {
    pub fn anchor(self) -> Option<Anchor> {
        match self {
            PrenormArg::None => None,
            PrenormArg::Median => Some(Anchor::Median),
            PrenormArg::Q75 => Some(Anchor::Q75),
            PrenormArg::Mean => Some(Anchor::Mean),
            PrenormArg::Sum => Some(Anchor::Sum),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
pub enum MethodArg {
    Rma,
    FdnMedianPolish,
    FdnBiweight,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Rma => Method::Rma,
            MethodArg::FdnMedianPolish => Method::FdnMedianPolish,
            MethodArg::FdnBiweight => Method::FdnBiweight,
        }
    }
}

#[derive(Debug, Args)]
pub struct NormalizeArgs {
    #[command(flatten)]
    pub input: InputArgs,

    /// Reference curve [default: deepest]
    #[arg(long, value_enum)]
    pub reference: Option<ReferenceArg>,

    /// Mapping: every rank, or interpolation between a grid of quantiles [default: full]
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,

    /// Number of equal quantile intervals for the subset mode [default: 100]
    #[arg(long, value_name = "K")]
    pub quantiles: Option<usize>,

    /// Linear prenormalization anchor [default: median]
    #[arg(long, value_enum)]
    pub prenorm: Option<PrenormArg>,

    /// Write boxplots of log(x+1) before and after normalization
    #[arg(long)]
    pub boxplot_svg: bool,

    /// Write the sorted curves colored by depth
    #[arg(long)]
    pub curves_svg: bool,
}

#[derive(Debug, Args)]
pub struct DepthArgs {
    #[command(flatten)]
    pub input: InputArgs,

    /// Linear prenormalization anchor [default: median]
    #[arg(long, value_enum)]
    pub prenorm: Option<PrenormArg>,

    /// Write the sorted curves colored by depth
    #[arg(long)]
    pub curves_svg: bool,
}

#[derive(Debug, Args)]
pub struct OutliersArgs {
    #[command(flatten)]
    pub input: InputArgs,

    /// Class label per sample (positive integers); adds per-class reports
    #[arg(long, value_name = "PATH")]
    pub classes: Option<PathBuf>,

    #[command(flatten)]
    pub calibration: CalibrationArgs,

    /// Use this Tukey factor instead of calibrating
    #[arg(long, value_name = "G", conflicts_with_all = ["target_rate", "replicates", "seed"])]
    pub g_factor: Option<f64>,

    /// Flag both members of each flagged pair
    #[arg(long)]
    pub both_members: bool,

    /// Linear prenormalization anchor [default: none]
    #[arg(long, value_enum)]
    pub prenorm: Option<PrenormArg>,
}

#[derive(Debug, Clone, Args)]
pub struct CalibrationArgs {
    /// Expected fraction of null columns beyond the benchmark [default: 0.0001]
    #[arg(long, value_name = "RATE")]
    pub target_rate: Option<f64>,

    /// Monte Carlo replicates [default: 100]
    #[arg(long, value_name = "R")]
    pub replicates: Option<usize>,

    /// Random seed [default: 20190101]
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("shape").required(true).args(["input", "samples"])))]
pub struct CalibrateArgs {
    /// Estimate the covariance from this table
    #[arg(long, value_name = "PATH")]
    pub input: Option<PathBuf>,

    /// Table format for --input [default: from the file extension]
    #[arg(long, value_enum, requires = "input")]
    pub format: Option<FormatArg>,

    /// The first line of --input holds data, not sample ids
    #[arg(long, requires = "input")]
    pub no_header: bool,

    /// The first column of --input holds feature names
    #[arg(long, requires = "input")]
    pub row_names: bool,

    /// Drop features of --input with more than this many zero entries
    #[arg(long, value_name = "K", requires = "input")]
    pub max_zeros: Option<usize>,

    /// Linear prenormalization anchor for --input [default: none]
    #[arg(long, value_enum, requires = "input")]
    pub prenorm: Option<PrenormArg>,

    /// Number of samples, with identity covariance
    #[arg(long, value_name = "N", requires = "features")]
    pub samples: Option<usize>,

    /// Number of features, with identity covariance
    #[arg(long, value_name = "G", requires = "samples")]
    pub features: Option<usize>,

    #[command(flatten)]
    pub calibration: CalibrationArgs,
}

impl CalibrateArgs {
    pub fn input_args(&self) -> Option<InputArgs> {
        self.input.as_ref().map(|input| InputArgs {
            input: input.clone(),
            format: self.format,
            no_header: self.no_header,
            row_names: self.row_names,
            max_zeros: self.max_zeros,
        })
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Degrees of freedom of the probe distribution (repeatable) [default: 10 5 2]
    #[arg(long, value_name = "DF", num_args = 1..)]
    pub df: Vec<f64>,

    /// Shift of the affected genes (repeatable) [default: 0 0.25 0.5 1 2]
    #[arg(long, value_name = "DELTA", num_args = 1.., allow_negative_numbers = true)]
    pub delta: Vec<f64>,

    /// Datasets per (df, delta) cell [default: 20]
    #[arg(long, value_name = "N")]
    pub datasets: Option<usize>,

    /// Random seed [default: 20190101]
    #[arg(long)]
    pub seed: Option<u64>,

    /// Samples per dataset, split into two equal groups [default: 12]
    #[arg(long, value_name = "N")]
    pub samples: Option<usize>,

    /// Genes per dataset [default: 1000]
    #[arg(long, value_name = "N")]
    pub genes: Option<usize>,

    /// Probes per gene [default: 11]
    #[arg(long, value_name = "N")]
    pub probes: Option<usize>,

    /// Number of shifted genes [default: 100]
    #[arg(long, value_name = "N")]
    pub affected: Option<usize>,

    /// Significance level [default: 0.05]
    #[arg(long)]
    pub alpha: Option<f64>,

    /// Methods to compare (repeatable) [default: all]
    #[arg(long, value_enum, num_args = 1..)]
    pub methods: Vec<MethodArg>,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["study", "outliers"])))]
pub struct ReportArgs {
    /// Study CSV written by `simulate`
    #[arg(long, value_name = "PATH")]
    pub study: Option<PathBuf>,

    /// Outlier JSON written by `outliers`
    #[arg(long, value_name = "PATH")]
    pub outliers: Option<PathBuf>,
}
