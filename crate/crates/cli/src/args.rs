use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "discdyn", version, about = "Identify growth models of online discussions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model to every thread of a post archive.
    Fit(FitArgs),
    /// Expected cumulative reply count of a model at a given time.
    Predict(PredictArgs),
    /// Discussion-size histogram and power-law fit.
    Zipf(ZipfArgs),
    /// Generate synthetic threads as a post archive.
    Simulate(SimulateArgs),
    /// Tabulate a model's noiseless response on a grid.
    Response(ResponseArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Json,
    Tsv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InputFormatArg {
    Csv,
    Jsonl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum UnitArg {
    Hour,
    Day,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    TwoPoint,
    Area,
    LeastSquares,
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CountModeArg {
    Replies,
    AllPosts,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Post archive (CSV with header `thread_id,timestamp[,author]`, or JSON lines).
    #[arg(long, short)]
    pub input: PathBuf,
    /// Input format; guessed from the file extension when omitted.
    #[arg(long)]
    pub input_format: Option<InputFormatArg>,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Write results here instead of standard output.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Json)]
    pub format: OutputFormat,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    #[arg(long, value_enum, default_value_t = MethodArg::LeastSquares)]
    pub method: MethodArg,
    #[arg(long, value_enum, default_value_t = UnitArg::Hour)]
    pub time_unit: UnitArg,
    /// Hours of silence after the last reply before a thread counts as finished.
    #[arg(long, default_value_t = 72.0)]
    pub quiet_window: f64,
    /// End of the archive (ISO-8601 or epoch seconds); defaults to the latest post.
    #[arg(long)]
    pub archive_end: Option<String>,
    /// Decimals in the printed transfer function.
    #[arg(long, default_value_t = 1)]
    pub decimals: usize,
    /// Also write observed and fitted curves as TSV.
    #[arg(long)]
    pub plot_out: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct ModelArgs {
    /// Gain K (replies at steady state); scale for logistic models.
    #[arg(long, short = 'K')]
    pub gain: Option<f64>,
    /// Time constant T.
    #[arg(long, short = 'T')]
    pub time_constant: Option<f64>,
    /// Dead time L.
    #[arg(long, short = 'L')]
    pub dead_time: Option<f64>,
    /// Use a logistic model with `--rate` and `--n0` instead of FOPDT.
    #[arg(long)]
    pub logistic: bool,
    /// Logistic growth rate b.
    #[arg(long, allow_negative_numbers = true)]
    pub rate: Option<f64>,
    /// Logistic initial fraction n0.
    #[arg(long)]
    pub n0: Option<f64>,
    #[arg(long, value_enum, default_value_t = UnitArg::Hour)]
    pub time_unit: UnitArg,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Model JSON (a fit report line or `{"K":..,"T":..,"L":..}`).
    #[arg(long, conflicts_with_all = ["gain", "time_constant", "dead_time", "logistic"])]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    pub params: ModelArgs,
    /// Time since the initial post, in the model's unit.
    #[arg(long)]
    pub at: f64,
    #[arg(long, default_value_t = 2)]
    pub decimals: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct ZipfArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    #[arg(long, default_value_t = 1)]
    pub k_min: u64,
    #[arg(long, value_enum, default_value_t = CountModeArg::AllPosts)]
    pub count_mode: CountModeArg,
    /// Report P(size >= k) for these sizes.
    #[arg(long = "prior", value_delimiter = ',')]
    pub prior: Vec<u64>,
    /// Also write `k frequency fitted` TSV for plotting.
    #[arg(long)]
    pub plot_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub params: ModelArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Simulation horizon in the model's unit; FOPDT default is L + 10T.
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Number of threads; thread i uses seed + i.
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    /// Start of a posting break (model units since the initial post).
    #[arg(long, requires = "gap_end")]
    pub gap_start: Option<f64>,
    #[arg(long, requires = "gap_start")]
    pub gap_end: Option<f64>,
    /// Timestamp of the first initial post (ISO-8601 or epoch seconds).
    #[arg(long)]
    pub start: Option<String>,
    /// Generate a size corpus of this many threads instead of a model response.
    #[arg(long)]
    pub corpus_size: Option<usize>,
    /// Largest thread size in a corpus.
    #[arg(long, default_value_t = 50)]
    pub k_max: u64,
    /// Corpus sizes follow P(k) ∝ k^-exponent.
    #[arg(long, default_value_t = 1.0)]
    pub exponent: f64,
    /// Write the CSV archive here instead of standard output.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ResponseArgs {
    #[command(flatten)]
    pub params: ModelArgs,
    /// Grid spacing in the model's unit.
    #[arg(long, default_value_t = 0.1)]
    pub grid: f64,
    /// Last grid time; FOPDT default is L + 10T.
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long, default_value_t = 6)]
    pub decimals: usize,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Tsv)]
    pub format: OutputFormat,
}
