use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

const CHART_NOTE: &str = "\
All computations are chart-local: a metric is a function F(x, y) on a single
coordinate chart of R^n, and every verdict (closedness of 1-forms, local
constancy of fitted coefficients) refers to that chart only. On the convex
charts used here closed 1-forms are exact; nothing global is inferred.

Exit codes: 0 success, 1 identity failure, 2 usage, config or input error.";

#[derive(Debug, Parser)]
#[command(name = "finsler", version, about = "Finsler curvature tower and identity checks on truncated Taylor jets")]
#[command(after_long_help = CHART_NOTE)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate curvature quantities at one (x, y).
    Eval(EvalArgs),
    /// Run the identity suite.
    #[command(after_long_help = CHART_NOTE)]
    Verify(VerifyArgs),
    /// Classify e- and S-isotropy at one x.
    #[command(after_long_help = CHART_NOTE)]
    Classify(ClassifyArgs),
    /// Integrate a geodesic with RK4.
    Geodesic(GeodesicArgs),
    /// Classify isotropy over a grid of base points.
    #[command(after_long_help = CHART_NOTE)]
    Scan(ScanArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct MetricArgs {
    /// Built-in metric name, or path to a TOML/JSON metric file.
    #[arg(long, conflicts_with = "expr")]
    pub metric: Option<String>,
    /// Inline metric expression F(x, y) in x1..xn, y1..yn.
    #[arg(long)]
    pub expr: Option<String>,
    /// Dimension for --expr (inferred from the variables when omitted).
    #[arg(long)]
    pub dim: Option<usize>,
    /// Volume density: bh, riemannian, or user:EXPR in x1..xn.
    #[arg(long)]
    pub volume: Option<String>,
    /// Quadrature points per angular dimension for the Busemann-Hausdorff density.
    #[arg(long)]
    pub quad: Option<usize>,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Output file (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub metric: MetricArgs,
    /// Base point, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    pub x: String,
    /// Direction, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    pub y: String,
    /// Comma separated quantity tags, or `all`.
    #[arg(long, default_value = "F,g,S,e,K")]
    pub quantities: String,
    /// Jet truncation order.
    #[arg(long)]
    pub order: Option<usize>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Identity suite to run.
    #[arg(long, default_value = "core")]
    pub suite: String,
    /// `builtin-zoo`, `none`, or a comma separated list of built-in names and metric files.
    #[arg(long)]
    pub metrics: Option<String>,
    #[command(flatten)]
    pub metric: MetricArgs,
    /// Samples per metric.
    #[arg(long, default_value_t = 200)]
    pub samples: usize,
    /// Sampled base points per metric that also get isotropy scenarios.
    #[arg(long, default_value_t = 3)]
    pub classifier_points: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Replace every identity tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct ClassifierArgs {
    /// Directions per base point.
    #[arg(long, default_value_t = 24)]
    pub dirs: usize,
    /// Spread and fit threshold.
    #[arg(long, default_value_t = 1e-5)]
    pub threshold: f64,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub metric: MetricArgs,
    /// Base point, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    pub x: String,
    #[command(flatten)]
    pub classifier: ClassifierArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct GeodesicArgs {
    #[command(flatten)]
    pub metric: MetricArgs,
    /// Initial point, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    pub x: String,
    /// Initial velocity, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    pub y: String,
    #[arg(long, default_value_t = 100)]
    pub steps: usize,
    #[arg(long, default_value_t = 0.01)]
    pub dt: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    #[command(flatten)]
    pub metric: MetricArgs,
    /// Lower grid corner, comma separated (defaults to inside the metric domain).
    #[arg(long, allow_hyphen_values = true)]
    pub lo: Option<String>,
    /// Upper grid corner, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    pub hi: Option<String>,
    /// Grid points per axis.
    #[arg(long, default_value_t = 5)]
    pub grid: usize,
    #[command(flatten)]
    pub classifier: ClassifierArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}
