use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "asym", version, about = "Directions at infinity and asymptotic critical values of real polynomials")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate D_∞(t) for one fiber value.
    Directions(DirectionsArgs),
    /// Search for asymptotic critical values in a range.
    #[command(name = "scan-kinf")]
    ScanKinf(ScanArgs),
    /// Follow ∇f/‖∇f‖² from a point to another fiber and check the bounds.
    Flow(FlowArgs),
    /// Volume of D_∞(t) along a grid of fiber values.
    Volume(VolumeArgs),
    /// Intrinsic Hausdorff ratios between fibers around t.
    Lipschitz(LipschitzArgs),
    /// Covering dimension of D_∞(t) along a grid.
    Dimension(DimensionArgs),
    /// List the built-in examples, or print one.
    Examples(ExamplesArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct Source {
    #[command(flatten)]
    pub which: Which,
    /// Number of variables for --poly; inferred from the names by default.
    #[arg(long)]
    pub vars: Option<usize>,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct Which {
    /// Polynomial in x, y, z or x1..xn, e.g. "z - x^2 - y^2".
    #[arg(long)]
    pub poly: Option<String>,
    /// Polynomial stored as JSON.
    #[arg(long)]
    pub poly_file: Option<PathBuf>,
    /// Built-in example id.
    #[arg(long)]
    pub example: Option<String>,
}

#[derive(Debug, Args)]
pub struct Output {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Report path; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct Radii {
    #[arg(long)]
    pub radius0: Option<f64>,
    #[arg(long)]
    pub radius_factor: Option<f64>,
    #[arg(long)]
    pub radius_count: Option<usize>,
}

#[derive(Debug, Args)]
pub struct Estimator {
    /// Target spacing of direction clouds.
    #[arg(long, default_value_t = 0.02)]
    pub mesh: f64,
    #[command(flatten)]
    pub radii: Radii,
    /// Solver starts per radius (default: a lattice at the mesh spacing).
    #[arg(long)]
    pub starts: Option<usize>,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct DirectionsArgs {
    #[command(flatten)]
    pub source: Source,
    #[arg(long)]
    pub t: f64,
    #[command(flatten)]
    pub estimator: Estimator,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct ScanArgs {
    #[command(flatten)]
    pub source: Source,
    #[arg(long, num_args = 2, value_names = ["A", "B"], default_values_t = [-2.0, 2.0])]
    pub t_range: Vec<f64>,
    #[command(flatten)]
    pub radii: Radii,
    /// Minimizer starts per sphere.
    #[arg(long, default_value_t = 400)]
    pub starts: usize,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct FlowArgs {
    #[command(flatten)]
    pub source: Source,
    /// Start point.
    #[arg(long, num_args = 1.., required = true)]
    pub x0: Vec<f64>,
    /// Target fiber value.
    #[arg(long)]
    pub t: f64,
    /// Stop when ‖x‖‖∇f(x)‖ falls below this.
    #[arg(long, default_value_t = 1e-3)]
    pub c_floor: f64,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct VolumeArgs {
    #[command(flatten)]
    pub source: Source,
    #[arg(long, num_args = 1.., required = true)]
    pub t_grid: Vec<f64>,
    #[command(flatten)]
    pub estimator: Estimator,
    /// Random great circles for crossing counts.
    #[arg(long, default_value_t = 400)]
    pub circles: usize,
    /// Covering radii, decreasing (default: 16, 8, 4 meshes).
    #[arg(long, num_args = 3..)]
    pub eps: Option<Vec<f64>>,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct LipschitzArgs {
    #[command(flatten)]
    pub source: Source,
    /// Centre of the window.
    #[arg(long)]
    pub t: f64,
    #[arg(long, default_value_t = 0.5)]
    pub delta: f64,
    #[arg(long, default_value_t = 7)]
    pub pairs: usize,
    #[command(flatten)]
    pub estimator: Estimator,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct DimensionArgs {
    #[command(flatten)]
    pub source: Source,
    #[arg(long, num_args = 1.., required = true)]
    pub t_grid: Vec<f64>,
    /// Grid point at which to check dim D_∞(t0) ≤ dim D_∞(t) for its
    /// neighbours.
    #[arg(long)]
    pub check_at: Option<f64>,
    #[command(flatten)]
    pub estimator: Estimator,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct ExamplesArgs {
    /// Print this example in full.
    #[arg(long)]
    pub example: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}
