use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "atlasdiffeo",
    version,
    about = "Weighted diffeomorphism calculus on chart-based Riemannian manifolds"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Grid points per axis for sampling lattices and constant estimates.
    #[arg(long, global = true)]
    pub grid: Option<usize>,
    /// Inflation applied to grid-estimated constants in thresholds.
    #[arg(long, global = true, default_value_t = 1.1)]
    pub safety: f64,
    #[arg(long, global = true, default_value_t = 0.5)]
    pub sigma: f64,
    #[arg(long, global = true, default_value_t = 0.5)]
    pub rho: f64,
    /// Largest pointwise residual accepted for computed maps.
    #[arg(long, global = true, default_value_t = 1e-8)]
    pub tol: f64,
    /// Also write the JSON report to this path.
    #[arg(long, global = true)]
    pub json_out: Option<PathBuf>,
    /// Record wall time in the report (makes the output run-dependent).
    #[arg(long, global = true)]
    pub timing: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the adapted-atlas inequalities and local finiteness.
    Validate { spec: PathBuf },
    /// Estimate the exp/log constants per chart.
    Constants {
        spec: PathBuf,
        #[arg(long)]
        chart: Option<String>,
        #[arg(long, value_enum, default_value_t = RegionArg::Inner)]
        region: RegionArg,
        /// Velocity radius for the first and second exp bounds; defaults to 0.9·grenzExp.
        #[arg(long)]
        delta: Option<f64>,
    },
    /// Weighted seminorm of a field.
    Seminorm {
        spec: PathBuf,
        #[command(flatten)]
        field: FieldArg,
        #[arg(long, default_value = "one")]
        weight: String,
        #[arg(long, default_value_t = 0)]
        order: usize,
        #[arg(long, value_enum, default_value_t = AtlasArg::A)]
        atlas: AtlasArg,
    },
    /// Saturate the declared weights together with the exp/log weight pair.
    Saturate {
        spec: PathBuf,
        #[arg(long, default_value_t = 3)]
        levels: usize,
        /// Tube radius for the weight pair; defaults per chart.
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long, default_value_t = 2)]
        max_order: usize,
    },
    /// Certify that exp of a field is a diffeomorphism.
    Certify {
        spec: PathBuf,
        #[arg(long)]
        field: String,
        #[arg(long, default_value_t = 10_000)]
        pairs: usize,
    },
    /// Compose two fields in the group chart and tabulate the result.
    Compose {
        spec: PathBuf,
        #[arg(long)]
        lhs: String,
        #[arg(long)]
        rhs: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        delta: Option<f64>,
    },
    /// Invert a field in the group chart and tabulate the result.
    Invert {
        spec: PathBuf,
        #[arg(long)]
        field: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long, default_value_t = 10_000)]
        pairs: usize,
    },
    /// Sampled quantitative inverse function theorem for a map in a TOML file.
    Qift { problem: PathBuf },
    /// Analytic fixtures.
    Oracle {
        #[command(subcommand)]
        action: OracleAction,
    },
    /// Weight construction.
    Weights {
        #[command(subcommand)]
        action: WeightsAction,
    },
    /// Validate, estimate constants, build the weight pair, saturate,
    /// certify every declared field and report gauge membership.
    FullPipeline {
        spec: PathBuf,
        #[arg(long, default_value_t = 3)]
        levels: usize,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long, default_value_t = 2)]
        max_order: usize,
        #[arg(long, default_value_t = 10_000)]
        pairs: usize,
    },
}

#[derive(Debug, Clone, Args)]
#[group(required = true, multiple = false)]
pub struct FieldArg {
    /// Field declared in the spec.
    #[arg(long)]
    pub field: Option<String>,
    /// Tabulated field file.
    #[arg(long)]
    pub field_file: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum OracleAction {
    /// Write a fixture as a loadable spec file.
    Emit {
        #[arg(long, value_enum)]
        kind: OracleKindArg,
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long, default_value_t = 1.0)]
        r1: f64,
        #[arg(long, default_value_t = 0.75)]
        r2: f64,
        /// Metric scale of the scaled flat fixture.
        #[arg(long, default_value_t = 2.0)]
        c: f64,
        /// Cylinder length.
        #[arg(long, default_value_t = 2.0)]
        length: f64,
        /// Angular charts of the cylinder.
        #[arg(long, default_value_t = 3)]
        charts: usize,
        #[arg(long, default_value_t = 1.0)]
        lo: f64,
        #[arg(long, default_value_t = 2.0)]
        hi: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum WeightsAction {
    /// Build an adjusted weight for per-chart tube radii.
    Adjust {
        spec: PathBuf,
        /// JSON object mapping chart ids to radii.
        #[arg(long, conflicts_with = "delta")]
        delta_per_chart: Option<PathBuf>,
        /// One radius for every chart.
        #[arg(long)]
        delta: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RegionArg {
    Inner,
    Padded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AtlasArg {
    A,
    B,
    C,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OracleKindArg {
    Flat,
    ScaledFlat,
    Cylinder,
    HalfPlane,
}
