use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use umseg::graph::DistanceMetric;
use umseg::losses::{
    ExponentSign, LossVariant, DEFAULT_GRAPH_NEIGHBORS, DEFAULT_GRAPH_SAMPLES, DEFAULT_PATCHES_PER_MASK,
};
use umseg::masktree::{DEFAULT_PAIRS_PER_MASK, DEFAULT_P_IN, DEFAULT_P_IOU};
use umseg::metrics::{SiSampling, DEFAULT_RETRY_CAP, DEFAULT_TRIALS, DEFAULT_VISIBILITY_TOL};
use umseg::segmentation::{DEFAULT_D_MAX, DEFAULT_K_GRAPH, DEFAULT_K_QUERY, DEFAULT_MIN_PIXELS, DEFAULT_N_KEEP};

#[derive(Parser, Debug)]
#[command(name = "umseg", version, about = "Hierarchical segmentation from ultrametric feature fields")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalOpts {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Feature distance.
    #[arg(long, global = true, value_enum, default_value_t = Metric::L2)]
    pub metric: Metric,

    /// Worker threads for parallel loops.
    #[arg(long, global = true, env = "UMSEG_THREADS")]
    pub threads: Option<usize>,

    /// More log output on stderr (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    L2,
    Cosine,
}

impl From<Metric> for DistanceMetric {
    fn from(m: Metric) -> Self {
        match m {
            Metric::L2 => DistanceMetric::Euclidean,
            Metric::Cosine => DistanceMetric::Cosine,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    TwoTerm,
    Softplus,
}

impl From<Variant> for LossVariant {
    fn from(v: Variant) -> Self {
        match v {
            Variant::TwoTerm => LossVariant::TwoTerm,
            Variant::Softplus => LossVariant::Softplus,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sign {
    Corrected,
    AsPrinted,
}

impl From<Sign> for ExponentSign {
    fn from(s: Sign) -> Self {
        match s {
            Sign::Corrected => ExponentSign::Corrected,
            Sign::AsPrinted => ExponentSign::AsPrinted,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sampling {
    Predicted,
    GroundTruth,
}

impl From<Sampling> for SiSampling {
    fn from(s: Sampling) -> Self {
        match s {
            Sampling::Predicted => SiSampling::PredictedMask,
            Sampling::GroundTruth => SiSampling::GroundTruth,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlyEncoding {
    Ascii,
    Binary,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Segment a rendered feature map at one threshold.
    Segment2d(Segment2dArgs),
    /// Segment a featurized point cloud at one threshold.
    Segment3d(Segment3dArgs),
    /// Render the labels of a segmented cloud into a view.
    Transfer(TransferArgs),
    /// Build the containment tree of one view's masks.
    Masktree(MaskTreeArgs),
    /// Sample hierarchical positive/negative pixel pairs.
    Samplepairs(SamplePairsArgs),
    /// Evaluate the training losses and their gradients.
    Loss(LossArgs),
    /// Normalized covering score.
    EvalNc(EvalNcArgs),
    /// Segmentation injectivity score.
    EvalSi(EvalSiArgs),
    /// View consistency score between two views.
    EvalVc(EvalVcArgs),
    /// Export the merge tree as a dendrogram.
    BptExport(BptExportArgs),
    /// Color a label map for viewing.
    RenderLabels(RenderLabelsArgs),
}

#[derive(Args, Debug)]
pub struct Segment2dArgs {
    /// Feature tensor (H, W, C).
    #[arg(long)]
    pub features: PathBuf,
    /// Distance threshold.
    #[arg(long)]
    pub t: f64,
    /// Segments with fewer pixels are labeled 0.
    #[arg(long, default_value_t = DEFAULT_MIN_PIXELS)]
    pub min_pixels: usize,
    /// Output 16-bit label PNG.
    #[arg(long)]
    pub out: PathBuf,
    /// Write the JSON summary here instead of stdout.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct Segment3dArgs {
    /// Featurized point cloud.
    #[arg(long)]
    pub cloud: PathBuf,
    /// Distance threshold.
    #[arg(long)]
    pub t: f64,
    #[arg(long, default_value_t = DEFAULT_K_GRAPH)]
    pub k_graph: usize,
    /// Number of largest components kept; the rest are labeled 0.
    #[arg(long, default_value_t = DEFAULT_N_KEEP)]
    pub keep: usize,
    /// Voxel size for downsampling; 0 disables it.
    #[arg(long, default_value_t = 2e-3)]
    pub voxel: f64,
    /// Outlier search radius; 0 disables outlier removal.
    #[arg(long, default_value_t = 4e-3)]
    pub outlier_radius: f64,
    /// Neighbors required within the radius.
    #[arg(long, default_value_t = 1)]
    pub outlier_min: usize,
    /// Output labeled PLY.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = PlyEncoding::Binary)]
    pub encoding: PlyEncoding,
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TransferArgs {
    /// Labeled point cloud.
    #[arg(long)]
    pub cloud: PathBuf,
    /// Depth tensor (H, W) of the target view.
    #[arg(long)]
    pub depth: PathBuf,
    /// Camera JSON of the target view.
    #[arg(long)]
    pub camera: PathBuf,
    #[arg(long, default_value_t = DEFAULT_K_QUERY)]
    pub k_query: usize,
    /// Maximum distance to a voting point.
    #[arg(long, default_value_t = DEFAULT_D_MAX)]
    pub d_max: f64,
    /// Output 16-bit label PNG.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct TreeOpts {
    /// Inclusion ratio needed to nest one mask in another.
    #[arg(long, default_value_t = DEFAULT_P_IN)]
    pub p_in: f64,
    /// IoU above which the smaller of two masks is dropped.
    #[arg(long, default_value_t = DEFAULT_P_IOU)]
    pub p_iou: f64,
}

#[derive(Args, Debug)]
pub struct MaskTreeArgs {
    /// Mask JSON of one view.
    #[arg(long)]
    pub masks: PathBuf,
    #[command(flatten)]
    pub tree: TreeOpts,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SamplePairsArgs {
    #[arg(long)]
    pub masks: PathBuf,
    #[command(flatten)]
    pub tree: TreeOpts,
    /// Walks sampled from each leaf mask.
    #[arg(long, default_value_t = DEFAULT_PAIRS_PER_MASK)]
    pub pairs: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct LossArgs {
    /// Feature tensor (H, W, C).
    #[arg(long)]
    pub features: PathBuf,
    /// Pair batch JSON written by `samplepairs`.
    #[arg(long, conflicts_with = "masks")]
    pub pairs: Option<PathBuf>,
    /// Mask JSON to sample pairs from directly.
    #[arg(long, required_unless_present = "pairs")]
    pub masks: Option<PathBuf>,
    #[command(flatten)]
    pub tree: TreeOpts,
    /// Walks per leaf mask when sampling from --masks.
    #[arg(long, default_value_t = DEFAULT_PAIRS_PER_MASK)]
    pub pairs_per_mask: usize,
    /// Temperature.
    #[arg(long, default_value_t = umseg::losses::DEFAULT_TEMPERATURE)]
    pub tau: f64,
    /// Weight of the Euclidean term.
    #[arg(long, default_value_t = umseg::losses::DEFAULT_EUCLID_WEIGHT)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value_t = Variant::TwoTerm)]
    pub variant: Variant,
    #[arg(long, value_enum, default_value_t = Sign::Corrected)]
    pub sign: Sign,
    /// Random pixels in the training graph.
    #[arg(long, default_value_t = DEFAULT_GRAPH_SAMPLES)]
    pub samples: usize,
    /// Neighbors per pixel in the training graph.
    #[arg(long, default_value_t = DEFAULT_GRAPH_NEIGHBORS)]
    pub neighbors: usize,
    /// Depth tensor (H, W) for the depth continuity term.
    #[arg(long, requires = "depth_masks")]
    pub depth: Option<PathBuf>,
    /// Finest-level masks that patches are sampled inside.
    #[arg(long, requires = "depth")]
    pub depth_masks: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_PATCHES_PER_MASK)]
    pub patches_per_mask: usize,
    /// Ray angle between adjacent pixels, radians.
    #[arg(long, conflicts_with = "camera")]
    pub delta_theta: Option<f64>,
    /// Camera JSON; the ray angle is taken from its focal length.
    #[arg(long)]
    pub camera: Option<PathBuf>,
    /// Hinge threshold of the depth continuity term.
    #[arg(long, default_value_t = 0.0)]
    pub dc_threshold: f64,
    /// Compare analytic gradients with central finite differences.
    #[arg(long)]
    pub check_grad: bool,
    /// Feature coordinates checked by --check-grad (evenly strided).
    #[arg(long, default_value_t = 256)]
    pub check_coords: usize,
    /// Finite-difference step.
    #[arg(long, default_value_t = 1e-6)]
    pub fd_step: f64,
    /// Largest accepted relative error for --check-grad.
    #[arg(long, default_value_t = 1e-4)]
    pub fd_tolerance: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalNcArgs {
    /// Ground-truth mask JSON; repeat once per granularity level.
    #[arg(long, required = true)]
    pub gt: Vec<PathBuf>,
    /// Predicted masks: mask JSON or a label PNG. Repeatable; all are pooled.
    #[arg(long, required_unless_present = "features")]
    pub pred: Vec<PathBuf>,
    /// Feature tensor; every segment of every sweep threshold is a prediction.
    #[arg(long, conflicts_with = "pred")]
    pub features: Option<PathBuf>,
    #[command(flatten)]
    pub sweep: SweepOpts,
    /// Masks smaller than this are ignored on both sides.
    #[arg(long, default_value_t = DEFAULT_MIN_PIXELS)]
    pub min_pixels: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct SweepOpts {
    #[arg(long, default_value_t = 0.01)]
    pub sweep_min: f64,
    #[arg(long, default_value_t = 0.50)]
    pub sweep_max: f64,
    #[arg(long, default_value_t = 50)]
    pub sweep_steps: usize,
}

#[derive(Args, Debug, Clone)]
pub struct TrialOpts {
    #[command(flatten)]
    pub sweep: SweepOpts,
    /// Trials per ground-truth mask.
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    pub trials: usize,
    /// Ground-truth masks smaller than this are skipped.
    #[arg(long, default_value_t = DEFAULT_MIN_PIXELS)]
    pub min_pixels: usize,
}

/// Settings for segmenting a point cloud and viewing it through cameras.
#[derive(Args, Debug, Clone)]
pub struct CloudOpts {
    #[arg(long, default_value_t = DEFAULT_K_GRAPH)]
    pub k_graph: usize,
    #[arg(long, default_value_t = DEFAULT_N_KEEP)]
    pub keep: usize,
    #[arg(long, default_value_t = DEFAULT_K_QUERY)]
    pub k_query: usize,
    #[arg(long, default_value_t = DEFAULT_D_MAX)]
    pub d_max: f64,
}

#[derive(Args, Debug)]
pub struct EvalSiArgs {
    /// Ground-truth mask JSON, one per view.
    #[arg(long, required = true)]
    pub gt: Vec<PathBuf>,
    /// Feature tensor, one per view.
    #[arg(long, required_unless_present = "cloud")]
    pub features: Vec<PathBuf>,
    /// Featurized cloud segmented once and viewed through each camera.
    #[arg(long, conflicts_with = "features", requires_all = ["depth", "camera"])]
    pub cloud: Option<PathBuf>,
    /// Depth tensor, one per view (cloud mode).
    #[arg(long)]
    pub depth: Vec<PathBuf>,
    /// Camera JSON, one per view (cloud mode).
    #[arg(long)]
    pub camera: Vec<PathBuf>,
    #[command(flatten)]
    pub trials: TrialOpts,
    #[command(flatten)]
    pub cloud_opts: CloudOpts,
    /// Where the second probe is drawn from.
    #[arg(long, value_enum, default_value_t = Sampling::Predicted)]
    pub sampling: Sampling,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalVcArgs {
    /// Ground-truth mask JSON of the source view.
    #[arg(long)]
    pub src_gt: PathBuf,
    #[arg(long)]
    pub src_depth: PathBuf,
    #[arg(long)]
    pub src_camera: PathBuf,
    #[arg(long)]
    pub dst_depth: PathBuf,
    #[arg(long)]
    pub dst_camera: PathBuf,
    #[arg(long, requires = "dst_features", required_unless_present = "cloud")]
    pub src_features: Option<PathBuf>,
    #[arg(long, requires = "src_features")]
    pub dst_features: Option<PathBuf>,
    #[arg(long, conflicts_with_all = ["src_features", "dst_features"])]
    pub cloud: Option<PathBuf>,
    /// Visibility masks as label PNGs (nonzero = visible); replace the depth test.
    #[arg(long, requires = "dst_visibility")]
    pub src_visibility: Option<PathBuf>,
    #[arg(long, requires = "src_visibility")]
    pub dst_visibility: Option<PathBuf>,
    /// Relative depth tolerance of the visibility test.
    #[arg(long, default_value_t = DEFAULT_VISIBILITY_TOL)]
    pub visibility_tol: f64,
    /// Anchor draws per trial before the trial is given up.
    #[arg(long, default_value_t = DEFAULT_RETRY_CAP)]
    pub retry_cap: usize,
    #[command(flatten)]
    pub trials: TrialOpts,
    #[command(flatten)]
    pub cloud_opts: CloudOpts,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BptExportArgs {
    #[arg(long, required_unless_present = "cloud")]
    pub features: Option<PathBuf>,
    #[arg(long, conflicts_with = "features")]
    pub cloud: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_K_GRAPH)]
    pub k_graph: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct RenderLabelsArgs {
    /// 16-bit label PNG.
    #[arg(long)]
    pub labels: PathBuf,
    /// Output RGB PNG.
    #[arg(long)]
    pub out: PathBuf,
}
