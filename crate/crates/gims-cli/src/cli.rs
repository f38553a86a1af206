//! Command-line argument definitions.

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

#[derive(Parser, Debug)]
#[command(
    name = "gims",
    version,
    about = "Graph-based image matching: detect, build-graph, match, evaluate, train",
    propagate_version = true
)]
pub struct Cli {
    /// JSON file whose keys mirror the subcommand's long flags
    /// (e.g. {"max-kp": 100}); explicit command-line flags win.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// Detect keypoints in an image and optionally describe them.
    Detect(DetectArgs),
    /// Build a graph over a keypoint set (AGC or a classic baseline).
    BuildGraph(BuildGraphArgs),
    /// Match two prepared sides (keypoints + descriptors + graph).
    Match(MatchArgs),
    /// Score matches against ground-truth homographies.
    Eval(EvalArgs),
    /// Generate warped copies of images under random homographies.
    Synth(SynthArgs),
    /// Grid-search graph parameters over a synthesized dataset.
    Sweep(SweepArgs),
    /// Train matcher weights on a synthesized dataset.
    Train(TrainArgs),
    /// Write freshly initialized matcher weights.
    InitWeights(InitWeightsArgs),
    /// Compare graph construction methods on one keypoint set.
    Compare(CompareArgs),
    /// Per-stage wall-time breakdown of a full matching run.
    Profile(ProfileArgs),
    /// Graph-construction scaling study over synthetic point sets.
    Scaling(ScalingArgs),
    /// Render a synthetic blob-field test image.
    SynthScene(SynthSceneArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provider {
    /// 4×4 spatial cells × 8 orientation bins (128-D).
    Hist128,
    /// Mean-subtracted, L2-normalized 32×32 patch (1024-D).
    Rawpatch,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Markdown,
    Csv,
}

#[derive(Args, Debug)]
pub struct DetectArgs {
    /// Input image (PNG or PGM/PPM).
    pub image: PathBuf,
    /// Keep at most this many strongest keypoints.
    #[arg(long, default_value_t = 10_000)]
    pub max_kp: usize,
    #[arg(long, default_value_t = 0.03)]
    pub contrast_threshold: f64,
    #[arg(long, default_value_t = 10.0)]
    pub edge_ratio: f64,
    /// Descriptor used when --descriptors is given.
    #[arg(long, value_enum, default_value_t = Provider::Hist128)]
    pub provider: Provider,
    /// Output keypoint file (GIMK).
    #[arg(short, long, value_name = "GIMK")]
    pub output: PathBuf,
    /// Also write descriptors here (GIMD).
    #[arg(long, value_name = "GIMD")]
    pub descriptors: Option<PathBuf>,
    /// Also dump the raw 32×32 patches as a GIMD file with dim = 1024.
    #[arg(long, value_name = "GIMD")]
    pub patches: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BuildGraphArgs {
    /// Keypoint file (GIMK) providing vertex positions.
    #[arg(long, value_name = "GIMK")]
    pub keypoints: PathBuf,
    /// Descriptor file (GIMD); required for --method agc.
    #[arg(long, value_name = "GIMD")]
    pub descriptors: Option<PathBuf>,
    /// agc, delaunay, epsilon, knn, mst, or complete.
    #[arg(long, default_value = "agc")]
    pub method: String,
    /// AGC candidate radius β in pixels.
    #[arg(long, default_value_t = 15.0)]
    pub beta: f64,
    /// AGC similarity percentile α.
    #[arg(long, default_value_t = 2.0)]
    pub alpha: f64,
    /// AGC minimum component order θ.
    #[arg(long, default_value_t = 7)]
    pub theta: usize,
    /// Compute the AGC similarity percentile over all vertex pairs
    /// instead of only within-radius candidates.
    #[arg(long)]
    pub gamma_all_pairs: bool,
    /// Radius for --method epsilon.
    #[arg(long, default_value_t = 15.0)]
    pub eps: f64,
    /// Neighbor count for --method knn.
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    /// Output graph file (GIMG).
    #[arg(short, long, value_name = "GIMG")]
    pub output: PathBuf,
    /// Also write the stats JSON here (it always goes to stdout).
    #[arg(long, value_name = "JSON")]
    pub stats: Option<PathBuf>,
    /// Write the keypoints surviving AGC pruning (GIMK), index-aligned
    /// with the output graph.
    #[arg(long, value_name = "GIMK")]
    pub keypoints_out: Option<PathBuf>,
    /// Write the descriptors surviving AGC pruning (GIMD).
    #[arg(long, value_name = "GIMD")]
    pub descriptors_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(group(clap::ArgGroup::new("model").required(true).multiple(false)))]
pub struct MatchArgs {
    #[arg(long, value_name = "GIMK")]
    pub kp_a: PathBuf,
    #[arg(long, value_name = "GIMD")]
    pub desc_a: PathBuf,
    #[arg(long, value_name = "GIMG")]
    pub graph_a: PathBuf,
    #[arg(long, value_name = "GIMK")]
    pub kp_b: PathBuf,
    #[arg(long, value_name = "GIMD")]
    pub desc_b: PathBuf,
    #[arg(long, value_name = "GIMG")]
    pub graph_b: PathBuf,
    /// Trained weights (GIMW).
    #[arg(long, value_name = "GIMW", group = "model")]
    pub weights: Option<PathBuf>,
    /// Use the calibrated pass-through encoder instead of trained
    /// weights: descriptors are compared directly, scaled to the
    /// operating temperature of encoded features.
    #[arg(long, group = "model")]
    pub identity: bool,
    /// Image A extent as WxH (used for positional normalization);
    /// inferred from the keypoint extents when absent.
    #[arg(long, value_name = "WxH")]
    pub size_a: Option<String>,
    /// Image B extent as WxH.
    #[arg(long, value_name = "WxH")]
    pub size_b: Option<String>,
    #[arg(long, default_value_t = 100)]
    pub sinkhorn_iters: usize,
    #[arg(long, default_value_t = 0.2)]
    pub min_conf: f64,
    /// Output match file (TSV: indexA, indexB, confidence).
    #[arg(short, long, value_name = "TSV")]
    pub output: PathBuf,
    /// Print a per-stage timing breakdown to stderr.
    #[arg(long)]
    pub profile: bool,
    /// Also write the timing breakdown as CSV.
    #[arg(long, value_name = "CSV")]
    pub profile_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Match file (TSV) for single-pair evaluation.
    #[arg(long, value_name = "TSV")]
    pub matches: Option<PathBuf>,
    #[arg(long, value_name = "GIMK")]
    pub kp_a: Option<PathBuf>,
    #[arg(long, value_name = "GIMK")]
    pub kp_b: Option<PathBuf>,
    /// Ground-truth homography: a JSON 3×3 array, or an object with a
    /// "homography" field (synth sidecar files work directly).
    #[arg(long, value_name = "JSON")]
    pub homography: Option<PathBuf>,
    /// Source image width for the corner-error metric; falls back to the
    /// homography sidecar, then to the keypoint extent.
    #[arg(long)]
    pub width: Option<f64>,
    #[arg(long)]
    pub height: Option<f64>,
    /// JSON manifest for multi-pair evaluation:
    /// {"pairs": [{"matches", "kp_a", "kp_b", "homography", ...}]}.
    #[arg(long, value_name = "JSON")]
    pub pairs: Option<PathBuf>,
    /// Drop pairs without a homography estimate from the AUC instead of
    /// counting them as infinite error.
    #[arg(long)]
    pub drop_failed: bool,
    #[arg(long, default_value_t = 2000)]
    pub ransac_iters: usize,
    #[arg(long, default_value_t = 3.0)]
    pub ransac_thresh: f64,
    #[arg(long, default_value_t = 0.999)]
    pub ransac_conf: f64,
    #[arg(long, env = "GIMS_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Report JSON destination (stdout when absent).
    #[arg(short, long, value_name = "JSON")]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Source images (comma-separated or repeated).
    #[arg(long, value_delimiter = ',', required = true, value_name = "IMAGE")]
    pub images: Vec<PathBuf>,
    /// Warped pairs to generate per source image.
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long, env = "GIMS_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Output directory (created if missing); receives warped PNGs,
    /// per-pair homography JSON sidecars, and manifest.json.
    #[arg(short, long, value_name = "DIR")]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 0.8)]
    pub scale_lo: f64,
    #[arg(long, default_value_t = 1.2)]
    pub scale_hi: f64,
    /// Maximum absolute rotation in degrees.
    #[arg(long, default_value_t = 30.0)]
    pub rot_deg: f64,
    /// Maximum absolute translation as a fraction of width/height.
    #[arg(long, default_value_t = 0.1)]
    pub trans_frac: f64,
    /// Maximum absolute per-corner perspective jitter as a fraction of
    /// width/height.
    #[arg(long, default_value_t = 0.05)]
    pub persp_frac: f64,
    /// Crop factor range; 1,1 disables cropping.
    #[arg(long, default_value_t = 1.0)]
    pub crop_lo: f64,
    #[arg(long, default_value_t = 1.0)]
    pub crop_hi: f64,
    /// Worker threads for pair generation.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Args, Debug)]
#[command(group(clap::ArgGroup::new("model").required(true).multiple(false)))]
pub struct SweepArgs {
    /// Dataset manifest written by `synth`.
    #[arg(long, value_name = "JSON")]
    pub pairs: PathBuf,
    /// β grid values.
    #[arg(long, value_delimiter = ',', default_value = "10,15,20,25,30")]
    pub beta: Vec<f64>,
    /// α grid values.
    #[arg(long, value_delimiter = ',', default_value = "0,2,5,10")]
    pub alpha: Vec<f64>,
    /// θ grid values.
    #[arg(long, value_delimiter = ',', default_value = "0,3,7,10")]
    pub theta: Vec<usize>,
    #[arg(long, value_name = "GIMW", group = "model")]
    pub weights: Option<PathBuf>,
    /// Use the calibrated pass-through encoder (see `match --identity`).
    #[arg(long, group = "model")]
    pub identity: bool,
    #[arg(long, value_enum, default_value_t = Provider::Hist128)]
    pub provider: Provider,
    #[arg(long, default_value_t = 512)]
    pub max_kp: usize,
    #[arg(long, default_value_t = 100)]
    pub sinkhorn_iters: usize,
    #[arg(long, default_value_t = 0.2)]
    pub min_conf: f64,
    /// A match counts as correct within this distance (px) of the
    /// ground-truth correspondence.
    #[arg(long, default_value_t = 3.0)]
    pub epsilon_gt: f64,
    /// Output CSV: beta,alpha,theta,matches,correct,seconds.
    #[arg(short, long, value_name = "CSV")]
    pub output: PathBuf,
    /// Worker threads across grid cells.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Dataset manifest written by `synth`.
    #[arg(long, value_name = "JSON")]
    pub pairs: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub steps: usize,
    #[arg(long, default_value_t = 1)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    /// Weight initialization seed.
    #[arg(long, env = "GIMS_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Provider::Hist128)]
    pub provider: Provider,
    /// Keypoint cap per image (hard limit 512).
    #[arg(long, default_value_t = 512)]
    pub max_kp: usize,
    #[arg(long, default_value_t = 100)]
    pub sinkhorn_iters: usize,
    /// Feature dimension; must equal the descriptor dimension.
    #[arg(long, default_value_t = 128)]
    pub dim: usize,
    /// GraphSAGE layers.
    #[arg(long, default_value_t = 3)]
    pub layers: usize,
    #[arg(long, default_value_t = 4)]
    pub heads: usize,
    /// Number of (self, cross) attention pairs.
    #[arg(long, default_value_t = 4)]
    pub attn_pairs: usize,
    /// Ground-truth labeling tolerance in pixels.
    #[arg(long, default_value_t = 3.0)]
    pub epsilon_gt: f64,
    /// Continue from an existing checkpoint + state file.
    #[arg(long)]
    pub resume: bool,
    /// Checkpoint destination (GIMW).
    #[arg(short, long, value_name = "GIMW")]
    pub output: PathBuf,
    /// Optimizer/loss state sidecar (default: <output>.state.json).
    #[arg(long, value_name = "JSON")]
    pub state: Option<PathBuf>,
    /// Loss curve CSV (default: <output>.loss.csv).
    #[arg(long, value_name = "CSV")]
    pub loss_csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct InitWeightsArgs {
    #[arg(long, default_value_t = 128)]
    pub dim: usize,
    #[arg(long, default_value_t = 3)]
    pub layers: usize,
    #[arg(long, default_value_t = 4)]
    pub heads: usize,
    #[arg(long, default_value_t = 4)]
    pub attn_pairs: usize,
    #[arg(long, env = "GIMS_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long, value_name = "GIMW")]
    pub output: PathBuf,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    #[arg(long, value_name = "GIMK")]
    pub keypoints: PathBuf,
    #[arg(long, value_name = "GIMD")]
    pub descriptors: PathBuf,
    /// Methods to compare (default: all).
    #[arg(long, value_delimiter = ',')]
    pub methods: Vec<String>,
    #[arg(long, default_value_t = 15.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 2.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 7)]
    pub theta: usize,
    #[arg(long)]
    pub gamma_all_pairs: bool,
    /// Radius for the epsilon baseline.
    #[arg(long, default_value_t = 15.0)]
    pub eps: f64,
    /// Neighbor count for the knn baseline.
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    #[arg(long, value_enum, default_value_t = ReportFormat::Markdown)]
    pub format: ReportFormat,
    /// Report destination (stdout when absent).
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ProfileArgs {
    #[arg(long, value_name = "IMAGE")]
    pub image_a: PathBuf,
    #[arg(long, value_name = "IMAGE")]
    pub image_b: PathBuf,
    /// Skip graph construction (matching then runs on edgeless graphs).
    #[arg(long)]
    pub no_graph: bool,
    #[arg(long, default_value_t = 10_000)]
    pub max_kp: usize,
    #[arg(long, default_value_t = 100)]
    pub sinkhorn_iters: usize,
    #[arg(long, default_value_t = 0.2)]
    pub min_conf: f64,
    /// Timing CSV destination (stdout when absent).
    #[arg(short, long, value_name = "CSV")]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ScalingArgs {
    /// Point-set sizes, ascending.
    #[arg(long, value_delimiter = ',', default_value = "500,1000,2000")]
    pub sizes: Vec<usize>,
    #[arg(long, env = "GIMS_SEED", default_value_t = 0)]
    pub seed: u64,
    /// CSV destination (stdout when absent).
    #[arg(short, long, value_name = "CSV")]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SynthSceneArgs {
    #[arg(long, default_value_t = 256)]
    pub width: usize,
    #[arg(long, default_value_t = 256)]
    pub height: usize,
    /// Number of Gaussian blobs.
    #[arg(long, default_value_t = 60)]
    pub blobs: usize,
    #[arg(long, env = "GIMS_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Output image (PNG).
    #[arg(short, long, value_name = "PNG")]
    pub output: PathBuf,
}
