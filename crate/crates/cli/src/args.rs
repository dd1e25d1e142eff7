//! Command-line surface. Every field is optional so that config-file values
//! can fill the gaps; defaults are applied after merging.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use infocam::cam::{HeadMode, MapKind};
use infocam::nn::LossHead;
use infocam::Connectivity;

#[derive(Debug, Parser)]
#[command(name = "infocam", version, about = "Class-activation-map localization toolkit")]
pub struct Cli {
    /// TOML file with one table per subcommand; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize a double-digit MNIST dataset.
    Synth(SynthArgs),
    /// Train the default CNN on a synthesized dataset.
    Train(TrainArgs),
    /// Produce maps and boxes, score them, write records and overlays.
    Localize(LocalizeArgs),
    /// Region size vs subtraction-term ablation grid.
    Ablate(AblateArgs),
    /// Finite-difference check of backpropagation on the default architecture.
    Gradcheck(GradcheckArgs),
    /// Validate an exported manifest and cross-check its logits.
    ExportCheck(ExportCheckArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum MapArg {
    #[serde(rename = "cam")]
    Cam,
    #[serde(rename = "infocam")]
    Infocam,
    #[value(name = "infocam+")]
    #[serde(rename = "infocam+")]
    InfocamPlus,
}

impl From<MapArg> for MapKind {
    fn from(m: MapArg) -> Self {
        match m {
            MapArg::Cam => MapKind::Cam,
            MapArg::Infocam => MapKind::InfoCam,
            MapArg::InfocamPlus => MapKind::InfoCamPlus,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeadArg {
    Softmax,
    Sigmoid,
    PcSigmoid,
}

impl From<HeadArg> for LossHead {
    fn from(h: HeadArg) -> Self {
        match h {
            HeadArg::Softmax => LossHead::Softmax,
            HeadArg::Sigmoid => LossHead::Sigmoid,
            HeadArg::PcSigmoid => LossHead::PcSigmoid,
        }
    }
}

impl From<HeadArg> for HeadMode {
    fn from(h: HeadArg) -> Self {
        LossHead::from(h).cam_mode()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum ConnArg {
    #[value(name = "4")]
    #[serde(rename = "4")]
    Four,
    #[value(name = "8")]
    #[serde(rename = "8")]
    Eight,
}

impl From<ConnArg> for Connectivity {
    fn from(c: ConnArg) -> Self {
        match c {
            ConnArg::Four => Connectivity::Four,
            ConnArg::Eight => Connectivity::Eight,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct SynthArgs {
    /// Directory holding the four standard MNIST IDX files.
    #[arg(long)]
    pub mnist_dir: Option<PathBuf>,
    /// Which MNIST split to draw digits from [default: train].
    #[arg(long, value_enum)]
    pub split: Option<Split>,
    /// IDX image file; overrides --mnist-dir.
    #[arg(long)]
    pub images: Option<PathBuf>,
    /// IDX label file; overrides --mnist-dir.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Number of canvases [default: 60000 for train, 10000 for test].
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Slot occupancy probability [default: 0.7].
    #[arg(long)]
    pub p_slot: Option<f64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the first N canvases as PGM images.
    #[arg(long)]
    pub dump_pgm: Option<usize>,
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct TrainArgs {
    /// Training dataset directory (from `synth`).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Test dataset directory for the per-digit accuracy table.
    #[arg(long)]
    pub eval_data: Option<PathBuf>,
    /// Checkpoint output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub head: Option<HeadArg>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub weight_init_scale: Option<f64>,
    /// Arithmetic precision for training [default: f32].
    #[arg(long, value_enum)]
    pub precision: Option<Precision>,
}

/// Map construction and box extraction knobs.
#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct MapArgs {
    /// Map kinds, comma separated [default: infocam].
    #[arg(long, value_enum, value_delimiter = ',')]
    pub map: Vec<MapArg>,
    /// Region window side; even values round up to odd [default: 3].
    #[arg(long)]
    pub region_side: Option<usize>,
    /// Threshold fraction [default: 0.2].
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, value_enum)]
    pub connectivity: Option<ConnArg>,
    /// Threshold at fraction * max of the raw map instead of the min-max normalized map.
    #[arg(long)]
    pub raw_threshold: bool,
    /// infoCAM+: leave the target label out of the per-window argmin.
    #[arg(long)]
    pub exclude_true_label_argmin: bool,
    /// Upsample maps to image size before thresholding instead of scaling box corners.
    #[arg(long)]
    pub upsample: bool,
}

/// Where samples come from: a checkpoint plus a synthesized dataset, or an exported manifest.
#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct SourceArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Dataset directory (from `synth`) evaluated with --checkpoint.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Target digit for multi-MNIST localization [default: 0].
    #[arg(long)]
    pub digit: Option<u8>,
    /// Exported manifest (alternative to --checkpoint/--data).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Head of the exported model [default: softmax].
    #[arg(long, value_enum)]
    pub head: Option<HeadArg>,
    /// Only use the first N samples.
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct LocalizeArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub maps: MapArgs,
    /// Output directory for records, summaries and images.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Number of samples to render as overlays [default: 8].
    #[arg(long)]
    pub overlays: Option<usize>,
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct AblateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub maps: MapArgs,
    /// Optional output directory for ablation.csv and ablation.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct GradcheckArgs {
    #[arg(long, value_enum)]
    pub head: Option<HeadArg>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of sampled parameter coordinates [default: 200].
    #[arg(long)]
    pub coordinates: Option<usize>,
    /// Dataset directory to take the input canvas from; random input otherwise.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Maximum accepted relative error [default: 1e-4].
    #[arg(long)]
    pub tolerance: Option<f64>,
}

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct ExportCheckArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Head of the exported model [default: softmax].
    #[arg(long, value_enum)]
    pub head: Option<HeadArg>,
    /// Maximum absolute logit difference [default: 1e-3].
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub maps: MapArgs,
}
