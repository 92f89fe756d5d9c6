//! `diffseg`: unsupervised segmentation, baselines and evaluation from the
//! command line.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "diffseg", version, about = "Unsupervised image segmentation by differentiable feature clustering")]
struct Cli {
    /// Flat `key = value` config file; command-line flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a fresh network on one image and write its label map.
    Segment(SegmentArgs),
    /// Train one network over reference images and save its weights.
    TrainRef(TrainRefArgs),
    /// Label an image or an ordered frame directory with saved weights.
    Apply(ApplyArgs),
    /// Classical baselines.
    #[command(subcommand)]
    Baseline(BaselineCommand),
    /// Score predicted label maps against ground truth.
    Eval(EvalArgs),
}

/// Network and training hyperparameters.
#[derive(Args, Debug, Default)]
struct HpArgs {
    /// Convolutional layers M.
    #[arg(long)]
    layers: Option<usize>,
    /// Feature channels.
    #[arg(long)]
    p: Option<usize>,
    /// Response channels (maximum number of labels).
    #[arg(long)]
    q: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    /// Weight of the spatial continuity loss.
    #[arg(long)]
    mu: Option<f64>,
    /// Weight of the scribble loss.
    #[arg(long)]
    nu: Option<f64>,
    /// Maximum training iterations.
    #[arg(long)]
    iters: Option<usize>,
    /// Stop once at most this many labels remain.
    #[arg(long)]
    min_labels: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Batch-norm epsilon.
    #[arg(long)]
    eps: Option<f64>,
    /// Continuity loss extent: full|paper.
    #[arg(long)]
    tv_bounds: Option<String>,
    /// Convolution border handling: replicate|zero.
    #[arg(long)]
    padding: Option<String>,
}

impl HpArgs {
    fn overrides(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let mut put = |k: &'static str, v: Option<String>| {
            if let Some(v) = v {
                out.push((k, v));
            }
        };
        put("layers", self.layers.map(|v| v.to_string()));
        put("p", self.p.map(|v| v.to_string()));
        put("q", self.q.map(|v| v.to_string()));
        put("lr", self.lr.map(|v| v.to_string()));
        put("momentum", self.momentum.map(|v| v.to_string()));
        put("mu", self.mu.map(|v| v.to_string()));
        put("nu", self.nu.map(|v| v.to_string()));
        put("iters", self.iters.map(|v| v.to_string()));
        put("min_labels", self.min_labels.map(|v| v.to_string()));
        put("seed", self.seed.map(|v| v.to_string()));
        put("eps", self.eps.map(|v| v.to_string()));
        put("tv_bounds", self.tv_bounds.clone());
        put("padding", self.padding.clone());
        out
    }
}

#[derive(Args, Debug)]
struct SegmentArgs {
    /// Input image (PNG or PPM).
    input: Option<PathBuf>,
    /// Raw 16-bit label map.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Colour visualization.
    #[arg(long)]
    viz: Option<PathBuf>,
    /// Scribble raster (255 = unscribbled, 0..q-1 = label).
    #[arg(long)]
    scribbles: Option<PathBuf>,
    #[command(flatten)]
    hp: HpArgs,
}

#[derive(Args, Debug)]
struct TrainRefArgs {
    /// Reference images, used in the order given.
    #[arg(required = true)]
    images: Vec<PathBuf>,
    /// Model file to write.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Passes over the reference images.
    #[arg(long)]
    epochs: Option<usize>,
    #[command(flatten)]
    hp: HpArgs,
}

#[derive(Args, Debug)]
struct ApplyArgs {
    /// Image file or directory of frames (processed in file-name order).
    input: Option<PathBuf>,
    /// Model file written by `train-ref`.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Receives `<stem>.png` raw label maps and `viz/<stem>.png`.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Batch-norm epsilon.
    #[arg(long)]
    eps: Option<f64>,
    /// Convolution border handling: replicate|zero.
    #[arg(long)]
    padding: Option<String>,
}

#[derive(Subcommand, Debug)]
enum BaselineCommand {
    /// k-means on windowed RGB features.
    Kmeans(KmeansArgs),
    /// Graph-based segmentation.
    Gs(GsArgs),
}

#[derive(Args, Debug)]
struct BaselineIo {
    /// Input image.
    input: Option<PathBuf>,
    /// Raw 16-bit label map.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Colour visualization.
    #[arg(long)]
    viz: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct KmeansArgs {
    #[command(flatten)]
    io: BaselineIo,
    #[arg(long)]
    k: Option<usize>,
    /// Odd window side.
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct GsArgs {
    #[command(flatten)]
    io: BaselineIo,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    min_size: Option<usize>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Directory of predicted raw label maps.
    #[arg(long)]
    pred_dir: Option<PathBuf>,
    /// Directory of ground truth: `<stem>.png` or a `<stem>/` directory of variants.
    #[arg(long)]
    gt_dir: Option<PathBuf>,
    /// Ground-truth selection: all|fine|coarse.
    #[arg(long)]
    mode: Option<String>,
    /// Comma-separated IOU thresholds.
    #[arg(long)]
    pr_thresholds: Option<String>,
    /// mIOU aggregation: pairs|segments.
    #[arg(long)]
    aggregation: Option<String>,
    /// Report file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("diffseg: error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
