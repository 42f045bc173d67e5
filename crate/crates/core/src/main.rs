use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use layertext::compose::{
    adjust_gamma, adjust_linear, compose_hard, histogram_match, HistogramReference, DEFAULT_ANNULUS_RADIUS,
    DEFAULT_GAMMA, DEFAULT_LINEAR_DELTA, DEFAULT_LINEAR_GAMMA,
};
use layertext::depth::{depth_aware_adjust, depth_delta, Preset};
use layertext::inpaint::{inpaint, InpaintConfig, InpaintMethod};
use layertext::io::{load_depth, load_image, load_image_with_alpha, load_mask, save_image, save_layer};
use layertext::pipeline::{evaluate, run_pipeline, EditScript};
use layertext::provider::ProviderCommand;
use layertext::transform::{chain, warp_layer, TransformSpec};
use layertext::{BBox, BinaryMask, Depth, DepthParams, Error, ForegroundLayer, Homography, Result};

#[derive(Parser)]
#[command(name = "layertext", version, about = "Layered scene-text editing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an edit script end to end.
    Run { script: PathBuf },
    /// Compare an edited image with a reference background.
    Evaluate(EvaluateArgs),
    /// Restore the background under a mask.
    Inpaint(InpaintArgs),
    /// Apply a chain of transforms to a text layer.
    Transform(TransformArgs),
    /// Adjust a text layer and paste it onto a background.
    Compose(ComposeArgs),
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    edited: PathBuf,
    #[arg(long)]
    reference: PathBuf,
    /// Restrict both histograms to this mask.
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long, requires = "target")]
    pred: Option<String>,
    #[arg(long, requires = "pred")]
    target: Option<String>,
    /// Also write the JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum InpaintMethodArg {
    Baseline,
    External,
    None,
}

#[derive(Args)]
struct InpaintArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    mask: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "baseline")]
    method: InpaintMethodArg,
    /// Inpainting provider executable (method `external`).
    #[arg(long)]
    provider: Option<String>,
    #[arg(long, default_value_t = InpaintConfig::default().baseline_max_iter)]
    max_iter: usize,
    #[arg(long, default_value_t = InpaintConfig::default().baseline_tolerance)]
    tolerance: f64,
    #[arg(long, default_value_t = InpaintConfig::default().dilation_radius)]
    dilation_radius: usize,
}

#[derive(Args)]
struct LayerArgs {
    /// Text layer PNG; alpha is the mask unless `--layer-mask` is given.
    #[arg(long)]
    layer: PathBuf,
    #[arg(long)]
    layer_mask: Option<PathBuf>,
}

#[derive(Args)]
struct TransformArgs {
    #[command(flatten)]
    layer: LayerArgs,
    /// Transform as JSON, e.g. `{"rotate":{"theta_deg":15}}`; repeat to
    /// chain, first applied first.
    #[arg(long = "op", required = true)]
    ops: Vec<String>,
    /// Output RGBA layer.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    DepthAware,
    Linear,
    Gamma,
    Histogram,
    None,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReferenceArg {
    Global,
    Annulus,
}

#[derive(Args)]
struct ComposeArgs {
    #[arg(long)]
    background: PathBuf,
    #[command(flatten)]
    layer: LayerArgs,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "depth-aware")]
    method: MethodArg,
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    lambda2: Option<f64>,
    #[arg(long, conflicts_with_all = ["lambda1", "lambda2"])]
    preset: Option<String>,
    /// Scene depth (PFM or 16-bit PNG), for `depth-aware`.
    #[arg(long, requires = "fg_depth")]
    bg_depth: Option<PathBuf>,
    /// Depth the layer carries at its new placement.
    #[arg(long, requires = "bg_depth")]
    fg_depth: Option<PathBuf>,
    /// Gain for `linear`, exponent for `gamma`.
    #[arg(long)]
    gamma: Option<f64>,
    /// Offset for `linear`.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, value_enum, default_value = "annulus")]
    reference: ReferenceArg,
    #[arg(long, default_value_t = DEFAULT_ANNULUS_RADIUS)]
    annulus_radius: usize,
}

fn read_layer(args: &LayerArgs) -> Result<ForegroundLayer> {
    let (image, alpha) = load_image_with_alpha(&args.layer)?;
    let (w, h) = image.dims();
    let mask = match (&args.layer_mask, alpha) {
        (Some(p), _) => load_mask(p)?,
        (None, Some(a)) => BinaryMask::from_bits(w, h, a.iter().map(|&v| v >= 128).collect())?,
        (None, None) => return Err(Error::MissingMask),
    };
    ForegroundLayer::new(image, mask, Vec::new())
}

fn mask_center(mask: &BinaryMask) -> (f64, f64) {
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if mask.get(x, y) {
                (x0, y0, x1, y1) = (x0.min(x), y0.min(y), x1.max(x), y1.max(y));
            }
        }
    }
    if x0 == usize::MAX {
        return ((mask.width() as f64 - 1.0) / 2.0, (mask.height() as f64 - 1.0) / 2.0);
    }
    let b = BBox::new(x0 as i64, y0 as i64, (x1 - x0 + 1) as i64, (y1 - y0 + 1) as i64);
    (b.x as f64 + (b.w - 1) as f64 / 2.0, b.y as f64 + (b.h - 1) as f64 / 2.0)
}

fn cmd_run(script: &Path) -> Result<()> {
    let script = EditScript::load(script)?;
    let artifacts = run_pipeline(&script)?;
    println!("{}", serde_json::to_string_pretty(&artifacts)?);
    Ok(())
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    let texts = a.pred.as_deref().zip(a.target.as_deref());
    let report = evaluate(&a.edited, &a.reference, a.mask.as_deref(), texts, a.out.as_deref())?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn cmd_inpaint(a: &InpaintArgs) -> Result<()> {
    let cfg = InpaintConfig {
        method: match a.method {
            InpaintMethodArg::Baseline => InpaintMethod::Baseline,
            InpaintMethodArg::External => InpaintMethod::External,
            InpaintMethodArg::None => InpaintMethod::None,
        },
        baseline_max_iter: a.max_iter,
        baseline_tolerance: a.tolerance,
        dilation_radius: a.dilation_radius,
    };
    cfg.validate()?;
    let provider = a.provider.as_ref().map(ProviderCommand::new);
    let img = load_image(&a.image)?;
    let mask = load_mask(&a.mask)?;
    let out = inpaint(&img, &mask, &cfg, provider.as_ref())?;
    save_image(&out, &a.out)
}

fn cmd_transform(a: &TransformArgs) -> Result<()> {
    let layer = read_layer(&a.layer)?;
    let specs = a
        .ops
        .iter()
        .map(|s| serde_json::from_str::<TransformSpec>(s).map_err(|e| Error::InvalidArgument(format!("--op `{s}`: {e}"))))
        .collect::<Result<Vec<_>>>()?;
    let t: Homography = chain(&specs, mask_center(&layer.mask))?;
    let (out, stats) = warp_layer(&layer, &t, layer.dims())?;
    if stats.clipped > 0 {
        log::warn!("{} layer pixels left the canvas", stats.clipped);
    }
    save_layer(&out.image, &out.mask, &a.out)
}

fn cmd_compose(a: &ComposeArgs) -> Result<()> {
    let bg = load_image(&a.background)?;
    let layer = read_layer(&a.layer)?;
    if layer.dims() != bg.dims() {
        return Err(Error::DimensionMismatch {
            expected: bg.dims(),
            actual: layer.dims(),
        });
    }
    let adjusted = if layer.mask.is_empty() {
        layer
    } else {
        match a.method {
            MethodArg::None => layer,
            MethodArg::Linear => adjust_linear(
                &layer,
                a.gamma.unwrap_or(DEFAULT_LINEAR_GAMMA),
                a.delta.unwrap_or(DEFAULT_LINEAR_DELTA),
            )?,
            MethodArg::Gamma => adjust_gamma(&layer, a.gamma.unwrap_or(DEFAULT_GAMMA))?,
            MethodArg::Histogram => {
                let reference = match a.reference {
                    ReferenceArg::Global => HistogramReference::Global,
                    ReferenceArg::Annulus => HistogramReference::Annulus(a.annulus_radius),
                };
                histogram_match(&layer, &bg, &reference)?
            }
            MethodArg::DepthAware => {
                let params = match &a.preset {
                    Some(p) => DepthParams::from_preset(p.parse::<Preset>()?),
                    None => {
                        let d = DepthParams::default();
                        DepthParams::new(a.lambda1.unwrap_or(d.lambda1), a.lambda2.unwrap_or(d.lambda2))?
                    }
                };
                match (&a.bg_depth, &a.fg_depth) {
                    (Some(b), Some(f)) => {
                        let b: Depth = load_depth(b)?;
                        let f: Depth = load_depth(f)?;
                        let delta = depth_delta(&b, &f, &layer.mask)?;
                        depth_aware_adjust(&layer, &delta, &params)?
                    }
                    _ => {
                        log::warn!("no depth maps given; depth-aware adjustment is the identity");
                        layer
                    }
                }
            }
        }
    };
    save_image(&compose_hard(&bg, &adjusted)?, &a.out)
}

fn exit_code(e: &Error) -> u8 {
    if e.is_provider_error() {
        3
    } else if e.is_validation_error() {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { script } => cmd_run(script),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Inpaint(a) => cmd_inpaint(a),
        Command::Transform(a) => cmd_transform(a),
        Command::Compose(a) => cmd_compose(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
