//! End-to-end orchestration: script parsing, the four stages, stage
//! artifacts and evaluation.
//!
//! Stages 1–2 ([`prepare`]) produce the text mask, the foreground layer and
//! the restored background. Stages 3–4 ([`edit`]) run per region and
//! composite in document order. [`run_pipeline`] chains both and writes
//! artifacts as it goes, so a failure leaves everything finished so far on
//! disk.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compose::{
    adjust_gamma, adjust_linear, compose_hard, histogram_match, CompositionMethod, HistogramReference,
    DEFAULT_ANNULUS_RADIUS, DEFAULT_GAMMA, DEFAULT_LINEAR_DELTA, DEFAULT_LINEAR_GAMMA,
};
use crate::depth::{depth_aware_adjust, depth_delta, estimate_depth_external, foreground_depth, DepthParams, Preset};
use crate::error::{Error, Result, Stage};
use crate::foreground::{extract_foreground, generate_mask, kmeans_refine, DetectionSet, ForegroundLayer, KMeansConfig};
use crate::inpaint::{inpaint, InpaintConfig, InpaintMethod};
use crate::io::{load_depth, load_image, load_image_with_alpha, load_mask, save_depth, save_image, save_layer, save_mask};
use crate::metrics::{intensity_histogram, MetricReport};
use crate::provider::{bad_output, out_path, scratch_dir, ProviderCommand};
use crate::raster::{BBox, BinaryMask, DepthMap, RasterImage, TextRegion};
use crate::transform::{chain, warp_layer, Transform2D, TransformSpec};

pub const FINAL_NAME: &str = "final.png";
pub const MANIFEST_NAME: &str = "manifest.json";
pub const ORIGINAL_NAME: &str = "01_original.png";
pub const BACKGROUND_NAME: &str = "02_background.png";
pub const FOREGROUND_NAME: &str = "03_foreground.png";
pub const TAMPER_NAME: &str = "04_tamper.png";
pub const DEPTH_WORD_NAME: &str = "05_depth_word.pfm";
pub const DEPTH_IMAGE_NAME: &str = "06_depth_image.pfm";
/// Index of the first per-transform artifact.
pub const FIRST_TRANSFORM_INDEX: usize = 7;

/// Detections given as a JSON file or inline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DetectionsSource {
    Path(PathBuf),
    Inline(Vec<TextRegion>),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Providers {
    pub segment: Option<ProviderCommand>,
    pub inpaint: Option<ProviderCommand>,
    pub depth: Option<ProviderCommand>,
    pub tamper: Option<ProviderCommand>,
}

/// Where a region's replacement text comes from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TamperSource {
    /// Keep the extracted text.
    #[default]
    Skip,
    /// A pre-rendered layer; its mask is the sidecar PNG if given, else alpha.
    Layer {
        path: PathBuf,
        #[serde(default)]
        mask: Option<PathBuf>,
    },
    /// Ask the tamper provider to render `tampered_text`.
    Provider,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DepthSetting {
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    pub preset: Option<Preset>,
}

impl DepthSetting {
    pub fn params(&self) -> Result<DepthParams<f64>> {
        match (self.preset, self.lambda1, self.lambda2) {
            (Some(p), None, None) => Ok(DepthParams::from_preset(p)),
            (Some(_), _, _) => Err(Error::Script("give either a depth preset or lambdas, not both".into())),
            (None, l1, l2) => {
                let d = DepthParams::<f64>::default();
                DepthParams::new(l1.unwrap_or(d.lambda1), l2.unwrap_or(d.lambda2))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistogramMode {
    Global,
    #[default]
    Annulus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComposeSetting {
    pub method: CompositionMethod,
    /// Gain for `linear`, exponent for `gamma`.
    pub gamma: Option<f64>,
    /// Offset for `linear`.
    pub delta: Option<f64>,
    pub reference: HistogramMode,
    pub annulus_radius: usize,
}

impl Default for ComposeSetting {
    fn default() -> Self {
        Self {
            method: CompositionMethod::DepthAware,
            gamma: None,
            delta: None,
            reference: HistogramMode::Annulus,
            annulus_radius: DEFAULT_ANNULUS_RADIUS,
        }
    }
}

impl ComposeSetting {
    pub fn with_method(method: CompositionMethod) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }
}

/// What to do with one detected region.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegionEdit {
    pub tamper: TamperSource,
    pub transforms: Vec<TransformSpec>,
    pub depth: DepthSetting,
    pub compose: ComposeSetting,
}

/// How the text layer's own depth is obtained.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForegroundDepth {
    /// Carry the background depth under the original footprint along with
    /// the text.
    #[default]
    Transport,
    /// Run the depth provider on the transformed layer.
    Provider,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EditScript {
    pub input_image: PathBuf,
    pub detections: DetectionsSource,
    /// Edits by detection index; missing entries keep the region as is.
    #[serde(default)]
    pub regions: Vec<RegionEdit>,
    #[serde(default)]
    pub providers: Providers,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub dump_stages: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_kmeans_iter")]
    pub kmeans_max_iter: usize,
    #[serde(default)]
    pub inpaint: InpaintConfig,
    /// Precomputed background; skips inpainting.
    #[serde(default)]
    pub background: Option<PathBuf>,
    /// Scene depth file; takes precedence over the depth provider.
    #[serde(default)]
    pub depth_map: Option<PathBuf>,
    #[serde(default)]
    pub foreground_depth: ForegroundDepth,
}

fn default_kmeans_iter() -> usize {
    KMeansConfig::default().max_iter
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl EditScript {
    /// A script with every optional field at its default.
    pub fn new(input_image: impl Into<PathBuf>, detections: DetectionsSource, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            input_image: input_image.into(),
            detections,
            regions: Vec::new(),
            providers: Providers::default(),
            output_dir: output_dir.into(),
            dump_stages: false,
            seed: 0,
            kmeans_max_iter: default_kmeans_iter(),
            inpaint: InpaintConfig::default(),
            background: None,
            depth_map: None,
            foreground_depth: ForegroundDepth::Transport,
        }
    }

    /// Parses a script; relative paths are taken relative to `base_dir`.
    pub fn from_json(json: &str, base_dir: &Path) -> Result<Self> {
        let mut s: EditScript = serde_json::from_str(json).map_err(|e| Error::Script(e.to_string()))?;
        resolve(base_dir, &mut s.input_image);
        resolve(base_dir, &mut s.output_dir);
        if let DetectionsSource::Path(p) = &mut s.detections {
            resolve(base_dir, p);
        }
        for p in [&mut s.background, &mut s.depth_map].into_iter().flatten() {
            resolve(base_dir, p);
        }
        for r in &mut s.regions {
            if let TamperSource::Layer { path, mask } = &mut r.tamper {
                resolve(base_dir, path);
                if let Some(m) = mask {
                    resolve(base_dir, m);
                }
            }
        }
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_json(&text, base)
    }

    /// Checks everything that can be checked without running a stage.
    pub fn validate(&self) -> Result<()> {
        let mut files = vec![&self.input_image];
        if let DetectionsSource::Path(p) = &self.detections {
            files.push(p);
        }
        files.extend(self.background.iter());
        files.extend(self.depth_map.iter());
        for r in &self.regions {
            if let TamperSource::Layer { path, mask } = &r.tamper {
                files.push(path);
                files.extend(mask.iter());
            }
        }
        if let Some(missing) = files.into_iter().find(|p| !p.is_file()) {
            return Err(Error::FileNotFound(missing.clone()));
        }
        self.inpaint.validate()?;
        if self.kmeans_max_iter == 0 {
            return Err(Error::Script("kmeans_max_iter must be >= 1".into()));
        }
        if self.inpaint.method == InpaintMethod::External && self.providers.inpaint.is_none() && self.background.is_none() {
            return Err(Error::Script("inpaint method `external` needs an inpaint provider".into()));
        }
        if self.foreground_depth == ForegroundDepth::Provider && self.providers.depth.is_none() {
            return Err(Error::Script("foreground_depth `provider` needs a depth provider".into()));
        }
        for (i, r) in self.regions.iter().enumerate() {
            r.depth.params().map_err(|e| Error::Script(format!("region {i}: {e}")))?;
            if r.tamper == TamperSource::Provider && self.providers.tamper.is_none() {
                return Err(Error::Script(format!("region {i}: tamper `provider` needs a tamper provider")));
            }
            match r.compose.method {
                CompositionMethod::Linear | CompositionMethod::Gamma => {
                    if let Some(g) = r.compose.gamma.filter(|g| !(*g > 0.0)) {
                        return Err(Error::NonPositiveGamma(g));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn region_edit(&self, i: usize) -> RegionEdit {
        self.regions.get(i).cloned().unwrap_or_default()
    }
}

/// Paths of everything a run wrote, by stage.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageArtifacts {
    pub original: Option<PathBuf>,
    pub background: Option<PathBuf>,
    pub foreground: Option<PathBuf>,
    pub tamper: Option<PathBuf>,
    pub depth_word: Option<PathBuf>,
    pub depth_image: Option<PathBuf>,
    pub transforms: Vec<PathBuf>,
    pub final_image: Option<PathBuf>,
    /// Regions with the replacement text recorded for evaluation.
    pub regions: Vec<TextRegion>,
    /// Layer pixels that left the canvas, per region.
    pub clipped: Vec<usize>,
}

/// Writes stage artifacts when enabled and records where they went.
#[derive(Debug)]
struct ArtifactWriter {
    dir: PathBuf,
    dump: bool,
    next_transform: usize,
    manifest: StageArtifacts,
}

impl ArtifactWriter {
    fn new(dir: &Path, dump: bool) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            dump,
            next_transform: FIRST_TRANSFORM_INDEX,
            manifest: StageArtifacts::default(),
        })
    }

    fn write(&self, name: &str, f: impl FnOnce(&Path) -> Result<()>) -> Result<Option<PathBuf>> {
        if !self.dump {
            return Ok(None);
        }
        let path = self.dir.join(name);
        f(&path)?;
        Ok(Some(path))
    }
}

/// Output of Stages 1–2, shareable between edits.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub image: RasterImage,
    pub detections: DetectionSet,
    /// Union of the detection boxes (`M`).
    pub box_mask: BinaryMask,
    /// Refined glyph mask (`M̂`).
    pub text_mask: BinaryMask,
    pub foreground: ForegroundLayer,
    pub background: RasterImage,
}

/// Output of Stages 3–4.
#[derive(Debug, Clone)]
pub struct Edited {
    pub image: RasterImage,
    /// Union of the placed text layers.
    pub mask: BinaryMask,
    pub regions: Vec<TextRegion>,
    pub clipped: Vec<usize>,
}

fn load_detections(script: &EditScript, dims: (usize, usize)) -> Result<DetectionSet> {
    match &script.detections {
        DetectionsSource::Path(p) => DetectionSet::load(p, dims),
        DetectionsSource::Inline(r) => DetectionSet::new(r.clone(), dims),
    }
}

/// Runs the segment provider: `--image --mask --out`, expecting a mask PNG.
fn segment_external(img: &RasterImage, mask: &BinaryMask, provider: &ProviderCommand) -> Result<BinaryMask> {
    let dir = scratch_dir()?;
    let input = out_path(&dir, "image.png");
    let hint = out_path(&dir, "mask.png");
    let output = out_path(&dir, "segment.png");
    save_image(img, &input)?;
    save_mask(mask, &hint)?;
    provider.invoke(&[("image", &input), ("mask", &hint), ("out", &output)])?;
    let seg = load_mask(&output).map_err(|e| bad_output(&output, e))?;
    if seg.dims() != img.dims() {
        return Err(Error::ProviderBadOutput(format!(
            "expected {:?} mask, provider wrote {:?}",
            img.dims(),
            seg.dims()
        )));
    }
    Ok(seg)
}

/// Stages 1 and 2 for an already loaded image.
pub fn prepare_image(image: RasterImage, script: &EditScript) -> Result<Prepared> {
    prepare_inner(image, script, None)
}

fn prepare_inner(image: RasterImage, script: &EditScript, mut out: Option<&mut ArtifactWriter>) -> Result<Prepared> {
    let dims = image.dims();
    let fg_stage = |e: Error| e.in_stage(Stage::Foreground);

    let detections = load_detections(script, dims).map_err(fg_stage)?;
    let box_mask = generate_mask(&detections).map_err(fg_stage)?;
    let coarse = match &script.providers.segment {
        Some(p) => segment_external(&image, &box_mask, p)
            .and_then(|s| s.intersection(&box_mask))
            .map_err(fg_stage)?,
        None => box_mask.clone(),
    };
    let cfg = KMeansConfig {
        seed: script.seed,
        max_iter: script.kmeans_max_iter,
        ..KMeansConfig::default()
    };
    let text_mask = kmeans_refine(&image, &coarse, &detections.boxes(), &cfg).map_err(fg_stage)?;
    let mut foreground = extract_foreground(&image, &text_mask).map_err(fg_stage)?;
    foreground.regions = detections.regions().to_vec();
    if let Some(w) = &mut out {
        let p = w
            .write(FOREGROUND_NAME, |p| save_layer(&foreground.image, &foreground.mask, p))
            .map_err(fg_stage)?;
        w.manifest.foreground = p;
    }

    let in_stage = |e: Error| e.in_stage(Stage::Inpaint);
    let (background, fresh) = match &script.background {
        Some(p) => {
            let bg = load_image(p).map_err(in_stage)?;
            bg.ensure_dims(dims).map_err(in_stage)?;
            (bg, true)
        }
        None => {
            let bg = inpaint(&image, &box_mask, &script.inpaint, script.providers.inpaint.as_ref()).map_err(in_stage)?;
            (bg, script.inpaint.method != InpaintMethod::None)
        }
    };
    if fresh {
        if let Some(w) = &mut out {
            let p = w.write(BACKGROUND_NAME, |p| save_image(&background, p)).map_err(in_stage)?;
            w.manifest.background = p;
        }
    }

    Ok(Prepared {
        image,
        detections,
        box_mask,
        text_mask,
        foreground,
        background,
    })
}

/// Stages 1 and 2: text mask, foreground layer, restored background.
pub fn prepare(script: &EditScript) -> Result<Prepared> {
    let image = load_image(&script.input_image).map_err(|e| e.in_stage(Stage::Script))?;
    prepare_image(image, script)
}

/// Places a replacement layer on the canvas. A layer the size of the
/// canvas is taken as already registered; a smaller one is anchored at the
/// bbox origin.
fn register_layer(
    image: RasterImage,
    mask: BinaryMask,
    region: &TextRegion,
    canvas: (usize, usize),
) -> Result<ForegroundLayer> {
    let (lw, lh) = image.dims();
    let (cw, ch) = canvas;
    if lw > cw || lh > ch {
        return Err(Error::OversizedLayer {
            layer: (lw, lh),
            canvas,
        });
    }
    let mut tagged = region.clone();
    if tagged.tampered_text.is_none() {
        tagged.tampered_text = tagged.prompt.clone();
    }
    if (lw, lh) == canvas {
        return ForegroundLayer::new(image, mask, vec![tagged]);
    }
    let mut out = RasterImage::new(cw, ch);
    let mut out_mask = BinaryMask::new(cw, ch);
    for y in 0..lh {
        for x in 0..lw {
            let cx = region.bbox.x + x as i64;
            let cy = region.bbox.y + y as i64;
            if cx < 0 || cy < 0 || cx >= cw as i64 || cy >= ch as i64 {
                continue;
            }
            let (cx, cy) = (cx as usize, cy as usize);
            out.set_pixel(cx, cy, image.pixel(x, y));
            out_mask.set(cx, cy, mask.get(x, y));
        }
    }
    ForegroundLayer::new(out, out_mask, vec![tagged])
}

/// Reads a replacement layer and its mask (sidecar first, then alpha).
fn read_layer(path: &Path, mask: Option<&Path>) -> Result<(RasterImage, BinaryMask)> {
    let (image, alpha) = load_image_with_alpha(path)?;
    let (w, h) = image.dims();
    let mask = match (mask, alpha) {
        (Some(m), _) => {
            let m = load_mask(m)?;
            m.ensure_dims((w, h))?;
            m
        }
        (None, Some(a)) => BinaryMask::from_bits(w, h, a.iter().map(|&v| v >= 128).collect())?,
        (None, None) => return Err(Error::MissingMask),
    };
    Ok((image, mask))
}

fn target_text(region: &TextRegion) -> Result<&str> {
    region
        .tampered_text
        .as_deref()
        .or(region.prompt.as_deref())
        .ok_or_else(|| Error::Script(format!("region `{}` has no tampered_text for the tamper provider", region.text)))
}

/// Produces the replacement layer for `region`.
///
/// The tamper provider is called as `--image --mask --out --out-mask
/// --text --target`. It writes `out` as PNG and may write `out-mask`; if
/// it does not, the alpha channel of `out` is the mask.
pub fn tamper_region(
    region: &TextRegion,
    source: &TamperSource,
    canvas: &RasterImage,
    provider: Option<&ProviderCommand>,
) -> Result<ForegroundLayer> {
    match source {
        TamperSource::Skip => Err(Error::InvalidArgument("tamper source is `skip`".into())),
        TamperSource::Layer { path, mask } => {
            let (image, mask) = read_layer(path, mask.as_deref())?;
            register_layer(image, mask, region, canvas.dims())
        }
        TamperSource::Provider => {
            let provider = provider.ok_or_else(|| Error::Script("no tamper provider configured".into()))?;
            let target = target_text(region)?;
            let dir = scratch_dir()?;
            let input = out_path(&dir, "image.png");
            let hint = out_path(&dir, "mask.png");
            let output = out_path(&dir, "layer.png");
            let out_mask = out_path(&dir, "layer_mask.png");
            let (w, h) = canvas.dims();
            let bbox_mask = BinaryMask::from_fn(w, h, |x, y| {
                region
                    .bbox
                    .clip(w, h)
                    .is_some_and(|(x0, y0, x1, y1)| x >= x0 && x < x1 && y >= y0 && y < y1)
            });
            save_image(canvas, &input)?;
            save_mask(&bbox_mask, &hint)?;
            provider.invoke_with(
                &[("image", &input), ("mask", &hint), ("out", &output), ("out-mask", &out_mask)],
                &[("text", &region.text), ("target", target)],
            )?;
            let sidecar = out_mask.is_file().then_some(out_mask.as_path());
            let (image, mask) = read_layer(&output, sidecar).map_err(|e| match e {
                Error::MissingMask => Error::MissingMask,
                other => bad_output(&output, other),
            })?;
            let mut tagged = region.clone();
            tagged.tampered_text = Some(target.to_string());
            register_layer(image, mask, &tagged, canvas.dims())
        }
    }
}

/// Everything one region contributes to the composite.
struct RegionResult {
    source_layer: ForegroundLayer,
    tampered: bool,
    steps: Vec<(&'static str, ForegroundLayer)>,
    placed: ForegroundLayer,
    fg_depth: Option<(DepthMap<f64>, BinaryMask)>,
    region: TextRegion,
    clipped: usize,
}

fn bbox_center(b: &BBox) -> (f64, f64) {
    (b.x as f64 + (b.w - 1) as f64 / 2.0, b.y as f64 + (b.h - 1) as f64 / 2.0)
}

fn adjust_layer(
    layer: &ForegroundLayer,
    edit: &RegionEdit,
    delta: Option<&crate::depth::DepthDelta<f64>>,
    background: &RasterImage,
) -> Result<ForegroundLayer> {
    if layer.mask.is_empty() {
        return Ok(layer.clone());
    }
    let c = &edit.compose;
    match c.method {
        CompositionMethod::None => Ok(layer.clone()),
        CompositionMethod::DepthAware => {
            let params = edit.depth.params()?;
            match delta {
                Some(d) if !params.is_identity() => depth_aware_adjust(layer, d, &params),
                _ => Ok(layer.clone()),
            }
        }
        CompositionMethod::Linear => adjust_linear(
            layer,
            c.gamma.unwrap_or(DEFAULT_LINEAR_GAMMA),
            c.delta.unwrap_or(DEFAULT_LINEAR_DELTA),
        ),
        CompositionMethod::Gamma => adjust_gamma(layer, c.gamma.unwrap_or(DEFAULT_GAMMA)),
        CompositionMethod::Histogram => {
            let reference = match c.reference {
                HistogramMode::Global => HistogramReference::Global,
                HistogramMode::Annulus => HistogramReference::Annulus(c.annulus_radius),
            };
            histogram_match(layer, background, &reference)
        }
    }
}

/// Scene depth for Stage 4: the script's depth file, else the depth
/// provider on the restored background, else a flat map (no adjustment).
fn scene_depth(script: &EditScript, background: &RasterImage) -> Result<Option<DepthMap<f64>>> {
    if let Some(p) = &script.depth_map {
        let d: DepthMap<f64> = load_depth(p)?;
        d.ensure_dims(background.dims())?;
        return Ok(Some(d));
    }
    if let Some(p) = &script.providers.depth {
        return estimate_depth_external(background, p).map(Some);
    }
    Ok(None)
}

fn process_region(
    i: usize,
    script: &EditScript,
    prepared: &Prepared,
    depth: Option<&DepthMap<f64>>,
    keep_steps: bool,
) -> Result<RegionResult> {
    let region = &prepared.detections.regions()[i];
    let edit = script.region_edit(i);
    let dims = prepared.image.dims();

    let tampered = edit.tamper != TamperSource::Skip;
    let source_layer = if tampered {
        tamper_region(region, &edit.tamper, &prepared.image, script.providers.tamper.as_ref())
            .map_err(|e| e.in_stage(Stage::Tamper))?
    } else {
        let mut l = prepared.foreground.crop_to(&region.bbox);
        l.regions = vec![region.clone()];
        l
    };
    let tagged = source_layer.regions.first().cloned().unwrap_or_else(|| region.clone());

    let tr_stage = |e: Error| e.in_stage(Stage::Transform);
    let center = bbox_center(&region.bbox);
    let t: Transform2D<f64> = chain(&edit.transforms, center).map_err(tr_stage)?;
    let mut steps = Vec::new();
    if keep_steps {
        for k in 0..edit.transforms.len() {
            let partial: Transform2D<f64> = chain(&edit.transforms[..=k], center).map_err(tr_stage)?;
            let (l, _) = warp_layer(&source_layer, &partial, dims).map_err(tr_stage)?;
            steps.push((edit.transforms[k].kind(), l));
        }
    }
    let (warped, stats) = if edit.transforms.is_empty() {
        (source_layer.clone(), Default::default())
    } else {
        warp_layer(&source_layer, &t, dims).map_err(tr_stage)?
    };

    let dp_stage = |e: Error| e.in_stage(Stage::Depth);
    let wants_depth = edit.compose.method == CompositionMethod::DepthAware;
    let (delta, fg_depth) = match (depth, wants_depth) {
        (Some(d), true) => {
            let (fg, on) = match script.foreground_depth {
                ForegroundDepth::Transport => foreground_depth(d, &source_layer.mask, &t, dims).map_err(dp_stage)?,
                ForegroundDepth::Provider => {
                    let provider = script.providers.depth.as_ref().expect("validated");
                    let fg = estimate_depth_external(&warped.image, provider).map_err(dp_stage)?;
                    (fg, warped.mask.clone())
                }
            };
            let delta = depth_delta(d, &fg, &warped.mask).map_err(dp_stage)?;
            (Some(delta), Some((fg, on)))
        }
        _ => (None, None),
    };

    let placed = adjust_layer(&warped, &edit, delta.as_ref(), &prepared.background)
        .map_err(|e| e.in_stage(Stage::Compose))?;
    Ok(RegionResult {
        source_layer,
        tampered,
        steps,
        placed,
        fg_depth,
        region: tagged,
        clipped: stats.clipped,
    })
}

fn edit_inner(script: &EditScript, prepared: &Prepared, mut out: Option<&mut ArtifactWriter>) -> Result<Edited> {
    let n = prepared.detections.regions().len();
    if script.regions.len() > n {
        return Err(Error::Script(format!(
            "{} region edits for {n} detections",
            script.regions.len()
        ))
        .in_stage(Stage::Script));
    }
    let dims = prepared.image.dims();
    let depth = scene_depth(script, &prepared.background).map_err(|e| e.in_stage(Stage::Depth))?;
    if depth.is_none() {
        log::info!("no depth source; depth-aware adjustment is the identity");
    }
    let keep_steps = out.as_ref().is_some_and(|w| w.dump);
    let results: Vec<RegionResult> = (0..n)
        .into_par_iter()
        .map(|i| process_region(i, script, prepared, depth.as_ref(), keep_steps))
        .collect::<Result<_>>()?;

    if let Some(w) = &mut out {
        if results.iter().any(|r| r.tampered) {
            let mut layer = ForegroundLayer::empty(dims.0, dims.1);
            for r in results.iter().filter(|r| r.tampered) {
                layer.image = compose_hard(&layer.image, &r.source_layer).map_err(|e| e.in_stage(Stage::Tamper))?;
                layer.mask = layer.mask.union(&r.source_layer.mask).map_err(|e| e.in_stage(Stage::Tamper))?;
            }
            let p = w
                .write(TAMPER_NAME, |p| save_layer(&layer.image, &layer.mask, p))
                .map_err(|e| e.in_stage(Stage::Tamper))?;
            w.manifest.tamper = p;
        }
        for r in &results {
            for (kind, layer) in &r.steps {
                let name = format!("{:02}_{kind}.png", w.next_transform);
                let shown = compose_hard(&prepared.background, layer).map_err(|e| e.in_stage(Stage::Transform))?;
                let p = w
                    .write(&name, |p| save_image(&shown, p))
                    .map_err(|e| e.in_stage(Stage::Transform))?;
                w.next_transform += 1;
                w.manifest.transforms.extend(p);
            }
        }
        if let Some(d) = &depth {
            let mut word = d.values().to_vec();
            for (fg, on) in results.iter().filter_map(|r| r.fg_depth.as_ref()) {
                for ((v, &f), &m) in word.iter_mut().zip(fg.values()).zip(on.bits()) {
                    if m {
                        *v = f;
                    }
                }
            }
            let word = DepthMap::from_normalized(dims.0, dims.1, word).map_err(|e| e.in_stage(Stage::Depth))?;
            let dp_stage = |e: Error| e.in_stage(Stage::Depth);
            w.manifest.depth_word = w.write(DEPTH_WORD_NAME, |p| save_depth(&word, p)).map_err(dp_stage)?;
            w.manifest.depth_image = w.write(DEPTH_IMAGE_NAME, |p| save_depth(d, p)).map_err(dp_stage)?;
        }
    }

    let mut image = prepared.background.clone();
    let mut mask = BinaryMask::new(dims.0, dims.1);
    for r in &results {
        image = compose_hard(&image, &r.placed).map_err(|e| e.in_stage(Stage::Compose))?;
        mask = mask.union(&r.placed.mask).map_err(|e| e.in_stage(Stage::Compose))?;
    }
    Ok(Edited {
        image,
        mask,
        regions: results.iter().map(|r| r.region.clone()).collect(),
        clipped: results.iter().map(|r| r.clipped).collect(),
    })
}

/// Stages 3 and 4 on top of a shared [`Prepared`]. Every pixel outside the
/// placed layers comes from `prepared.background` unchanged.
pub fn edit(script: &EditScript, prepared: &Prepared) -> Result<Edited> {
    edit_inner(script, prepared, None)
}

/// Runs the whole script, writing `final.png`, `manifest.json` and, with
/// `dump_stages`, one artifact per enabled stage.
pub fn run_pipeline(script: &EditScript) -> Result<StageArtifacts> {
    script.validate().map_err(|e| e.in_stage(Stage::Script))?;
    let mut w = ArtifactWriter::new(&script.output_dir, script.dump_stages).map_err(|e| e.in_stage(Stage::Script))?;
    let image = load_image(&script.input_image).map_err(|e| e.in_stage(Stage::Script))?;
    w.manifest.original = w
        .write(ORIGINAL_NAME, |p| save_image(&image, p))
        .map_err(|e| e.in_stage(Stage::Script))?;

    let prepared = prepare_inner(image, script, Some(&mut w))?;
    let edited = edit_inner(script, &prepared, Some(&mut w))?;

    let final_path = script.output_dir.join(FINAL_NAME);
    save_image(&edited.image, &final_path).map_err(|e| e.in_stage(Stage::Compose))?;
    w.manifest.final_image = Some(final_path);
    w.manifest.regions = edited.regions;
    w.manifest.clipped = edited.clipped;
    let json = serde_json::to_string_pretty(&w.manifest)?;
    std::fs::write(script.output_dir.join(MANIFEST_NAME), json).map_err(|e| Error::Io(e).in_stage(Stage::Compose))?;
    Ok(w.manifest)
}

/// Histogram similarity of `edited` against `reference`, optionally
/// restricted to `mask`, plus SA/NED when both texts are given.
pub fn evaluate_images(
    edited: &RasterImage,
    reference: &RasterImage,
    mask: Option<&BinaryMask>,
    texts: Option<(&str, &str)>,
) -> Result<MetricReport> {
    if let Some(m) = mask {
        m.ensure_dims(reference.dims())?;
        m.ensure_dims(edited.dims())?;
    }
    let r = intensity_histogram::<f64>(reference, mask, true)?;
    let e = intensity_histogram::<f64>(edited, mask, true)?;
    let report = MetricReport::from_histograms(&r, &e)?;
    Ok(match texts {
        Some((pred, target)) => report.with_text(pred, target),
        None => report,
    })
}

/// File-level [`evaluate_images`]; writes the JSON report to `report_out`
/// when given.
pub fn evaluate(
    edited: &Path,
    reference: &Path,
    mask: Option<&Path>,
    texts: Option<(&str, &str)>,
    report_out: Option<&Path>,
) -> Result<MetricReport> {
    let stage = |e: Error| e.in_stage(Stage::Evaluate);
    let e = load_image(edited).map_err(stage)?;
    let r = load_image(reference).map_err(stage)?;
    let m = mask.map(load_mask).transpose().map_err(stage)?;
    let report = evaluate_images(&e, &r, m.as_ref(), texts).map_err(stage)?;
    if let Some(p) = report_out {
        std::fs::write(p, serde_json::to_string_pretty(&report)?).map_err(|e| stage(Error::Io(e)))?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_script() {
        let s = EditScript::from_json(
            r#"{"input_image": "a.png", "detections": [{"bbox": [1, 2, 3, 4], "text": "hi"}], "output_dir": "out"}"#,
            Path::new("/base"),
        )
        .unwrap();
        assert_eq!(s.input_image, Path::new("/base/a.png"));
        assert_eq!(s.output_dir, Path::new("/base/out"));
        assert!(matches!(s.detections, DetectionsSource::Inline(ref r) if r[0].bbox == BBox::new(1, 2, 3, 4)));
        assert_eq!(s.region_edit(0), RegionEdit::default());
        assert!(!s.dump_stages);
    }

    #[test]
    fn parses_region_edits() {
        let s = EditScript::from_json(
            r#"{
                "input_image": "/a.png", "detections": "d.json", "output_dir": "/o",
                "regions": [{
                    "tamper": {"layer": {"path": "l.png"}},
                    "transforms": [{"rotate": {"theta_deg": 15}}, {"translate": [40, 0]}],
                    "depth": {"preset": "hdr"},
                    "compose": {"method": "histogram", "reference": "global"}
                }]
            }"#,
            Path::new("/b"),
        )
        .unwrap();
        let r = &s.regions[0];
        assert_eq!(
            r.tamper,
            TamperSource::Layer {
                path: "/b/l.png".into(),
                mask: None
            }
        );
        assert_eq!(r.transforms.len(), 2);
        assert_eq!(r.depth.params().unwrap().lambda1, 1.5);
        assert_eq!(r.compose.reference, HistogramMode::Global);
        assert_eq!(r.compose.annulus_radius, DEFAULT_ANNULUS_RADIUS);
    }

    #[test]
    fn rejects_unknown_fields_and_mixed_depth() {
        assert!(matches!(
            EditScript::from_json(r#"{"input_image":"a","detections":[],"output_dir":"o","bogus":1}"#, Path::new(".")),
            Err(Error::Script(_))
        ));
        let d = DepthSetting {
            lambda1: Some(0.5),
            preset: Some(Preset::Hdr),
            ..Default::default()
        };
        assert!(d.params().is_err());
        let out_of_range = DepthSetting {
            lambda1: Some(3.0),
            ..Default::default()
        };
        assert!(out_of_range.params().is_err());
    }

    #[test]
    fn small_layer_registers_at_bbox_origin() {
        let region = TextRegion::new(BBox::new(3, 1, 2, 2), "ab");
        let img = RasterImage::filled(2, 2, [7, 8, 9]);
        let mask = BinaryMask::from_bits(2, 2, vec![true, false, true, true]).unwrap();
        let l = register_layer(img, mask, &region, (6, 4)).unwrap();
        assert_eq!(l.mask.count(), 3);
        assert!(l.mask.get(3, 1) && !l.mask.get(4, 1) && l.mask.get(4, 2));
        assert_eq!(l.image.pixel(4, 2), [7, 8, 9]);
        assert_eq!(l.image.pixel(4, 1), [0, 0, 0]);
    }

    #[test]
    fn oversized_layer_is_rejected() {
        let region = TextRegion::new(BBox::new(0, 0, 2, 2), "ab");
        let err = register_layer(RasterImage::new(5, 2), BinaryMask::new(5, 2), &region, (4, 4)).unwrap_err();
        assert!(matches!(err, Error::OversizedLayer { layer: (5, 2), canvas: (4, 4) }));
    }

    #[test]
    fn self_evaluation() {
        let img = RasterImage::from_fn(8, 8, |x, y| [(x * 30) as u8, (y * 30) as u8, 77]);
        let r = evaluate_images(&img, &img, None, Some(("CAFE", "CAFE"))).unwrap();
        assert!(r.bc.abs() < 1e-12 && r.cs.abs() < 1e-12);
        assert!((r.corr - 1.0).abs() < 1e-12 && (r.inter - 3.0).abs() < 1e-12);
        assert_eq!((r.sa, r.ned), (Some(1.0), Some(1.0)));
    }
}
