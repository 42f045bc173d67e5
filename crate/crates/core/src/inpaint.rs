//! Background restoration under the text mask.
//!
//! The built-in baseline solves the discrete Laplace equation over the
//! (dilated) hole by Jacobi iteration, with the known pixels as Dirichlet
//! boundary. Heavier inpainters plug in through [`inpaint_external`].

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{load_image, save_image, save_mask};
use crate::provider::{bad_output, out_path, scratch_dir, ProviderCommand};
use crate::raster::{BinaryMask, RasterImage};
use crate::scalar::{quantize, unit, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InpaintMethod {
    #[default]
    Baseline,
    External,
    /// Keep the input image as the background.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InpaintConfig {
    pub method: InpaintMethod,
    pub baseline_max_iter: usize,
    /// Stop once no sample changes by more than this (normalized units).
    pub baseline_tolerance: f64,
    pub dilation_radius: usize,
}

impl Default for InpaintConfig {
    fn default() -> Self {
        Self {
            method: InpaintMethod::Baseline,
            baseline_max_iter: 2000,
            baseline_tolerance: 1e-4,
            dilation_radius: 2,
        }
    }
}

impl InpaintConfig {
    pub fn validate(&self) -> Result<()> {
        if self.baseline_max_iter < 1 {
            return Err(Error::InvalidArgument("baseline_max_iter must be >= 1".into()));
        }
        if !(self.baseline_tolerance > 0.0) {
            return Err(Error::InvalidArgument("baseline_tolerance must be > 0".into()));
        }
        Ok(())
    }
}

/// Result of a baseline fill with its convergence trace.
#[derive(Debug, Clone)]
pub struct HarmonicFill {
    pub image: RasterImage,
    pub iterations: usize,
    /// Largest per-sample change of each sweep, in normalized units.
    pub residuals: Vec<f64>,
}

/// Harmonic fill of the masked pixels. Pixels outside the dilated mask are
/// returned bit-exactly.
pub fn inpaint_baseline(img: &RasterImage, mask: &BinaryMask, cfg: &InpaintConfig) -> Result<RasterImage> {
    harmonic_fill::<f64>(img, mask, cfg).map(|f| f.image)
}

pub fn harmonic_fill<T: Real>(img: &RasterImage, mask: &BinaryMask, cfg: &InpaintConfig) -> Result<HarmonicFill> {
    cfg.validate()?;
    mask.ensure_dims(img.dims())?;
    let hole = mask.dilate(cfg.dilation_radius);
    if hole.is_full() {
        return Err(Error::MaskCoversImage);
    }
    let (w, h) = img.dims();
    if hole.is_empty() {
        return Ok(HarmonicFill {
            image: img.clone(),
            iterations: 0,
            residuals: Vec::new(),
        });
    }

    // Neighbor lists for hole pixels; known neighbors are folded into a
    // constant boundary term.
    struct Node {
        idx: usize,
        unknown: Vec<usize>,
        known_sum: [f64; 3],
        degree: usize,
    }
    let mut slot = vec![usize::MAX; w * h];
    let mut order = Vec::new();
    for (i, &b) in hole.bits().iter().enumerate() {
        if b {
            slot[i] = order.len();
            order.push(i);
        }
    }
    let px = img.as_raw();
    let mut boundary_sum = [0.0f64; 3];
    let mut boundary_n = 0usize;
    let mut nodes: Vec<Node> = Vec::with_capacity(order.len());
    for &i in &order {
        let (x, y) = (i % w, i / w);
        let mut node = Node {
            idx: i,
            unknown: Vec::with_capacity(4),
            known_sum: [0.0; 3],
            degree: 0,
        };
        let mut visit = |j: usize| {
            node.degree += 1;
            if slot[j] != usize::MAX {
                node.unknown.push(slot[j]);
            } else {
                for c in 0..3 {
                    let v: f64 = unit(px[j * 3 + c]);
                    node.known_sum[c] += v;
                    boundary_sum[c] += v;
                }
                boundary_n += 1;
            }
        };
        if x > 0 {
            visit(i - 1);
        }
        if x + 1 < w {
            visit(i + 1);
        }
        if y > 0 {
            visit(i - w);
        }
        if y + 1 < h {
            visit(i + w);
        }
        nodes.push(node);
    }

    // Start every unknown at the mean boundary color so all iterates stay
    // inside the boundary range.
    let start: [T; 3] = std::array::from_fn(|c| T::lit(boundary_sum[c] / boundary_n.max(1) as f64));
    let mut cur: Vec<[T; 3]> = vec![start; nodes.len()];
    let mut next = cur.clone();
    let known: Vec<[T; 3]> = nodes
        .iter()
        .map(|n| std::array::from_fn(|c| T::lit(n.known_sum[c])))
        .collect();
    let tol = T::lit(cfg.baseline_tolerance);
    let mut residuals = Vec::new();
    let mut iterations = 0;
    while iterations < cfg.baseline_max_iter {
        next.par_iter_mut().enumerate().for_each(|(k, out)| {
            let node = &nodes[k];
            let inv = T::one() / T::from_usize_lossy(node.degree);
            for c in 0..3 {
                let mut s = known[k][c];
                for &u in &node.unknown {
                    s = s + cur[u][c];
                }
                out[c] = s * inv;
            }
        });
        let change = cur
            .par_iter()
            .zip(next.par_iter())
            .map(|(a, b)| {
                (0..3)
                    .map(|c| (a[c] - b[c]).abs())
                    .fold(T::zero(), |m, v| m.max(v))
            })
            .reduce(T::zero, |a, b| a.max(b));
        std::mem::swap(&mut cur, &mut next);
        iterations += 1;
        residuals.push(change.to_f64_lossy());
        if change < tol {
            break;
        }
    }

    let mut out = img.clone();
    let raw = out.as_raw_mut();
    for (node, v) in nodes.iter().zip(&cur) {
        for c in 0..3 {
            raw[node.idx * 3 + c] = quantize(v[c]);
        }
    }
    Ok(HarmonicFill {
        image: out,
        iterations,
        residuals,
    })
}

/// Delegates inpainting to an external provider:
/// `<cmd> --image <in.png> --mask <mask.png> --out <out.png>`.
pub fn inpaint_external(img: &RasterImage, mask: &BinaryMask, provider: &ProviderCommand) -> Result<RasterImage> {
    mask.ensure_dims(img.dims())?;
    let dir = scratch_dir()?;
    let input = out_path(&dir, "image.png");
    let mask_path = out_path(&dir, "mask.png");
    let output = out_path(&dir, "out.png");
    save_image(img, &input)?;
    save_mask(mask, &mask_path)?;
    provider.invoke(&[("image", &input), ("mask", &mask_path), ("out", &output)])?;
    let result = load_image(&output).map_err(|e| bad_output(&output, e))?;
    if result.dims() != img.dims() {
        return Err(Error::ProviderBadOutput(format!(
            "expected {:?} image, provider wrote {:?}",
            img.dims(),
            result.dims()
        )));
    }
    Ok(result)
}

/// Dispatches on `cfg.method`.
pub fn inpaint(img: &RasterImage, mask: &BinaryMask, cfg: &InpaintConfig, provider: Option<&ProviderCommand>) -> Result<RasterImage> {
    match cfg.method {
        InpaintMethod::Baseline => inpaint_baseline(img, mask, cfg),
        InpaintMethod::External => {
            let provider = provider.ok_or_else(|| Error::InvalidArgument("inpaint method `external` needs a provider".into()))?;
            let hole = mask.dilate(cfg.dilation_radius);
            inpaint_external(img, &hole, provider)
        }
        InpaintMethod::None => {
            mask.ensure_dims(img.dims())?;
            Ok(img.clone())
        }
    }
}
